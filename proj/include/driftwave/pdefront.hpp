#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "driftwave/drift.hpp"

namespace driftwave {

// Solver for u_t = ½u_xx + b(x)u_x + f(u) on a uniform grid with zero-flux
// edges, and front tracking on its solutions.

struct PdeState {
    double x_lo = 0.0;
    double dx = 0.02;
    double t = 0.0;
    std::vector<double> u;

    double x(std::size_t i) const noexcept { return x_lo + dx * static_cast<double>(i); }
    double x_hi() const noexcept { return x(u.size() - 1); }
};

enum class Profile { plateau, cosine };
std::string_view to_string(Profile p);
Profile parse_profile(std::string_view name);

struct InitialData {
    double delta = 1.0;  // support (-δ, δ)
    double amplitude = 1.0;
    Profile profile = Profile::plateau;
};

// Throws InvalidArgument for amplitude outside [0, 1] or δ <= 0, OutOfWindow
// when the support does not fit in the domain.
PdeState init(Interval domain, double dx, const InitialData& u0);

// FKPP reaction. Without `f` the logistic βu(1-u) is used and solved exactly;
// a custom f is integrated with RK4 substeps and must satisfy f(0) = f(1) = 0
// and 0 <= f(u) <= βu on [0, 1].
struct Reaction {
    double beta = 1.0;
    std::function<double(double)> f;

    static Reaction logistic(double beta);
    void validate() const;
};

// Advance the reaction alone by dt.
void react(std::span<double> u, const Reaction& reaction, double dt);

// Strang step: half reaction, Crank-Nicolson (or implicit Euler) diffusion and
// limited upwind advection, half reaction.
class Stepper {
public:
    Stepper(const DriftField& field, Reaction reaction, const PdeState& layout);

    // Throws InvalidArgument on a CFL violation (dt > dx / max|b|) and Error
    // when the tridiagonal solve breaks down.
    void step(PdeState& state, double dt, bool implicit_euler = false);

    // Largest excursion outside [0, 1] removed after a transport solve.
    double max_bound_violation() const noexcept { return max_violation_; }

private:
    void transport(std::vector<double>& u, double dt, double theta);

    Reaction reaction_;
    double dx_;
    double max_abs_b_;
    std::vector<double> b_;
    std::vector<double> rhs_, sup_, scratch_;
    double max_violation_ = 0.0;
};

// Single step with a freshly built Stepper.
void step(PdeState& state, const DriftField& field, const Reaction& reaction, double dt);

struct PdeNumerics {
    double dx = 0.02;
    double dt_max = 0.01;          // also capped by dx / max|b|
    int rannacher_steps = 2;       // leading steps replaced by two implicit Euler half-steps each
    double output_interval = 0.5;  // trace and history spacing
    double history_pitch = 0.1;    // spatial spacing of stored snapshots
    std::vector<double> levels{0.5, 0.25};
    double edge_tol = 1e-12;
    double bound_tol = 1e-9;       // larger violations of [0, 1] are errors
    std::vector<double> snapshot_times;
};

struct SpeedFit {
    double speed = 0.0;
    double half_width = 0.0;  // 1.96 standard errors
    std::size_t points = 0;
};

// Outermost crossings of one level over time; NaN where u never reaches it.
struct FrontTrace {
    double level = 0.5;
    std::vector<double> times;
    std::vector<double> left;
    std::vector<double> right;
    SpeedFit left_fit;
    SpeedFit right_fit;
};

// u sampled on a coarse grid at the output times.
struct History {
    double x_lo = 0.0;
    double pitch = 0.1;
    std::vector<double> times;
    std::vector<std::vector<double>> rows;

    double x_hi() const noexcept;
    double at(std::size_t row, double x) const;
};

struct Snapshot {
    double t = 0.0;
    PdeState state;
};

struct FrontRun {
    Interval domain;
    double dx = 0.0;
    double dt = 0.0;
    double T_end = 0.0;
    int expansions = 0;
    std::vector<FrontTrace> traces;  // one per level, in numerics.levels order
    History history;
    std::vector<Snapshot> snapshots;
    double max_bound_violation = 0.0;
    double final_max = 0.0;

    const FrontTrace& trace(double level) const;
};

struct SpeedGuess {
    double c1 = 0.0;  // left front moves at -c1
    double c2 = 0.0;  // right front moves at +c2
};

// Conservative guess √(2β) + max|b| for both sides.
SpeedGuess default_guess(const DriftField& field, double beta);

// Outermost crossings of `level`, linearly interpolated; nullopt if u < level
// everywhere.
std::optional<std::pair<double, double>> front_positions(const PdeState& state, double level);

// Least squares slope over times in [t_from, t_to], skipping NaN positions.
SpeedFit fit_speed(std::span<const double> times, std::span<const double> positions, double t_from, double t_to);

// Runs on [-(c1 + 2) T_end, (max(c2, 0) + 2) T_end]. If u exceeds edge_tol at
// an edge the run restarts once on a doubled domain; a second hit is an error.
FrontRun run_front(const DriftField& field, const Reaction& reaction, const InitialData& u0, double T_end,
                   const PdeNumerics& numerics = {}, std::optional<SpeedGuess> guess = std::nullopt);

enum class Verdict { to_zero, to_one, undecided };
std::string_view to_string(Verdict v);

struct RayProbe {
    double c = 0.0;
    std::vector<double> times;
    std::vector<double> u;
    double final_mean = 0.0;  // mean over the last quarter of the run
    Verdict verdict = Verdict::undecided;
};

// u(t, ct) along each ray. Verdict from the final-quarter mean against 0.05
// and 0.95. Throws OutOfWindow when c T_end leaves the stored domain.
std::vector<RayProbe> ray_probe(const History& history, std::span<const double> c_list);

// CSV columns: t,left,right
void write_trace_csv(const FrontTrace& trace, std::ostream& out);
// CSV columns: t,c,u
void write_rays_csv(std::span<const RayProbe> rays, std::ostream& out);
// CSV columns: x,u
void write_snapshot_csv(const PdeState& state, std::ostream& out, std::size_t stride = 1);

}  // namespace driftwave
