#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "driftwave/drift.hpp"
#include "driftwave/montecarlo.hpp"
#include "driftwave/transfer.hpp"

namespace driftwave {

enum class Method { bvp, mc };
std::string_view to_string(Method m);
Method parse_method(std::string_view name);

// Cell-averaged Lyapunov function μ(η) = (1/n) Σ_k ln E[e^{ηT} 1{T<∞}] over
// cells first_cell .. first_cell + n_cells - 1.
struct LyapunovCurve {
    Direction direction = Direction::backward;
    Method method = Method::bvp;
    std::vector<double> eta_grid;
    std::vector<double> mu;         // NaN where not converged
    std::vector<double> mu_stderr;  // zero for bvp
    std::vector<bool> converged;
    std::int64_t first_cell = 0;
    int n_cells = 0;
    std::optional<int> truncation_L;  // fixed truncation, if any
    double eta_c_estimate = std::numeric_limits<double>::quiet_NaN();

    std::vector<std::size_t> converged_indices() const;
    // Index of the largest converged η; throws if none converged.
    std::size_t last_converged() const;
    // One-sided difference quotient at the last converged η. Its growth under
    // grid refinement is the only available hint whether μ' stays bounded at
    // η_c; it is reported, never classified.
    double last_slope() const;
};

struct CurveOptions {
    std::int64_t first_cell = 0;
    int n_cells = 200;
    double step = kDefaultStep;
    TruncationOptions truncation;
    // bvp: solve at this truncation instead of L-doubling. mc: killing
    // boundary distance (required).
    std::optional<int> fixed_L;
    McOptions mc;
};

// Field window needed to evaluate the curve cells with the given options.
Interval required_window(const CurveOptions& options);

// Throws InvalidArgument for an unsorted grid, OutOfWindow when the cells and
// truncation margins do not fit, Divergence when the smallest η fails.
LyapunovCurve mu_curve(const DriftField& field, std::span<const double> eta_grid, Direction direction,
                       Method method, const CurveOptions& options = {});

// `points` rates on [eta_lo, eta_c (1 - 2^-6)]: three quarters uniform, the
// rest geometrically clustered towards the top where μ' grows. The point
// nearest 0 is moved to 0.
std::vector<double> default_eta_grid(double eta_lo, double eta_c_estimate, int points = 64);

// Lower grid end -4 max(2 E[b], 1, β); the β term keeps the slopes needed by
// the balance equation on the grid.
double default_eta_lo(double mean_drift, double beta);

struct EtaCSearch {
    double lo = 0.0;
    double hi = 1.0;
    double abs_tol = 1e-5;
    double rel_tol = 1e-3;
    int max_iterations = 60;
    std::int64_t first_cell = 0;
    int n_cells = 200;
    double step = kDefaultStep;
    TruncationOptions truncation;
};

struct EtaCEstimate {
    Direction direction = Direction::backward;
    double estimate = 0.0;  // bracket midpoint, or lo when censored
    double lo = 0.0;        // largest η seen to converge on every cell
    double hi = 0.0;        // smallest η seen to diverge on some cell
    bool censored = false;  // no divergence at search.hi
    int evaluations = 0;

    double width() const noexcept { return hi - lo; }
};

// Bisection on "every sampled cell converges under L-doubling". If the lower
// end already diverges the bracket is moved down until it converges.
EtaCEstimate detect_eta_c(const DriftField& field, Direction direction, const EtaCSearch& search = {});

// Backward and forward estimates merged into one bracket.
EtaCEstimate combine(const EtaCEstimate& bwd, const EtaCEstimate& fwd);

struct GapReport {
    std::vector<double> eta_grid;
    std::vector<double> residual;  // μ_bwd - μ_fwd + 2 E[b]; NaN off the shared domain
    double max_abs = 0.0;
    double mean_abs = 0.0;
    bool domains_agree = true;
    std::vector<std::size_t> domain_mismatch;  // indices converged in only one direction
    double mean_drift = 0.0;
};

GapReport mu_gap_check(const LyapunovCurve& bwd, const LyapunovCurve& fwd, double mean_drift);

struct ShapeReport {
    double min_second_difference = 0.0;  // scaled by grid spacing
    bool nondecreasing = true;
    bool convex = true;
};

ShapeReport curve_shape(const LyapunovCurve& curve, double tolerance = 1e-9);

// CSV columns: direction,eta,mu,converged,n_cells,method
void write_lyapunov_csv(std::span<const LyapunovCurve> curves, std::ostream& out);

nlohmann::json lyapunov_summary(const LyapunovCurve& bwd, const LyapunovCurve& fwd, const EtaCEstimate& eta_c,
                                const GapReport& gap);

}  // namespace driftwave
