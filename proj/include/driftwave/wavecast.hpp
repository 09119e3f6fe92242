#pragma once

#include <iosfwd>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "driftwave/lyapunov.hpp"
#include "driftwave/ratefn.hpp"

namespace driftwave {

enum class Branch { decreasing, increasing };
std::string_view to_string(Branch b);

struct BalanceRoot {
    double c = 0.0;
    Branch branch = Branch::increasing;
};

struct BalanceSolution {
    std::vector<BalanceRoot> roots;  // ascending in c, at most one per branch
    double min_S = 0.0;              // minimum of S over the resolved speeds
    double argmin_c = 0.0;
    double S_at_zero = 0.0;          // lim_{c→0+} S(c) = η_c
    double c_max = 0.0;              // largest resolved speed, 1 / a_min
};

// Roots of S(c) = c I(1/c) = β for c > 0 by bisection (relative tolerance
// 1e-6) on each side of the minimizer of S. Throws InvalidArgument for β <= 0
// and OutOfWindow when S stays below β up to the largest resolved speed.
BalanceSolution solve_balance(const RateFunction& I, double beta, double rel_tol = 1e-6);

enum class Regime { both_left, stagnant, left_and_right };
std::string_view to_string(Regime r);

// Open speed interval; lo or hi may be infinite.
struct SpeedInterval {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
};

struct WaveReport {
    double beta = 0.0;
    double eta_c = 0.0;
    double eta_c_lo = 0.0;
    double eta_c_hi = 0.0;
    double c1_star = 0.0;
    double c2_star = 0.0;
    Regime regime = Regime::left_and_right;
    // u -> 1 on rays x = ct with c in R1, u -> 0 for c in R0.
    std::vector<SpeedInterval> R0;
    std::vector<SpeedInterval> R1;
    nlohmann::json provenance;
};

// Left front speed c1* is the largest forward root. The right front speed c2*
// is the backward root when β lies above the η_c bracket, minus the smaller
// forward root below it, and 0 inside it (stagnant).
WaveReport classify(double beta, const EtaCEstimate& eta_c, const RateFunction& bwd, const RateFunction& fwd);

std::vector<WaveReport> beta_sweep(std::span<const double> betas, const EtaCEstimate& eta_c,
                                   const RateFunction& bwd, const RateFunction& fwd);

nlohmann::json to_json(const WaveReport& report);

// CSV columns: beta,c1,c2,regime
void write_sweep_csv(std::span<const WaveReport> reports, std::ostream& out);

}  // namespace driftwave
