#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "driftwave/lyapunov.hpp"

namespace driftwave {

// Legendre transform I(a) = sup_{η ≤ η_c} (aη - μ(η)) of a cell-averaged
// Lyapunov curve. The supremum runs over the converged grid points plus the
// point (η_c, μ(η_c-)), where μ(η_c-) is μ at the last converged η; the
// latter contributes the linear tail a η_c - μ(η_c-) for large a.
class RateFunction {
public:
    RateFunction(const LyapunovCurve& curve, double eta_c, std::vector<double> a_grid);

    Direction direction() const noexcept { return direction_; }
    double eta_c() const noexcept { return eta_c_; }
    double mu_at_eta_c() const noexcept { return mu_at_eta_c_; }
    // Slope of the first curve segment. Below it the supremum sits on the
    // lowest grid η and is not resolved.
    double a_min() const noexcept { return a_min_; }

    const std::vector<double>& a_grid() const noexcept { return a_grid_; }
    const std::vector<double>& I() const noexcept { return I_; }

    // Minimizer μ'(0) and minimum -μ(0), located by golden section.
    double argmin() const noexcept { return argmin_; }
    double min_value() const noexcept { return min_value_; }
    // μ(0) interpolated from the curve.
    double mu_at_zero() const noexcept { return mu_at_zero_; }

    // Throws InvalidArgument for a <= 0, OutOfWindow for a < a_min().
    double value(double a) const;
    // True when the supremum at a is attained on the asymptote point.
    bool on_asymptote(double a) const;
    double asymptote(double a) const noexcept { return a * eta_c_ - mu_at_eta_c_; }

private:
    std::size_t argmax(double a) const;

    Direction direction_;
    std::vector<double> eta_;
    std::vector<double> mu_;
    double eta_c_;
    double mu_at_eta_c_;
    double a_min_;
    std::vector<double> a_grid_;
    std::vector<double> I_;
    double argmin_ = 0.0;
    double min_value_ = 0.0;
    double mu_at_zero_ = 0.0;
};

// Needs at least 8 converged points below eta_c. Throws InvalidArgument.
RateFunction legendre(const LyapunovCurve& curve, double eta_c, std::span<const double> a_grid);

// `points` log-spaced values from just above the first segment slope to twice
// the last segment slope, so the grid reaches into the linear tail.
std::vector<double> default_a_grid(const LyapunovCurve& curve, int points = 200);

// S(c) = c I(1/c), with I evaluated directly at 1/c. Throws InvalidArgument
// for c <= 0 and OutOfWindow when 1/c < a_min().
double rate_S(const RateFunction& I, double c);

struct PropertyCheck {
    std::string name;
    bool passed = false;
    double value = 0.0;  // worst violation or the measured quantity
    std::string detail;
};

struct PropertyOptions {
    double tol = 1e-4;
    double offset_tol = 0.03;  // I - I_fwd = 2 E[b]
    int pairs = 100;           // sampled (α, β) for the two-sided bound
    std::uint64_t seed = 1;
};

struct PropertyReport {
    std::vector<PropertyCheck> checks;
    bool all_passed() const;
};

// Checks on both transforms; mean_drift is E[b] of the environment.
PropertyReport property_report(const RateFunction& bwd, const RateFunction& fwd, double mean_drift,
                               const PropertyOptions& options = {});

// CSV columns: direction,a,I
void write_rate_csv(std::span<const RateFunction> rates, std::ostream& out);

nlohmann::json to_json(const PropertyReport& report);

}  // namespace driftwave
