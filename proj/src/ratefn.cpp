#include "driftwave/ratefn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <boost/math/tools/minima.hpp>
#include <fmt/format.h>

#include "driftwave/error.hpp"
#include "driftwave/rng.hpp"

namespace driftwave {

namespace {

constexpr int kMinPoints = 8;

PropertyCheck check(std::string name, bool passed, double value, std::string detail) {
    return {std::move(name), passed, value, std::move(detail)};
}

// Smallest divided slope increase along (x, y); negative means a concave kink.
double min_slope_increase(const std::vector<double>& x, const std::vector<double>& y) {
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t i = 2; i < x.size(); ++i) {
        double s0 = (y[i - 1] - y[i - 2]) / (x[i - 1] - x[i - 2]);
        double s1 = (y[i] - y[i - 1]) / (x[i] - x[i - 1]);
        worst = std::min(worst, s1 - s0);
    }
    return worst;
}

std::vector<PropertyCheck> single_checks(const RateFunction& r, const PropertyOptions& o) {
    const std::string dir(to_string(r.direction()));
    const auto& a = r.a_grid();
    const auto& I = r.I();
    std::vector<PropertyCheck> out;

    const double min_I = *std::min_element(I.begin(), I.end());
    out.push_back(check(dir + ".nonnegative", min_I >= -o.tol, min_I, "smallest I on the a grid"));

    const double convex = min_slope_increase(a, I);
    out.push_back(check(dir + ".convex", convex >= -o.tol, convex, "smallest slope increase of I"));

    double v_violation = 0.0;
    for (std::size_t i = 1; i < a.size(); ++i) {
        double rise = I[i] - I[i - 1];
        if (a[i] <= r.argmin()) v_violation = std::max(v_violation, rise);
        if (a[i - 1] >= r.argmin()) v_violation = std::max(v_violation, -rise);
    }
    out.push_back(check(dir + ".v_shape", v_violation <= o.tol, v_violation,
                        fmt::format("largest wrong-way step around argmin a* = {:.6g}", r.argmin())));

    double gap_min = std::numeric_limits<double>::infinity();
    double gap_rise = 0.0;
    double prev_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < a.size(); ++i) {
        double gap = I[i] - r.asymptote(a[i]);
        gap_min = std::min(gap_min, gap);
        gap_rise = std::max(gap_rise, gap - prev_gap);
        prev_gap = gap;
    }
    out.push_back(check(dir + ".asymptote_gap", gap_min >= -o.tol && gap_rise <= o.tol, gap_min,
                        fmt::format("I(a) - (a eta_c - mu(eta_c-)); largest increase along a {:.3g}", gap_rise)));

    const double min_err = std::abs(r.min_value() + r.mu_at_zero());
    out.push_back(check(dir + ".minimum", min_err <= o.tol, min_err,
                        fmt::format("min I = {:.8g} against -mu(0) = {:.8g}", r.min_value(), -r.mu_at_zero())));

    out.push_back(check(dir + ".blow_up_towards_zero", I.front() > r.min_value(), I.front() / r.min_value(),
                        fmt::format("I(a = {:.4g}) over min I", a.front())));

    std::vector<double> c, J;
    for (auto it = a.rbegin(); it != a.rend(); ++it) {
        c.push_back(1.0 / *it);
        J.push_back(c.back() * r.value(*it));
    }
    const double persp = min_slope_increase(c, J);
    out.push_back(check(dir + ".perspective_convex", persp >= -o.tol, persp, "smallest slope increase of c I(1/c)"));
    return out;
}

}  // namespace

RateFunction::RateFunction(const LyapunovCurve& curve, double eta_c, std::vector<double> a_grid)
    : direction_(curve.direction), eta_c_(eta_c), a_grid_(std::move(a_grid)) {
    for (std::size_t i : curve.converged_indices()) {
        if (curve.eta_grid[i] < eta_c) {
            eta_.push_back(curve.eta_grid[i]);
            mu_.push_back(curve.mu[i]);
        }
    }
    if (eta_.size() < kMinPoints) {
        throw InvalidArgument(fmt::format("Legendre transform needs {} converged points below eta_c, got {}",
                                          kMinPoints, eta_.size()));
    }
    mu_at_eta_c_ = mu_.back();
    a_min_ = (mu_[1] - mu_[0]) / (eta_[1] - eta_[0]);
    if (!std::is_sorted(a_grid_.begin(), a_grid_.end())) throw InvalidArgument("a grid must be sorted");
    if (a_grid_.empty() || a_grid_.front() < a_min_) {
        throw OutOfWindow(fmt::format("a grid must start at or above a_min = {}", a_min_));
    }
    I_.reserve(a_grid_.size());
    for (double a : a_grid_) I_.push_back(value(a));

    if (0.0 <= eta_.front()) {
        mu_at_zero_ = mu_.front();
    } else if (0.0 >= eta_.back()) {
        mu_at_zero_ = mu_.back();
    } else {
        auto hi = std::upper_bound(eta_.begin(), eta_.end(), 0.0) - eta_.begin();
        auto lo = hi - 1;
        double t = (0.0 - eta_[lo]) / (eta_[hi] - eta_[lo]);
        mu_at_zero_ = mu_[lo] + t * (mu_[hi] - mu_[lo]);
    }

    const double a_hi = std::max(a_grid_.back(), a_min_ * 2.0);
    auto [am, im] = boost::math::tools::brent_find_minima([this](double a) { return value(a); }, a_min_, a_hi, 40);
    argmin_ = am;
    min_value_ = im;
}

std::size_t RateFunction::argmax(double a) const {
    std::size_t best = eta_.size();
    double best_value = asymptote(a);
    for (std::size_t i = 0; i < eta_.size(); ++i) {
        double v = a * eta_[i] - mu_[i];
        if (v > best_value) {
            best_value = v;
            best = i;
        }
    }
    return best;
}

double RateFunction::value(double a) const {
    if (!(a > 0.0)) throw InvalidArgument(fmt::format("rate function needs a > 0, got {}", a));
    if (a < a_min_) {
        throw OutOfWindow(fmt::format("a = {} lies below the resolved range a >= {}; extend the eta grid down", a,
                                      a_min_));
    }
    std::size_t i = argmax(a);
    return i == eta_.size() ? asymptote(a) : a * eta_[i] - mu_[i];
}

bool RateFunction::on_asymptote(double a) const { return argmax(a) == eta_.size(); }

RateFunction legendre(const LyapunovCurve& curve, double eta_c, std::span<const double> a_grid) {
    return RateFunction(curve, eta_c, std::vector<double>(a_grid.begin(), a_grid.end()));
}

std::vector<double> default_a_grid(const LyapunovCurve& curve, int points) {
    auto idx = curve.converged_indices();
    if (idx.size() < kMinPoints) throw InvalidArgument("curve has too few converged points for an a grid");
    const double first = (curve.mu[idx[1]] - curve.mu[idx[0]]) / (curve.eta_grid[idx[1]] - curve.eta_grid[idx[0]]);
    const double last = curve.last_slope();
    const double lo = first * 1.001;
    const double hi = std::max(2.0 * last, 4.0 * lo);
    std::vector<double> grid(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) grid[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (points - 1));
    return grid;
}

double rate_S(const RateFunction& I, double c) {
    if (!(c > 0.0)) throw InvalidArgument(fmt::format("S(c) needs c > 0, got {}", c));
    return c * I.value(1.0 / c);
}

bool PropertyReport::all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const PropertyCheck& c) { return c.passed; });
}

PropertyReport property_report(const RateFunction& bwd, const RateFunction& fwd, double mean_drift,
                               const PropertyOptions& o) {
    PropertyReport report;
    for (const auto* r : {&bwd, &fwd}) {
        auto checks = single_checks(*r, o);
        report.checks.insert(report.checks.end(), checks.begin(), checks.end());
    }

    const double lo = std::max(bwd.a_min(), fwd.a_min());
    const double hi = std::min(bwd.a_grid().back(), fwd.a_grid().back());
    double offset_err = 0.0;
    for (double a : bwd.a_grid()) {
        if (a < lo || a > hi) continue;
        offset_err = std::max(offset_err, std::abs(bwd.value(a) - fwd.value(a) - 2.0 * mean_drift));
    }
    report.checks.push_back(check("forward_offset", offset_err <= o.offset_tol, offset_err,
                                  fmt::format("max |I - I_fwd - 2 E[b]| with E[b] = {:.6g}", mean_drift)));

    const double min_b = std::abs(bwd.min_value() - 2.0 * mean_drift);
    report.checks.push_back(check("backward_minimum_is_twice_mean", min_b <= o.offset_tol, min_b,
                                  fmt::format("min I = {:.8g}", bwd.min_value())));
    report.checks.push_back(check("forward_minimum_is_zero", std::abs(fwd.min_value()) <= o.tol,
                                  std::abs(fwd.min_value()), fmt::format("min I_fwd = {:.8g}", fwd.min_value())));

    // I(α) + I_fwd(β) >= (α + β) lim_{δ→0} δ I(1/δ) = (α + β) η_c.
    double worst = std::numeric_limits<double>::infinity();
    for (int i = 0; i < o.pairs; ++i) {
        double alpha = lo + (hi - lo) * rng::uniform(o.seed, 1, static_cast<std::uint64_t>(i));
        double beta = lo + (hi - lo) * rng::uniform(o.seed, 2, static_cast<std::uint64_t>(i));
        worst = std::min(worst, bwd.value(alpha) + fwd.value(beta) - (alpha + beta) * bwd.eta_c());
    }
    report.checks.push_back(check("two_sided_bound", worst >= -o.tol, worst,
                                  fmt::format("min of I(alpha) + I_fwd(beta) - (alpha + beta) eta_c over {} pairs",
                                              o.pairs)));
    return report;
}

void write_rate_csv(std::span<const RateFunction> rates, std::ostream& out) {
    out << "direction,a,I\n";
    for (const auto& r : rates) {
        for (std::size_t i = 0; i < r.a_grid().size(); ++i) {
            out << fmt::format("{},{:.17g},{:.17g}\n", to_string(r.direction()), r.a_grid()[i], r.I()[i]);
        }
    }
}

nlohmann::json to_json(const PropertyReport& report) {
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : report.checks) {
        checks.push_back({{"name", c.name}, {"passed", c.passed},
                          {"value", std::isfinite(c.value) ? nlohmann::json(c.value) : nlohmann::json(nullptr)},
                          {"detail", c.detail}});
    }
    return {{"all_passed", report.all_passed()}, {"checks", checks}};
}

}  // namespace driftwave
