#include "driftwave/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>

#include "driftwave/error.hpp"

namespace driftwave {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

int margin(const CurveOptions& o) { return o.fixed_L ? *o.fixed_L : o.truncation.L_max; }

void check_window(const DriftField& field, const Interval& need) {
    if (!field.window().contains(need)) {
        throw OutOfWindow(fmt::format("cells with truncation margins need [{}, {}], field window is [{}, {}]", need.lo,
                                      need.hi, field.window().lo, field.window().hi));
    }
}

struct Point {
    bool ok = false;
    double mu = kNaN;
    double stderr_ = 0.0;
};

Point bvp_point(const DriftField& field, double eta, Direction dir, const CurveOptions& o) {
    CellChain chain(field, eta, o.step);
    double sum = 0.0;
    for (int i = 0; i < o.n_cells; ++i) {
        const std::int64_t k = o.first_cell + i;
        double value = 0.0;
        if (o.fixed_L) {
            try {
                value = truncated_cell_mgf(chain, k, dir, *o.fixed_L);
            } catch (const Divergence&) {
                return {};
            }
        } else {
            MgfEvaluation ev = evaluate_cell_mgf(chain, k, dir, o.truncation);
            if (ev.status != MgfStatus::converged) return {};
            value = ev.mgf.value;
        }
        sum += std::log(value);
    }
    return {true, sum / o.n_cells, 0.0};
}

Point mc_point(const DriftField& field, double eta, Direction dir, const CurveOptions& o) {
    double sum = 0.0, var = 0.0;
    for (int i = 0; i < o.n_cells; ++i) {
        McEstimate e = mc_cell_mgf(field, {o.first_cell + i, eta, dir, *o.fixed_L}, o.mc);
        if (!(e.mean > 0.0)) return {};
        sum += std::log(e.mean);
        // delta method for ln of the sample mean
        var += (e.std_error / e.mean) * (e.std_error / e.mean);
    }
    return {true, sum / o.n_cells, std::sqrt(var) / o.n_cells};
}

bool all_cells_converge(const DriftField& field, double eta, Direction dir, const EtaCSearch& s) {
    CellChain chain(field, eta, s.step);
    for (int i = 0; i < s.n_cells; ++i) {
        if (evaluate_cell_mgf(chain, s.first_cell + i, dir, s.truncation).status != MgfStatus::converged) {
            return false;
        }
    }
    return true;
}

}  // namespace

std::string_view to_string(Method m) { return m == Method::bvp ? "bvp" : "mc"; }

Method parse_method(std::string_view name) {
    if (name == "bvp") return Method::bvp;
    if (name == "mc") return Method::mc;
    throw InvalidArgument(fmt::format("unknown method '{}' (expected bvp or mc)", name));
}

std::vector<std::size_t> LyapunovCurve::converged_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < converged.size(); ++i) {
        if (converged[i]) out.push_back(i);
    }
    return out;
}

std::size_t LyapunovCurve::last_converged() const {
    auto idx = converged_indices();
    if (idx.empty()) throw Divergence("no grid point converged", eta_grid.empty() ? 0.0 : eta_grid.front());
    return idx.back();
}

double LyapunovCurve::last_slope() const {
    auto idx = converged_indices();
    if (idx.size() < 2) return kNaN;
    std::size_t i = idx[idx.size() - 1], j = idx[idx.size() - 2];
    return (mu[i] - mu[j]) / (eta_grid[i] - eta_grid[j]);
}

Interval required_window(const CurveOptions& o) {
    const double lo = static_cast<double>(o.first_cell - margin(o));
    const double hi = static_cast<double>(o.first_cell + o.n_cells + margin(o) + 1);
    return {lo, hi};
}

LyapunovCurve mu_curve(const DriftField& field, std::span<const double> eta_grid, Direction direction,
                       Method method, const CurveOptions& options) {
    if (eta_grid.empty()) throw InvalidArgument("empty eta grid");
    if (!std::is_sorted(eta_grid.begin(), eta_grid.end())) throw InvalidArgument("eta grid must be sorted");
    if (options.n_cells < 1) throw InvalidArgument("n_cells must be positive");
    if (method == Method::mc && (!options.fixed_L || *options.fixed_L < 1)) {
        throw InvalidArgument("Monte Carlo curves need a positive fixed truncation L");
    }
    check_window(field, required_window(options));

    LyapunovCurve c;
    c.direction = direction;
    c.method = method;
    c.eta_grid.assign(eta_grid.begin(), eta_grid.end());
    c.first_cell = options.first_cell;
    c.n_cells = options.n_cells;
    c.truncation_L = options.fixed_L;
    for (double eta : eta_grid) {
        Point p = method == Method::bvp ? bvp_point(field, eta, direction, options)
                                        : mc_point(field, eta, direction, options);
        c.mu.push_back(p.ok ? p.mu : kNaN);
        c.mu_stderr.push_back(p.stderr_);
        c.converged.push_back(p.ok);
    }
    if (!c.converged.front()) {
        throw Divergence(fmt::format("{} curve diverges at the smallest eta = {}; the grid lies above eta_c",
                                     to_string(direction), eta_grid.front()),
                         eta_grid.front());
    }
    return c;
}

std::vector<double> default_eta_grid(double eta_lo, double eta_c_estimate, int points) {
    const double top = eta_c_estimate - std::abs(eta_c_estimate) / 64.0;
    if (!(eta_lo < top)) throw InvalidArgument(fmt::format("eta_lo = {} must lie below {}", eta_lo, top));
    if (points < 8) throw InvalidArgument("eta grid needs at least 8 points");
    const double span = top - eta_lo;
    const int n_geo = points / 4;
    const int n_uni = points - n_geo;
    const double d_start = span / 16.0;
    const double d_end = std::max(std::abs(eta_c_estimate) / 64.0, span * std::ldexp(1.0, -12));
    std::vector<double> grid;
    grid.reserve(static_cast<std::size_t>(points));
    for (int i = 0; i < n_uni; ++i) grid.push_back(eta_lo + (span - d_start) * i / (n_uni - 1));
    for (int j = 1; j < n_geo; ++j) {
        double d = d_start * std::pow(d_end / d_start, static_cast<double>(j) / (n_geo - 1));
        grid.push_back(top - d);
    }
    grid.push_back(top);
    std::sort(grid.begin(), grid.end());
    // Put η = 0 on the grid: μ(0) and the minimum of I are read off there.
    if (eta_lo < 0.0 && 0.0 < top) {
        auto it = std::min_element(grid.begin(), grid.end(),
                                   [](double x, double y) { return std::abs(x) < std::abs(y); });
        bool fits = (it == grid.begin() || *std::prev(it) < 0.0) && (std::next(it) == grid.end() || 0.0 < *std::next(it));
        if (fits) *it = 0.0;
    }
    return grid;
}

double default_eta_lo(double mean_drift, double beta) { return -4.0 * std::max({2.0 * mean_drift, 1.0, beta}); }

EtaCEstimate detect_eta_c(const DriftField& field, Direction direction, const EtaCSearch& s) {
    if (!(s.lo < s.hi)) throw InvalidArgument("eta_c search needs lo < hi");
    CurveOptions wo;
    wo.first_cell = s.first_cell;
    wo.n_cells = s.n_cells;
    wo.truncation = s.truncation;
    check_window(field, required_window(wo));

    EtaCEstimate r;
    r.direction = direction;
    auto converges = [&](double eta) {
        ++r.evaluations;
        return all_cells_converge(field, eta, direction, s);
    };

    double lo = s.lo, hi = s.hi;
    if (converges(hi)) {
        r.estimate = r.lo = hi;
        r.hi = std::numeric_limits<double>::infinity();
        r.censored = true;
        return r;
    }
    double drop = std::max(hi - lo, 1.0);
    int moves = 0;
    while (!converges(lo)) {
        if (++moves > 20) throw Divergence("no converging eta found below the search bracket", lo);
        hi = lo;
        lo -= drop;
        drop *= 2.0;
    }
    for (int it = 0; it < s.max_iterations; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (hi - lo <= s.abs_tol + s.rel_tol * std::abs(mid)) break;
        (converges(mid) ? lo : hi) = mid;
    }
    r.lo = lo;
    r.hi = hi;
    r.estimate = 0.5 * (lo + hi);
    return r;
}

EtaCEstimate combine(const EtaCEstimate& bwd, const EtaCEstimate& fwd) {
    EtaCEstimate r = bwd;
    r.lo = std::min(bwd.lo, fwd.lo);
    r.hi = std::max(bwd.hi, fwd.hi);
    r.censored = bwd.censored || fwd.censored;
    r.estimate = r.censored ? r.lo : 0.5 * (r.lo + r.hi);
    r.evaluations = bwd.evaluations + fwd.evaluations;
    return r;
}

GapReport mu_gap_check(const LyapunovCurve& bwd, const LyapunovCurve& fwd, double mean_drift) {
    if (bwd.eta_grid != fwd.eta_grid) throw InvalidArgument("gap check needs curves on the same eta grid");
    if (bwd.first_cell != fwd.first_cell || bwd.n_cells != fwd.n_cells) {
        throw InvalidArgument("gap check needs curves over the same cells");
    }
    if (bwd.direction != Direction::backward || fwd.direction != Direction::forward) {
        throw InvalidArgument("gap check takes a backward and a forward curve");
    }
    GapReport g;
    g.eta_grid = bwd.eta_grid;
    g.mean_drift = mean_drift;
    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < g.eta_grid.size(); ++i) {
        if (bwd.converged[i] != fwd.converged[i]) {
            g.domains_agree = false;
            g.domain_mismatch.push_back(i);
        }
        if (bwd.converged[i] && fwd.converged[i]) {
            double res = bwd.mu[i] - fwd.mu[i] + 2.0 * mean_drift;
            g.residual.push_back(res);
            g.max_abs = std::max(g.max_abs, std::abs(res));
            sum += std::abs(res);
            ++count;
        } else {
            g.residual.push_back(kNaN);
        }
    }
    g.mean_abs = count ? sum / count : 0.0;
    return g;
}

ShapeReport curve_shape(const LyapunovCurve& c, double tolerance) {
    ShapeReport r;
    auto idx = c.converged_indices();
    r.min_second_difference = std::numeric_limits<double>::infinity();
    for (std::size_t n = 1; n < idx.size(); ++n) {
        if (c.mu[idx[n]] < c.mu[idx[n - 1]] - tolerance) r.nondecreasing = false;
    }
    for (std::size_t n = 2; n < idx.size(); ++n) {
        const double x0 = c.eta_grid[idx[n - 2]], x1 = c.eta_grid[idx[n - 1]], x2 = c.eta_grid[idx[n]];
        const double s01 = (c.mu[idx[n - 1]] - c.mu[idx[n - 2]]) / (x1 - x0);
        const double s12 = (c.mu[idx[n]] - c.mu[idx[n - 1]]) / (x2 - x1);
        const double d2 = (s12 - s01) / (0.5 * (x2 - x0));
        r.min_second_difference = std::min(r.min_second_difference, d2);
        if (s12 - s01 < -tolerance) r.convex = false;
    }
    return r;
}

void write_lyapunov_csv(std::span<const LyapunovCurve> curves, std::ostream& out) {
    out << "direction,eta,mu,converged,n_cells,method\n";
    for (const auto& c : curves) {
        for (std::size_t i = 0; i < c.eta_grid.size(); ++i) {
            out << fmt::format("{},{:.17g},{:.17g},{},{},{}\n", to_string(c.direction), c.eta_grid[i], c.mu[i],
                               c.converged[i] ? 1 : 0, c.n_cells, to_string(c.method));
        }
    }
}

nlohmann::json lyapunov_summary(const LyapunovCurve& bwd, const LyapunovCurve& fwd, const EtaCEstimate& eta_c,
                                const GapReport& gap) {
    auto finite_or_null = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
    nlohmann::json residuals = nlohmann::json::array();
    for (double r : gap.residual) residuals.push_back(finite_or_null(r));
    return {
        {"eta_c", {{"estimate", eta_c.estimate}, {"lo", eta_c.lo}, {"hi", finite_or_null(eta_c.hi)},
                   {"censored", eta_c.censored}}},
        {"method", to_string(bwd.method)},
        {"n_cells", bwd.n_cells},
        {"first_cell", bwd.first_cell},
        {"last_slope_backward", finite_or_null(bwd.last_slope())},
        {"last_slope_forward", finite_or_null(fwd.last_slope())},
        {"gap", {{"mean_drift", gap.mean_drift}, {"max_abs", gap.max_abs}, {"mean_abs", gap.mean_abs},
                 {"domains_agree", gap.domains_agree}, {"domain_mismatch", gap.domain_mismatch},
                 {"residual", residuals}}},
    };
}

}  // namespace driftwave
