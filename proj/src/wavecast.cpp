#include "driftwave/wavecast.hpp"

#include <cmath>
#include <ostream>

#include <boost/math/tools/minima.hpp>
#include <fmt/format.h>

#include "driftwave/error.hpp"

namespace driftwave {

namespace {

// Bisection for f(c) = 0 on [lo, hi] with f(lo), f(hi) of opposite signs.
template <class F>
double bisect(F f, double lo, double hi, double rel_tol) {
    double flo = f(lo);
    while (hi - lo > rel_tol * std::abs(0.5 * (lo + hi))) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

nlohmann::json interval_json(const SpeedInterval& s) {
    auto end = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(x > 0 ? "inf" : "-inf"); };
    return nlohmann::json::array({end(s.lo), end(s.hi)});
}

}  // namespace

std::string_view to_string(Branch b) { return b == Branch::decreasing ? "decreasing" : "increasing"; }

std::string_view to_string(Regime r) {
    switch (r) {
        case Regime::both_left:
            return "both_left";
        case Regime::stagnant:
            return "stagnant";
        case Regime::left_and_right:
            break;
    }
    return "left_and_right";
}

BalanceSolution solve_balance(const RateFunction& I, double beta, double rel_tol) {
    if (!(beta > 0.0)) throw InvalidArgument(fmt::format("balance equation needs beta > 0, got {}", beta));
    BalanceSolution sol;
    sol.c_max = (1.0 - 1e-12) / I.a_min();
    sol.S_at_zero = I.eta_c();
    auto S = [&](double c) { return rate_S(I, c); };
    // S(0+) = η_c; a tiny positive floor keeps 1/c finite.
    const double c_floor = sol.c_max * 1e-12;
    auto [cm, sm] = boost::math::tools::brent_find_minima(S, c_floor, sol.c_max, 52);
    sol.argmin_c = cm;
    sol.min_S = std::min(sm, sol.S_at_zero);
    auto g = [&](double c) { return S(c) - beta; };

    if (sm < beta && sol.S_at_zero > beta) {
        sol.roots.push_back({bisect(g, c_floor, cm, rel_tol), Branch::decreasing});
    }
    if (sm < beta || (sm == beta && cm > c_floor)) {
        if (S(sol.c_max) < beta) {
            throw OutOfWindow(fmt::format("S stays below beta = {} up to the largest resolved speed {}; extend the "
                                          "eta grid to more negative values",
                                          beta, sol.c_max));
        }
        sol.roots.push_back({bisect(g, cm, sol.c_max, rel_tol), Branch::increasing});
    }
    return sol;
}

WaveReport classify(double beta, const EtaCEstimate& eta_c, const RateFunction& bwd, const RateFunction& fwd) {
    WaveReport r;
    r.beta = beta;
    r.eta_c = eta_c.estimate;
    r.eta_c_lo = eta_c.lo;
    r.eta_c_hi = eta_c.hi;

    const BalanceSolution f = solve_balance(fwd, beta);
    if (f.roots.empty()) {
        throw Error(fmt::format("forward balance has no root at beta = {} (min S_fwd = {})", beta, f.min_S));
    }
    r.c1_star = f.roots.back().c;

    if (beta >= eta_c.lo && beta <= eta_c.hi) {
        r.regime = Regime::stagnant;
        r.c2_star = 0.0;
    } else if (beta < eta_c.lo) {
        r.regime = Regime::both_left;
        if (f.roots.size() < 2) {
            throw Error(fmt::format("beta = {} lies below eta_c but the forward balance has a single root", beta));
        }
        r.c2_star = -f.roots.front().c;
    } else {
        r.regime = Regime::left_and_right;
        const BalanceSolution b = solve_balance(bwd, beta);
        if (b.roots.empty()) {
            throw Error(fmt::format("beta = {} lies above eta_c but the backward balance has no root", beta));
        }
        r.c2_star = b.roots.back().c;
    }
    r.R1 = {{-r.c1_star, r.c2_star}};
    r.R0 = {{-std::numeric_limits<double>::infinity(), -r.c1_star},
            {r.c2_star, std::numeric_limits<double>::infinity()}};
    r.provenance = {
        {"backward", {{"a_min", bwd.a_min()}, {"a_max", bwd.a_grid().back()}, {"a_points", bwd.a_grid().size()},
                      {"mu_at_eta_c", bwd.mu_at_eta_c()}}},
        {"forward", {{"a_min", fwd.a_min()}, {"a_max", fwd.a_grid().back()}, {"a_points", fwd.a_grid().size()},
                     {"mu_at_eta_c", fwd.mu_at_eta_c()}}},
        {"forward_roots", f.roots.size()},
    };
    return r;
}

std::vector<WaveReport> beta_sweep(std::span<const double> betas, const EtaCEstimate& eta_c,
                                   const RateFunction& bwd, const RateFunction& fwd) {
    std::vector<WaveReport> out;
    out.reserve(betas.size());
    for (double beta : betas) out.push_back(classify(beta, eta_c, bwd, fwd));
    return out;
}

nlohmann::json to_json(const WaveReport& r) {
    nlohmann::json R0 = nlohmann::json::array(), R1 = nlohmann::json::array();
    for (const auto& s : r.R0) R0.push_back(interval_json(s));
    for (const auto& s : r.R1) R1.push_back(interval_json(s));
    return {
        {"beta", r.beta},
        {"eta_c", {{"estimate", r.eta_c}, {"lo", r.eta_c_lo}, {"hi", r.eta_c_hi}}},
        {"c1_star", r.c1_star},
        {"c2_star", r.c2_star},
        {"regime", to_string(r.regime)},
        {"R0", R0},
        {"R1", R1},
        {"provenance", r.provenance},
    };
}

void write_sweep_csv(std::span<const WaveReport> reports, std::ostream& out) {
    out << "beta,c1,c2,regime\n";
    for (const auto& r : reports) {
        out << fmt::format("{:.17g},{:.17g},{:.17g},{}\n", r.beta, r.c1_star, r.c2_star, to_string(r.regime));
    }
}

}  // namespace driftwave
