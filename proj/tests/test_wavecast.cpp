#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "driftwave/drift.hpp"
#include "driftwave/error.hpp"
#include "driftwave/lyapunov.hpp"
#include "driftwave/ratefn.hpp"
#include "driftwave/wavecast.hpp"
#include "oracles.hpp"

namespace driftwave {
namespace {

constexpr Interval kWindow{-1100.0, 1300.0};

DriftField constant_field(double b0) {
    return sample_drift(DriftSpec::constant(b0, std::max(1.0, std::abs(b0))), kWindow);
}

struct Pipeline {
    EtaCEstimate eta_c;
    RateFunction bwd, fwd;
};

Pipeline pipeline(const DriftField& field, double beta_max, int n_cells = 5) {
    EtaCSearch s;
    s.hi = 4.0;
    s.n_cells = n_cells;
    EtaCEstimate e = combine(detect_eta_c(field, Direction::backward, s), detect_eta_c(field, Direction::forward, s));
    CurveOptions o;
    o.n_cells = n_cells;
    auto grid = default_eta_grid(default_eta_lo(field.mean(), beta_max), e.estimate);
    auto bwd = mu_curve(field, grid, Direction::backward, Method::bvp, o);
    auto fwd = mu_curve(field, grid, Direction::forward, Method::bvp, o);
    return {e, legendre(bwd, e.estimate, default_a_grid(bwd)), legendre(fwd, e.estimate, default_a_grid(fwd))};
}

// Rate function of a closed-form μ on a fine grid.
RateFunction exact_rate(double b0, Direction d) {
    LyapunovCurve c;
    c.direction = d;
    c.eta_grid = default_eta_grid(-8.0, oracle::eta_c(b0), 4000);
    for (double eta : c.eta_grid) {
        c.mu.push_back(d == Direction::backward ? oracle::mu_backward(b0, eta) : oracle::mu_forward(b0, eta));
        c.converged.push_back(true);
    }
    c.mu_stderr.assign(c.mu.size(), 0.0);
    return legendre(c, oracle::eta_c(b0), default_a_grid(c));
}

EtaCEstimate exact_eta_c(double b0) {
    double e = oracle::eta_c(b0);
    return {Direction::backward, e, e * (1 - 1e-4), e * (1 + 1e-4), false, 0};
}

TEST(Wavecast, BalanceRootsForConstantDrift) {
    RateFunction bwd = exact_rate(0.5, Direction::backward);
    RateFunction fwd = exact_rate(0.5, Direction::forward);
    BalanceSolution b = solve_balance(bwd, 1.0);
    ASSERT_EQ(b.roots.size(), 1u);
    EXPECT_NEAR(b.roots[0].c, std::sqrt(2.0) - 0.5, 1e-4);
    EXPECT_EQ(b.roots[0].branch, Branch::increasing);
    BalanceSolution f = solve_balance(fwd, 1.0);
    ASSERT_EQ(f.roots.size(), 1u);
    EXPECT_NEAR(f.roots[0].c, std::sqrt(2.0) + 0.5, 1e-4);
}

TEST(Wavecast, NoBackwardRootBelowEtaC) {
    RateFunction bwd = exact_rate(2.0, Direction::backward);
    BalanceSolution b = solve_balance(bwd, 1.0);
    EXPECT_TRUE(b.roots.empty());
    EXPECT_NEAR(b.min_S, 2.0, 1e-3);
    RateFunction fwd = exact_rate(2.0, Direction::forward);
    BalanceSolution f = solve_balance(fwd, 1.0);
    ASSERT_EQ(f.roots.size(), 2u);
    EXPECT_EQ(f.roots[0].branch, Branch::decreasing);
    EXPECT_NEAR(f.roots[0].c, 2.0 - std::sqrt(2.0), 1e-4);
    EXPECT_NEAR(f.roots[1].c, 2.0 + std::sqrt(2.0), 1e-4);
}

TEST(Wavecast, RejectsNonPositiveBeta) {
    RateFunction bwd = exact_rate(0.5, Direction::backward);
    EXPECT_THROW(solve_balance(bwd, 0.0), InvalidArgument);
    EXPECT_THROW(solve_balance(bwd, 1e4), OutOfWindow);
}

TEST(Wavecast, ClassifiesBothLeft) {
    WaveReport r = classify(1.0, exact_eta_c(2.0), exact_rate(2.0, Direction::backward),
                            exact_rate(2.0, Direction::forward));
    EXPECT_EQ(r.regime, Regime::both_left);
    EXPECT_NEAR(r.c1_star, 3.4142, 1e-3);
    EXPECT_NEAR(r.c2_star, -0.5858, 1e-3);
    EXPECT_GT(r.c1_star + r.c2_star, 0.0);
    ASSERT_EQ(r.R1.size(), 1u);
    EXPECT_DOUBLE_EQ(r.R1[0].lo, -r.c1_star);
    EXPECT_DOUBLE_EQ(r.R1[0].hi, r.c2_star);
}

TEST(Wavecast, ClassifiesLeftAndRight) {
    WaveReport r = classify(1.0, exact_eta_c(0.5), exact_rate(0.5, Direction::backward),
                            exact_rate(0.5, Direction::forward));
    EXPECT_EQ(r.regime, Regime::left_and_right);
    EXPECT_NEAR(r.c1_star, 1.9142, 1e-3);
    EXPECT_NEAR(r.c2_star, 0.9142, 1e-3);
    EXPECT_GT(r.c2_star, 0.0);
    EXPECT_LT(r.c2_star, r.c1_star);
    ASSERT_EQ(r.R0.size(), 2u);
    EXPECT_TRUE(std::isinf(r.R0[0].lo));
    EXPECT_DOUBLE_EQ(r.R0[1].lo, r.c2_star);
}

TEST(Wavecast, ClassifiesStagnant) {
    WaveReport r = classify(0.125, exact_eta_c(0.5), exact_rate(0.5, Direction::backward),
                            exact_rate(0.5, Direction::forward));
    EXPECT_EQ(r.regime, Regime::stagnant);
    EXPECT_EQ(r.c2_star, 0.0);
    EXPECT_NEAR(r.c1_star, 1.0, 1e-3);
    EXPECT_EQ(r.R1[0].hi, 0.0);
}

TEST(Wavecast, PipelineMatchesFrameShiftedKpp) {
    for (auto [b0, beta] : {std::pair{0.5, 1.0}, std::pair{2.0, 1.0}, std::pair{0.0, 0.5}}) {
        Pipeline p = pipeline(constant_field(b0), beta);
        WaveReport r = classify(beta, p.eta_c, p.bwd, p.fwd);
        EXPECT_NEAR(r.c1_star, oracle::c1_star(b0, beta), 0.01 * oracle::c1_star(b0, beta)) << b0;
        EXPECT_NEAR(r.c2_star, oracle::c2_star(b0, beta), 0.01 * std::abs(oracle::c2_star(b0, beta))) << b0;
        EXPECT_NEAR(r.c1_star + r.c2_star, 2.0 * std::sqrt(2.0 * beta), 0.02);
    }
}

TEST(Wavecast, SweepIsMonotoneAndCrossesAtEtaC) {
    Pipeline p = pipeline(constant_field(1.0), 2.0);
    std::vector<double> betas;
    for (double beta = 0.1; beta <= 1.5; beta += 0.1) betas.push_back(beta);
    betas.push_back(p.eta_c.estimate);
    std::sort(betas.begin(), betas.end());
    auto reports = beta_sweep(betas, p.eta_c, p.bwd, p.fwd);
    for (std::size_t i = 1; i < reports.size(); ++i) {
        EXPECT_GT(reports[i].c1_star, reports[i - 1].c1_star);
        if (reports[i].regime == Regime::stagnant && reports[i - 1].regime == Regime::stagnant) {
            EXPECT_EQ(reports[i].c2_star, 0.0);
        } else {
            EXPECT_GT(reports[i].c2_star, reports[i - 1].c2_star);
        }
    }
    for (const auto& r : reports) {
        if (r.beta < p.eta_c.lo) {
            EXPECT_EQ(r.regime, Regime::both_left);
            EXPECT_LT(r.c2_star, 0.0);
        } else if (r.beta > p.eta_c.hi) {
            EXPECT_EQ(r.regime, Regime::left_and_right);
            EXPECT_GT(r.c2_star, 0.0);
        } else {
            EXPECT_EQ(r.regime, Regime::stagnant);
        }
        EXPECT_GT(r.c1_star - r.c2_star, 0.0);
    }
    std::ostringstream out;
    write_sweep_csv(reports, out);
    EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "beta,c1,c2,regime");
}

TEST(Wavecast, JsonReport) {
    WaveReport r = classify(1.0, exact_eta_c(0.5), exact_rate(0.5, Direction::backward),
                            exact_rate(0.5, Direction::forward));
    auto j = to_json(r);
    EXPECT_EQ(j["regime"], "left_and_right");
    EXPECT_EQ(j["R0"][0][0], "-inf");
    EXPECT_NEAR(j["c2_star"].get<double>(), 0.9142, 1e-3);
}

}  // namespace
}  // namespace driftwave
