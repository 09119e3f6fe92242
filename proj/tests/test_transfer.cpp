#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "driftwave/drift.hpp"
#include "driftwave/error.hpp"
#include "driftwave/transfer.hpp"
#include "oracles.hpp"

namespace driftwave {
namespace {

DriftField constant_field(double b0, Interval window = {-1200.0, 1200.0}) {
    return sample_drift(DriftSpec::constant(b0, std::max(1.0, std::abs(b0))), window);
}

DriftField fourier_field(std::uint64_t seed = 7, Interval window = {-1200.0, 1400.0}) {
    DriftSpec s;
    s.kind = DriftKind::random_fourier;
    s.params = {{"mean", 0.5}, {"amplitude", 0.3}, {"modes", 4}};
    s.bound_B = 1.0;
    return sample_drift(s, window, seed);
}

double frobenius(const Mat2& m) { return std::sqrt(m.a * m.a + m.b * m.b + m.c * m.c + m.d * m.d); }

TEST(Transfer, WronskianOfFreeEquation) {
    auto field = constant_field(0.0, {-2.0, 2.0});
    TransferMatrix m = propagate_wronskian(field, 0.0, 1.0, 0.0);
    Mat2 w = wronskian(m);
    EXPECT_NEAR(w.a, 1.0, 1e-13);
    EXPECT_NEAR(w.b, 1.0, 1e-13);
    EXPECT_NEAR(w.c, 1.0, 1e-13);
    EXPECT_NEAR(w.d, 0.0, 1e-13);
    EXPECT_NEAR(w.det(), -1.0, 1e-13);
}

TEST(Transfer, AbelDeterminantForConstantDrift) {
    auto field = constant_field(0.5, {-2.0, 2.0});
    TransferMatrix m = propagate_wronskian(field, 0.0, 1.0, 0.0);
    EXPECT_NEAR(wronskian(m).det(), -std::exp(-1.0), 1e-10);
}

TEST(Transfer, EmptyIntervalIsIdentity) {
    auto field = fourier_field(1, {-5.0, 5.0});
    TransferMatrix m = propagate_wronskian(field, 1.25, 1.25, 0.3);
    Mat2 v = m.value();
    EXPECT_EQ(v.a, 1.0);
    EXPECT_EQ(v.b, 0.0);
    EXPECT_EQ(v.c, 0.0);
    EXPECT_EQ(v.d, 1.0);
}

TEST(Transfer, CompositionMatchesDirectPropagation) {
    auto field = fourier_field(2, {-20.0, 20.0});
    const double step = kDefaultStep;
    for (double eta : {-1.0, 0.0, 0.05}) {
        for (auto [x, y, z] : {std::tuple{-3.0, 0.0, 4.0}, std::tuple{1.0, 2.5, 9.0}, std::tuple{-10.0, -9.0, 10.0}}) {
            TransferMatrix direct = propagate_wronskian(field, x, z, eta, step);
            TransferMatrix split = compose(propagate_wronskian(field, y, z, eta, step),
                                           propagate_wronskian(field, x, y, eta, step));
            Mat2 d = direct.value();
            Mat2 s = split.value();
            Mat2 diff{d.a - s.a, d.b - s.b, d.c - s.c, d.d - s.d};
            double bound = 10.0 * std::pow(step, 4) * (z - x) * std::max(1.0, frobenius(d));
            EXPECT_LT(frobenius(diff), bound) << "eta " << eta << " x " << x;
        }
    }
}

TEST(Transfer, OverflowReportsPosition) {
    auto field = constant_field(0.0, {-3.0, 3.0});
    try {
        propagate_wronskian(field, 0.0, 2.0, -1e6);
        FAIL() << "expected Divergence";
    } catch (const Divergence& e) {
        EXPECT_GT(e.position(), 0.0);
        EXPECT_LE(e.position(), 2.0);
    }
}

TEST(Transfer, BackwardMgfOfDriftlessPassage) {
    auto field = constant_field(0.0);
    CellMgf mgf = cell_mgf(field, 0, -0.5, Direction::backward);
    EXPECT_TRUE(mgf.converged);
    EXPECT_NEAR(mgf.value, std::exp(-1.0), 1e-9);
}

TEST(Transfer, PassageProbabilitiesWithDrift) {
    auto field = constant_field(0.5);
    EXPECT_NEAR(cell_mgf(field, 0, 0.0, Direction::backward).value, std::exp(-1.0), 1e-9);
    EXPECT_NEAR(cell_mgf(field, 0, 0.0, Direction::forward).value, 1.0, 1e-9);
}

TEST(Transfer, ConstantDriftMgfMatchesClosedForm) {
    for (double b0 : {0.5, 2.0}) {
        auto field = constant_field(b0);
        for (double eta : {-2.0, -0.3, 0.0, 0.9 * oracle::eta_c(b0)}) {
            EXPECT_NEAR(cell_mgf(field, 3, eta, Direction::backward).value, oracle::backward_mgf(b0, eta), 1e-8)
                << b0 << " " << eta;
            EXPECT_NEAR(cell_mgf(field, 3, eta, Direction::forward).value, oracle::forward_mgf(b0, eta), 1e-8)
                << b0 << " " << eta;
        }
    }
}

TEST(Transfer, TruncationIncreasesToLimit) {
    auto field = constant_field(0.5);
    CellChain chain(field, 0.1);
    double prev_b = 0.0, prev_f = 0.0;
    for (int L : {1, 2, 4, 8, 16, 32}) {
        double bwd = truncated_cell_mgf(chain, 0, Direction::backward, L);
        double fwd = truncated_cell_mgf(chain, 0, Direction::forward, L);
        EXPECT_NEAR(bwd, oracle::backward_mgf_truncated(0.5, 0.1, L), 1e-10);
        EXPECT_NEAR(fwd, oracle::forward_mgf_truncated(0.5, 0.1, L), 1e-10);
        EXPECT_GT(bwd, prev_b);
        EXPECT_GT(fwd, prev_f);
        prev_b = bwd;
        prev_f = fwd;
    }
}

TEST(Transfer, MgfStrictlyIncreasingInEta) {
    auto field = fourier_field();
    for (Direction dir : {Direction::backward, Direction::forward}) {
        double prev = 0.0;
        for (double eta = -1.0; eta <= 0.0; eta += 0.1) {
            double v = cell_mgf(field, 5, eta, dir).value;
            EXPECT_GT(v, prev);
            prev = v;
        }
    }
}

TEST(Transfer, NegativeEtaValuesAtMostOne) {
    auto field = fourier_field();
    for (std::int64_t k = 0; k < 10; ++k) {
        for (Direction dir : {Direction::backward, Direction::forward}) {
            CellMgf m = cell_mgf(field, k, -0.2, dir);
            EXPECT_GT(m.value, 0.0);
            EXPECT_LE(m.value, 1.0);
        }
    }
}

TEST(Transfer, AboveCriticalEtaDiverges) {
    auto field = constant_field(0.5);
    EXPECT_THROW(cell_mgf(field, 0, 0.2, Direction::backward), Divergence);
    EXPECT_THROW(cell_mgf(field, 0, 0.2, Direction::forward), Divergence);
    CellChain chain(field, 0.2);
    MgfEvaluation ev = evaluate_cell_mgf(chain, 0, Direction::backward);
    EXPECT_EQ(ev.status, MgfStatus::sign_change);
}

TEST(Transfer, RhoIsOneWithoutDrift) {
    auto field = constant_field(0.0, {-5.0, 5.0});
    for (double eta : {-2.0, -0.5, 0.0, 0.5}) EXPECT_NEAR(rho(field, 0, eta), 1.0, 1e-12);
}

TEST(Transfer, RhoForConstantDriftIsExact) {
    auto field = constant_field(0.5, {-5.0, 5.0});
    for (double eta : {-2.0, -0.5, 0.0, 0.1, 0.5}) EXPECT_NEAR(std::log(rho(field, 1, eta)), -1.0, 1e-10);
}

TEST(Transfer, RhoAtZeroEtaMatchesScaleQuadrature) {
    auto field = fourier_field(4, {-5.0, 20.0});
    auto b = [&](double x) { return field(x); };
    for (std::int64_t k : {0, 3, 11}) {
        double lo = static_cast<double>(k);
        double p_upper = oracle::prob_exit_upper(b, lo, lo + 1.0, lo + 2.0);
        EXPECT_NEAR(rho(field, k, 0.0), (1.0 - p_upper) / p_upper, 1e-7);
    }
}

TEST(Transfer, RhoRejectsIllPosedCell) {
    auto field = constant_field(0.0, {-5.0, 5.0});
    // Principal Dirichlet eigenvalue of ½d² on an interval of length 2 is π²/8.
    EXPECT_THROW(rho(field, 0, 1.3), Divergence);
}

TEST(Transfer, AbelResidualSmall) {
    EXPECT_LT(abel_residual(constant_field(0.0, {-2.0, 2.0}), 0, 0.0), 1e-10);
    EXPECT_LT(abel_residual(constant_field(0.5, {-2.0, 2.0}), 0, 0.0, 1e-3), 1e-8);
    auto field = fourier_field(9, {-2.0, 12.0});
    for (std::int64_t k = 0; k < 10; ++k) EXPECT_LT(abel_residual(field, k, 0.05), 1e-6);
}

TEST(Transfer, CocycleAverageTelescopes) {
    auto field = fourier_field(5, {-5.0, 420.0});
    double eta = -0.3;
    CellChain chain(field, eta);
    double prev_error = 1.0;
    for (int n : {25, 400}) {
        double sum = 0.0;
        for (int k = 0; k < n; ++k) sum += std::log(rho(chain, k));
        double error = std::abs(sum / n + 2.0 * spatial_mean(field, {0.0, n + 1.0}));
        EXPECT_LT(error, prev_error);
        prev_error = error;
    }
    EXPECT_LT(prev_error, 0.02);
}

TEST(Transfer, CsvLayout) {
    std::vector<CellMgf> rows{{0, -0.5, Direction::backward, 0.25, 128, true}};
    std::ostringstream out;
    write_cell_mgf_csv(rows, out);
    EXPECT_EQ(out.str(), "k,eta,direction,value,L,converged\n0,-0.5,backward,0.25,128,1\n");
}

}  // namespace
}  // namespace driftwave
