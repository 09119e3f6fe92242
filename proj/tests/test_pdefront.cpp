#include <cmath>
#include <map>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "driftwave/drift.hpp"
#include "driftwave/error.hpp"
#include "driftwave/pdefront.hpp"
#include "oracles.hpp"

namespace driftwave {
namespace {

DriftField constant_field(double b0, Interval window = {-2000.0, 2000.0}) {
    return sample_drift(DriftSpec::constant(b0, std::max(1.0, std::abs(b0))), window);
}

DriftField fourier_field(std::uint64_t seed, Interval window = {-2000.0, 2000.0}) {
    DriftSpec s;
    s.kind = DriftKind::random_fourier;
    s.params = {{"mean", 0.5}, {"amplitude", 0.4}, {"modes", 4}};
    s.bound_B = 1.0;
    return sample_drift(s, window, seed);
}

SpeedGuess closed_form_guess(double b0, double beta) {
    return {oracle::c1_star(b0, beta), oracle::c2_star(b0, beta)};
}

// Constant-drift runs shared across tests, keyed by b0.
const FrontRun& constant_run(double b0) {
    static std::map<double, FrontRun> cache;
    auto it = cache.find(b0);
    if (it == cache.end()) {
        auto field = constant_field(b0);
        it = cache.emplace(b0, run_front(field, Reaction::logistic(1.0), {}, 60.0, {}, closed_form_guess(b0, 1.0)))
                 .first;
    }
    return it->second;
}

bool in_unit_interval(const PdeState& s) {
    return std::all_of(s.u.begin(), s.u.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
}

TEST(PdeInit, PlateauProfile) {
    PdeState s = init({-10.0, 10.0}, 0.02, {1.0, 1.0, Profile::plateau});
    auto node = [&](double x) { return s.u[static_cast<std::size_t>(std::lround((x - s.x_lo) / s.dx))]; };
    EXPECT_EQ(node(0.0), 1.0);
    EXPECT_EQ(node(2.0), 0.0);
    EXPECT_EQ(node(-2.0), 0.0);
    EXPECT_EQ(s.u.size(), 1001u);
    EXPECT_DOUBLE_EQ(s.x_hi(), 10.0);
}

TEST(PdeInit, CosineProfileIsSmoothAndCompact) {
    PdeState s = init({-10.0, 10.0}, 0.02, {1.0, 0.8, Profile::cosine});
    double max_jump = 0.0;
    for (std::size_t i = 0; i < s.u.size(); ++i) {
        if (std::abs(s.x(i)) >= 1.0) EXPECT_EQ(s.u[i], 0.0);
        if (i > 0) max_jump = std::max(max_jump, std::abs(s.u[i] - s.u[i - 1]));
    }
    EXPECT_NEAR(*std::max_element(s.u.begin(), s.u.end()), 0.8, 1e-12);
    EXPECT_LT(max_jump, 0.8 * std::numbers::pi / 2.0 * 0.02 * 1.01);
}

TEST(PdeInit, RejectsBadData) {
    EXPECT_THROW(init({-10.0, 10.0}, 0.02, {1.0, 1.5, Profile::plateau}), InvalidArgument);
    EXPECT_THROW(init({-10.0, 10.0}, 0.02, {0.0, 1.0, Profile::plateau}), InvalidArgument);
    EXPECT_THROW(init({-0.5, 10.0}, 0.02, {1.0, 1.0, Profile::plateau}), OutOfWindow);
    EXPECT_THROW(parse_profile("triangle"), InvalidArgument);
}

TEST(PdeStep, ZeroAndOneAreFixedPoints) {
    auto field = fourier_field(1, {-20.0, 20.0});
    PdeState zero = init({-10.0, 10.0}, 0.02, {1.0, 0.0, Profile::plateau});
    PdeState one = zero;
    std::fill(one.u.begin(), one.u.end(), 1.0);
    Stepper stepper(field, Reaction::logistic(1.0), zero);
    for (int i = 0; i < 50; ++i) {
        stepper.step(zero, 0.01);
        stepper.step(one, 0.01);
    }
    EXPECT_TRUE(std::all_of(zero.u.begin(), zero.u.end(), [](double v) { return v == 0.0; }));
    EXPECT_TRUE(std::all_of(one.u.begin(), one.u.end(), [](double v) { return v == 1.0; }));
    EXPECT_NEAR(zero.t, 0.5, 1e-12);
}

TEST(PdeStep, StaysInUnitInterval) {
    auto field = fourier_field(2, {-40.0, 40.0});
    PdeState s = init({-30.0, 30.0}, 0.02, {1.0, 1.0, Profile::plateau});
    Stepper stepper(field, Reaction::logistic(2.0), s);
    for (int i = 0; i < 400; ++i) {
        stepper.step(s, 0.01, i < 4);
        ASSERT_TRUE(in_unit_interval(s)) << "step " << i;
    }
    EXPECT_LT(stepper.max_bound_violation(), 1e-12);
}

TEST(PdeStep, CflGuard) {
    auto field = constant_field(2.0, {-20.0, 20.0});
    PdeState s = init({-10.0, 10.0}, 0.02, {});
    EXPECT_THROW(step(s, field, Reaction::logistic(1.0), 0.011), InvalidArgument);
    EXPECT_NO_THROW(step(s, field, Reaction::logistic(1.0), 0.01));
}

TEST(PdeStep, LogisticHalfStepIsExact) {
    std::vector<double> u{0.0, 0.25, 0.5, 1.0};
    react(u, Reaction::logistic(1.0), 0.3);
    for (auto [v, u0] : {std::pair{u[1], 0.25}, std::pair{u[2], 0.5}}) {
        double e = std::exp(0.3);
        EXPECT_DOUBLE_EQ(v, u0 * e / (1.0 - u0 + u0 * e));
    }
    EXPECT_EQ(u[0], 0.0);
    EXPECT_EQ(u[3], 1.0);
}

TEST(PdeStep, CustomReactionIsValidated) {
    Reaction ok{1.0, [](double u) { return u * (1.0 - u) * (1.0 - u); }};
    EXPECT_NO_THROW(ok.validate());
    std::vector<double> u{0.5};
    react(u, ok, 0.1);
    EXPECT_GT(u[0], 0.5);
    EXPECT_LT(u[0], 0.5 * std::exp(0.1));
    Reaction too_fast{1.0, [](double u) { return 2.0 * u * (1.0 - u); }};
    EXPECT_THROW(too_fast.validate(), InvalidArgument);
    Reaction bistable{1.0, [](double u) { return u * (1.0 - u) * (u - 0.3); }};
    EXPECT_THROW(bistable.validate(), InvalidArgument);
}

TEST(PdeFront, FitSpeedOfExactLine) {
    std::vector<double> t{0, 1, 2, 3, 4, 5}, x{1, 3, 5, 7, 9, std::nan("")};
    SpeedFit f = fit_speed(t, x, 0.0, 5.0);
    EXPECT_DOUBLE_EQ(f.speed, 2.0);
    EXPECT_NEAR(f.half_width, 0.0, 1e-12);
    EXPECT_EQ(f.points, 5u);
    EXPECT_TRUE(std::isnan(fit_speed(t, x, 4.5, 5.0).speed));
}

TEST(PdeFront, FrontPositionsInterpolate) {
    PdeState s;
    s.x_lo = 0.0;
    s.dx = 1.0;
    s.u = {0.0, 0.25, 0.75, 1.0, 0.6, 0.2, 0.0};
    auto p = front_positions(s, 0.5);
    ASSERT_TRUE(p);
    EXPECT_DOUBLE_EQ(p->first, 1.5);
    EXPECT_DOUBLE_EQ(p->second, 4.25);
    EXPECT_FALSE(front_positions(s, 1.5));
}

TEST(PdeFront, DriftlessKppSpeed) {
    const FrontRun& r = constant_run(0.0);
    const FrontTrace& tr = r.trace(0.5);
    EXPECT_NEAR(tr.right_fit.speed, std::sqrt(2.0), 0.05 * std::sqrt(2.0));
    EXPECT_NEAR(tr.left_fit.speed, -std::sqrt(2.0), 0.05 * std::sqrt(2.0));
    EXPECT_NEAR(tr.left_fit.speed, -tr.right_fit.speed, 1e-6);
    EXPECT_EQ(r.max_bound_violation, 0.0);
    EXPECT_EQ(r.expansions, 0);
}

TEST(PdeFront, ConstantDriftShiftsBothFronts) {
    const FrontTrace& a = constant_run(0.5).trace(0.5);
    EXPECT_NEAR(a.left_fit.speed, -oracle::c1_star(0.5, 1.0), 0.05 * oracle::c1_star(0.5, 1.0));
    EXPECT_NEAR(a.right_fit.speed, oracle::c2_star(0.5, 1.0), 0.05 * oracle::c2_star(0.5, 1.0));
    const FrontTrace& b = constant_run(2.0).trace(0.5);
    EXPECT_NEAR(b.left_fit.speed, -oracle::c1_star(2.0, 1.0), 0.05 * oracle::c1_star(2.0, 1.0));
    EXPECT_NEAR(b.right_fit.speed, oracle::c2_star(2.0, 1.0), 0.10 * std::abs(oracle::c2_star(2.0, 1.0)));
    EXPECT_LT(b.right_fit.speed, 0.0);
}

TEST(PdeFront, FrontsAreMonotoneAfterTransient) {
    for (double b0 : {0.0, 0.5, 2.0}) {
        const FrontTrace& tr = constant_run(b0).trace(0.5);
        for (std::size_t i = 1; i < tr.times.size(); ++i) {
            if (tr.times[i] < 10.0) continue;
            EXPECT_LE(tr.left[i], tr.left[i - 1] + 1e-9) << b0 << " t " << tr.times[i];
            if (b0 < 1.0) EXPECT_GE(tr.right[i], tr.right[i - 1] - 1e-9);
            else EXPECT_LE(tr.right[i], tr.right[i - 1] + 1e-9);
        }
    }
}

TEST(PdeFront, LevelChoiceDoesNotChangeSpeed) {
    for (double b0 : {0.0, 0.5, 2.0}) {
        const FrontRun& r = constant_run(b0);
        EXPECT_NEAR(r.trace(0.25).left_fit.speed, r.trace(0.5).left_fit.speed, 0.01);
        EXPECT_NEAR(r.trace(0.25).right_fit.speed, r.trace(0.5).right_fit.speed, 0.01);
    }
}

TEST(PdeFront, RayVerdicts) {
    std::vector<double> c2{0.0, -2.0};
    auto rays = ray_probe(constant_run(2.0).history, c2);
    EXPECT_EQ(rays[0].verdict, Verdict::to_zero);
    EXPECT_EQ(rays[1].verdict, Verdict::to_one);
    std::vector<double> c05{0.0, -3.0, 1.5};
    auto r2 = ray_probe(constant_run(0.5).history, c05);
    EXPECT_EQ(r2[0].verdict, Verdict::to_one);
    EXPECT_EQ(r2[1].verdict, Verdict::to_zero);
    EXPECT_EQ(r2[2].verdict, Verdict::to_zero);
    std::vector<double> outside{10.0};
    EXPECT_THROW(ray_probe(constant_run(0.5).history, outside), OutOfWindow);
}

TEST(PdeFront, ZeroInitialDataStaysZero) {
    auto field = fourier_field(3);
    InitialData zero{1.0, 0.0, Profile::plateau};
    FrontRun r = run_front(field, Reaction::logistic(1.0), zero, 10.0);
    EXPECT_EQ(r.final_max, 0.0);
    EXPECT_TRUE(std::isnan(r.trace(0.5).left.back()));
}

TEST(PdeFront, DomainExpandsOnce) {
    auto field = constant_field(0.5);
    FrontRun r = run_front(field, Reaction::logistic(1.0), {}, 20.0, {}, SpeedGuess{0.0, 0.0});
    EXPECT_EQ(r.expansions, 1);
    EXPECT_LT(r.domain.lo, -40.0);
    EXPECT_THROW(run_front(field, Reaction::logistic(1.0), {}, 20.0, {}, SpeedGuess{-1.9, 0.0}), Error);
}

TEST(PdeFront, RejectsCoarseGrid) {
    auto field = constant_field(0.5);
    PdeNumerics coarse;
    coarse.dx = 0.05;
    EXPECT_THROW(run_front(field, Reaction::logistic(1.0), {}, 5.0, coarse), InvalidArgument);
    PdeNumerics fine;
    EXPECT_THROW(run_front(field, Reaction::logistic(100.0), {}, 5.0, fine), InvalidArgument);
}

TEST(PdeFront, ComparisonPrinciple) {
    auto field = fourier_field(4);
    PdeNumerics num;
    num.snapshot_times = {2.0, 5.0, 10.0};
    SpeedGuess g{3.0, 3.0};
    FrontRun small = run_front(field, Reaction::logistic(1.0), {1.0, 0.4, Profile::cosine}, 10.0, num, g);
    FrontRun large = run_front(field, Reaction::logistic(1.0), {1.5, 0.9, Profile::plateau}, 10.0, num, g);
    ASSERT_EQ(small.snapshots.size(), 3u);
    ASSERT_EQ(large.snapshots.size(), 3u);
    for (std::size_t k = 0; k < 3; ++k) {
        const auto& a = small.snapshots[k].state.u;
        const auto& b = large.snapshots[k].state.u;
        ASSERT_EQ(a.size(), b.size());
        for (std::size_t i = 0; i < a.size(); ++i) ASSERT_LE(a[i], b[i] + 1e-12) << "snapshot " << k << " node " << i;
    }
}

TEST(PdeFront, GridRefinementChangesSpeedsLittle) {
    auto field = fourier_field(5);
    SpeedGuess g{3.0, 2.0};
    PdeNumerics coarse;
    PdeNumerics fine;
    fine.dx = 0.01;
    fine.dt_max = 0.005;
    FrontRun a = run_front(field, Reaction::logistic(1.0), {}, 30.0, coarse, g);
    FrontRun b = run_front(field, Reaction::logistic(1.0), {}, 30.0, fine, g);
    const auto &ta = a.trace(0.5), &tb = b.trace(0.5);
    EXPECT_NEAR(ta.left_fit.speed, tb.left_fit.speed, 0.01 * std::abs(tb.left_fit.speed));
    EXPECT_NEAR(ta.right_fit.speed, tb.right_fit.speed, 0.01 * std::abs(tb.right_fit.speed));
}

TEST(PdeFront, CsvLayouts) {
    FrontTrace tr;
    tr.times = {0.0, 0.5};
    tr.left = {-1.0, -1.5};
    tr.right = {1.0, 1.25};
    std::ostringstream a;
    write_trace_csv(tr, a);
    EXPECT_EQ(a.str(), "t,left,right\n0,-1,1\n0.5,-1.5,1.25\n");
    RayProbe p;
    p.c = -2.0;
    p.times = {1.0};
    p.u = {0.5};
    std::vector<RayProbe> rays{p};
    std::ostringstream b;
    write_rays_csv(rays, b);
    EXPECT_EQ(b.str(), "t,c,u\n1,-2,0.5\n");
    PdeState s;
    s.x_lo = -1.0;
    s.dx = 0.5;
    s.u = {0.0, 1.0, 0.25};
    std::ostringstream c;
    write_snapshot_csv(s, c, 2);
    EXPECT_EQ(c.str(), "x,u\n-1,0\n0,0.25\n");
}

}  // namespace
}  // namespace driftwave
