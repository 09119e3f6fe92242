// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "driftwave/error.hpp"
#include "driftwave/lyapunov.hpp"
#include "driftwave/orchestrator.hpp"
#include "driftwave/ratefn.hpp"
#include "driftwave/wavecast.hpp"
#include "oracles.hpp"

using namespace driftwave;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "driftwave_acceptance";

struct Outcome {
    bool passed = false;
    std::string detail;
};

double rel(double x, double ref) { return std::abs(x - ref) / std::abs(ref); }

json read_json(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

json constant_config(double b0, const std::string& name) {
    return {{"drift", {{"kind", "constant"}, {"params", {{"b0", b0}}}, {"bound_B", std::max(1.0, std::abs(b0))}}},
            {"betas", {1.0}},
            {"output_dir", (kRoot / name).string()}};
}

json fourier_config(std::uint64_t seed, const std::string& name) {
    return {{"drift",
             {{"kind", "random-fourier"},
              {"params", {{"mean", 0.5}, {"amplitude", 0.4}, {"modes", 4}}},
              {"bound_B", 1.0},
              {"seed", seed}}},
            {"betas", {1.0}},
            {"output_dir", (kRoot / name).string()}};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const IdentityCheck& check_named(const PipelineVerdict& v, const std::string& name) {
    for (const auto& c : v.identities) {
        if (c.name == name) return c;
    }
    throw Error("missing identity check " + name);
}

Outcome constant_drift_pipeline() {
    const auto t0 = std::chrono::steady_clock::now();
    const Manifest m = run_pipeline(config_from_json(constant_config(0.5, "c1")));
    const double secs = seconds_since(t0);
    const BetaVerdict& row = m.verdict->rows.at(0);
    const double c1 = -row.speeds[0].predicted, c2 = row.speeds[1].predicted;
    const double e1 = rel(c1, oracle::c1_star(0.5, 1.0)), e2 = rel(c2, oracle::c2_star(0.5, 1.0));
    const double pde = std::max(row.speeds[0].rel_error, row.speeds[1].rel_error);
    return {e1 < 0.01 && e2 < 0.01 && pde < 0.05 && secs < 900.0,
            fmt::format("c1* = {:.5f} ({:.3f}%), c2* = {:.5f} ({:.3f}%), PDE speeds {:.4f} / {:.4f} (max {:.2f}%), "
                        "{:.0f} s",
                        c1, 100 * e1, c2, 100 * e2, row.speeds[0].measured, row.speeds[1].measured, 100 * pde, secs)};
}

Outcome strong_drift_regime() {
    json j = constant_config(2.0, "c2");
    j["rays"] = {0.0, -2.0};
    const Manifest m = run_pipeline(config_from_json(j));
    const BetaVerdict& row = m.verdict->rows.at(0);
    const double c1 = -row.speeds[0].predicted, c2 = row.speeds[1].predicted;
    const double e1 = rel(c1, oracle::c1_star(2.0, 1.0)), e2 = rel(c2, oracle::c2_star(2.0, 1.0));
    Verdict at0 = Verdict::undecided, at2 = Verdict::undecided;
    for (const auto& r : row.rays) {
        if (r.c == 0.0) at0 = r.measured;
        if (r.c == -2.0) at2 = r.measured;
    }
    const bool left = row.speeds[0].measured < 0.0 && row.speeds[1].measured < 0.0;
    return {row.regime == Regime::both_left && e1 < 0.02 && e2 < 0.02 && left && at0 == Verdict::to_zero &&
                at2 == Verdict::to_one,
            fmt::format("regime {}, c1* = {:.5f} ({:.3f}%), c2* = {:.5f} ({:.3f}%), measured {:.4f} / {:.4f}, "
                        "u(t,0) -> {}, u(t,-2t) -> {}",
                        to_string(row.regime), c1, 100 * e1, c2, 100 * e2, row.speeds[0].measured,
                        row.speeds[1].measured, to_string(at0), to_string(at2))};
}

Outcome beta_sweep_across_eta_c() {
    const DriftField field = sample_drift(DriftSpec::constant(1.0, 1.0), {-2200.0, 2200.0});
    EtaCSearch s;
    s.hi = 2.0;
    const EtaCEstimate e =
        combine(detect_eta_c(field, Direction::backward, s), detect_eta_c(field, Direction::forward, s));
    const auto grid = default_eta_grid(default_eta_lo(field.mean(), 1.5), e.estimate);
    const auto bwd = mu_curve(field, grid, Direction::backward, Method::bvp);
    const auto fwd = mu_curve(field, grid, Direction::forward, Method::bvp);
    const RateFunction Ib = legendre(bwd, e.estimate, default_a_grid(bwd));
    const RateFunction If = legendre(fwd, e.estimate, default_a_grid(fwd));

    std::vector<double> betas;
    for (int i = 1; i <= 15; ++i) betas.push_back(0.1 * i);
    betas.insert(betas.end(), {e.lo * (1 - 1e-6), e.lo, e.estimate, e.hi, e.hi * (1 + 1e-6)});
    std::sort(betas.begin(), betas.end());
    const auto reports = beta_sweep(betas, e, Ib, If);

    bool ok = e.lo <= 0.5 && 0.5 <= e.hi && e.width() < 1e-3;
    int transitions = 0;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        const Regime expected = r.beta < e.lo ? Regime::both_left
                                : r.beta > e.hi ? Regime::left_and_right
                                                : Regime::stagnant;
        ok = ok && r.regime == expected;
        ok = ok && (expected == Regime::both_left ? r.c2_star < 0.0
                    : expected == Regime::stagnant ? r.c2_star == 0.0
                                                   : r.c2_star > 0.0);
        if (i > 0 && r.regime != reports[i - 1].regime) ++transitions;
    }
    ok = ok && transitions == 2 && reports.front().regime == Regime::both_left &&
         reports.back().regime == Regime::left_and_right;
    return {ok, fmt::format("eta_c bracket [{:.6f}, {:.6f}], {} betas, {} regime transitions, c2* from {:.4f} to {:.4f}",
                            e.lo, e.hi, reports.size(), transitions, reports.front().c2_star, reports.back().c2_star)};
}

struct FourierRun {
    Manifest manifest;
    PipelineVerdict identities;
    double seconds = 0.0;
};

FourierRun& fourier_run() {
    static FourierRun run = [] {
        json j = fourier_config(7, "c4");
        j["stages"] = {"drift", "lyapunov", "ratefn"};
        FourierRun r;
        const auto t0 = std::chrono::steady_clock::now();
        r.manifest = run_pipeline(config_from_json(j));
        r.seconds = seconds_since(t0);
        const json ids = read_json(kRoot / "c4" / "identities.json");
        for (const auto& c : ids.at("checks")) {
            r.identities.identities.push_back({c.at("name").get<std::string>(), c.at("value").get<double>(),
                                               c.at("tolerance").get<double>(), c.at("passed").get<bool>()});
        }
        return r;
    }();
    return run;
}

Outcome identity_suite() {
    const FourierRun& r = fourier_run();
    const auto& gap = check_named(r.identities, "mu_gap");
    const auto& domains = check_named(r.identities, "converged_domains_agree");
    const auto& rho = check_named(r.identities, "rho_mean");
    const auto& abel = check_named(r.identities, "abel");
    const double secs = r.manifest.stages[0].wall_seconds + r.manifest.stages[1].wall_seconds;
    return {gap.value < 0.02 && domains.passed && rho.value < 0.02 && abel.value < 1e-6 && secs < 600.0,
            fmt::format("mu gap {:.3g}, domain mismatches {}, ln rho deviation {:.3g}, Abel {:.3g}, {:.0f} s",
                        gap.value, domains.value, rho.value, abel.value, secs)};
}

Outcome rate_properties() {
    json j = constant_config(0.5, "c5");
    j["stages"] = {"drift", "lyapunov", "ratefn"};
    run_pipeline(config_from_json(j));
    fourier_run();
    std::string detail;
    bool ok = true;
    for (const char* name : {"c5", "c4"}) {
        const json props = read_json(kRoot / name / "rate_properties.json");
        std::size_t failed = 0, total = 0;
        for (const auto& c : props.at("report").at("checks")) {
            ++total;
            if (!c.at("passed").get<bool>()) {
                ++failed;
                detail += fmt::format(" [{} failed: {}]", c.at("name").get<std::string>(), c.dump());
            }
        }
        ok = ok && props.at("all_passed").get<bool>() && total >= 18;
        detail += fmt::format(" {} field: {}/{} checks pass;", name == std::string("c5") ? "constant" : "random",
                              total - failed, total);
    }
    return {ok, detail.substr(1)};
}

Outcome monte_carlo_cross_validation() {
    const DriftField field = sample_drift(
        DriftSpec{DriftKind::random_fourier, {{"mean", 0.5}, {"amplitude", 0.4}, {"modes", 4}}, 1.0, 7},
        {-20.0, 220.0}, std::uint64_t{7});
    constexpr std::array kEtas{-0.5, -0.1, 0.0, 0.2};
    int passed = 0, halving = 0;
    double worst = 0.0;
    for (int i = 0; i < 12; ++i) {
        const McQuery q{static_cast<std::int64_t>(17 * i), kEtas[static_cast<std::size_t>(i) % kEtas.size()],
                        i % 2 == 0 ? Direction::backward : Direction::forward, 1};
        const CrossCheckRow row = cross_check(field, q, {100000, 1e3, 1e-4, static_cast<std::uint64_t>(100 + i)}, 3.0);
        if (row.passed) ++passed;
        if (row.mc.passed) ++halving;
        worst = std::max(worst, std::abs(row.mc.fine.mean - row.bvp) /
                                    (3.0 * row.mc.fine.std_error + row.mc.bias_allowance));
    }
    return {passed == 12, fmt::format("{}/12 combinations agree (n = 1e5, dt = 1e-4), {}/12 pass the halving test "
                                      "without allowance, worst |mc - bvp| / tolerance = {:.2f}",
                                      passed, halving, worst)};
}

Outcome sign_relation() {
    bool ok = true;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        json j = fourier_config(seed, fmt::format("c7_{}", seed));
        j["stages"] = {"drift", "lyapunov", "ratefn", "wavecast"};
        run_pipeline(config_from_json(j));
        const json wave = read_json(kRoot / fmt::format("c7_{}", seed) / "wave.json");
        const double Eb = wave.at("mean_drift").get<double>();
        const double c1 = wave.at("reports")[0].at("c1_star").get<double>();
        const double c2 = wave.at("reports")[0].at("c2_star").get<double>();
        ok = ok && Eb > 0.0 && c1 - c2 > 0.0;
        detail += fmt::format(" seed {}: E[b] = {:.4f}, c1* - c2* = {:.4f};", seed, Eb, c1 - c2);
    }
    return {ok, detail.substr(1)};
}

Outcome negative_controls() {
    const Manifest m = run_pipeline(config_from_json(constant_config(0.0, "c8")));
    const BetaVerdict& row = m.verdict->rows.at(0);
    const double target = std::sqrt(2.0);
    double worst = 0.0;
    for (const auto& s : row.speeds) {
        worst = std::max({worst, rel(std::abs(s.predicted), target), rel(std::abs(s.measured), target)});
    }
    const double gap = check_named(*m.verdict, "mu_gap").value;

    const DriftField field = sample_drift(
        DriftSpec{DriftKind::random_fourier, {{"mean", 0.5}, {"amplitude", 0.4}, {"modes", 4}}, 1.0, 3},
        {-400.0, 400.0}, std::uint64_t{3});
    const FrontRun zero = run_front(field, Reaction::logistic(1.0), {1.0, 0.0, Profile::plateau}, 50.0);
    bool all_zero = zero.final_max == 0.0;
    for (const auto& r : zero.history.rows) {
        all_zero = all_zero && std::all_of(r.begin(), r.end(), [](double u) { return u == 0.0; });
    }
    return {worst < 0.02 && gap < 1e-9 && all_zero,
            fmt::format("b = 0: predicted {:.4f} / {:.4f}, measured {:.4f} / {:.4f} (worst {:.2f}% off sqrt(2)), "
                        "mu gap {:.2g}; amplitude 0 stays zero: {}",
                        row.speeds[0].predicted, row.speeds[1].predicted, row.speeds[0].measured,
                        row.speeds[1].measured, 100 * worst, gap, all_zero ? "yes" : "no")};
}

}  // namespace

int main() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"1 constant drift b0=0.5 pipeline and PDE speeds", constant_drift_pipeline},
        {"2 constant drift b0=2 both fronts move left", strong_drift_regime},
        {"3 beta sweep across eta_c for b0=1", beta_sweep_across_eta_c},
        {"4 identity suite on a random-fourier field", identity_suite},
        {"5 rate-function properties on constant and random fields", rate_properties},
        {"6 Monte Carlo vs boundary value problem", monte_carlo_cross_validation},
        {"7 sign relation over 5 seeds", sign_relation},
        {"8 negative controls", negative_controls},
    };
    int failures = 0;
    for (const auto& [name, run] : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, fmt::format("error: {}", e.what())};
        }
        if (!o.passed) ++failures;
        fmt::print("{} criterion {}: {} ({:.0f} s)\n", o.passed ? "PASS" : "FAIL", name, o.detail, seconds_since(t0));
        std::fflush(stdout);
    }
    return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
