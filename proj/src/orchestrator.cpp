#include "driftwave/orchestrator.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "driftwave/error.hpp"
#include "driftwave/lyapunov.hpp"
#include "driftwave/ratefn.hpp"
#include "svg.hpp"

namespace driftwave {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array kStageNames{"drift", "lyapunov", "ratefn", "wavecast", "pdefront", "compare"};

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
    if (!j.is_object()) throw InvalidArgument(fmt::format("config: {} must be an object", where));
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw InvalidArgument(fmt::format("config: unknown key '{}' in {}", key, where));
        }
    }
}

template <class T>
void read(const json& j, std::string_view key, T& out) {
    if (auto it = j.find(std::string(key)); it != j.end() && !it->is_null()) out = it->get<T>();
}

double finite_or_inf(const json& v) {
    if (v.is_string()) return v.get<std::string>() == "inf" ? std::numeric_limits<double>::infinity()
                                                           : -std::numeric_limits<double>::infinity();
    return v.get<double>();
}

Regime parse_regime(std::string_view name) {
    for (Regime r : {Regime::both_left, Regime::stagnant, Regime::left_and_right}) {
        if (to_string(r) == name) return r;
    }
    throw InvalidArgument(fmt::format("unknown regime '{}'", name));
}

Verdict parse_verdict(std::string_view name) {
    for (Verdict v : {Verdict::to_zero, Verdict::to_one, Verdict::undecided}) {
        if (to_string(v) == name) return v;
    }
    throw InvalidArgument(fmt::format("unknown ray verdict '{}'", name));
}

WaveReport report_from_json(const json& j) {
    WaveReport r;
    r.beta = j.at("beta").get<double>();
    r.eta_c = j.at("eta_c").at("estimate").get<double>();
    r.eta_c_lo = j.at("eta_c").at("lo").get<double>();
    r.eta_c_hi = j.at("eta_c").at("hi").get<double>();
    r.c1_star = j.at("c1_star").get<double>();
    r.c2_star = j.at("c2_star").get<double>();
    r.regime = parse_regime(j.at("regime").get<std::string>());
    for (const auto& s : j.at("R0")) r.R0.push_back({finite_or_inf(s[0]), finite_or_inf(s[1])});
    for (const auto& s : j.at("R1")) r.R1.push_back({finite_or_inf(s[0]), finite_or_inf(s[1])});
    return r;
}

json measured_to_json(const MeasuredFront& m) {
    json rays = json::array();
    for (const auto& p : m.rays) {
        rays.push_back({{"c", p.c}, {"final_mean", p.final_mean}, {"verdict", to_string(p.verdict)}});
    }
    return {{"beta", m.beta},
            {"field_id", m.field_id},
            {"left_speed", m.left_speed},
            {"left_half_width", m.left_half_width},
            {"right_speed", m.right_speed},
            {"right_half_width", m.right_half_width},
            {"rays", rays}};
}

MeasuredFront measured_from_json(const json& j) {
    MeasuredFront m;
    m.beta = j.at("beta").get<double>();
    m.field_id = j.at("field_id").get<std::string>();
    m.left_speed = j.at("left_speed").get<double>();
    m.left_half_width = j.at("left_half_width").get<double>();
    m.right_speed = j.at("right_speed").get<double>();
    m.right_half_width = j.at("right_half_width").get<double>();
    for (const auto& r : j.at("rays")) {
        RayProbe p;
        p.c = r.at("c").get<double>();
        p.final_mean = r.at("final_mean").get<double>();
        p.verdict = parse_verdict(r.at("verdict").get<std::string>());
        m.rays.push_back(p);
    }
    return m;
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(fmt::format("cannot read {}", path.string()));
    return json::parse(in);
}

std::string beta_tag(double beta) { return fmt::format("{:g}", beta); }

double max_beta(const ExperimentConfig& c) { return *std::max_element(c.betas.begin(), c.betas.end()); }

// Artifacts of one stage; the running hash covers file names and bytes.
class StageWriter {
public:
    StageWriter(fs::path dir, StageRecord& record) : dir_(std::move(dir)), record_(record) {}

    void write(const std::string& name, const std::string& bytes) {
        std::ofstream out(dir_ / name, std::ios::binary);
        if (!out) throw Error(fmt::format("cannot write {}", (dir_ / name).string()));
        out << bytes;
        hash_ = fnv1a(name, hash_);
        hash_ = fnv1a(bytes, hash_);
        record_.files.push_back(name);
        record_.outputs_hash = hex(hash_);
    }

    template <class F>
    void write_with(const std::string& name, F&& fill) {
        std::ostringstream out;
        fill(out);
        write(name, out.str());
    }

    void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

private:
    fs::path dir_;
    StageRecord& record_;
    std::uint64_t hash_ = fnv1a("");
};

struct PipelineState {
    std::optional<DriftField> field;
    std::string field_id;
    double mean_drift = 0.0;
    EtaCEstimate eta_c;
    std::optional<LyapunovCurve> bwd, fwd;
    std::optional<RateFunction> I_bwd, I_fwd;
    std::vector<WaveReport> reports;
};

svg::Series series(std::string label, std::vector<double> x, std::vector<double> y, bool dashed = false) {
    return {std::move(label), std::move(x), std::move(y), dashed};
}

void stage_drift(const ExperimentConfig& config, PipelineState& st, StageWriter& out) {
    const Interval window = config.drift.window.value_or(pipeline_window(config));
    st.field.emplace(sample_drift(config.drift.spec, window, config.drift.spec.seed));
    st.field_id = field_id(config.drift.spec);
    const auto& n = config.numerics;
    const Interval cells{static_cast<double>(n.first_cell), static_cast<double>(n.first_cell + n.n_cells)};
    const json mean_cells = window.contains(cells) ? json(spatial_mean(*st.field, cells)) : json(nullptr);

    std::vector<double> L_list;
    for (double L : {10.0, 100.0, 1000.0}) {
        if (window.contains(Interval{-L, L})) L_list.push_back(L);
    }
    json scale = json::array();
    json advisories = json::array();
    if (!L_list.empty()) {
        ScaleIntegralReport rep = scale_integral_check(*st.field, L_list);
        for (const auto& r : rep.rows) {
            scale.push_back({{"L", r.L}, {"log_positive", r.log_positive}, {"log_negative", r.log_negative}});
        }
        if (st.field->mean() > 0.0 && !(rep.positive_plateau && rep.negative_grows)) {
            advisories.push_back("scale integrals do not show the plateau/growth pattern expected for E[b] > 0");
        }
    }
    if (st.field->mean() < 0.0) advisories.push_back("mean drift is negative; the theory assumes E[b] >= 0");

    const std::size_t stride = std::max<std::size_t>(1, (st.field->samples().size() + 19999) / 20000);
    out.write_with("drift.csv", [&](std::ostream& o) { write_drift_csv(*st.field, o, stride); });
    out.write_json("drift.json", {{"spec", to_json(config.drift.spec)},
                                  {"field_id", st.field_id},
                                  {"window", {window.lo, window.hi}},
                                  {"pitch", st.field->pitch()},
                                  {"mean_window", st.field->mean()},
                                  {"mean_cells", mean_cells},
                                  {"max_abs", st.field->max_abs()},
                                  {"scale_integrals", scale},
                                  {"advisories", advisories}});
}

void stage_lyapunov(const ExperimentConfig& config, PipelineState& st, StageWriter& out) {
    const auto& n = config.numerics;
    const DriftField& field = *st.field;
    st.mean_drift = spatial_mean(field, {static_cast<double>(n.first_cell),
                                         static_cast<double>(n.first_cell + n.n_cells)});
    EtaCSearch search;
    search.hi = n.eta_c_search_hi > 0.0 ? n.eta_c_search_hi : 0.5 * field.spec().bound_B * field.spec().bound_B + 1.0;
    search.first_cell = n.first_cell;
    search.n_cells = n.n_cells;
    search.step = n.ode_step;
    search.truncation = n.truncation;
    const EtaCEstimate eb = detect_eta_c(field, Direction::backward, search);
    const EtaCEstimate ef = detect_eta_c(field, Direction::forward, search);
    st.eta_c = combine(eb, ef);

    const double eta_lo = n.eta_lo.value_or(default_eta_lo(st.mean_drift, max_beta(config)));
    const auto grid = default_eta_grid(eta_lo, st.eta_c.estimate, n.eta_points);
    CurveOptions options;
    options.first_cell = n.first_cell;
    options.n_cells = n.n_cells;
    options.step = n.ode_step;
    options.truncation = n.truncation;
    st.bwd = mu_curve(field, grid, Direction::backward, Method::bvp, options);
    st.fwd = mu_curve(field, grid, Direction::forward, Method::bvp, options);
    const GapReport gap = mu_gap_check(*st.bwd, *st.fwd, st.mean_drift);

    const auto& tol = config.tolerances;
    std::vector<IdentityCheck> checks;
    checks.push_back({"mu_gap", gap.max_abs, tol.mu_gap, gap.max_abs < tol.mu_gap});
    checks.push_back({"converged_domains_agree", static_cast<double>(gap.domain_mismatch.size()), 0.0,
                      gap.domains_agree});

    std::vector<double> probe_etas{eta_lo, 0.0};
    if (st.eta_c.lo > 0.0) probe_etas.push_back(0.5 * st.eta_c.lo);
    std::vector<AbelRow> abel;
    double abel_max = 0.0, rho_dev = 0.0;
    const double rho_ref = -2.0 * spatial_mean(field, {static_cast<double>(n.first_cell),
                                                       static_cast<double>(n.first_cell + n.n_cells + 1)});
    json rho_rows = json::array();
    for (double eta : probe_etas) {
        CellChain chain(field, eta, n.ode_step);
        double sum = 0.0;
        for (std::int64_t k = n.first_cell; k < n.first_cell + n.n_cells; ++k) {
            const double r = abel_residual(field, k, eta, n.ode_step);
            abel.push_back({k, eta, r});
            abel_max = std::max(abel_max, r);
            sum += std::log(rho(chain, k));
        }
        const double mean_log_rho = sum / n.n_cells;
        rho_dev = std::max(rho_dev, std::abs(mean_log_rho - rho_ref));
        rho_rows.push_back({{"eta", eta}, {"mean_log_rho", mean_log_rho}, {"reference", rho_ref}});
    }
    checks.push_back({"rho_mean", rho_dev, tol.rho_mean, rho_dev < tol.rho_mean});
    checks.push_back({"abel", abel_max, tol.abel, abel_max < tol.abel});
    for (const auto* c : {&*st.bwd, &*st.fwd}) {
        const ShapeReport s = curve_shape(*c);
        checks.push_back({fmt::format("mu_shape_{}", to_string(c->direction)), s.min_second_difference, 0.0,
                          s.convex && s.nondecreasing});
    }

    if (n.mc_checks > 0) {
        constexpr std::array kEtas{-0.5, -0.1, 0.0, 0.2};
        McOptions mc{static_cast<std::size_t>(n.mc_samples), n.mc_horizon, n.dt_sde, n.mc_seed};
        std::vector<CrossCheckRow> rows;
        std::size_t failed = 0;
        for (int i = 0; i < n.mc_checks; ++i) {
            McQuery q{n.first_cell + static_cast<std::int64_t>(i) * n.n_cells / n.mc_checks,
                      kEtas[static_cast<std::size_t>(i) % kEtas.size()],
                      i % 2 == 0 ? Direction::backward : Direction::forward, n.mc_truncation_L};
            rows.push_back(cross_check(field, q, mc, tol.mc_sigmas, n.ode_step));
            if (!rows.back().passed) ++failed;
        }
        checks.push_back({"mc_agreement", static_cast<double>(failed), 0.0, failed == 0});
        out.write_with("mc_crosscheck.csv", [&](std::ostream& o) { write_cross_check_csv(rows, o); });
    }

    std::vector<LyapunovCurve> curves{*st.bwd, *st.fwd};
    out.write_with("lyapunov.csv", [&](std::ostream& o) { write_lyapunov_csv(curves, o); });
    out.write_with("abel.csv", [&](std::ostream& o) { write_abel_csv(abel, o); });
    out.write_json("lyapunov_summary.json", lyapunov_summary(*st.bwd, *st.fwd, st.eta_c, gap));
    json jc = json::array();
    for (const auto& c : checks) {
        jc.push_back({{"name", c.name}, {"value", c.value}, {"tolerance", c.tolerance}, {"passed", c.passed}});
    }
    out.write_json("identities.json", {{"mean_drift", st.mean_drift}, {"rho", rho_rows}, {"checks", jc}});
    out.write("mu.svg", svg::render(svg::make_plot("Lyapunov functions",
                                     "eta",
                                     "mu",
                                     {series("backward", st.bwd->eta_grid, st.bwd->mu),
                                      series("forward", st.fwd->eta_grid, st.fwd->mu)})));
}

void stage_ratefn(const ExperimentConfig& config, PipelineState& st, StageWriter& out) {
    const int points = config.numerics.a_points;
    st.I_bwd.emplace(legendre(*st.bwd, st.eta_c.estimate, default_a_grid(*st.bwd, points)));
    st.I_fwd.emplace(legendre(*st.fwd, st.eta_c.estimate, default_a_grid(*st.fwd, points)));
    const PropertyReport props = property_report(*st.I_bwd, *st.I_fwd, st.mean_drift);
    std::vector<RateFunction> rates{*st.I_bwd, *st.I_fwd};
    out.write_with("rate.csv", [&](std::ostream& o) { write_rate_csv(rates, o); });
    out.write_json("rate_properties.json", {{"all_passed", props.all_passed()}, {"report", to_json(props)}});

    svg::Plot plot = svg::make_plot("Rate functions", "a", "I(a)", {});
    double top = 0.0;
    for (const RateFunction* I : {&*st.I_bwd, &*st.I_fwd}) {
        std::vector<double> asym;
        for (double a : I->a_grid()) asym.push_back(I->asymptote(a));
        plot.series.push_back(series(std::string(to_string(I->direction())), I->a_grid(), I->I()));
        plot.series.push_back(series(fmt::format("{} asymptote", to_string(I->direction())), I->a_grid(), asym, true));
        top = std::max(top, std::abs(I->min_value()));
    }
    plot.y_min = std::min(0.0, -top);
    plot.y_max = 3.0 * top + 2.0;
    out.write("rate.svg", svg::render(plot));
}

void stage_wavecast(const ExperimentConfig& config, PipelineState& st, StageWriter& out) {
    st.reports = beta_sweep(config.betas, st.eta_c, *st.I_bwd, *st.I_fwd);
    json reports = json::array();
    for (const auto& r : st.reports) reports.push_back(to_json(r));
    out.write_json("wave.json", {{"field_id", st.field_id}, {"mean_drift", st.mean_drift}, {"reports", reports}});
    out.write_with("sweep.csv", [&](std::ostream& o) { write_sweep_csv(st.reports, o); });

    const double nan = std::numeric_limits<double>::quiet_NaN();
    svg::Series r1{"R1 (u -> 1)", {}, {}, false}, r0{"R0 (u -> 0)", {}, {}, true};
    for (const auto& r : st.reports) {
        r1.x.insert(r1.x.end(), {-r.c1_star, r.c2_star, 0.0});
        r1.y.insert(r1.y.end(), {r.beta, r.beta, nan});
        r0.x.insert(r0.x.end(), {-r.c1_star - 1.0, -r.c1_star, 0.0, r.c2_star, r.c2_star + 1.0, 0.0});
        r0.y.insert(r0.y.end(), {r.beta, r.beta, nan, r.beta, r.beta, nan});
    }
    svg::Series eta_c{"eta_c", {}, {}, true};
    double lo = 0.0, hi = 0.0;
    for (double x : r0.x) lo = std::min(lo, x), hi = std::max(hi, x);
    eta_c.x = {lo, hi};
    eta_c.y = {st.eta_c.estimate, st.eta_c.estimate};
    out.write("regimes.svg", svg::render(svg::make_plot("Asymptotic wave shape", "ray speed c", "beta", {r1, r0, eta_c})));
}

void stage_pdefront(const ExperimentConfig& config, PipelineState& st, StageWriter& out) {
    const auto& n = config.numerics;
    json runs = json::array();
    for (const auto& report : st.reports) {
        const double beta = report.beta;
        FrontRun run = run_front(*st.field, Reaction::logistic(beta), n.u0, n.T_end, n.pde,
                                 SpeedGuess{report.c1_star, report.c2_star});
        std::set<double> cs(config.rays.begin(), config.rays.end());
        cs.insert({0.5 * (report.c2_star - report.c1_star), -report.c1_star - 1.0, report.c2_star + 1.0, 0.0});
        std::vector<double> rays;
        for (double c : cs) {
            if (c * n.T_end >= run.history.x_lo && c * n.T_end <= run.history.x_hi()) rays.push_back(c);
        }
        const auto probes = ray_probe(run.history, rays);
        const MeasuredFront m = measure(beta, st.field_id, run, probes);
        const std::string tag = beta_tag(beta);

        json traces = json::array();
        for (const auto& tr : run.traces) {
            out.write_with(fmt::format("trace_beta_{}_level_{:g}.csv", tag, tr.level),
                           [&](std::ostream& o) { write_trace_csv(tr, o); });
            traces.push_back({{"level", tr.level},
                              {"left_speed", tr.left_fit.speed},
                              {"left_half_width", tr.left_fit.half_width},
                              {"right_speed", tr.right_fit.speed},
                              {"right_half_width", tr.right_fit.half_width},
                              {"points", tr.left_fit.points}});
        }
        out.write_with(fmt::format("rays_beta_{}.csv", tag), [&](std::ostream& o) { write_rays_csv(probes, o); });
        for (const auto& snap : run.snapshots) {
            const auto stride = static_cast<std::size_t>(std::max(1.0, std::round(n.pde.history_pitch / run.dx)));
            out.write_with(fmt::format("snapshot_beta_{}_t_{:g}.csv", tag, snap.t),
                           [&](std::ostream& o) { write_snapshot_csv(snap.state, o, stride); });
        }

        const FrontTrace& half = run.trace(0.5);
        const std::vector<double> ends{0.0, n.T_end};
        out.write(fmt::format("front_beta_{}.svg", tag),
                  svg::render(svg::make_plot(fmt::format("Fronts at beta = {}", tag),
                               "t",
                               "x",
                               {series("left", half.times, half.left), series("right", half.times, half.right),
                                series("-c1* t", ends, {0.0, -report.c1_star * n.T_end}, true),
                                series("c2* t", ends, {0.0, report.c2_star * n.T_end}, true)})));

        json j = measured_to_json(m);
        j["domain"] = {run.domain.lo, run.domain.hi};
        j["dx"] = run.dx;
        j["dt"] = run.dt;
        j["T_end"] = run.T_end;
        j["expansions"] = run.expansions;
        j["max_bound_violation"] = run.max_bound_violation;
        j["final_max"] = run.final_max;
        j["traces"] = traces;
        runs.push_back(j);
    }
    out.write_json("pde.json", {{"field_id", st.field_id}, {"runs", runs}});
}

}  // namespace

std::string_view to_string(Stage s) { return kStageNames[static_cast<std::size_t>(s)]; }

Stage parse_stage(std::string_view name) {
    for (std::size_t i = 0; i < kStageNames.size(); ++i) {
        if (kStageNames[i] == name) return static_cast<Stage>(i);
    }
    throw InvalidArgument(fmt::format("unknown stage '{}'", name));
}

const std::vector<Stage>& all_stages() {
    static const std::vector<Stage> stages{Stage::drift,    Stage::lyapunov, Stage::ratefn,
                                           Stage::wavecast, Stage::pdefront, Stage::compare};
    return stages;
}

void ExperimentConfig::validate() const {
    if (betas.empty()) throw InvalidArgument("config: betas must not be empty");
    for (double b : betas) {
        if (!(b > 0.0)) throw InvalidArgument(fmt::format("config: beta must be positive, got {}", b));
    }
    if (stages.empty()) throw InvalidArgument("config: stages must not be empty");
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (i >= all_stages().size() || stages[i] != all_stages()[i]) {
            throw InvalidArgument("config: stages must be a prefix of drift, lyapunov, ratefn, wavecast, pdefront, "
                                  "compare");
        }
    }
    const auto& n = numerics;
    if (n.n_cells < 8) throw InvalidArgument("config: n_cells must be at least 8");
    if (n.eta_points < 16) throw InvalidArgument("config: eta_points must be at least 16");
    if (n.a_points < 16) throw InvalidArgument("config: a_points must be at least 16");
    if (!(n.ode_step > 0.0)) throw InvalidArgument("config: ode_step must be positive");
    if (n.mc_checks < 0) throw InvalidArgument("config: mc_checks must be nonnegative");
    if (n.mc_checks > 0 && (n.mc_samples < 1000 || !(n.dt_sde > 0.0) || n.mc_truncation_L < 1)) {
        throw InvalidArgument("config: Monte Carlo checks need mc_samples >= 1000, dt_sde > 0 and mc_truncation_L >= 1");
    }
    if (!(n.T_end > 0.0)) throw InvalidArgument("config: T_end must be positive");
    if (n.eta_lo && !(*n.eta_lo < 0.0)) throw InvalidArgument("config: eta_lo must be negative");
    const auto& t = tolerances;
    for (double v : {t.speed_rel, t.speed_floor, t.mu_gap, t.rho_mean, t.abel, t.mc_sigmas}) {
        if (!(v > 0.0)) throw InvalidArgument("config: tolerances must be positive");
    }
    if (!(t.edge_margin >= 0.0)) throw InvalidArgument("config: edge_margin must be nonnegative");
    if (output_dir.empty()) throw InvalidArgument("config: output_dir must not be empty");
}

ExperimentConfig config_from_json(const json& j) {
    check_keys(j, {"drift", "betas", "numerics", "stages", "tolerances", "rays", "output_dir"}, "config");
    ExperimentConfig c;
    c.drift = drift_config_from_json(j.at("drift"));
    read(j, "betas", c.betas);
    read(j, "rays", c.rays);
    read(j, "output_dir", c.output_dir);
    if (j.contains("stages")) {
        c.stages.clear();
        for (const auto& s : j.at("stages")) c.stages.push_back(parse_stage(s.get<std::string>()));
    }
    if (j.contains("numerics")) {
        const json& n = j.at("numerics");
        check_keys(n,
                   {"first_cell", "n_cells", "ode_step", "truncation", "eta_points", "eta_lo", "eta_c_search_hi",
                    "a_points", "mc_checks", "mc_samples", "dt_sde", "mc_horizon", "mc_truncation_L", "mc_seed", "pde",
                    "u0", "T_end"},
                   "numerics");
        auto& o = c.numerics;
        read(n, "first_cell", o.first_cell);
        read(n, "n_cells", o.n_cells);
        read(n, "ode_step", o.ode_step);
        read(n, "eta_points", o.eta_points);
        if (n.contains("eta_lo") && !n.at("eta_lo").is_null()) o.eta_lo = n.at("eta_lo").get<double>();
        read(n, "eta_c_search_hi", o.eta_c_search_hi);
        read(n, "a_points", o.a_points);
        read(n, "mc_checks", o.mc_checks);
        read(n, "mc_samples", o.mc_samples);
        read(n, "dt_sde", o.dt_sde);
        read(n, "mc_horizon", o.mc_horizon);
        read(n, "mc_truncation_L", o.mc_truncation_L);
        read(n, "mc_seed", o.mc_seed);
        read(n, "T_end", o.T_end);
        if (n.contains("truncation")) {
            const json& t = n.at("truncation");
            check_keys(t, {"L0", "L_max", "rel_tol"}, "numerics.truncation");
            read(t, "L0", o.truncation.L0);
            read(t, "L_max", o.truncation.L_max);
            read(t, "rel_tol", o.truncation.rel_tol);
        }
        if (n.contains("pde")) {
            const json& p = n.at("pde");
            check_keys(p,
                       {"dx", "dt", "rannacher_steps", "output_interval", "history_pitch", "levels", "edge_tol",
                        "bound_tol", "snapshot_times"},
                       "numerics.pde");
            read(p, "dx", o.pde.dx);
            read(p, "dt", o.pde.dt_max);
            read(p, "rannacher_steps", o.pde.rannacher_steps);
            read(p, "output_interval", o.pde.output_interval);
            read(p, "history_pitch", o.pde.history_pitch);
            read(p, "levels", o.pde.levels);
            read(p, "edge_tol", o.pde.edge_tol);
            read(p, "bound_tol", o.pde.bound_tol);
            read(p, "snapshot_times", o.pde.snapshot_times);
        }
        if (n.contains("u0")) {
            const json& u = n.at("u0");
            check_keys(u, {"delta", "amplitude", "profile"}, "numerics.u0");
            read(u, "delta", o.u0.delta);
            read(u, "amplitude", o.u0.amplitude);
            if (u.contains("profile")) o.u0.profile = parse_profile(u.at("profile").get<std::string>());
        }
    }
    if (j.contains("tolerances")) {
        const json& t = j.at("tolerances");
        check_keys(t, {"speed_rel", "speed_floor", "edge_margin", "mu_gap", "rho_mean", "abel", "mc_sigmas"},
                   "tolerances");
        read(t, "speed_rel", c.tolerances.speed_rel);
        read(t, "speed_floor", c.tolerances.speed_floor);
        read(t, "edge_margin", c.tolerances.edge_margin);
        read(t, "mu_gap", c.tolerances.mu_gap);
        read(t, "rho_mean", c.tolerances.rho_mean);
        read(t, "abel", c.tolerances.abel);
        read(t, "mc_sigmas", c.tolerances.mc_sigmas);
    }
    c.validate();
    return c;
}

json to_json(const ExperimentConfig& c) {
    json drift = to_json(c.drift.spec);
    if (c.drift.window) drift["window"] = {c.drift.window->lo, c.drift.window->hi};
    json stages = json::array();
    for (Stage s : c.stages) stages.push_back(to_string(s));
    const auto& n = c.numerics;
    json numerics = {
        {"first_cell", n.first_cell},
        {"n_cells", n.n_cells},
        {"ode_step", n.ode_step},
        {"truncation", {{"L0", n.truncation.L0}, {"L_max", n.truncation.L_max}, {"rel_tol", n.truncation.rel_tol}}},
        {"eta_points", n.eta_points},
        {"eta_lo", n.eta_lo ? json(*n.eta_lo) : json(nullptr)},
        {"eta_c_search_hi", n.eta_c_search_hi},
        {"a_points", n.a_points},
        {"mc_checks", n.mc_checks},
        {"mc_samples", n.mc_samples},
        {"dt_sde", n.dt_sde},
        {"mc_horizon", n.mc_horizon},
        {"mc_truncation_L", n.mc_truncation_L},
        {"mc_seed", n.mc_seed},
        {"pde",
         {{"dx", n.pde.dx},
          {"dt", n.pde.dt_max},
          {"rannacher_steps", n.pde.rannacher_steps},
          {"output_interval", n.pde.output_interval},
          {"history_pitch", n.pde.history_pitch},
          {"levels", n.pde.levels},
          {"edge_tol", n.pde.edge_tol},
          {"bound_tol", n.pde.bound_tol},
          {"snapshot_times", n.pde.snapshot_times}}},
        {"u0", {{"delta", n.u0.delta}, {"amplitude", n.u0.amplitude}, {"profile", to_string(n.u0.profile)}}},
        {"T_end", n.T_end},
    };
    const auto& t = c.tolerances;
    return {{"drift", drift},
            {"betas", c.betas},
            {"numerics", numerics},
            {"stages", stages},
            {"tolerances",
             {{"speed_rel", t.speed_rel},
              {"speed_floor", t.speed_floor},
              {"edge_margin", t.edge_margin},
              {"mu_gap", t.mu_gap},
              {"rho_mean", t.rho_mean},
              {"abel", t.abel},
              {"mc_sigmas", t.mc_sigmas}}},
            {"rays", c.rays},
            {"output_dir", c.output_dir}};
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex(std::uint64_t h) { return fmt::format("{:016x}", h); }

std::string field_id(const DriftSpec& spec) { return hex(fnv1a(to_json(spec).dump())); }

Interval pipeline_window(const ExperimentConfig& config) {
    const auto& n = config.numerics;
    CurveOptions options;
    options.first_cell = n.first_cell;
    options.n_cells = n.n_cells;
    options.step = n.ode_step;
    options.truncation = n.truncation;
    Interval w = required_window(options);
    // A PDE domain is at most (√(2β) + B + 2) T on each side before its one doubling.
    const double reach = 2.0 * (std::sqrt(2.0 * max_beta(config)) + config.drift.spec.bound_B + 2.0) * n.T_end + 1.0;
    return {std::floor(std::min(w.lo, -reach)), std::ceil(std::max(w.hi, reach))};
}

MeasuredFront measure(double beta, const std::string& id, const FrontRun& run, std::span<const RayProbe> rays) {
    const FrontTrace& tr = run.trace(0.5);
    return {beta,
            id,
            tr.left_fit.speed,
            tr.right_fit.speed,
            tr.left_fit.half_width,
            tr.right_fit.half_width,
            std::vector<RayProbe>(rays.begin(), rays.end())};
}

BetaVerdict compare(const WaveReport& report, const std::string& report_field_id, const MeasuredFront& measured,
                    const Tolerances& tol) {
    if (report_field_id != measured.field_id) {
        throw InvalidArgument(fmt::format("provenance mismatch: prediction from field {}, measurement from field {}",
                                          report_field_id, measured.field_id));
    }
    BetaVerdict v;
    v.beta_predicted = report.beta;
    v.beta_measured = measured.beta;
    v.beta_match = std::abs(report.beta - measured.beta) <= 1e-12 * std::max(1.0, std::abs(report.beta));
    v.regime = report.regime;

    auto row = [&](std::string front, double predicted, double m) {
        const double rel = std::abs(m - predicted) / std::max(std::abs(predicted), tol.speed_floor);
        return SpeedRow{std::move(front), predicted, m, rel, std::isfinite(m) && rel < tol.speed_rel};
    };
    v.speeds.push_back(row("left", -report.c1_star, measured.left_speed));
    v.speeds.push_back(row("right", report.c2_star, measured.right_speed));

    const double right = measured.right_speed;
    bool right_ok = false;
    switch (report.regime) {
        case Regime::both_left:
            right_ok = right < 0.0;
            break;
        case Regime::left_and_right:
            right_ok = right > 0.0;
            break;
        case Regime::stagnant:
            right_ok = std::abs(right) <= measured.right_half_width + tol.speed_floor;
            break;
    }
    v.regime_match = measured.left_speed < 0.0 && right_ok;

    const std::array edges{-report.c1_star, report.c2_star};
    for (const auto& p : measured.rays) {
        RayRow r{p.c, Verdict::undecided, p.verdict, true};
        const bool near_edge = std::any_of(edges.begin(), edges.end(), [&](double e) {
            return std::abs(p.c - e) <= tol.edge_margin * std::max(std::abs(e), tol.speed_floor);
        });
        if (!near_edge) {
            r.expected = (p.c > edges[0] && p.c < edges[1]) ? Verdict::to_one : Verdict::to_zero;
            r.passed = r.measured == r.expected;
        }
        v.rays.push_back(r);
    }
    v.passed = v.beta_match && v.regime_match &&
               std::all_of(v.speeds.begin(), v.speeds.end(), [](const SpeedRow& s) { return s.passed; }) &&
               std::all_of(v.rays.begin(), v.rays.end(), [](const RayRow& r) { return r.passed; });
    return v;
}

json to_json(const BetaVerdict& v) {
    json speeds = json::array(), rays = json::array();
    for (const auto& s : v.speeds) {
        speeds.push_back({{"front", s.front},
                          {"predicted", s.predicted},
                          {"measured", s.measured},
                          {"rel_error", s.rel_error},
                          {"passed", s.passed}});
    }
    for (const auto& r : v.rays) {
        rays.push_back({{"c", r.c},
                        {"expected", to_string(r.expected)},
                        {"measured", to_string(r.measured)},
                        {"passed", r.passed}});
    }
    return {{"beta_predicted", v.beta_predicted},
            {"beta_measured", v.beta_measured},
            {"beta_match", v.beta_match},
            {"regime", to_string(v.regime)},
            {"regime_match", v.regime_match},
            {"speeds", speeds},
            {"rays", rays},
            {"passed", v.passed}};
}

json to_json(const PipelineVerdict& v) {
    json rows = json::array(), ids = json::array();
    for (const auto& r : v.rows) rows.push_back(to_json(r));
    bool ids_ok = true;
    for (const auto& c : v.identities) {
        ids.push_back({{"name", c.name}, {"value", c.value}, {"tolerance", c.tolerance}, {"passed", c.passed}});
        ids_ok = ids_ok && c.passed;
    }
    return {{"rows", rows}, {"identities", ids}, {"identities_passed", ids_ok}, {"passed", v.passed}};
}

CrossCheckRow cross_check(const DriftField& field, const McQuery& query, const McOptions& options, double sigmas,
                          double ode_step) {
    CrossCheckRow row;
    row.query = query;
    CellChain chain(field, query.eta, ode_step);
    row.bvp = truncated_cell_mgf(chain, query.k, query.direction, query.truncation_L);
    row.mc = mc_dt_halving(field, query, options);
    row.passed = std::abs(row.mc.fine.mean - row.bvp) <= sigmas * row.mc.fine.std_error + row.mc.bias_allowance;
    return row;
}

void write_cross_check_csv(std::span<const CrossCheckRow> rows, std::ostream& out) {
    out << "k,eta,direction,L,bvp,mc,stderr,allowance,passed\n";
    for (const auto& r : rows) {
        out << fmt::format("{},{:.17g},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{}\n", r.query.k, r.query.eta,
                           to_string(r.query.direction), r.query.truncation_L, r.bvp, r.mc.fine.mean,
                           r.mc.fine.std_error, r.mc.bias_allowance, r.passed ? 1 : 0);
    }
}

json to_json(const Manifest& m) {
    json stages = json::array();
    for (const auto& s : m.stages) {
        stages.push_back({{"stage", to_string(s.stage)},
                          {"inputs_hash", s.inputs_hash},
                          {"outputs_hash", s.outputs_hash},
                          {"files", s.files},
                          {"wall_seconds", s.wall_seconds}});
    }
    json j = {{"config", m.config}, {"stages", stages}, {"hash", m.hash}};
    if (m.verdict) j["verdict_passed"] = m.verdict->passed;
    return j;
}

PipelineVerdict verify_artifacts(const fs::path& dir, const Tolerances& tol) {
    const json wave = read_json(dir / "wave.json");
    const json pde = read_json(dir / "pde.json");
    const auto& reports = wave.at("reports");
    const auto& runs = pde.at("runs");
    if (reports.size() != runs.size()) {
        throw Error(fmt::format("wave.json has {} predictions but pde.json has {} runs", reports.size(), runs.size()));
    }
    PipelineVerdict v;
    const std::string id = wave.at("field_id").get<std::string>();
    const double mean_drift = wave.at("mean_drift").get<double>();
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const WaveReport r = report_from_json(reports[i]);
        v.rows.push_back(compare(r, id, measured_from_json(runs[i]), tol));
        const double gap = r.c1_star - r.c2_star;
        const bool ok = std::abs(mean_drift) <= 1e-9 ? std::abs(gap) <= tol.speed_rel * r.c1_star
                                                     : (gap > 0.0) == (mean_drift > 0.0);
        v.identities.push_back({fmt::format("sign_relation_beta_{}", beta_tag(r.beta)), gap, 0.0, ok});
    }
    if (fs::exists(dir / "identities.json")) {
        const json ids = read_json(dir / "identities.json");
        for (const auto& c : ids.at("checks")) {
            v.identities.push_back({c.at("name").get<std::string>(), c.at("value").get<double>(),
                                    c.at("tolerance").get<double>(), c.at("passed").get<bool>()});
        }
    }
    if (fs::exists(dir / "rate_properties.json")) {
        const json props = read_json(dir / "rate_properties.json");
        double failed = 0.0;
        for (const auto& c : props.at("report").at("checks")) failed += c.at("passed").get<bool>() ? 0.0 : 1.0;
        v.identities.push_back({"rate_properties", failed, 0.0, props.at("all_passed").get<bool>()});
    }
    v.passed = !v.rows.empty() &&
               std::all_of(v.rows.begin(), v.rows.end(), [](const BetaVerdict& r) { return r.passed; });
    return v;
}

Manifest run_pipeline(const ExperimentConfig& config) {
    config.validate();
    const fs::path dir(config.output_dir);
    fs::create_directories(dir);

    Manifest manifest;
    manifest.config = to_json(config);
    // Hashes cover everything but the artifact location.
    json hashed = manifest.config;
    hashed.erase("output_dir");
    const std::string config_bytes = hashed.dump();
    auto finish = [&] {
        std::uint64_t h = fnv1a(config_bytes);
        for (const auto& s : manifest.stages) {
            h = fnv1a(to_string(s.stage), h);
            h = fnv1a(s.inputs_hash, h);
            h = fnv1a(s.outputs_hash, h);
        }
        manifest.hash = hex(h);
        std::ofstream out(dir / "manifest.json", std::ios::binary);
        out << to_json(manifest).dump(2) << "\n";
    };

    PipelineState state;
    std::string previous = hex(fnv1a(config_bytes));
    for (Stage stage : config.stages) {
        StageRecord record;
        record.stage = stage;
        record.inputs_hash = hex(fnv1a(previous, fnv1a(config_bytes)));
        StageWriter out(dir, record);
        const auto start = std::chrono::steady_clock::now();
        try {
            switch (stage) {
                case Stage::drift:
                    stage_drift(config, state, out);
                    break;
                case Stage::lyapunov:
                    stage_lyapunov(config, state, out);
                    break;
                case Stage::ratefn:
                    stage_ratefn(config, state, out);
                    break;
                case Stage::wavecast:
                    stage_wavecast(config, state, out);
                    break;
                case Stage::pdefront:
                    stage_pdefront(config, state, out);
                    break;
                case Stage::compare: {
                    PipelineVerdict v = verify_artifacts(dir, config.tolerances);
                    out.write_json("verdict.json", to_json(v));
                    manifest.verdict = std::move(v);
                    break;
                }
            }
        } catch (const std::exception& e) {
            finish();
            throw Error(fmt::format("stage {} failed: {}", to_string(stage), e.what()));
        }
        record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        previous = record.outputs_hash;
        manifest.stages.push_back(std::move(record));
        finish();
    }
    return manifest;
}

}  // namespace driftwave
