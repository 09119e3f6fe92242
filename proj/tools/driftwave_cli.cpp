#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "driftwave/orchestrator.hpp"

using namespace driftwave;
using nlohmann::json;

namespace {

struct Flags {
    std::string config;
    std::optional<std::string> output_dir, kind;
    std::vector<std::string> params;
    std::optional<double> bound_B, dx, dt, dt_sde, T_end;
    std::optional<std::uint64_t> seed;
    std::vector<double> betas, rays;
    std::optional<int> n_cells, eta_points, mc_checks, mc_samples;
};

void add_flags(CLI::App* app, Flags& f) {
    app->add_option("-c,--config", f.config, "JSON experiment config")->check(CLI::ExistingFile);
    app->add_option("-o,--output-dir", f.output_dir, "artifact directory");
    app->add_option("--kind", f.kind, "drift kind");
    app->add_option("--param", f.params, "drift parameter name=value");
    app->add_option("--bound-B", f.bound_B, "drift bound B");
    app->add_option("--seed", f.seed, "drift seed");
    app->add_option("--beta", f.betas, "reaction rates");
    app->add_option("--ray", f.rays, "extra ray speeds");
    app->add_option("--n-cells", f.n_cells, "cells averaged in the Lyapunov functions");
    app->add_option("--eta-points", f.eta_points, "eta grid size");
    app->add_option("--mc-checks", f.mc_checks, "Monte Carlo cross-checks");
    app->add_option("--mc-samples", f.mc_samples, "paths per Monte Carlo estimate");
    app->add_option("--dt-sde", f.dt_sde, "Euler-Maruyama step");
    app->add_option("--dx", f.dx, "PDE grid spacing");
    app->add_option("--dt", f.dt, "largest PDE time step");
    app->add_option("--T-end", f.T_end, "PDE horizon");
}

json load(const Flags& f) {
    json j = json::object();
    if (!f.config.empty()) {
        std::ifstream in(f.config);
        j = json::parse(in);
    }
    if (f.kind) {
        j["drift"]["kind"] = *f.kind;
        if (!j["drift"].contains("bound_B")) j["drift"]["bound_B"] = 1.0;
    }
    for (const auto& p : f.params) {
        const auto eq = p.find('=');
        if (eq == std::string::npos) throw CLI::ValidationError("--param", "expected name=value, got " + p);
        j["drift"]["params"][p.substr(0, eq)] = std::stod(p.substr(eq + 1));
    }
    if (f.bound_B) j["drift"]["bound_B"] = *f.bound_B;
    if (f.seed) j["drift"]["seed"] = *f.seed;
    if (f.output_dir) j["output_dir"] = *f.output_dir;
    if (!f.betas.empty()) j["betas"] = f.betas;
    if (!f.rays.empty()) j["rays"] = f.rays;
    auto set = [&](const char* key, const auto& v) {
        if (v) j["numerics"][key] = *v;
    };
    set("n_cells", f.n_cells);
    set("eta_points", f.eta_points);
    set("mc_checks", f.mc_checks);
    set("mc_samples", f.mc_samples);
    set("dt_sde", f.dt_sde);
    set("T_end", f.T_end);
    if (f.dx) j["numerics"]["pde"]["dx"] = *f.dx;
    if (f.dt) j["numerics"]["pde"]["dt"] = *f.dt;
    if (!j.contains("drift")) throw CLI::ValidationError("--config", "a drift is required (--config or --kind)");
    return j;
}

void print(const Manifest& m) {
    for (const auto& s : m.stages) {
        fmt::print("{:<9} {:>8.2f}s  in {}  out {}\n", to_string(s.stage), s.wall_seconds, s.inputs_hash,
                   s.outputs_hash);
    }
    fmt::print("manifest {}\n", m.hash);
}

void print(const PipelineVerdict& v) {
    for (const auto& row : v.rows) {
        fmt::print("beta {:g}: regime {} {}", row.beta_predicted, to_string(row.regime),
                   row.regime_match ? "matched" : "MISMATCH");
        for (const auto& s : row.speeds) {
            fmt::print(", {} {:.4f} vs {:.4f} ({:.2f}%)", s.front, s.measured, s.predicted, 100.0 * s.rel_error);
        }
        fmt::print(" -> {}\n", row.passed ? "pass" : "FAIL");
    }
    for (const auto& c : v.identities) {
        fmt::print("  {:<28} {:>12.4g}  {}\n", c.name, c.value, c.passed ? "ok" : "FAILED");
    }
    fmt::print("verdict: {}\n", v.passed ? "PASS" : "FAIL");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fronts of reaction-diffusion equations with random drift"};
    app.require_subcommand(1);

    struct Command {
        const char* name;
        const char* help;
        std::optional<Stage> last;  // nullopt: every stage
    };
    const std::vector<Command> commands{
        {"gen-drift", "sample the drift field", Stage::drift},
        {"estimate-mu", "Lyapunov functions and identity checks", Stage::lyapunov},
        {"rate", "rate functions", Stage::ratefn},
        {"predict", "front speeds and regimes from the balance equation", Stage::wavecast},
        {"simulate-pde", "prediction plus PDE front runs", Stage::pdefront},
        {"all", "full pipeline with verdict", std::nullopt},
    };
    Flags flags;
    std::vector<std::pair<CLI::App*, const Command*>> subs;
    for (const auto& c : commands) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        add_flags(sub, flags);
        subs.emplace_back(sub, &c);
    }
    CLI::App* verify = app.add_subcommand("verify", "re-score an artifact directory");
    std::string verify_dir;
    verify->add_option("dir", verify_dir, "artifact directory")->required()->check(CLI::ExistingDirectory);
    add_flags(verify, flags);

    CLI11_PARSE(app, argc, argv);

    try {
        if (verify->parsed()) {
            Tolerances tol;
            if (!flags.config.empty() || flags.kind) tol = config_from_json(load(flags)).tolerances;
            const PipelineVerdict v = verify_artifacts(verify_dir, tol);
            print(v);
            return v.passed ? EXIT_SUCCESS : EXIT_FAILURE;
        }
        for (auto [sub, cmd] : subs) {
            if (!sub->parsed()) continue;
            json j = load(flags);
            j["stages"] = json::array();
            for (Stage s : all_stages()) {
                j["stages"].push_back(to_string(s));
                if (cmd->last && s == *cmd->last) break;
            }
            const ExperimentConfig config = config_from_json(j);
            const Manifest m = run_pipeline(config);
            print(m);
            if (m.verdict) {
                print(*m.verdict);
                return m.verdict->passed ? EXIT_SUCCESS : EXIT_FAILURE;
            }
            return EXIT_SUCCESS;
        }
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    }
    return EXIT_FAILURE;
}
