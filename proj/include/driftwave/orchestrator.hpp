#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "driftwave/drift.hpp"
#include "driftwave/montecarlo.hpp"
#include "driftwave/pdefront.hpp"
#include "driftwave/transfer.hpp"
#include "driftwave/wavecast.hpp"

namespace driftwave {

enum class Stage { drift, lyapunov, ratefn, wavecast, pdefront, compare };
std::string_view to_string(Stage s);
Stage parse_stage(std::string_view name);
const std::vector<Stage>& all_stages();

struct Numerics {
    // environment and Lyapunov curves
    std::int64_t first_cell = 0;
    int n_cells = 200;
    double ode_step = kDefaultStep;
    TruncationOptions truncation;
    int eta_points = 64;
    std::optional<double> eta_lo;  // default -4 max(2 E[b], 1, max β)
    double eta_c_search_hi = 0.0;  // 0: B^2 / 2 + 1
    int a_points = 200;
    // Monte Carlo cross-check of cell MGFs against the truncated BVP
    int mc_checks = 0;
    int mc_samples = 100000;
    double dt_sde = 1e-4;
    double mc_horizon = 1e3;
    int mc_truncation_L = 1;
    std::uint64_t mc_seed = 1;
    // PDE
    PdeNumerics pde;
    InitialData u0;
    double T_end = 150.0;
};

struct Tolerances {
    double speed_rel = 0.05;     // measured vs predicted front speeds
    double speed_floor = 0.05;   // denominator floor for predicted speeds near 0
    double edge_margin = 0.10;   // rays this close to a predicted edge are not scored
    double mu_gap = 0.02;
    double rho_mean = 0.02;
    double abel = 1e-6;
    double mc_sigmas = 3.0;
};

struct ExperimentConfig {
    DriftConfig drift;
    std::vector<double> betas{1.0};
    Numerics numerics;
    std::vector<Stage> stages = all_stages();
    Tolerances tolerances;
    std::vector<double> rays;  // extra ray speeds probed for every β
    std::string output_dir = "out";

    // Throws InvalidArgument unless stages form a prefix of the pipeline and
    // the numeric settings are usable.
    void validate() const;
};

// Missing keys take their defaults; unknown keys are errors.
ExperimentConfig config_from_json(const nlohmann::json& j);
// Every setting, defaults included.
nlohmann::json to_json(const ExperimentConfig& config);

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex(std::uint64_t h);

// Identifies a drift realization: hash of its spec with the seed.
std::string field_id(const DriftSpec& spec);

// Window covering the Lyapunov cells, the η_c search, the truncation margins
// and the largest PDE domain for the configured β values.
Interval pipeline_window(const ExperimentConfig& config);

// Measured side of a comparison.
struct MeasuredFront {
    double beta = 0.0;
    std::string field_id;
    double left_speed = 0.0;   // fitted at level 0.5
    double right_speed = 0.0;
    double left_half_width = 0.0;
    double right_half_width = 0.0;
    std::vector<RayProbe> rays;
};

MeasuredFront measure(double beta, const std::string& field_id, const FrontRun& run, std::span<const RayProbe> rays);

struct SpeedRow {
    std::string front;  // "left" or "right"
    double predicted = 0.0;
    double measured = 0.0;
    double rel_error = 0.0;
    bool passed = false;
};

struct RayRow {
    double c = 0.0;
    Verdict expected = Verdict::undecided;  // undecided: too close to an edge to score
    Verdict measured = Verdict::undecided;
    bool passed = false;
};

struct BetaVerdict {
    double beta_predicted = 0.0;
    double beta_measured = 0.0;
    bool beta_match = false;
    Regime regime = Regime::left_and_right;
    bool regime_match = false;
    std::vector<SpeedRow> speeds;
    std::vector<RayRow> rays;
    bool passed = false;
};

struct IdentityCheck {
    std::string name;
    double value = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

struct PipelineVerdict {
    std::vector<BetaVerdict> rows;
    std::vector<IdentityCheck> identities;
    bool passed = false;
};

// Throws InvalidArgument when the two sides come from different fields. A β
// mismatch is recorded as a failing row.
BetaVerdict compare(const WaveReport& report, const std::string& report_field_id, const MeasuredFront& measured,
                    const Tolerances& tolerances);

nlohmann::json to_json(const BetaVerdict& row);
nlohmann::json to_json(const PipelineVerdict& verdict);

// Monte Carlo cell MGF against the truncated boundary value problem, scored
// as |mc - bvp| <= sigmas * stderr + halving bias allowance.
struct CrossCheckRow {
    McQuery query;
    double bvp = 0.0;
    DtHalvingCheck mc;
    bool passed = false;
};

CrossCheckRow cross_check(const DriftField& field, const McQuery& query, const McOptions& options, double sigmas,
                          double ode_step = kDefaultStep);

// CSV columns: k,eta,direction,L,bvp,mc,stderr,allowance,passed
void write_cross_check_csv(std::span<const CrossCheckRow> rows, std::ostream& out);

struct StageRecord {
    Stage stage = Stage::drift;
    std::string inputs_hash;
    std::string outputs_hash;
    std::vector<std::string> files;
    double wall_seconds = 0.0;
};

struct Manifest {
    nlohmann::json config;  // effective config with every default
    std::vector<StageRecord> stages;
    std::string hash;       // over config and stage hashes; wall time and output_dir excluded
    std::optional<PipelineVerdict> verdict;
};

nlohmann::json to_json(const Manifest& manifest);

// Runs the configured stages in order, writing artifacts and manifest.json
// into config.output_dir. A failing stage aborts with its diagnostic; files
// already written are kept.
Manifest run_pipeline(const ExperimentConfig& config);

// Re-scores an artifact directory from its wave.json and pde.json.
PipelineVerdict verify_artifacts(const std::filesystem::path& dir, const Tolerances& tolerances);

}  // namespace driftwave
