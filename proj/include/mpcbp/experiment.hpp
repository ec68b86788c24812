#pragma once

// Seeded Monte-Carlo experiments: scenario -> measurements -> tracker -> OSPA.

#include "mpcbp/channel_model.hpp"
#include "mpcbp/eval.hpp"
#include "mpcbp/synthgen.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mpcbp {

inline constexpr int kConfigSchemaVersion = 1;

enum class ExperimentMode { FullySynthetic, RadioPipeline };

struct GeometryConfig {
    int rows = 3;
    int cols = 3;
    double spacing = 0.02;
    double psi = 0.0;
    double f_c = 6e9;
    int n_samples = 46;
    double t_s = 1.25e-9;
    double c = 299792458.0;
    double pulse_duration = 2e-9;
    double rolloff = 0.6;

    [[nodiscard]] ArrayGeometry build() const;
};

struct ExperimentConfig {
    ExperimentMode mode = ExperimentMode::FullySynthetic;
    std::string scenario = "standard";  // builtin name or path to a scenario file
    HyperParams hyper;
    /// Unset: taken from the scenario.
    std::optional<double> u_de;
    GeometryConfig geom;
    int runs = 1;
    std::uint64_t base_seed = 1;
    std::string out_dir = "out";
    int workers = 1;
    OspaConfig ospa;
    double radio_sigma_sq = 1.0;
    SnapshotEstimatorConfig estimator;
};

struct ConfigReport {
    ExperimentConfig config;
    std::vector<std::string> defaulted;  // "field: value" notes
    std::vector<std::string> errors;     // "field: message"

    [[nodiscard]] bool ok() const { return errors.empty(); }
};

/// Parses, range-checks and default-fills a JSON config.
ConfigReport parse_config(const std::string& text);
ConfigReport validate_config(const std::filesystem::path& path);

std::string config_to_json(const ExperimentConfig& cfg);

Scenario resolve_scenario(const ExperimentConfig& cfg);

/// Seed of run `index`: SplitMix64 applied to base_seed XOR index.
std::uint64_t run_seed(std::uint64_t base_seed, std::uint64_t index);

/// One Monte-Carlo run; no file output.
RunLog run_once(const ExperimentConfig& cfg, const Scenario& scn, int index);

struct ExperimentResult {
    std::vector<RunLog> logs;
    Summary summary;
};

/// Runs all Monte-Carlo runs on `cfg.workers` threads and, when `write` is
/// set, writes run_XXX.csv, summary.csv, summary.json and config.json into
/// out_dir. Throws on invalid config or I/O failure.
ExperimentResult run_experiment(const ExperimentConfig& cfg, bool write = true);

}  // namespace mpcbp
