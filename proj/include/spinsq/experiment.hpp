// experiment.hpp — JSON experiment configs, the runners behind each CLI subcommand and run
// manifests. Schema: docs/config.md.

#pragma once

#include "spinsq/combined.hpp"
#include "spinsq/ddpg.hpp"
#include "spinsq/effective.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace spinsq {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr int kConfigSchemaVersion = 1;

/// Bad or inconsistent configuration; `path` is the dotted field path ("agent.lr_actor").
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string path, const std::string& what);
    std::string path;
};

enum class RunKind { sweep, train, combine, validate_effective, trajectory, n_scan, gamma_scan, angle_track };

std::string to_string(RunKind k);
RunKind run_kind_from_string(const std::string& s);  ///< throws ConfigError

struct ExperimentConfig {
    RunKind kind{RunKind::sweep};
    std::string output;            ///< run directory name under the output root (default: kind)
    std::uint64_t seed{1};
    bool seed_given{false};
    ModelParams model;
    bool noisy{false};
    double t_final{0.0};           ///< 0: 50 noiseless, 100 noisy
    double dt{0.0};
    double record_interval{0.1};
    int threads{0};                ///< 0: hardware concurrency (results do not depend on it)
    bool truncation_check{true};   ///< re-run the headline trajectory at fock_cutoff + 5

    double sweep_lo{-5.0}, sweep_hi{5.0}, sweep_step{0.01};
    bool sweep_roots{true};
    M0Rule m0_rule{M0Rule::argmin};

    AgentConfig agent;
    bool agent_dt_ctrl_given{false};

    PipelineConfig combine;

    double zeta{2.569};            ///< validate-effective and constant trajectories
    std::string control_file;      ///< trajectory: control CSV (empty: constant zeta)

    std::vector<int> n_list{2, 4, 6, 8};
    std::vector<double> gammas{0.0, 0.01, 0.02, 0.05};

    std::string tv_noiseless_control, tv_noisy_control, combined_control;

    /// Horizon after defaults.
    double horizon() const;
    /// Model parameters with the noise switched off unless `noisy`.
    ModelParams dynamics_params() const;
    /// Agent config with seed, horizon-derived dt_ctrl and record interval filled in.
    AgentConfig resolved_agent() const;
    int resolved_threads() const;
};

/// Strict parse: unknown keys, wrong types and out-of-range values raise ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j);
/// Fully resolved config (every field explicit). parse_config(config_to_json(c)) == c.
nlohmann::json config_to_json(const ExperimentConfig& c);

/// Applies "a.b.c=value" overrides to a config document before parsing. The value is read as
/// JSON when it parses, otherwise as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

std::string sha256_hex(const std::string& data);

struct RunOutcome {
    std::filesystem::path directory;
    nlohmann::json summary;
    nlohmann::json manifest;
};

/// Runs the experiment into `directory`. Files are staged in a sibling "<dir>.partial" and moved
/// into place on success; on failure the staging directory is removed. An existing `directory`
/// is replaced only if it holds a previous run (manifest.json).
RunOutcome run_experiment(const ExperimentConfig& config, const std::filesystem::path& directory);

/// Output root: $SPINSQ_OUTPUT_ROOT, else "runs".
std::filesystem::path output_root();

}  // namespace spinsq
