// combined.hpp — constant amplitude up to the constant-control squeezing minimum, then a
// time-varying tail: regime selection, stitching, the stitch-point scan and tail learning.

#pragma once

#include "spinsq/ddpg.hpp"
#include "spinsq/sweep.hpp"

#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace spinsq {

/// [zeta_min - w, zeta_min + w]; w must be > 0.
std::pair<double, double> choose_regime(double zeta_min, double half_width);

struct StitchedControl {
    double zeta_c{0};
    double t_min_raw{0};    ///< time of the xi2 minimum under constant zeta_c
    double t_min{0};        ///< snapped down to the control grid
    ControlSignal tail;     ///< full_tv restricted to [t_min, T)
    ControlSignal assembled;
    StorageResult constant_storage;
};

/// Finds t_min(zeta_c) from a constant run with the given step over full_tv's horizon, snaps it
/// down to the control grid and concatenates. The dynamics are those of `params` (unitary when
/// noiseless). Throws std::domain_error naming zeta_c when xi2 has no interior minimum.
StitchedControl stitch_control(double zeta_c, const ControlSignal& full_tv, const ModelParams& params, double dt,
                               double record_interval = 0.1);

struct StitchFailure {
    double zeta_c{0};
    std::string reason;
};

struct CombinedResult {
    double zeta_opt{0};
    std::vector<double> zeta_grid;  ///< scanned values that succeeded, in grid order
    std::vector<double> S_by_zeta;  ///< LIFETIME S of each stitched control
    std::vector<double> S_full_by_zeta;
    std::vector<double> t_min_by_zeta;
    std::vector<StitchFailure> failures;
    StitchedControl best;
    ControlSignal final_control;    ///< best.assembled until a tail has been learned
    double S_c{0};
    double lifetime{0};             ///< t_cross of the final control (horizon if never crossed)
    bool crossed{false};

    double S_at(double zeta) const;
};

struct StitchOptions {
    double dt{0.0};               ///< <= 0: automatic step for the widest |zeta| involved
    double record_interval{0.1};
    int threads{default_threads()};
};

/// S (LIFETIME) of the stitched control for each zeta_c on [regime.first, regime.second] in
/// `step` increments; argmax with ties toward smaller |zeta_c|. Per-zeta failures are skipped
/// and listed; throws std::runtime_error if every point fails.
CombinedResult optimize_stitched(std::pair<double, double> regime, double step, const ControlSignal& full_tv,
                                 const ModelParams& params, const StitchOptions& options = {});

struct TailResult {
    TrainingLog log;
    ControlSignal control;  ///< constant prefix + learned tail (or the stitched tail if nothing was learned)
    StorageResult storage;
};

/// Evolves constant zeta_c up to stitched.t_min at the training step, then trains the agent on
/// the remaining bins from that snapshot. episodes = 0 returns the stitched control.
TailResult learn_tail(const StitchedControl& stitched, const ModelParams& params, const AgentConfig& agent);

/// Raised by combined_pipeline; `stage` names the step that failed.
class PipelineError : public std::runtime_error {
public:
    PipelineError(std::string stage, const std::string& what, bool numerical);
    std::string stage;
    bool numerical;
};

struct PipelineConfig {
    double sweep_lo{-1.0};
    double sweep_hi{1.0};
    double sweep_step{0.01};
    double half_width{0.5};
    double stitch_step{0.01};
    double t_final{100.0};
    int threads{default_threads()};
};

struct PipelineResult {
    SweepResult sweep;
    std::pair<double, double> regime;
    TrainingLog full_tv;
    CombinedResult combined;
    TailResult tail;
    double dt{0};
    Evaluation no_control, constant_control, tv_control, combined_control;
};

/// Steps 1-4 end to end: constant sweep, regime, full time-varying training, stitched scan and
/// tail learning. The agent's dt_ctrl * steps must equal cfg.t_final. `on_stage` (optional) is
/// called after each stage with its name so callers can persist intermediates.
PipelineResult combined_pipeline(const ModelParams& params, const AgentConfig& agent, const PipelineConfig& cfg,
                                 const std::function<void(const std::string&, const PipelineResult&)>& on_stage = {});

}  // namespace spinsq
