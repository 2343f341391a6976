// ddpg.hpp — deep deterministic policy gradient agent that chooses the modulation amplitude
// zeta once per control bin, rewarded by the instantaneous squeezing -10 log10 xi2.

#pragma once

#include "spinsq/dynamics.hpp"
#include "spinsq/mlp.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace spinsq {

enum class FeatureMode { moments, full_rho };

std::string to_string(FeatureMode m);
FeatureMode feature_mode_from_string(const std::string& s);

inline constexpr int kMomentFeatures = 13;

/// Feature vector of a state at time t (horizon t_horizon). MOMENTS: first moments / J,
/// second moments / J², photon number, Re/Im <a>, t / t_horizon, taken in the frame co-rotating
/// with the bare precession. FULL_RHO: real and imaginary parts of the upper triangle.
RVector featurize(const Propagator& prop, const EvolutionState& st, double t_horizon, FeatureMode mode);
RVector featurize(const SpinMoments& m, int n_spins, double t, double t_horizon);
int feature_dim(FeatureMode mode, const SpaceDescriptor& space);

/// -10 log10 xi2 (xi2 floored as in xi2_to_db).
double reward(double xi2);

struct Transition {
    RVector s;
    double a{0};  ///< normalized action in [-1, 1]
    double r{0};
    RVector s_next;
    bool done{false};
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 100000);

    void add(Transition t);
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    const Transition& at(std::size_t i) const { return data_.at(i); }

    /// Distinct indices drawn uniformly (without replacement within the batch).
    std::vector<std::size_t> sample_indices(std::size_t batch, std::mt19937_64& rng) const;

private:
    std::size_t capacity_;
    std::size_t next_{0};
    std::vector<Transition> data_;
};

struct AgentConfig {
    FeatureMode features{FeatureMode::moments};
    double zeta_lo{-5.0};
    double zeta_hi{5.0};
    double mu{0.95};
    double tau{0.1};
    double lr_actor{1e-4};
    double lr_critic{1e-3};
    OptimizerKind optimizer{OptimizerKind::adam};
    int batch{64};
    std::size_t capacity{100000};
    int warmup_episodes{10};
    double sigma0{0.5};       ///< exploration noise in units of the half action range
    double sigma_end{0.02};
    int episodes{600};
    int steps{100};           ///< control bins per episode
    double dt_ctrl{0.5};
    int updates_per_step{1};
    std::vector<int> hidden{64, 64};
    std::uint64_t seed{1};
    double dt{0.0};           ///< integrator step; <= 0 picks auto_dt for the action range
    double record_interval{0.1};

    void validate() const;
    double half_range() const { return 0.5 * (zeta_hi - zeta_lo); }
    double mid() const { return 0.5 * (zeta_hi + zeta_lo); }
    double to_zeta(double a) const { return mid() + half_range() * a; }
    double to_action(double zeta) const { return (zeta - mid()) / half_range(); }
    /// Exploration sigma for a (post-warmup) episode index: geometric decay sigma0 -> sigma_end.
    double sigma_at(int episode) const;
};

struct Agent {
    MLP actor, critic, actor_target, critic_target;
    Optimizer actor_opt, critic_opt;
    std::mt19937_64 rng;

    Agent() = default;
    Agent(int feature_dim, const AgentConfig& cfg);
};

/// zeta = to_zeta(clip(actor(s) + N(0, sigma), -1, 1)).
double act(const MLP& actor, const RVector& features, double sigma, const AgentConfig& cfg, std::mt19937_64& rng);

struct TrainLosses {
    double critic{0};
    double actor{0};  ///< -mean Q(s, pi(s))
};

/// One critic and actor update from a sampled batch, followed by soft target updates.
/// Requires buffer.size() >= cfg.batch.
TrainLosses train_step(const ReplayBuffer& buffer, Agent& agent, const AgentConfig& cfg);

struct EpisodeLog {
    int episode{0};
    double total_reward{0};
    double S{0};          ///< LIFETIME storage of the whole trajectory (prefix included)
    double S_full{0};
    double min_xi2{1};
    double sigma{0};
    double critic_loss{0};
    bool failed{false};
    std::string failure;
};

struct TrainingLog {
    std::vector<EpisodeLog> episodes;
    ControlSignal best_control;        ///< episode with the largest S (LIFETIME)
    double best_S{0};
    int best_episode{-1};
    ControlSignal best_min_control;    ///< episode with the deepest squeezing
    double best_min_xi2{1};
    int best_min_episode{-1};
    double dt{0};

    std::vector<double> rewards() const;
    bool has_control() const { return best_episode >= 0; }
};

/// Where an episode starts: a state snapshot at time t_start plus the trajectory recorded
/// before it (used so S covers the whole run).
struct EpisodeStart {
    EvolutionState state;
    std::vector<double> prefix_times;
    std::vector<double> prefix_xi2;
};

/// Snapshot at t = 0 from the default initial state (pure when the model is noiseless).
EpisodeStart initial_start(const Propagator& prop);

double training_dt(const ModelParams& params, const AgentConfig& cfg);

/// Episodic training. Each action holds zeta for cfg.dt_ctrl; the first warmup_episodes use
/// uniformly random actions. Deterministic for a given seed.
/// The propagator's step must equal training_dt(params, cfg) and divide dt_ctrl.
TrainingLog train(const Propagator& prop, const AgentConfig& cfg, const EpisodeStart& start, Agent* agent_out = nullptr);
TrainingLog train(const ModelParams& params, const AgentConfig& cfg);

struct Evaluation {
    Trajectory trajectory;
    StorageResult storage;
};

/// Fixed-control rollout from the default initial state (unitary when !noisy).
/// dt <= 0 uses the automatic step for the control's largest |zeta|.
Evaluation evaluate(const ControlSignal& control, const ModelParams& params, bool noisy, double t_final,
                    double dt = 0.0, double record_interval = 0.1);

/// Checkpoint: config, network weights, optimizer moments and RNG state as JSON text.
std::string checkpoint_json(const Agent& agent, const AgentConfig& cfg);
Agent agent_from_checkpoint(const std::string& json, AgentConfig* cfg_out = nullptr);

}  // namespace spinsq
