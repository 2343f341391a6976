#include "spinsq/ddpg.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace spinsq {

std::string to_string(FeatureMode m) { return m == FeatureMode::moments ? "moments" : "full_rho"; }

FeatureMode feature_mode_from_string(const std::string& s) {
    if (s == "moments") return FeatureMode::moments;
    if (s == "full_rho") return FeatureMode::full_rho;
    throw std::invalid_argument("unknown feature mode '" + s + "' (expected moments|full_rho)");
}

int feature_dim(FeatureMode mode, const SpaceDescriptor& space) {
    if (mode == FeatureMode::moments) return kMomentFeatures;
    const int d = space.total_dim();
    return d * (d + 1);
}

RVector featurize(const SpinMoments& m, int n_spins, double t, double t_horizon) {
    const double j = 0.5 * n_spins;
    const double j2 = j * j;
    RVector f(kMomentFeatures);
    f << m.jx / j, m.jy / j, m.jz / j, m.xx / j2, m.yy / j2, m.zz / j2, m.xy / j2, m.xz / j2, m.yz / j2, m.photon,
        m.a_re, m.a_im, t_horizon > 0.0 ? t / t_horizon : 0.0;
    return f;
}

RVector featurize(const Propagator& prop, const EvolutionState& st, double t_horizon, FeatureMode mode) {
    if (mode == FeatureMode::moments) {
        return featurize(prop.moments(st, false), prop.space().n_spins, st.time(), t_horizon);
    }
    const int d = prop.space().total_dim();
    const Matrix rho = st.pure ? Matrix(st.psi * st.psi.adjoint()) : st.rho;
    RVector f(d * (d + 1));
    Eigen::Index k = 0;
    for (int c = 0; c < d; ++c) {
        for (int r = 0; r <= c; ++r) {
            f(k++) = rho(r, c).real();
            f(k++) = rho(r, c).imag();
        }
    }
    return f;
}

double reward(double xi2) { return -xi2_to_db(xi2); }

// ---------------------------------------------------------------------------
// Replay buffer

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be >= 1");
}

void ReplayBuffer::add(Transition t) {
    if (!data_.empty() && (t.s.size() != data_.front().s.size() || t.s_next.size() != data_.front().s.size())) {
        throw std::invalid_argument("ReplayBuffer::add: feature dimension differs from stored transitions");
    }
    if (data_.size() < capacity_) {
        data_.push_back(std::move(t));
    } else {
        data_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, std::mt19937_64& rng) const {
    const std::size_t n = data_.size();
    if (batch > n) throw std::invalid_argument("ReplayBuffer::sample_indices: batch larger than buffer");
    // Floyd's algorithm: uniform subset of size batch.
    std::vector<std::size_t> out;
    out.reserve(batch);
    for (std::size_t j = n - batch; j < n; ++j) {
        std::uniform_int_distribution<std::size_t> u(0, j);
        const std::size_t t = u(rng);
        if (std::find(out.begin(), out.end(), t) == out.end()) {
            out.push_back(t);
        } else {
            out.push_back(j);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Config and agent

void AgentConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("AgentConfig: " + m); };
    if (!(zeta_hi > zeta_lo)) fail("action range must satisfy zeta_lo < zeta_hi");
    if (!(mu > 0.0 && mu <= 1.0)) fail("mu must lie in (0, 1]");
    if (!(tau > 0.0 && tau <= 1.0)) fail("tau must lie in (0, 1]");
    if (!(lr_actor > 0.0) || !(lr_critic > 0.0)) fail("learning rates must be > 0");
    if (batch < 1) fail("batch must be >= 1");
    if (capacity < static_cast<std::size_t>(batch)) fail("capacity must be >= batch");
    if (warmup_episodes < 0) fail("warmup_episodes must be >= 0");
    if (!(sigma0 >= 0.0) || !(sigma_end >= 0.0)) fail("noise sigmas must be >= 0");
    if (episodes < 0) fail("episodes must be >= 0");
    if (steps < 1) fail("steps must be >= 1");
    if (!(dt_ctrl > 0.0)) fail("dt_ctrl must be > 0");
    if (updates_per_step < 0) fail("updates_per_step must be >= 0");
    if (!(record_interval > 0.0)) fail("record_interval must be > 0");
    for (int h : hidden) {
        if (h < 1) fail("hidden layer sizes must be >= 1");
    }
}

double AgentConfig::sigma_at(int episode) const {
    const int span = std::max(1, episodes - warmup_episodes - 1);
    const double frac = std::clamp(static_cast<double>(episode) / span, 0.0, 1.0);
    if (sigma0 <= 0.0 || sigma_end <= 0.0) return sigma0 + (sigma_end - sigma0) * frac;
    return sigma0 * std::pow(sigma_end / sigma0, frac);
}

Agent::Agent(int fdim, const AgentConfig& cfg) : rng(cfg.seed) {
    std::vector<int> a_dims{fdim};
    a_dims.insert(a_dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    a_dims.push_back(1);
    std::vector<int> c_dims{fdim + 1};
    c_dims.insert(c_dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    c_dims.push_back(1);
    actor = MLP(a_dims, OutputActivation::tanh, rng);
    critic = MLP(c_dims, OutputActivation::linear, rng);
    actor_target = actor;
    critic_target = critic;
    actor_opt = Optimizer(actor, cfg.lr_actor, cfg.optimizer);
    critic_opt = Optimizer(critic, cfg.lr_critic, cfg.optimizer);
}

namespace {

double act_normalized(const MLP& actor, const RVector& features, double sigma, std::mt19937_64& rng) {
    double a = actor.forward(features)(0);
    if (sigma > 0.0) {
        std::normal_distribution<double> n(0.0, sigma);
        a += n(rng);
    }
    return std::clamp(a, -1.0, 1.0);
}

RMatrix stack(const RMatrix& s, const RMatrix& a) {
    RMatrix x(s.rows() + a.rows(), s.cols());
    x.topRows(s.rows()) = s;
    x.bottomRows(a.rows()) = a;
    return x;
}

}  // namespace

double act(const MLP& actor, const RVector& features, double sigma, const AgentConfig& cfg, std::mt19937_64& rng) {
    return cfg.to_zeta(act_normalized(actor, features, sigma, rng));
}

TrainLosses train_step(const ReplayBuffer& buffer, Agent& agent, const AgentConfig& cfg) {
    const auto batch = static_cast<std::size_t>(cfg.batch);
    const std::vector<std::size_t> idx = buffer.sample_indices(batch, agent.rng);
    const Eigen::Index fdim = buffer.at(idx[0]).s.size();
    const auto B = static_cast<Eigen::Index>(batch);
    RMatrix s(fdim, B), s2(fdim, B), a(1, B);
    RVector r(B), notdone(B);
    for (Eigen::Index k = 0; k < B; ++k) {
        const Transition& tr = buffer.at(idx[static_cast<std::size_t>(k)]);
        s.col(k) = tr.s;
        s2.col(k) = tr.s_next;
        a(0, k) = tr.a;
        r(k) = tr.r;
        notdone(k) = tr.done ? 0.0 : 1.0;
    }

    // Critic: squared Bellman residual against r + mu Q'(s', pi'(s')).
    const RMatrix a2 = agent.actor_target.forward_batch(s2);
    const RMatrix q2 = agent.critic_target.forward_batch(stack(s2, a2));
    const RVector y = r + cfg.mu * notdone.cwiseProduct(q2.row(0).transpose());
    MLP::Cache cc;
    const RMatrix q = agent.critic.forward_batch(stack(s, a), &cc);
    const RVector diff = q.row(0).transpose() - y;
    TrainLosses losses;
    losses.critic = diff.squaredNorm() / static_cast<double>(B);
    const RMatrix dq = (2.0 / static_cast<double>(B)) * diff.transpose();
    agent.critic_opt.step(agent.critic, agent.critic.backward(cc, dq));

    // Actor: ascend Q(s, pi(s)).
    MLP::Cache ca, cq;
    const RMatrix api = agent.actor.forward_batch(s, &ca);
    const RMatrix qpi = agent.critic.forward_batch(stack(s, api), &cq);
    losses.actor = -qpi.mean();
    RMatrix dx;
    agent.critic.backward(cq, RMatrix::Constant(1, B, -1.0 / static_cast<double>(B)), &dx);
    const RMatrix da = dx.bottomRows(1);
    agent.actor_opt.step(agent.actor, agent.actor.backward(ca, da));

    agent.actor_target.soft_update(agent.actor, cfg.tau);
    agent.critic_target.soft_update(agent.critic, cfg.tau);
    return losses;
}

std::vector<double> TrainingLog::rewards() const {
    std::vector<double> out;
    out.reserve(episodes.size());
    for (const auto& e : episodes) out.push_back(e.total_reward);
    return out;
}

EpisodeStart initial_start(const Propagator& prop) {
    EpisodeStart s;
    if (prop.params().noiseless()) {
        s.state = prop.start(initial_state_vector(prop.params()));
    } else {
        s.state = prop.start(initial_state(prop.params()));
    }
    return s;
}

double training_dt(const ModelParams& params, const AgentConfig& cfg) {
    if (cfg.dt > 0.0) return cfg.dt;
    const double zmax = std::max(std::abs(cfg.zeta_lo), std::abs(cfg.zeta_hi));
    return auto_dt(params, zmax, cfg.dt_ctrl, params.noiseless());
}

namespace {

long exact_ratio(double num, double den, const char* what) {
    const double r = num / den;
    const long k = std::lround(r);
    if (k < 1 || std::abs(r - static_cast<double>(k)) > 1e-6 * std::max(1.0, r)) {
        throw std::invalid_argument(std::string("train: ") + what + " is not a multiple of the integrator step");
    }
    return k;
}

}  // namespace

TrainingLog train(const Propagator& prop, const AgentConfig& cfg, const EpisodeStart& start, Agent* agent_out) {
    cfg.validate();
    const double dt = prop.dt();
    if (std::abs(start.state.dt - dt) > 0.0) throw std::invalid_argument("train: start state step differs");
    const long per_bin = exact_ratio(cfg.dt_ctrl, dt, "dt_ctrl");
    const long every = exact_ratio(cfg.record_interval, dt, "record_interval");
    const int n_spins = prop.space().n_spins;
    const double t_start = start.state.time();
    const double horizon = t_start + cfg.steps * cfg.dt_ctrl;
    const DensityTolerances tol = IntegratorConfig{}.tolerances;

    Agent agent(feature_dim(cfg.features, prop.space()), cfg);
    ReplayBuffer buffer(cfg.capacity);
    TrainingLog log;
    log.dt = dt;

    for (int e = 0; e < cfg.episodes; ++e) {
        EpisodeLog ep;
        ep.episode = e;
        const bool warmup = e < cfg.warmup_episodes;
        ep.sigma = warmup ? 0.0 : cfg.sigma_at(e - cfg.warmup_episodes);

        EvolutionState st = start.state;
        std::vector<double> times = start.prefix_times;
        std::vector<double> xi2 = start.prefix_xi2;
        auto record = [&]() {
            if (!st.pure) {
                const DensityCheck chk = check_density(st.rho, tol);
                if (!chk.ok) {
                    throw NumericalFailure("train: density-matrix invariant violated", st.step, st.time(),
                                           chk.trace_error, chk.hermiticity, chk.min_eigenvalue);
                }
            }
            times.push_back(st.time());
            xi2.push_back(squeezing_parameter(prop.moments(st), n_spins).xi2);
        };
        if (st.step % every == 0) record();

        ControlSignal control;
        control.t0 = t_start;
        control.dt_ctrl = cfg.dt_ctrl;
        double loss_acc = 0.0;
        long loss_n = 0;
        try {
            RVector s = featurize(prop, st, horizon, cfg.features);
            for (int j = 0; j < cfg.steps; ++j) {
                double a;
                if (warmup) {
                    std::uniform_real_distribution<double> u(-1.0, 1.0);
                    a = u(agent.rng);
                } else {
                    a = act_normalized(agent.actor, s, ep.sigma, agent.rng);
                }
                const double zeta = cfg.to_zeta(a);
                control.values.push_back(zeta);
                for (long k = 0; k < per_bin; ++k) {
                    prop.step(st, zeta);
                    if (st.pure) {
                        const double nrm = st.psi.norm();
                        if (std::abs(nrm - 1.0) > 1e-10) {
                            throw NumericalFailure("train: per-step norm drift exceeds 1e-10 (reduce dt)", st.step,
                                                   st.time(), std::abs(nrm - 1.0), 0.0, 0.0);
                        }
                        st.psi /= nrm;
                    }
                    if (st.step % every == 0) record();
                }
                const double x = squeezing_parameter(prop.moments(st), n_spins).xi2;
                const double r = reward(x);
                ep.total_reward += r;
                RVector s2 = featurize(prop, st, horizon, cfg.features);
                buffer.add(Transition{s, a, r, s2, j + 1 == cfg.steps});
                if (!warmup && buffer.size() >= static_cast<std::size_t>(cfg.batch)) {
                    for (int u = 0; u < cfg.updates_per_step; ++u) {
                        loss_acc += train_step(buffer, agent, cfg).critic;
                        ++loss_n;
                    }
                }
                s = std::move(s2);
            }
        } catch (const NumericalFailure& err) {
            ep.failed = true;
            ep.failure = err.what();
        }
        ep.critic_loss = loss_n > 0 ? loss_acc / static_cast<double>(loss_n) : 0.0;
        if (!ep.failed && !times.empty()) {
            const StorageResult sr = storage_integral(times, xi2, StorageConvention::lifetime);
            ep.S = sr.S_lifetime;
            ep.S_full = sr.S_full;
            ep.min_xi2 = *std::min_element(xi2.begin(), xi2.end());
            if (log.best_episode < 0 || ep.S > log.best_S) {
                log.best_S = ep.S;
                log.best_episode = e;
                log.best_control = control;
            }
            if (log.best_min_episode < 0 || ep.min_xi2 < log.best_min_xi2) {
                log.best_min_xi2 = ep.min_xi2;
                log.best_min_episode = e;
                log.best_min_control = control;
            }
        }
        log.episodes.push_back(std::move(ep));
    }
    if (agent_out) *agent_out = std::move(agent);
    return log;
}

TrainingLog train(const ModelParams& params, const AgentConfig& cfg) {
    const Propagator prop(params, training_dt(params, cfg));
    return train(prop, cfg, initial_start(prop));
}

Evaluation evaluate(const ControlSignal& control, const ModelParams& params, bool noisy, double t_final, double dt,
                    double record_interval) {
    const ModelParams p = noisy ? params : params.without_noise();
    IntegratorConfig cfg;
    cfg.t_final = t_final;
    cfg.dt = dt;
    const bool pure = p.noiseless();
    const double step = resolve_dt(cfg, p, control, pure);
    cfg.dt = step;
    cfg.record_every = static_cast<int>(std::lround(record_interval / step));
    const Propagator prop(p, step);
    const EvolutionState st = pure ? prop.start(initial_state_vector(p)) : prop.start(initial_state(p));
    Evaluation out;
    out.trajectory = evolve_from(prop, st, control, cfg);
    out.storage = storage_integral(out.trajectory, StorageConvention::lifetime);
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

using nlohmann::json;

json matrix_json(const RMatrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

RMatrix matrix_from(const json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
    RMatrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(j[r].size()) != cols) throw std::invalid_argument("checkpoint: ragged matrix");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

json vector_json(const RVector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

RVector vector_from(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const RVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json net_json(const MLP& net) {
    json j;
    j["dims"] = net.dims();
    j["output"] = net.output_activation() == OutputActivation::tanh ? "tanh" : "linear";
    json layers = json::array();
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        layers.push_back({{"W", matrix_json(net.weights[l])}, {"b", vector_json(net.biases[l])}});
    }
    j["layers"] = layers;
    return j;
}

MLP net_from(const json& j) {
    std::mt19937_64 dummy(0);
    const auto dims = j.at("dims").get<std::vector<int>>();
    const auto out = j.at("output").get<std::string>() == "tanh" ? OutputActivation::tanh : OutputActivation::linear;
    MLP net(dims, out, dummy);
    const json& layers = j.at("layers");
    if (layers.size() != net.weights.size()) throw std::invalid_argument("checkpoint: layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        RMatrix w = matrix_from(layers[l].at("W"));
        RVector b = vector_from(layers[l].at("b"));
        if (w.rows() != net.weights[l].rows() || w.cols() != net.weights[l].cols() || b.size() != net.biases[l].size()) {
            throw std::invalid_argument("checkpoint: layer shape mismatch");
        }
        net.weights[l] = std::move(w);
        net.biases[l] = std::move(b);
    }
    return net;
}

json optimizer_json(const Optimizer& o) {
    return {{"kind", to_string(o.kind)}, {"lr", o.lr}, {"t", o.t}, {"m", vector_json(o.m)}, {"v", vector_json(o.v)}};
}

Optimizer optimizer_from(const json& j, const MLP& net) {
    Optimizer o(net, j.at("lr").get<double>(), optimizer_from_string(j.at("kind").get<std::string>()));
    o.t = j.at("t").get<long>();
    o.m = vector_from(j.at("m"));
    o.v = vector_from(j.at("v"));
    return o;
}

json config_json(const AgentConfig& c) {
    return {{"features", to_string(c.features)},
            {"zeta_lo", c.zeta_lo},
            {"zeta_hi", c.zeta_hi},
            {"mu", c.mu},
            {"tau", c.tau},
            {"lr_actor", c.lr_actor},
            {"lr_critic", c.lr_critic},
            {"optimizer", to_string(c.optimizer)},
            {"batch", c.batch},
            {"capacity", c.capacity},
            {"warmup_episodes", c.warmup_episodes},
            {"sigma0", c.sigma0},
            {"sigma_end", c.sigma_end},
            {"episodes", c.episodes},
            {"steps", c.steps},
            {"dt_ctrl", c.dt_ctrl},
            {"updates_per_step", c.updates_per_step},
            {"hidden", c.hidden},
            {"seed", c.seed},
            {"dt", c.dt},
            {"record_interval", c.record_interval}};
}

AgentConfig config_from(const json& j) {
    AgentConfig c;
    c.features = feature_mode_from_string(j.at("features").get<std::string>());
    c.zeta_lo = j.at("zeta_lo").get<double>();
    c.zeta_hi = j.at("zeta_hi").get<double>();
    c.mu = j.at("mu").get<double>();
    c.tau = j.at("tau").get<double>();
    c.lr_actor = j.at("lr_actor").get<double>();
    c.lr_critic = j.at("lr_critic").get<double>();
    c.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
    c.batch = j.at("batch").get<int>();
    c.capacity = j.at("capacity").get<std::size_t>();
    c.warmup_episodes = j.at("warmup_episodes").get<int>();
    c.sigma0 = j.at("sigma0").get<double>();
    c.sigma_end = j.at("sigma_end").get<double>();
    c.episodes = j.at("episodes").get<int>();
    c.steps = j.at("steps").get<int>();
    c.dt_ctrl = j.at("dt_ctrl").get<double>();
    c.updates_per_step = j.at("updates_per_step").get<int>();
    c.hidden = j.at("hidden").get<std::vector<int>>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.dt = j.at("dt").get<double>();
    c.record_interval = j.at("record_interval").get<double>();
    return c;
}

}  // namespace

std::string checkpoint_json(const Agent& agent, const AgentConfig& cfg) {
    std::ostringstream rng;
    rng << agent.rng;
    json j;
    j["format"] = "spinsq-ddpg-checkpoint";
    j["version"] = 1;
    j["config"] = config_json(cfg);
    j["actor"] = net_json(agent.actor);
    j["critic"] = net_json(agent.critic);
    j["actor_target"] = net_json(agent.actor_target);
    j["critic_target"] = net_json(agent.critic_target);
    j["actor_opt"] = optimizer_json(agent.actor_opt);
    j["critic_opt"] = optimizer_json(agent.critic_opt);
    j["rng"] = rng.str();
    return j.dump(1);
}

Agent agent_from_checkpoint(const std::string& text, AgentConfig* cfg_out) {
    const json j = json::parse(text);
    if (j.value("format", "") != "spinsq-ddpg-checkpoint" || j.value("version", 0) != 1) {
        throw std::invalid_argument("agent_from_checkpoint: not a version-1 checkpoint");
    }
    Agent a;
    a.actor = net_from(j.at("actor"));
    a.critic = net_from(j.at("critic"));
    a.actor_target = net_from(j.at("actor_target"));
    a.critic_target = net_from(j.at("critic_target"));
    a.actor_opt = optimizer_from(j.at("actor_opt"), a.actor);
    a.critic_opt = optimizer_from(j.at("critic_opt"), a.critic);
    std::istringstream rng(j.at("rng").get<std::string>());
    rng >> a.rng;
    if (cfg_out) *cfg_out = config_from(j.at("config"));
    return a;
}

}  // namespace spinsq
