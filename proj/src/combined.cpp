#include "spinsq/combined.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>

namespace spinsq {

std::pair<double, double> choose_regime(double zeta_min, double half_width) {
    if (!(half_width > 0.0)) throw std::invalid_argument("choose_regime: half_width must be > 0");
    return {zeta_min - half_width, zeta_min + half_width};
}

namespace {

double max_abs(const ControlSignal& c) {
    double m = 0.0;
    for (double v : c.values) m = std::max(m, std::abs(v));
    return m;
}

std::string zeta_str(double z) {
    std::ostringstream os;
    os << z;
    return os.str();
}

}  // namespace

StitchedControl stitch_control(double zeta_c, const ControlSignal& full_tv, const ModelParams& params, double dt,
                               double record_interval) {
    full_tv.validate();
    if (full_tv.t0 != 0.0) throw std::invalid_argument("stitch_control: full_tv must start at t = 0");
    const double T = full_tv.t_end();
    if (dt <= 0.0) {
        dt = auto_dt(params, std::max(std::abs(zeta_c), max_abs(full_tv)), full_tv.dt_ctrl, params.noiseless());
    }
    const ControlSignal constant = ControlSignal::constant(zeta_c, T, full_tv.dt_ctrl);
    const Evaluation ev = evaluate(constant, params, !params.noiseless(), T, dt, record_interval);

    const auto xi2 = ev.trajectory.xi2();
    const auto& times = ev.trajectory.times;
    std::size_t best = 0;
    double best_val = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < xi2.size(); ++i) {
        if (times[i] > 0.0 && xi2[i] < best_val) {
            best_val = xi2[i];
            best = i;
        }
    }
    if (best == 0 || best + 1 == xi2.size() || !(best_val < xi2.front())) {
        throw std::domain_error("stitch_control: xi2 under constant zeta_c = " + zeta_str(zeta_c) +
                                " has no interior minimum on (0, " + zeta_str(T) + ")");
    }

    StitchedControl s;
    s.zeta_c = zeta_c;
    s.t_min_raw = times[best];
    const auto k = static_cast<std::size_t>(std::floor(s.t_min_raw / full_tv.dt_ctrl + 1e-9));
    s.t_min = static_cast<double>(k) * full_tv.dt_ctrl;
    s.tail.t0 = s.t_min;
    s.tail.dt_ctrl = full_tv.dt_ctrl;
    s.tail.values.assign(full_tv.values.begin() + static_cast<std::ptrdiff_t>(k), full_tv.values.end());
    s.assembled.t0 = 0.0;
    s.assembled.dt_ctrl = full_tv.dt_ctrl;
    s.assembled.values.assign(k, zeta_c);
    s.assembled.values.insert(s.assembled.values.end(), s.tail.values.begin(), s.tail.values.end());
    s.constant_storage = ev.storage;
    return s;
}

double CombinedResult::S_at(double zeta) const {
    for (std::size_t i = 0; i < zeta_grid.size(); ++i) {
        if (std::abs(zeta_grid[i] - zeta) < 1e-9) return S_by_zeta[i];
    }
    throw std::out_of_range("CombinedResult::S_at: zeta " + zeta_str(zeta) + " was not scanned");
}

CombinedResult optimize_stitched(std::pair<double, double> regime, double step, const ControlSignal& full_tv,
                                 const ModelParams& params, const StitchOptions& options) {
    if (!(step > 0.0)) throw std::invalid_argument("optimize_stitched: step must be > 0");
    const std::vector<double> grid = zeta_grid(regime.first, regime.second, step);
    double dt = options.dt;
    if (dt <= 0.0) {
        const double zmax = std::max({std::abs(regime.first), std::abs(regime.second), max_abs(full_tv)});
        dt = auto_dt(params, zmax, full_tv.dt_ctrl, params.noiseless());
    }
    const double T = full_tv.t_end();

    struct Slot {
        std::optional<StitchedControl> stitched;
        Evaluation eval;
        std::string error;
    };
    std::vector<Slot> slots(grid.size());
    parallel_for(grid.size(), options.threads, [&](std::size_t i) {
        try {
            StitchedControl s = stitch_control(grid[i], full_tv, params, dt, options.record_interval);
            slots[i].eval = evaluate(s.assembled, params, !params.noiseless(), T, dt, options.record_interval);
            slots[i].stitched = std::move(s);
        } catch (const NumericalFailure& e) {
            slots[i].error = e.what();
        } catch (const std::domain_error& e) {
            slots[i].error = e.what();
        }
    });

    CombinedResult r;
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!slots[i].stitched) {
            r.failures.push_back({grid[i], slots[i].error});
            continue;
        }
        const double S = slots[i].eval.storage.S;
        r.zeta_grid.push_back(grid[i]);
        r.S_by_zeta.push_back(S);
        r.S_full_by_zeta.push_back(slots[i].eval.storage.S_full);
        r.t_min_by_zeta.push_back(slots[i].stitched->t_min);
        if (!best) {
            best = i;
            continue;
        }
        const double Sb = slots[*best].eval.storage.S;
        if (S > Sb || (S == Sb && std::abs(grid[i]) < std::abs(grid[*best]))) best = i;
    }
    if (!best) throw std::runtime_error("optimize_stitched: every stitched control failed");
    r.zeta_opt = grid[*best];
    r.best = *slots[*best].stitched;
    r.final_control = r.best.assembled;
    const StorageResult& sr = slots[*best].eval.storage;
    r.S_c = sr.S;
    r.crossed = sr.crossed;
    r.lifetime = sr.crossed ? sr.t_cross : sr.t_max_used;
    return r;
}

TailResult learn_tail(const StitchedControl& stitched, const ModelParams& params, const AgentConfig& agent) {
    agent.validate();
    const ControlSignal& full = stitched.assembled;
    if (std::abs(full.dt_ctrl - agent.dt_ctrl) > 1e-12) {
        throw std::invalid_argument("learn_tail: stitched control grid differs from the agent's dt_ctrl");
    }
    const double dt = training_dt(params, agent);
    const double T = full.t_end();
    const bool noisy = !params.noiseless();
    const auto k = static_cast<std::size_t>(std::lround(stitched.t_min / full.dt_ctrl));
    if (k >= full.values.size()) throw std::invalid_argument("learn_tail: switch time at or beyond the horizon");

    TailResult out;
    if (agent.episodes == 0) {
        out.control = full;
        out.storage = evaluate(full, params, noisy, T, dt, agent.record_interval).storage;
        return out;
    }

    const Propagator prop(params, dt);
    EpisodeStart start = initial_start(prop);
    if (k > 0) {
        IntegratorConfig ic;
        ic.t_final = static_cast<double>(k) * full.dt_ctrl;
        ic.dt = dt;
        ic.record_every = static_cast<int>(std::lround(agent.record_interval / dt));
        EvolutionState snap;
        const Trajectory prefix = evolve_from(prop, start.state, ControlSignal::constant(stitched.zeta_c, ic.t_final, full.dt_ctrl),
                                              ic, &snap);
        start.state = std::move(snap);
        // the episode records its own starting point
        const std::size_t n = prefix.times.size() - (prefix.times.back() == start.state.time() ? 1 : 0);
        const auto x = prefix.xi2();
        start.prefix_times.assign(prefix.times.begin(), prefix.times.begin() + static_cast<std::ptrdiff_t>(n));
        start.prefix_xi2.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n));
    }

    AgentConfig tail_cfg = agent;
    tail_cfg.steps = static_cast<int>(full.values.size() - k);
    out.log = train(prop, tail_cfg, start);
    if (!out.log.has_control()) {
        out.control = full;
    } else {
        out.control.t0 = 0.0;
        out.control.dt_ctrl = full.dt_ctrl;
        out.control.values.assign(k, stitched.zeta_c);
        const auto& v = out.log.best_control.values;
        out.control.values.insert(out.control.values.end(), v.begin(), v.end());
    }
    out.storage = evaluate(out.control, params, noisy, T, dt, agent.record_interval).storage;
    return out;
}

PipelineError::PipelineError(std::string stage_, const std::string& what, bool numerical_)
    : std::runtime_error("[" + stage_ + "] " + what), stage(std::move(stage_)), numerical(numerical_) {}

PipelineResult combined_pipeline(const ModelParams& params, const AgentConfig& agent, const PipelineConfig& cfg,
                                 const std::function<void(const std::string&, const PipelineResult&)>& on_stage) {
    PipelineResult r;
    const bool noisy = !params.noiseless();
    auto stage = [&](const std::string& name, auto&& body) {
        try {
            body();
        } catch (const PipelineError&) {
            throw;
        } catch (const NumericalFailure& e) {
            throw PipelineError(name, e.what(), true);
        } catch (const std::exception& e) {
            throw PipelineError(name, e.what(), false);
        }
        if (on_stage) on_stage(name, r);
    };

    stage("config", [&] {
        params.validate();
        agent.validate();
        if (std::abs(agent.dt_ctrl * agent.steps - cfg.t_final) > 1e-9 * cfg.t_final) {
            throw std::invalid_argument("agent dt_ctrl * steps must equal the pipeline horizon t_final");
        }
    });
    stage("sweep", [&] {
        SweepOptions so;
        so.record_interval = agent.record_interval;
        so.threads = cfg.threads;
        r.sweep = sweep_constant(zeta_grid(cfg.sweep_lo, cfg.sweep_hi, cfg.sweep_step), params, cfg.t_final, noisy, so);
        r.regime = choose_regime(r.sweep.best.zeta, cfg.half_width);
    });
    stage("train", [&] {
        r.full_tv = train(params, agent);
        if (!r.full_tv.has_control()) throw std::runtime_error("full time-varying training produced no control");
        r.dt = r.full_tv.dt;
    });
    stage("stitch", [&] {
        StitchOptions so;
        so.dt = r.dt;
        so.record_interval = agent.record_interval;
        so.threads = cfg.threads;
        r.combined = optimize_stitched(r.regime, cfg.stitch_step, r.full_tv.best_control, params, so);
    });
    stage("tail", [&] {
        r.tail = learn_tail(r.combined.best, params, agent);
        r.combined.final_control = r.tail.control;
        r.combined.S_c = r.tail.storage.S;
        r.combined.crossed = r.tail.storage.crossed;
        r.combined.lifetime = r.tail.storage.crossed ? r.tail.storage.t_cross : r.tail.storage.t_max_used;
    });
    stage("evaluate", [&] {
        const double T = cfg.t_final;
        r.no_control = evaluate(ControlSignal::zero(T, agent.dt_ctrl), params, noisy, T, r.dt, agent.record_interval);
        r.constant_control = evaluate(ControlSignal::constant(r.sweep.best.zeta, T, agent.dt_ctrl), params, noisy, T,
                                      r.dt, agent.record_interval);
        r.tv_control = evaluate(r.full_tv.best_control, params, noisy, T, r.dt, agent.record_interval);
        r.combined_control = evaluate(r.tail.control, params, noisy, T, r.dt, agent.record_interval);
    });
    return r;
}

}  // namespace spinsq
