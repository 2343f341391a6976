#include "spinsq/experiment.hpp"

#include "spinsq/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numbers>
#include <set>

namespace spinsq {

namespace fs = std::filesystem;
using nlohmann::json;

ConfigError::ConfigError(std::string path_, const std::string& what)
    : std::runtime_error((path_.empty() ? std::string("<root>") : path_) + ": " + what), path(std::move(path_)) {}

namespace {

const std::vector<std::pair<RunKind, std::string>> kKinds = {
    {RunKind::sweep, "sweep"},
    {RunKind::train, "train"},
    {RunKind::combine, "combine"},
    {RunKind::validate_effective, "validate-effective"},
    {RunKind::trajectory, "trajectory"},
    {RunKind::n_scan, "n-scan"},
    {RunKind::gamma_scan, "gamma-scan"},
    {RunKind::angle_track, "angle-track"},
};

}  // namespace

std::string to_string(RunKind k) {
    for (const auto& [kind, name] : kKinds) {
        if (kind == k) return name;
    }
    return "?";
}

RunKind run_kind_from_string(const std::string& s) {
    for (const auto& [kind, name] : kKinds) {
        if (name == s) return kind;
    }
    std::string all;
    for (const auto& kv : kKinds) all += (all.empty() ? "" : "|") + kv.second;
    throw ConfigError("kind", "unknown run kind '" + s + "' (expected " + all + ")");
}

double ExperimentConfig::horizon() const {
    if (t_final > 0.0) return t_final;
    return noisy ? 100.0 : 50.0;
}

ModelParams ExperimentConfig::dynamics_params() const { return noisy ? model : model.without_noise(); }

AgentConfig ExperimentConfig::resolved_agent() const {
    AgentConfig a = agent;
    a.seed = seed;
    a.record_interval = record_interval;
    if (!agent_dt_ctrl_given) a.dt_ctrl = horizon() / a.steps;
    if (dt > 0.0 && a.dt <= 0.0) a.dt = dt;
    return a;
}

int ExperimentConfig::resolved_threads() const { return threads > 0 ? threads : default_threads(); }

// ---------------------------------------------------------------------------
// Strict JSON reading

namespace {

class Obj {
public:
    Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_, "expected an object");
    }

    std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const char* key) const { return j_.contains(key); }

    template <class T>
    bool get(const char* key, T& out) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) return false;
        out = convert<T>(*it, sub(key));
        return true;
    }

    const json* child(const char* key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.count(item.key())) throw ConfigError(sub(item.key()), "unknown key");
        }
    }

private:
    template <class T>
    static T convert(const json& v, const std::string& path) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(path, "expected true/false");
            return v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(path, "expected a string");
            return v.get<std::string>();
        } else if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number()) throw ConfigError(path, "expected a number");
            return v.get<double>();
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(path, "expected an integer >= 0");
            return v.get<std::uint64_t>();
        } else if constexpr (std::is_same_v<T, std::size_t>) {
            if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(path, "expected an integer >= 0");
            return v.get<std::size_t>();
        } else if constexpr (std::is_same_v<T, int>) {
            if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
            return v.get<int>();
        } else if constexpr (std::is_same_v<T, std::vector<int>>) {
            if (!v.is_array()) throw ConfigError(path, "expected an array of integers");
            std::vector<int> out;
            for (std::size_t i = 0; i < v.size(); ++i) out.push_back(convert<int>(v[i], path + "[" + std::to_string(i) + "]"));
            return out;
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
            if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
            std::vector<double> out;
            for (std::size_t i = 0; i < v.size(); ++i) {
                out.push_back(convert<double>(v[i], path + "[" + std::to_string(i) + "]"));
            }
            return out;
        } else {
            static_assert(sizeof(T) == 0, "unsupported config type");
        }
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <class F>
void wrap_validation(const std::string& path, F&& f) {
    try {
        f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path, e.what());
    }
}

std::string m0_rule_name(M0Rule r) { return r == M0Rule::argmin ? "argmin" : "rounding"; }

}  // namespace

ExperimentConfig parse_config(const json& j) {
    ExperimentConfig c;
    Obj root(j, "");
    int version = kConfigSchemaVersion;
    root.get("schema_version", version);
    if (version != kConfigSchemaVersion) {
        throw ConfigError("schema_version", "unsupported version " + std::to_string(version));
    }
    std::string kind;
    if (!root.get("kind", kind)) throw ConfigError("kind", "missing (required)");
    c.kind = run_kind_from_string(kind);
    c.output = to_string(c.kind);
    root.get("output", c.output);
    if (c.output.empty() || c.output.find("..") != std::string::npos || c.output.front() == '/') {
        throw ConfigError("output", "must be a non-empty relative directory name without '..'");
    }
    c.seed_given = root.get("seed", c.seed);
    if ((c.kind == RunKind::train || c.kind == RunKind::combine) && !c.seed_given) {
        throw ConfigError("seed", "required for " + kind + " runs");
    }
    root.get("noisy", c.noisy);
    root.get("t_final", c.t_final);
    root.get("dt", c.dt);
    root.get("record_interval", c.record_interval);
    root.get("threads", c.threads);
    root.get("truncation_check", c.truncation_check);
    if (c.t_final < 0.0) throw ConfigError("t_final", "must be >= 0 (0 selects the default horizon)");
    if (!(c.record_interval > 0.0)) throw ConfigError("record_interval", "must be > 0");
    if (c.threads < 0) throw ConfigError("threads", "must be >= 0");

    if (const json* m = root.child("model")) {
        Obj o(*m, "model");
        o.get("omega_c", c.model.omega_c);
        o.get("omega_z", c.model.omega_z);
        o.get("g", c.model.g);
        o.get("nu", c.model.nu);
        o.get("kappa", c.model.kappa);
        o.get("gamma", c.model.gamma);
        o.get("n_spins", c.model.n_spins);
        o.get("fock_cutoff", c.model.fock_cutoff);
        o.finish();
    }
    wrap_validation("model", [&] { c.model.validate(); });

    if (const json* s = root.child("sweep")) {
        Obj o(*s, "sweep");
        o.get("lo", c.sweep_lo);
        o.get("hi", c.sweep_hi);
        o.get("step", c.sweep_step);
        o.get("roots", c.sweep_roots);
        std::string rule;
        if (o.get("m0_rule", rule)) {
            if (rule == "argmin") c.m0_rule = M0Rule::argmin;
            else if (rule == "rounding") c.m0_rule = M0Rule::rounding;
            else throw ConfigError("sweep.m0_rule", "expected argmin|rounding");
        }
        o.finish();
    }
    if (!(c.sweep_hi >= c.sweep_lo)) throw ConfigError("sweep.hi", "must be >= sweep.lo");
    if (!(c.sweep_step > 0.0)) throw ConfigError("sweep.step", "must be > 0");

    if (const json* a = root.child("agent")) {
        Obj o(*a, "agent");
        std::string s;
        if (o.get("features", s)) {
            wrap_validation("agent.features", [&] { c.agent.features = feature_mode_from_string(s); });
        }
        o.get("zeta_lo", c.agent.zeta_lo);
        o.get("zeta_hi", c.agent.zeta_hi);
        o.get("mu", c.agent.mu);
        o.get("tau", c.agent.tau);
        o.get("lr_actor", c.agent.lr_actor);
        o.get("lr_critic", c.agent.lr_critic);
        if (o.get("optimizer", s)) {
            wrap_validation("agent.optimizer", [&] { c.agent.optimizer = optimizer_from_string(s); });
        }
        o.get("batch", c.agent.batch);
        o.get("capacity", c.agent.capacity);
        o.get("warmup_episodes", c.agent.warmup_episodes);
        o.get("sigma0", c.agent.sigma0);
        o.get("sigma_end", c.agent.sigma_end);
        o.get("episodes", c.agent.episodes);
        o.get("steps", c.agent.steps);
        c.agent_dt_ctrl_given = o.get("dt_ctrl", c.agent.dt_ctrl);
        o.get("updates_per_step", c.agent.updates_per_step);
        o.get("hidden", c.agent.hidden);
        o.get("dt", c.agent.dt);
        o.finish();
    }
    if (c.agent.steps < 1) throw ConfigError("agent.steps", "must be >= 1");
    wrap_validation("agent", [&] { c.resolved_agent().validate(); });

    if (const json* p = root.child("combine")) {
        Obj o(*p, "combine");
        o.get("sweep_lo", c.combine.sweep_lo);
        o.get("sweep_hi", c.combine.sweep_hi);
        o.get("sweep_step", c.combine.sweep_step);
        o.get("half_width", c.combine.half_width);
        o.get("stitch_step", c.combine.stitch_step);
        o.finish();
    }
    if (!(c.combine.half_width > 0.0)) throw ConfigError("combine.half_width", "must be > 0");
    if (!(c.combine.stitch_step > 0.0)) throw ConfigError("combine.stitch_step", "must be > 0");
    if (!(c.combine.sweep_step > 0.0)) throw ConfigError("combine.sweep_step", "must be > 0");

    if (const json* e = root.child("effective")) {
        Obj o(*e, "effective");
        o.get("zeta", c.zeta);
        o.finish();
    }
    if (const json* t = root.child("trajectory")) {
        Obj o(*t, "trajectory");
        o.get("control", c.control_file);
        o.get("zeta", c.zeta);
        o.finish();
    }
    if (const json* n = root.child("n_scan")) {
        Obj o(*n, "n_scan");
        o.get("n_list", c.n_list);
        o.finish();
    }
    for (std::size_t i = 0; i < c.n_list.size(); ++i) {
        if (c.n_list[i] < 1) throw ConfigError("n_scan.n_list[" + std::to_string(i) + "]", "must be >= 1");
    }
    if (const json* g = root.child("gamma_scan")) {
        Obj o(*g, "gamma_scan");
        o.get("gammas", c.gammas);
        o.finish();
    }
    for (std::size_t i = 0; i < c.gammas.size(); ++i) {
        if (!(c.gammas[i] >= 0.0)) throw ConfigError("gamma_scan.gammas[" + std::to_string(i) + "]", "must be >= 0");
    }
    if (const json* a = root.child("angle_track")) {
        Obj o(*a, "angle_track");
        o.get("tv_noiseless", c.tv_noiseless_control);
        o.get("tv_noisy", c.tv_noisy_control);
        o.get("combined", c.combined_control);
        o.finish();
    }
    if (c.kind == RunKind::angle_track) {
        if (c.tv_noiseless_control.empty()) throw ConfigError("angle_track.tv_noiseless", "missing control file");
        if (c.tv_noisy_control.empty()) throw ConfigError("angle_track.tv_noisy", "missing control file");
        if (c.combined_control.empty()) throw ConfigError("angle_track.combined", "missing control file");
    }
    root.finish();
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    const AgentConfig& a = c.agent;
    json j;
    j["schema_version"] = kConfigSchemaVersion;
    j["kind"] = to_string(c.kind);
    j["output"] = c.output;
    j["seed"] = c.seed;
    j["noisy"] = c.noisy;
    j["t_final"] = c.t_final;
    j["dt"] = c.dt;
    j["record_interval"] = c.record_interval;
    j["threads"] = c.threads;
    j["truncation_check"] = c.truncation_check;
    j["model"] = {{"omega_c", c.model.omega_c}, {"omega_z", c.model.omega_z}, {"g", c.model.g},
                  {"nu", c.model.nu},           {"kappa", c.model.kappa},     {"gamma", c.model.gamma},
                  {"n_spins", c.model.n_spins}, {"fock_cutoff", c.model.fock_cutoff}};
    j["sweep"] = {{"lo", c.sweep_lo},
                  {"hi", c.sweep_hi},
                  {"step", c.sweep_step},
                  {"roots", c.sweep_roots},
                  {"m0_rule", m0_rule_name(c.m0_rule)}};
    json aj = {{"features", to_string(a.features)},
               {"zeta_lo", a.zeta_lo},
               {"zeta_hi", a.zeta_hi},
               {"mu", a.mu},
               {"tau", a.tau},
               {"lr_actor", a.lr_actor},
               {"lr_critic", a.lr_critic},
               {"optimizer", to_string(a.optimizer)},
               {"batch", a.batch},
               {"capacity", a.capacity},
               {"warmup_episodes", a.warmup_episodes},
               {"sigma0", a.sigma0},
               {"sigma_end", a.sigma_end},
               {"episodes", a.episodes},
               {"steps", a.steps},
               {"updates_per_step", a.updates_per_step},
               {"hidden", a.hidden},
               {"dt", a.dt}};
    if (c.agent_dt_ctrl_given) aj["dt_ctrl"] = a.dt_ctrl;
    j["agent"] = aj;
    j["combine"] = {{"sweep_lo", c.combine.sweep_lo},
                    {"sweep_hi", c.combine.sweep_hi},
                    {"sweep_step", c.combine.sweep_step},
                    {"half_width", c.combine.half_width},
                    {"stitch_step", c.combine.stitch_step}};
    j["effective"] = {{"zeta", c.zeta}};
    j["trajectory"] = {{"control", c.control_file}};
    j["n_scan"] = {{"n_list", c.n_list}};
    j["gamma_scan"] = {{"gammas", c.gammas}};
    j["angle_track"] = {{"tv_noiseless", c.tv_noiseless_control},
                        {"tv_noisy", c.tv_noisy_control},
                        {"combined", c.combined_control}};
    return j;
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError(assignment, "override must look like key.path=value");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw ConfigError(path, "empty path component");
        if (!node->is_object()) throw ConfigError(path, "cannot descend into a non-object");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256 failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

fs::path output_root() {
    const char* env = std::getenv("SPINSQ_OUTPUT_ROOT");
    return (env && *env) ? fs::path(env) : fs::path("runs");
}

// ---------------------------------------------------------------------------
// Runners

namespace {

class Artifacts {
public:
    explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {}

    void write(const std::string& name, const std::string& text) {
        write_text_file(dir_ / name, text);
        hashes_[name] = sha256_hex(text);
    }
    const std::map<std::string, std::string>& hashes() const { return hashes_; }

private:
    fs::path dir_;
    std::map<std::string, std::string> hashes_;
};

json storage_json(const StorageResult& s) {
    return {{"S", s.S_lifetime}, {"S_full", s.S_full}, {"t_cross", s.t_cross}, {"crossed", s.crossed}};
}

json evaluation_json(const Evaluation& e) {
    json j = storage_json(e.storage);
    j["min_xi2_db"] = xi2_to_db(e.trajectory.min_xi2());
    j["t_at_min"] = e.trajectory.t_at_min();
    return j;
}

json guard_json(const ExperimentConfig& c, const ControlSignal& control, const ModelParams& p, double T, double dt) {
    if (!c.truncation_check) return nullptr;
    IntegratorConfig ic;
    ic.t_final = T;
    ic.dt = dt;
    ic.record_every = static_cast<int>(std::lround(c.record_interval / dt));
    const TruncationCheck tc = truncation_check(control, p, ic);
    return {{"cutoff", tc.cutoff}, {"reference_cutoff", tc.reference_cutoff}, {"max_dxi2", tc.max_dxi2},
            {"tolerance", tc.tolerance}, {"ok", tc.ok}};
}

SweepOptions sweep_options(const ExperimentConfig& c) {
    SweepOptions so;
    so.dt = c.dt;
    so.record_interval = c.record_interval;
    so.threads = c.resolved_threads();
    return so;
}

json point_json(const SweepPoint& p) {
    return {{"zeta", p.zeta}, {"min_xi2", p.min_xi2}, {"min_xi2_db", p.min_xi2_db}, {"t_min", p.t_min}};
}

json run_sweep(const ExperimentConfig& c, Artifacts& out) {
    const double T = c.horizon();
    const SweepResult sr =
        sweep_constant(zeta_grid(c.sweep_lo, c.sweep_hi, c.sweep_step), c.model, T, c.noisy, sweep_options(c));
    out.write("sweep.csv", sweep_csv(sr));
    json summary = {{"best", point_json(sr.best)}, {"points", sr.size()}, {"t_final", T}, {"noisy", c.noisy}};
    for (std::size_t i = 0; i < sr.size(); ++i) {
        if (std::abs(sr.zeta_grid[i]) < 1e-12) summary["zeta0"] = point_json(sr.point(i));
    }
    if (c.sweep_roots) {
        const int m0 = find_m0(c.model, c.m0_rule);
        const auto oat = oat_condition_roots(m0, c.sweep_lo, c.sweep_hi);
        const auto tat = tat_condition_roots(m0, c.sweep_lo, c.sweep_hi);
        std::vector<double> roots = oat;
        roots.insert(roots.end(), tat.begin(), tat.end());
        std::string csv = "zeta,type,min_xi2,min_xi2_db,t_min\n";
        if (!roots.empty()) {
            const SweepResult rr = sweep_constant(roots, c.model, T, c.noisy, sweep_options(c));
            for (std::size_t i = 0; i < rr.size(); ++i) {
                csv += format_exact(rr.zeta_grid[i]) + ',' + (i < oat.size() ? "oat" : "tat") + ',' +
                       format_short(rr.min_xi2[i]) + ',' + format_short(xi2_to_db(rr.min_xi2[i])) + ',' +
                       format_short(rr.t_min[i]) + '\n';
            }
        }
        out.write("roots.csv", csv);
        summary["m0"] = m0;
        summary["oat_roots"] = oat;
        summary["tat_roots"] = tat;
    }
    return summary;
}

json training_summary(const TrainingLog& log) {
    long failed = 0;
    for (const auto& e : log.episodes) failed += e.failed ? 1 : 0;
    return {{"dt", log.dt},
            {"episodes", log.episodes.size()},
            {"failed_episodes", failed},
            {"has_control", log.has_control()},
            {"best_S", log.best_S},
            {"best_episode", log.best_episode},
            {"best_min_xi2_db", xi2_to_db(log.best_min_xi2)},
            {"best_min_episode", log.best_min_episode}};
}

json run_train(const ExperimentConfig& c, Artifacts& out) {
    const ModelParams p = c.dynamics_params();
    const AgentConfig a = c.resolved_agent();
    const double T = a.dt_ctrl * a.steps;
    const Propagator prop(p, training_dt(p, a));
    Agent agent;
    const TrainingLog log = train(prop, a, initial_start(prop), &agent);
    out.write("training_log.csv", training_log_csv(log));
    out.write("checkpoint.json", checkpoint_json(agent, a));
    json summary = training_summary(log);
    const Evaluation none = evaluate(ControlSignal::zero(T, a.dt_ctrl), p, c.noisy, T, log.dt, a.record_interval);
    out.write("trajectory_none.csv", trajectory_csv(none.trajectory));
    summary["no_control"] = evaluation_json(none);
    if (log.has_control()) {
        out.write("control.csv", control_csv(log.best_control));
        out.write("control_min.csv", control_csv(log.best_min_control));
        const Evaluation best = evaluate(log.best_control, p, c.noisy, T, log.dt, a.record_interval);
        const Evaluation deep = evaluate(log.best_min_control, p, c.noisy, T, log.dt, a.record_interval);
        out.write("trajectory.csv", trajectory_csv(best.trajectory));
        out.write("trajectory_min.csv", trajectory_csv(deep.trajectory));
        summary["best_control"] = evaluation_json(best);
        summary["best_min_control"] = evaluation_json(deep);
        summary["truncation_check"] = guard_json(c, log.best_control, p, T, log.dt);
    }
    return summary;
}

json run_combine(const ExperimentConfig& c, Artifacts& out) {
    const ModelParams p = c.dynamics_params();
    const AgentConfig a = c.resolved_agent();
    PipelineConfig pc = c.combine;
    pc.t_final = c.horizon();
    pc.threads = c.resolved_threads();
    auto persist = [&](const std::string& stage, const PipelineResult& r) {
        if (stage == "sweep") {
            out.write("sweep.csv", sweep_csv(r.sweep));
        } else if (stage == "train") {
            out.write("full_tv_log.csv", training_log_csv(r.full_tv));
            out.write("full_tv_control.csv", control_csv(r.full_tv.best_control));
        } else if (stage == "stitch") {
            out.write("stitch.csv", stitch_csv(r.combined));
            out.write("stitched_control.csv", control_csv(r.combined.best.assembled));
        } else if (stage == "tail") {
            out.write("tail_log.csv", training_log_csv(r.tail.log));
            out.write("combined_control.csv", control_csv(r.tail.control));
        } else if (stage == "evaluate") {
            out.write("trajectory_none.csv", trajectory_csv(r.no_control.trajectory));
            out.write("trajectory_cv.csv", trajectory_csv(r.constant_control.trajectory));
            out.write("trajectory_tv.csv", trajectory_csv(r.tv_control.trajectory));
            out.write("trajectory_combined.csv", trajectory_csv(r.combined_control.trajectory));
        }
    };
    const PipelineResult r = combined_pipeline(p, a, pc, persist);
    const json guard = guard_json(c, r.tail.control, p, pc.t_final, r.dt);
    json failures = json::array();
    for (const auto& f : r.combined.failures) failures.push_back({{"zeta_c", f.zeta_c}, {"reason", f.reason}});
    return {{"dt", r.dt},
            {"zeta_min", r.sweep.best.zeta},
            {"regime", {r.regime.first, r.regime.second}},
            {"zeta_opt", r.combined.zeta_opt},
            {"t_switch", r.combined.best.t_min},
            {"stitch_failures", failures},
            {"full_tv", training_summary(r.full_tv)},
            {"tail", training_summary(r.tail.log)},
            {"no_control", evaluation_json(r.no_control)},
            {"constant_control", evaluation_json(r.constant_control)},
            {"tv_control", evaluation_json(r.tv_control)},
            {"combined_control", evaluation_json(r.combined_control)},
            {"truncation_check", guard}};
}

json run_validate_effective(const ExperimentConfig& c, Artifacts& out) {
    const double T = c.t_final > 0.0 ? c.t_final : 50.0;
    const FidelitySeries fs = validate_effective(c.zeta, c.model, T, c.record_interval, c.dt, c.m0_rule);
    out.write("fidelity.csv", fidelity_csv(fs));
    const EffectiveParams& e = fs.effective;
    return {{"zeta", c.zeta},
            {"t_final", T},
            {"dt", fs.dt},
            {"effective",
             {{"m0", e.m0},
              {"delta", e.delta},
              {"Delta", e.Delta},
              {"g0", e.g0},
              {"gm0", e.gm0},
              {"lambda", e.lambda},
              {"lambda_prime", e.lambda_prime},
              {"weakly_dispersive", e.weakly_dispersive}}},
            {"min_fidelity", fs.min_fidelity()},
            {"min_fidelity_bare", fs.min_fidelity_bare()},
            {"first_below_0.999", fs.first_below(0.999)}};
}

ControlSignal load_control(const std::string& path) {
    try {
        return parse_control_csv(read_text_file(path));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path, e.what());
    } catch (const std::runtime_error& e) {
        throw ConfigError(path, e.what());
    }
}

json run_trajectory(const ExperimentConfig& c, Artifacts& out) {
    const double T = c.horizon();
    const ControlSignal control =
        c.control_file.empty() ? ControlSignal::constant(c.zeta, T, c.record_interval) : load_control(c.control_file);
    const Evaluation ev = evaluate(control, c.model, c.noisy, T, c.dt, c.record_interval);
    out.write("trajectory.csv", trajectory_csv(ev.trajectory));
    json s = evaluation_json(ev);
    s["t_final"] = T;
    const ModelParams p = c.dynamics_params();
    const double dt = resolve_dt(IntegratorConfig{T, c.dt}, p, control, p.noiseless());
    s["dt"] = dt;
    s["truncation_check"] = guard_json(c, control, p, T, dt);
    return s;
}

double xi2_near(const Trajectory& traj, double t) {
    std::size_t best = 0;
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        if (std::abs(traj.times[i] - t) < std::abs(traj.times[best] - t)) best = i;
    }
    return traj.records.at(best).xi2;
}

json run_n_scan(const ExperimentConfig& c, Artifacts& out) {
    const double T = c.horizon();
    std::string csv = "n,cv_zeta,cv_min_xi2_db,cv_t_min,tv_min_xi2_db,tv_t_min,tv_at_cv_time_db,status\n";
    json rows = json::array();
    for (int n : c.n_list) {
        ExperimentConfig cn = c;
        cn.model.n_spins = n;
        try {
            const ModelParams p = cn.dynamics_params();
            const SweepResult sr =
                sweep_constant(zeta_grid(c.sweep_lo, c.sweep_hi, c.sweep_step), p, T, c.noisy, sweep_options(c));
            const AgentConfig a = cn.resolved_agent();
            const TrainingLog log = train(p, a);
            if (!log.has_control()) throw std::runtime_error("training produced no control");
            const Evaluation tv = evaluate(log.best_min_control, p, c.noisy, a.dt_ctrl * a.steps, log.dt, a.record_interval);
            const double at_cv = xi2_to_db(xi2_near(tv.trajectory, sr.best.t_min));
            csv += std::to_string(n) + ',' + format_short(sr.best.zeta) + ',' + format_short(sr.best.min_xi2_db) + ',' +
                   format_short(sr.best.t_min) + ',' + format_short(xi2_to_db(tv.trajectory.min_xi2())) + ',' +
                   format_short(tv.trajectory.t_at_min()) + ',' + format_short(at_cv) + ",ok\n";
            out.write("control_n" + std::to_string(n) + ".csv", control_csv(log.best_min_control));
            rows.push_back({{"n", n},
                            {"cv", point_json(sr.best)},
                            {"tv_min_xi2_db", xi2_to_db(tv.trajectory.min_xi2())},
                            {"tv_t_min", tv.trajectory.t_at_min()},
                            {"tv_at_cv_time_db", at_cv}});
        } catch (const std::exception& e) {
            std::string msg = e.what();
            std::replace(msg.begin(), msg.end(), ',', ';');
            std::replace(msg.begin(), msg.end(), '\n', ' ');
            csv += std::to_string(n) + ",,,,,,,failed: " + msg + '\n';
            rows.push_back({{"n", n}, {"error", e.what()}});
        }
    }
    out.write("n_scan.csv", csv);
    return {{"rows", rows}};
}

json run_gamma_scan(const ExperimentConfig& c, Artifacts& out) {
    std::string csv = "gamma,S_no,S_tv,min_no_db,min_tv_db,status\n";
    json rows = json::array();
    for (std::size_t i = 0; i < c.gammas.size(); ++i) {
        ExperimentConfig cg = c;
        cg.model.gamma = c.gammas[i];
        cg.noisy = true;
        const std::string tag = "gamma" + std::to_string(i);
        try {
            const ModelParams p = cg.dynamics_params();
            const AgentConfig a = cg.resolved_agent();
            const double T = a.dt_ctrl * a.steps;
            const TrainingLog log = train(p, a);
            if (!log.has_control()) throw std::runtime_error("training produced no control");
            const bool noisy = !p.noiseless();
            const Evaluation none = evaluate(ControlSignal::zero(T, a.dt_ctrl), p, noisy, T, log.dt, a.record_interval);
            const Evaluation tv = evaluate(log.best_control, p, noisy, T, log.dt, a.record_interval);
            out.write(tag + "_none.csv", trajectory_csv(none.trajectory));
            out.write(tag + "_tv.csv", trajectory_csv(tv.trajectory));
            out.write(tag + "_control.csv", control_csv(log.best_control));
            csv += format_short(c.gammas[i]) + ',' + format_short(none.storage.S) + ',' + format_short(tv.storage.S) +
                   ',' + format_short(xi2_to_db(none.trajectory.min_xi2())) + ',' +
                   format_short(xi2_to_db(tv.trajectory.min_xi2())) + ",ok\n";
            rows.push_back({{"gamma", c.gammas[i]},
                            {"file_prefix", tag},
                            {"no_control", evaluation_json(none)},
                            {"tv_control", evaluation_json(tv)}});
        } catch (const std::exception& e) {
            std::string msg = e.what();
            std::replace(msg.begin(), msg.end(), ',', ';');
            std::replace(msg.begin(), msg.end(), '\n', ' ');
            csv += format_short(c.gammas[i]) + ",,,,,failed: " + msg + '\n';
            rows.push_back({{"gamma", c.gammas[i]}, {"error", e.what()}});
        }
    }
    out.write("gamma_scan.csv", csv);
    return {{"rows", rows}};
}

/// Difference of squeezing-axis angles, which are defined modulo pi.
double axis_difference(double a, double b) {
    double d = std::remainder(a - b, std::numbers::pi);
    return d;
}

json run_angle_track(const ExperimentConfig& c, Artifacts& out) {
    struct Series {
        std::string name;
        ControlSignal control;
        bool noisy;
        Evaluation eval;
        double ref{0};
        double t_min{0};
    };
    std::vector<Series> series = {{"tv_noiseless", load_control(c.tv_noiseless_control), false, {}},
                                  {"tv_noisy", load_control(c.tv_noisy_control), true, {}},
                                  {"combined", load_control(c.combined_control), true, {}}};
    double T = std::numeric_limits<double>::infinity();
    for (auto& s : series) {
        s.eval = evaluate(s.control, c.model, s.noisy, s.control.t_end(), c.dt, c.record_interval);
        const auto& tr = s.eval.trajectory;
        const auto it = std::min_element(tr.records.begin(), tr.records.end(),
                                         [](const auto& x, const auto& y) { return x.xi2 < y.xi2; });
        s.ref = it->phi_opt;
        s.t_min = tr.times[static_cast<std::size_t>(it - tr.records.begin())];
        T = std::min(T, s.control.t_end());
    }
    std::string csv = "t";
    for (const auto& s : series) csv += ",phi_" + s.name;
    for (const auto& s : series) csv += ",ref_" + s.name;
    csv += '\n';
    const auto& base = series[0].eval.trajectory.times;
    for (std::size_t i = 0; i < base.size() && base[i] <= T + 1e-9; ++i) {
        csv += format_short(base[i]);
        for (const auto& s : series) csv += ',' + format_short(s.eval.trajectory.records.at(i).phi_opt);
        for (const auto& s : series) csv += ',' + format_short(s.ref);
        csv += '\n';
    }
    out.write("angles.csv", csv);

    json summary = json::object();
    for (const auto& s : series) {
        const auto& tr = s.eval.trajectory;
        const double t_end = s.eval.storage.crossed ? s.eval.storage.t_cross : s.eval.storage.t_max_used;
        double acc = 0.0;
        long n = 0;
        for (std::size_t i = 0; i < tr.times.size(); ++i) {
            if (tr.times[i] >= s.t_min && tr.times[i] <= t_end) {
                acc += std::abs(axis_difference(tr.records[i].phi_opt, s.ref));
                ++n;
            }
        }
        const double mean_dev = n > 0 ? acc / static_cast<double>(n) : 0.0;
        summary[s.name] = {{"reference_angle", s.ref},
                           {"t_min", s.t_min},
                           {"t_end", t_end},
                           {"mean_abs_deviation", mean_dev},
                           {"deviation_rate", t_end > s.t_min ? mean_dev / (t_end - s.t_min) : 0.0}};
    }
    return summary;
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& config, const fs::path& directory) {
    const auto t0 = std::chrono::steady_clock::now();
    if (fs::exists(directory) && !fs::exists(directory / "manifest.json")) {
        throw ConfigError("output", "refusing to replace " + directory.string() + ": not a previous run directory");
    }
    fs::path staging = directory;
    staging += ".partial";
    fs::remove_all(staging);
    fs::create_directories(staging);

    RunOutcome outcome;
    outcome.directory = directory;
    const json resolved = config_to_json(config);
    try {
        Artifacts out(staging);
        out.write("config.json", resolved.dump(2) + "\n");
        json summary;
        switch (config.kind) {
            case RunKind::sweep: summary = run_sweep(config, out); break;
            case RunKind::train: summary = run_train(config, out); break;
            case RunKind::combine: summary = run_combine(config, out); break;
            case RunKind::validate_effective: summary = run_validate_effective(config, out); break;
            case RunKind::trajectory: summary = run_trajectory(config, out); break;
            case RunKind::n_scan: summary = run_n_scan(config, out); break;
            case RunKind::gamma_scan: summary = run_gamma_scan(config, out); break;
            case RunKind::angle_track: summary = run_angle_track(config, out); break;
        }
        out.write("summary.json", summary.dump(2) + "\n");
        outcome.summary = summary;

        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        outcome.manifest = {{"tool", "spinsq"},
                            {"version", kVersion},
                            {"kind", to_string(config.kind)},
                            {"seed", config.seed},
                            {"config", resolved},
                            {"config_sha256", sha256_hex(resolved.dump())},
                            {"artifacts", out.hashes()},
                            {"wall_time_s", wall}};
        write_text_file(staging / "manifest.json", outcome.manifest.dump(2) + "\n");
    } catch (...) {
        std::error_code ec;
        fs::remove_all(staging, ec);
        throw;
    }
    fs::remove_all(directory);
    fs::rename(staging, directory);
    return outcome;
}

}  // namespace spinsq
