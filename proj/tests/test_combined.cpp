#include "spinsq/combined.hpp"

#include <doctest.h>

#include <random>

using namespace spinsq;

namespace {

ModelParams small_model() {
    ModelParams p;
    p.n_spins = 4;
    p.fock_cutoff = 3;
    return p.without_noise();
}

ControlSignal random_control(int bins, double dt_ctrl, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ControlSignal c;
    c.t0 = 0.0;
    c.dt_ctrl = dt_ctrl;
    for (int i = 0; i < bins; ++i) c.values.push_back(u(rng));
    return c;
}

AgentConfig small_agent(int steps, double dt_ctrl) {
    AgentConfig a;
    a.episodes = 3;
    a.warmup_episodes = 2;
    a.steps = steps;
    a.dt_ctrl = dt_ctrl;
    a.batch = 8;
    a.hidden = {8};
    a.zeta_lo = -1;
    a.zeta_hi = 1;
    a.seed = 3;
    return a;
}

}  // namespace

TEST_CASE("regime selection") {
    const auto r = choose_regime(0.1, 0.5);
    CHECK(r.first == doctest::Approx(-0.4));
    CHECK(r.second == doctest::Approx(0.6));
    CHECK_THROWS_AS(choose_regime(0.1, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(choose_regime(0.1, -1.0), std::invalid_argument);
}

TEST_CASE("stitching: construction and bin-exact prefix") {
    const ModelParams p = small_model();
    const ControlSignal tv = random_control(80, 0.5, 7);
    const double T = tv.t_end();
    const double dt = auto_dt(p, 1.0, tv.dt_ctrl, true);
    const StitchedControl s = stitch_control(0.0, tv, p, dt);
    CHECK(s.zeta_c == 0.0);
    CHECK(s.t_min <= s.t_min_raw);
    CHECK(s.t_min_raw < s.t_min + tv.dt_ctrl);
    CHECK(s.t_min_raw < T);
    const auto k = static_cast<std::size_t>(std::lround(s.t_min / tv.dt_ctrl));
    CHECK(std::abs(s.t_min - k * tv.dt_ctrl) < 1e-12);
    REQUIRE(s.assembled.values.size() == tv.values.size());
    for (std::size_t i = 0; i < k; ++i) CHECK(s.assembled.values[i] == 0.0);
    for (std::size_t i = k; i < tv.values.size(); ++i) CHECK(s.assembled.values[i] == tv.values[i]);
    CHECK(s.tail.t0 == s.t_min);
    CHECK(s.tail.values.size() == tv.values.size() - k);

    // the stitched run replays the constant run exactly up to the switch
    const Evaluation a = evaluate(s.assembled, p, false, T, dt);
    const Evaluation c = evaluate(ControlSignal::constant(0.0, T, tv.dt_ctrl), p, false, T, dt);
    REQUIRE(a.trajectory.times.size() == c.trajectory.times.size());
    std::size_t compared = 0;
    for (std::size_t i = 0; i < a.trajectory.times.size() && a.trajectory.times[i] <= s.t_min; ++i, ++compared) {
        CHECK(a.trajectory.records[i].xi2 == c.trajectory.records[i].xi2);
    }
    CHECK(compared > 1);
    CHECK(s.constant_storage.S == doctest::Approx(c.storage.S).epsilon(1e-12));

    // no interior minimum on a short horizon
    CHECK_THROWS_AS(stitch_control(0.0, random_control(2, 0.5, 1), p, dt), std::domain_error);
    ControlSignal shifted = tv;
    shifted.t0 = 1.0;
    CHECK_THROWS_AS(stitch_control(0.0, shifted, p, dt), std::invalid_argument);
}

TEST_CASE("stitched scan: argmax, recomputation and failures") {
    const ModelParams p = small_model();
    const ControlSignal tv = random_control(80, 0.5, 11);
    StitchOptions opt;
    opt.threads = 1;
    opt.dt = auto_dt(p, 1.0, tv.dt_ctrl, true);
    const CombinedResult r = optimize_stitched({-0.2, 0.2}, 0.1, tv, p, opt);
    REQUIRE(r.zeta_grid.size() + r.failures.size() == 5);
    REQUIRE(!r.zeta_grid.empty());
    double best = -1e300;
    for (std::size_t i = 0; i < r.zeta_grid.size(); ++i) {
        best = std::max(best, r.S_by_zeta[i]);
        const StitchedControl s = stitch_control(r.zeta_grid[i], tv, p, opt.dt);
        const Evaluation ev = evaluate(s.assembled, p, false, tv.t_end(), opt.dt);
        CHECK(ev.storage.S == doctest::Approx(r.S_by_zeta[i]).epsilon(1e-12));
        CHECK(ev.storage.S_full == doctest::Approx(r.S_full_by_zeta[i]).epsilon(1e-12));
        CHECK(r.t_min_by_zeta[i] == s.t_min);
    }
    CHECK(r.S_c == best);
    CHECK(r.S_at(r.zeta_opt) == best);
    CHECK(r.final_control.values == r.best.assembled.values);
    CHECK_THROWS_AS(r.S_at(0.05), std::out_of_range);

    // stable under repetition and threading
    StitchOptions par = opt;
    par.threads = 2;
    const CombinedResult r2 = optimize_stitched({-0.2, 0.2}, 0.1, tv, p, par);
    CHECK(r2.zeta_opt == r.zeta_opt);
    CHECK(r2.S_by_zeta == r.S_by_zeta);

    const CombinedResult single = optimize_stitched({0.1, 0.1}, 0.1, tv, p, opt);
    CHECK(single.zeta_grid == std::vector<double>{0.1});
    CHECK(single.zeta_opt == 0.1);

    CHECK_THROWS_AS(optimize_stitched({-0.2, 0.2}, 0.1, random_control(2, 0.5, 1), p, opt), std::runtime_error);
    CHECK_THROWS_AS(optimize_stitched({-0.2, 0.2}, 0.0, tv, p, opt), std::invalid_argument);
}

TEST_CASE("tail learning") {
    const ModelParams p = small_model();
    const ControlSignal tv = random_control(40, 1.0, 5);
    AgentConfig a = small_agent(40, 1.0);
    const double dt = training_dt(p, a);
    const StitchedControl s = stitch_control(0.0, tv, p, dt);
    const auto k = static_cast<std::size_t>(std::lround(s.t_min / tv.dt_ctrl));

    AgentConfig none = a;
    none.episodes = 0;
    const TailResult t0 = learn_tail(s, p, none);
    CHECK(t0.control.values == s.assembled.values);
    CHECK_FALSE(t0.log.has_control());

    const TailResult t = learn_tail(s, p, a);
    REQUIRE(t.log.has_control());
    REQUIRE(t.control.values.size() == tv.values.size());
    for (std::size_t i = 0; i < k; ++i) CHECK(t.control.values[i] == 0.0);
    for (double z : t.control.values) CHECK(std::abs(z) <= 1.0);
    const Evaluation ev = evaluate(t.control, p, false, tv.t_end(), dt, a.record_interval);
    CHECK(ev.storage.S == doctest::Approx(t.storage.S).epsilon(1e-12));
    // the logged best episode covers the whole run, prefix included
    CHECK(std::abs(t.log.best_S - t.storage.S) < 1e-9);

    AgentConfig wrong = a;
    wrong.dt_ctrl = 0.5;
    CHECK_THROWS_AS(learn_tail(s, p, wrong), std::invalid_argument);
}

TEST_CASE("combined pipeline end to end") {
    const ModelParams p = small_model();
    const AgentConfig a = small_agent(40, 1.0);
    PipelineConfig cfg;
    cfg.sweep_lo = -0.2;
    cfg.sweep_hi = 0.2;
    cfg.sweep_step = 0.1;
    cfg.half_width = 0.1;
    cfg.stitch_step = 0.1;
    cfg.t_final = 40.0;
    cfg.threads = 1;
    std::vector<std::string> stages;
    const PipelineResult r = combined_pipeline(p, a, cfg, [&](const std::string& s, const PipelineResult&) { stages.push_back(s); });
    CHECK(stages == std::vector<std::string>{"config", "sweep", "train", "stitch", "tail", "evaluate"});
    CHECK(r.regime.first == doctest::Approx(r.sweep.best.zeta - 0.1));
    CHECK(r.combined_control.storage.S == doctest::Approx(r.combined.S_c).epsilon(1e-12));
    CHECK(r.no_control.storage.S >= 0.0);
    for (std::size_t i = 0; i < r.combined.zeta_grid.size(); ++i) {
        CHECK(r.combined.zeta_grid[i] >= r.regime.first - 1e-9);
        CHECK(r.combined.zeta_grid[i] <= r.regime.second + 1e-9);
    }

    PipelineConfig bad = cfg;
    bad.t_final = 30.0;
    try {
        combined_pipeline(p, a, bad);
        FAIL("expected a pipeline error");
    } catch (const PipelineError& e) {
        CHECK(e.stage == "config");
        CHECK_FALSE(e.numerical);
    }
}
