#include "spinsq/ddpg.hpp"
#include "spinsq/mlp.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

using namespace spinsq;

namespace {

RMatrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n01;
    RMatrix m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = scale * n01(rng);
    return m;
}

bool close(double a, double n) { return std::abs(a - n) <= 1e-4 * std::max(std::abs(a), std::abs(n)) + 1e-8; }

/// A tiny, quick training problem.
AgentConfig tiny_config() {
    AgentConfig c;
    c.episodes = 14;
    c.warmup_episodes = 3;
    c.steps = 8;
    c.dt_ctrl = 0.5;
    c.batch = 8;
    c.hidden = {8, 8};
    c.seed = 42;
    return c;
}

ModelParams tiny_model(bool noisy) {
    ModelParams p;
    p.n_spins = 2;
    p.fock_cutoff = 2;
    return noisy ? p : p.without_noise();
}

}  // namespace

TEST_CASE("MLP gradients match central finite differences (100 draws)") {
    std::mt19937_64 rng(17);
    const double eps = 1e-5;
    int bad = 0, total = 0;
    for (int draw = 0; draw < 100; ++draw) {
        const OutputActivation out = draw % 2 ? OutputActivation::tanh : OutputActivation::linear;
        const int in = 3 + draw % 4;
        MLP net({in, 7, 5, 1 + draw % 2}, out, rng, 0.5);
        const RMatrix x = random_matrix(in, 3, rng);
        const RMatrix dy = random_matrix(net.output_dim(), 3, rng);
        auto loss = [&](const MLP& m, const RMatrix& xx) { return m.forward_batch(xx).cwiseProduct(dy).sum(); };
        MLP::Cache cache;
        net.forward_batch(x, &cache);
        RMatrix dx;
        const RVector g = MLP::flatten(net.backward(cache, dy, &dx));
        RVector p = net.flatten();
        REQUIRE(static_cast<std::size_t>(p.size()) == net.parameter_count());
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            MLP a = net, b = net;
            RVector pa = p, pb = p;
            pa(i) += eps;
            pb(i) -= eps;
            a.unflatten(pa);
            b.unflatten(pb);
            const double fd = (loss(a, x) - loss(b, x)) / (2 * eps);
            ++total;
            if (!close(g(i), fd)) ++bad;
        }
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            RMatrix xa = x, xb = x;
            xa(i) += eps;
            xb(i) -= eps;
            const double fd = (loss(net, xa) - loss(net, xb)) / (2 * eps);
            ++total;
            if (!close(dx(i), fd)) ++bad;
        }
    }
    CHECK(total > 10000);
    CHECK(bad == 0);
}

TEST_CASE("MLP plumbing: flatten round trip, soft updates and optimizer") {
    std::mt19937_64 rng(1);
    MLP net({4, 6, 1}, OutputActivation::tanh, rng);
    const RVector p = net.flatten();
    MLP copy = net;
    copy.unflatten(p);
    CHECK((copy.flatten() - p).norm() == 0.0);
    CHECK_THROWS(copy.unflatten(RVector::Zero(3)));
    CHECK_THROWS(net.forward(RVector::Zero(5)));

    MLP other({4, 6, 1}, OutputActivation::tanh, rng);
    MLP target = net;
    target.soft_update(net, 0.1);  // fixed point
    CHECK((target.flatten() - p).norm() == 0.0);
    target = other;
    target.soft_update(net, 1.0);
    CHECK((target.flatten() - p).norm() == 0.0);
    target = other;
    target.soft_update(net, 0.25);
    CHECK((target.flatten() - (0.25 * p + 0.75 * other.flatten())).norm() < 1e-15);

    // Adam's first step moves every parameter by lr in the descent direction
    Optimizer opt(net, 0.01);
    MLP::Cache c;
    net.forward_batch(RMatrix::Ones(4, 2), &c);
    const MLPGradients g = net.backward(c, RMatrix::Ones(1, 2));
    const RVector gf = MLP::flatten(g);
    opt.step(net, g);
    const RVector step = net.flatten() - p;
    for (Eigen::Index i = 0; i < step.size(); ++i) {
        if (std::abs(gf(i)) > 1e-6) CHECK(step(i) == doctest::Approx(-0.01 * (gf(i) > 0 ? 1 : -1)).epsilon(1e-4));
    }
    CHECK(optimizer_from_string("sgd") == OptimizerKind::sgd);
    CHECK(to_string(OptimizerKind::adam) == "adam");
    CHECK_THROWS(optimizer_from_string("rmsprop"));
}

TEST_CASE("features and reward") {
    const ModelParams p = tiny_model(true);
    const Propagator prop(p, 1.25e-3);
    const EvolutionState st = prop.start(initial_state(p));
    const RVector f = featurize(prop, st, 10.0, FeatureMode::moments);
    CHECK(f.size() == kMomentFeatures);
    CHECK(feature_dim(FeatureMode::moments, SpaceDescriptor::make(9, 4)) == 13);
    CHECK(f(9) == 0.0);
    CHECK(f(10) == 0.0);
    CHECK(f(11) == 0.0);
    CHECK(f(12) == 0.0);
    const int d = p.space().total_dim();
    CHECK(featurize(prop, st, 10.0, FeatureMode::full_rho).size() == d * (d + 1));
    CHECK(feature_mode_from_string("full_rho") == FeatureMode::full_rho);
    CHECK_THROWS(feature_mode_from_string("pixels"));

    // moment features carry xi2: rebuild the moments from a squeezed state and compare
    EvolutionState s2 = prop.start(initial_state(p));
    for (int k = 0; k < 4000; ++k) prop.step(s2, 1.0);
    const RVector g = featurize(prop, s2, 10.0, FeatureMode::moments);
    const double j = 1.0;
    SpinMoments m;
    m.jx = g(0) * j;
    m.jy = g(1) * j;
    m.jz = g(2) * j;
    m.xx = g(3) * j * j;
    m.yy = g(4) * j * j;
    m.zz = g(5) * j * j;
    m.xy = g(6) * j * j;
    m.xz = g(7) * j * j;
    m.yz = g(8) * j * j;
    const double from_features = squeezing_parameter(m, 2).xi2;
    const double from_state = squeezing_parameter(prop.lab_density(s2)).xi2;
    CHECK(from_features == doctest::Approx(from_state).epsilon(1e-10));
    CHECK(g(12) == doctest::Approx(0.5));

    CHECK(reward(1.0) == 0.0);
    CHECK(reward(0.1) == doctest::Approx(10.0));
    CHECK(reward(2.0) == doctest::Approx(-3.0103).epsilon(1e-5));
}

TEST_CASE("replay buffer: ring storage and uniform sampling") {
    ReplayBuffer small(3);
    for (int i = 0; i < 5; ++i) small.add(Transition{RVector::Constant(2, i), 0.0, static_cast<double>(i), RVector::Zero(2), false});
    CHECK(small.size() == 3);
    std::multiset<double> rs;
    for (std::size_t i = 0; i < 3; ++i) rs.insert(small.at(i).r);
    CHECK(rs == std::multiset<double>{2, 3, 4});
    CHECK_THROWS(small.add(Transition{RVector::Zero(3), 0, 0, RVector::Zero(3), false}));
    CHECK_THROWS(ReplayBuffer(0));

    const std::size_t n = 100, batch = 8;
    ReplayBuffer buf(n);
    for (std::size_t i = 0; i < n; ++i) buf.add(Transition{RVector::Zero(1), 0, 0, RVector::Zero(1), false});
    std::mt19937_64 rng(123);
    std::vector<double> counts(n, 0.0);
    const int draws = 100000 / static_cast<int>(batch);
    for (int k = 0; k < draws; ++k) {
        const auto idx = buf.sample_indices(batch, rng);
        REQUIRE(idx.size() == batch);
        REQUIRE(std::set<std::size_t>(idx.begin(), idx.end()).size() == batch);
        for (auto i : idx) counts[i] += 1;
    }
    const double expect = static_cast<double>(draws) * batch / n;
    double chi2 = 0;
    for (double c : counts) chi2 += (c - expect) * (c - expect) / expect;
    // Wilson-Hilferty approximation to the chi-squared upper tail, n - 1 degrees of freedom
    const double k = n - 1.0;
    const double z = (std::cbrt(chi2 / k) - (1 - 2 / (9 * k))) / std::sqrt(2 / (9 * k));
    const double p_value = 0.5 * std::erfc(z / std::sqrt(2.0));
    CAPTURE(chi2);
    CHECK(p_value > 0.01);
    CHECK_THROWS(buf.sample_indices(n + 1, rng));
}

TEST_CASE("agent config validation and the noise schedule") {
    AgentConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.sigma_at(0) == doctest::Approx(c.sigma0));
    CHECK(c.sigma_at(c.episodes - c.warmup_episodes - 1) == doctest::Approx(c.sigma_end));
    CHECK(c.sigma_at(100) < c.sigma_at(50));
    CHECK(c.to_zeta(-1) == c.zeta_lo);
    CHECK(c.to_zeta(1) == c.zeta_hi);
    CHECK(c.to_action(c.to_zeta(0.3)) == doctest::Approx(0.3));
    for (auto mutate : std::vector<void (*)(AgentConfig&)>{
             [](AgentConfig& a) { a.mu = 0; }, [](AgentConfig& a) { a.mu = 1.1; }, [](AgentConfig& a) { a.tau = 0; },
             [](AgentConfig& a) { a.tau = 1.5; }, [](AgentConfig& a) { a.zeta_hi = a.zeta_lo; },
             [](AgentConfig& a) { a.batch = 0; }, [](AgentConfig& a) { a.steps = 0; },
             [](AgentConfig& a) { a.dt_ctrl = 0; }, [](AgentConfig& a) { a.capacity = 2; }}) {
        AgentConfig bad;
        mutate(bad);
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    }
    AgentConfig edge;
    edge.mu = 1.0;
    edge.tau = 1.0;
    CHECK_NOTHROW(edge.validate());
}

TEST_CASE("acting: midpoint, determinism and range") {
    AgentConfig c;
    c.zeta_lo = -1;
    c.zeta_hi = 3;
    std::mt19937_64 rng(5);
    MLP actor({13, 8, 1}, OutputActivation::tanh, rng, 0.5);
    MLP zero = actor;
    for (auto& w : zero.weights) w.setZero();
    for (auto& b : zero.biases) b.setZero();
    const RVector f = RVector::Random(13);
    CHECK(act(zero, f, 0.0, c, rng) == 1.0);
    CHECK(act(actor, f, 0.0, c, rng) == act(actor, f, 0.0, c, rng));
    for (int k = 0; k < 10000; ++k) {
        const double z = act(actor, RVector::Random(13) * 5, 2.0, c, rng);
        REQUIRE(z >= c.zeta_lo);
        REQUIRE(z <= c.zeta_hi);
    }
}

TEST_CASE("train_step: target updates and critic learning on a known Q") {
    AgentConfig c;
    c.batch = 32;
    c.hidden = {32, 32};
    c.seed = 8;
    c.tau = 1.0;
    Agent agent(4, c);
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-1, 1);
    ReplayBuffer buf(1000);
    for (int i = 0; i < 500; ++i) {
        RVector s(4);
        for (int k = 0; k < 4; ++k) s(k) = u(rng);
        const double a = u(rng);
        // terminal transitions: Q(s, a) = r exactly
        buf.add(Transition{s, a, 0.5 * s(0) - 0.3 * s(2) + 0.8 * a, s, true});
    }
    train_step(buf, agent, c);
    CHECK((agent.actor_target.flatten() - agent.actor.flatten()).norm() == 0.0);
    CHECK((agent.critic_target.flatten() - agent.critic.flatten()).norm() == 0.0);

    c.tau = 0.1;
    std::vector<double> losses;
    for (int k = 0; k < 100; ++k) losses.push_back(train_step(buf, agent, c).critic);
    double first = 0, last = 0;
    for (int k = 0; k < 10; ++k) {
        first += losses[k];
        last += losses[90 + k];
    }
    CHECK(last < 0.5 * first);
}

TEST_CASE("training: empty run, seed determinism and replay consistency") {
    const ModelParams p = tiny_model(false);
    AgentConfig none = tiny_config();
    none.episodes = 0;
    const TrainingLog empty = train(p, none);
    CHECK(empty.episodes.empty());
    CHECK_FALSE(empty.has_control());

    const AgentConfig c = tiny_config();
    const Propagator prop(p, training_dt(p, c));
    Agent a1, a2;
    const TrainingLog l1 = train(prop, c, initial_start(prop), &a1);
    const TrainingLog l2 = train(prop, c, initial_start(prop), &a2);
    REQUIRE(l1.episodes.size() == static_cast<std::size_t>(c.episodes));
    CHECK(l1.rewards() == l2.rewards());
    CHECK((a1.actor.flatten() - a2.actor.flatten()).norm() == 0.0);
    CHECK((a1.critic.flatten() - a2.critic.flatten()).norm() == 0.0);
    REQUIRE(l1.has_control());
    CHECK(l1.best_control.values.size() == static_cast<std::size_t>(c.steps));
    CHECK(l1.best_control.values == l2.best_control.values);
    for (double z : l1.best_control.values) {
        CHECK(z >= c.zeta_lo);
        CHECK(z <= c.zeta_hi);
    }
    AgentConfig other = c;
    other.seed = 43;
    CHECK(train(prop, other, initial_start(prop)).rewards() != l1.rewards());

    const Evaluation ev = evaluate(l1.best_control, p, false, c.steps * c.dt_ctrl, l1.dt, c.record_interval);
    CHECK(std::abs(ev.storage.S - l1.best_S) < 1e-9);
    double min_xi2 = 1;
    for (const auto& e : l1.episodes) CHECK(e.S <= l1.best_S);
    for (double x : ev.trajectory.xi2()) min_xi2 = std::min(min_xi2, x);
    CHECK(min_xi2 == doctest::Approx(l1.episodes[static_cast<std::size_t>(l1.best_episode)].min_xi2).epsilon(1e-12));

    // noisy training reproduces too
    const ModelParams q = tiny_model(true);
    AgentConfig cn = tiny_config();
    cn.episodes = 5;
    const TrainingLog n1 = train(q, cn), n2 = train(q, cn);
    CHECK(n1.rewards() == n2.rewards());
    const Evaluation en = evaluate(n1.best_control, q, true, cn.steps * cn.dt_ctrl, n1.dt, cn.record_interval);
    CHECK(std::abs(en.storage.S - n1.best_S) < 1e-9);
}

TEST_CASE("per-step rewards integrate to the full storage") {
    const ModelParams p = tiny_model(false);
    AgentConfig c = tiny_config();
    c.episodes = 1;
    c.warmup_episodes = 1;
    c.steps = 40;
    c.dt_ctrl = 0.5;
    const TrainingLog log = train(p, c);
    REQUIRE(log.has_control());
    const EpisodeLog& e = log.episodes.front();
    const Evaluation ev = evaluate(log.best_control, p, false, c.steps * c.dt_ctrl, log.dt, c.record_interval);
    // right Riemann sum on the control grid vs the trapezoid rule on the record grid:
    // the difference is bounded by dt_ctrl times the total variation of the reward.
    const auto x = ev.trajectory.xi2();
    double tv = 0;
    for (std::size_t i = 1; i < x.size(); ++i) tv += std::abs(reward(x[i]) - reward(x[i - 1]));
    CHECK(std::abs(e.total_reward * c.dt_ctrl - e.S_full) <= c.dt_ctrl * tv + 1e-9);
    CHECK(std::abs(ev.storage.S_full - e.S_full) < 1e-9);
}

TEST_CASE("evaluation of the zero control is the uncontrolled trajectory") {
    const ModelParams p = tiny_model(false);
    const ControlSignal zero = ControlSignal::zero(5.0, 0.5);
    const Evaluation ev = evaluate(zero, p, false, 5.0);
    IntegratorConfig cfg;
    cfg.t_final = 5.0;
    cfg.dt = resolve_dt(cfg, p, zero, true);
    cfg.record_every = static_cast<int>(std::lround(0.1 / cfg.dt));
    const Trajectory tr = evolve_unitary(initial_state_vector(p), zero, p, cfg);
    REQUIRE(ev.trajectory.times.size() == tr.times.size());
    for (std::size_t i = 0; i < tr.times.size(); ++i) CHECK(ev.trajectory.records[i].xi2 == tr.records[i].xi2);
}

TEST_CASE("checkpoint round trip") {
    const ModelParams p = tiny_model(false);
    AgentConfig c = tiny_config();
    c.episodes = 6;
    Agent agent;
    const Propagator prop(p, training_dt(p, c));
    train(prop, c, initial_start(prop), &agent);
    const std::string text = checkpoint_json(agent, c);
    AgentConfig back_cfg;
    Agent back = agent_from_checkpoint(text, &back_cfg);
    CHECK(checkpoint_json(back, back_cfg) == text);
    CHECK((back.actor.flatten() - agent.actor.flatten()).norm() == 0.0);
    CHECK((back.critic_target.flatten() - agent.critic_target.flatten()).norm() == 0.0);
    CHECK((back.actor_opt.m - agent.actor_opt.m).norm() == 0.0);
    CHECK(back.critic_opt.t == agent.critic_opt.t);
    CHECK(back.rng() == agent.rng());
    CHECK(back_cfg.seed == c.seed);
    CHECK(back_cfg.hidden == c.hidden);
    CHECK_THROWS(agent_from_checkpoint("{\"format\": \"other\"}"));
}
