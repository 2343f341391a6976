#include "spinsq/ddpg.hpp"
#include "spinsq/sweep.hpp"

#include <doctest.h>

#include <algorithm>

using namespace spinsq;

namespace {

ModelParams small_model() {
    ModelParams p;
    p.n_spins = 4;
    p.fock_cutoff = 3;
    return p;
}

}  // namespace

TEST_CASE("zeta grid construction") {
    const auto g = zeta_grid(-1.0, 1.0, 0.25);
    REQUIRE(g.size() == 9);
    CHECK(g.front() == -1.0);
    CHECK(g.back() == 1.0);
    CHECK(g[4] == 0.0);
    CHECK(zeta_grid(-1.0, 1.0, 0.01).size() == 201);
    CHECK(zeta_grid(0.3, 0.3, 0.1) == std::vector<double>{0.3});
    CHECK(zeta_grid(0.0, 0.95, 0.1).back() == doctest::Approx(0.9));
    CHECK_THROWS_AS(zeta_grid(0, 1, 0), std::invalid_argument);
    CHECK_THROWS_AS(zeta_grid(1, 0, 0.1), std::invalid_argument);
}

TEST_CASE("grid argmin and tie breaking") {
    SweepResult r;
    r.zeta_grid = {-0.5, -0.2, 0.2, 0.4};
    r.min_xi2 = {0.5, 0.3, 0.3, 0.4};
    r.t_min = {1, 2, 3, 4};
    SweepPoint b = find_zeta_min(r);
    CHECK(b.zeta == -0.2);  // equal |zeta|: the first one wins
    CHECK(b.t_min == 2);
    r.zeta_grid = {-0.5, -0.3, 0.2, 0.4};
    b = find_zeta_min(r);
    CHECK(b.zeta == 0.2);
    CHECK(b.min_xi2_db == doctest::Approx(xi2_to_db(0.3)));
    CHECK_THROWS_AS(find_zeta_min(SweepResult{}), std::invalid_argument);
    CHECK_THROWS_AS(sweep_constant({}, small_model(), 1.0, false), std::invalid_argument);
}

TEST_CASE("sweep points agree with independent evaluations") {
    const ModelParams p = small_model();
    const double T = 30.0;
    const std::vector<double> grid{-0.3, 0.0, 0.3, 0.3};
    SweepOptions opt;
    opt.threads = 1;
    const SweepResult s = sweep_constant(grid, p, T, false, opt);
    REQUIRE(s.size() == 4);
    CHECK(s.min_xi2[2] == s.min_xi2[3]);  // duplicates are evaluated identically
    CHECK(s.t_min[2] == s.t_min[3]);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const Evaluation ev = evaluate(ControlSignal::constant(grid[i], T, opt.record_interval), p, false, T);
        double best = 1e300;
        for (std::size_t k = 0; k < ev.trajectory.times.size(); ++k) {
            if (ev.trajectory.times[k] > 0) best = std::min(best, ev.trajectory.records[k].xi2);
        }
        CHECK(s.min_xi2[i] == doctest::Approx(best).epsilon(1e-12));
        CHECK(s.min_xi2[i] < 1.0);
        CHECK(s.t_min[i] > 0.0);
        CHECK(s.t_min[i] <= T);
    }
    // threads do not change the answer
    SweepOptions par = opt;
    par.threads = 3;
    const SweepResult s3 = sweep_constant(grid, p, T, false, par);
    CHECK(s3.min_xi2 == s.min_xi2);

    const SweepResult one = sweep_constant({0.3}, p, T, false, opt);
    CHECK(one.best.zeta == 0.3);
    CHECK(one.best.min_xi2 == s.min_xi2[2]);

    // a refined grid that contains the coarse one can only improve the minimum
    const SweepResult coarse = sweep_constant(zeta_grid(-0.4, 0.4, 0.2), p, T, false, opt);
    const SweepResult fine = sweep_constant(zeta_grid(-0.4, 0.4, 0.1), p, T, false, opt);
    CHECK(fine.best.min_xi2 <= coarse.best.min_xi2);
    for (std::size_t i = 0; i < coarse.size(); ++i) CHECK(fine.min_xi2[2 * i] == doctest::Approx(coarse.min_xi2[i]).epsilon(1e-12));
}

TEST_CASE("noisy sweep is shallower than the unitary one") {
    ModelParams p = small_model();
    p.kappa = 0.05;
    p.gamma = 0.05;
    SweepOptions opt;
    opt.threads = 1;
    const SweepResult clean = sweep_constant({0.0}, p, 30.0, false, opt);
    const SweepResult noisy = sweep_constant({0.0}, p, 30.0, true, opt);
    CHECK(noisy.noisy);
    CHECK(noisy.min_xi2[0] > clean.min_xi2[0]);
}
