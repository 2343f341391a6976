#include "spinsq/sweep.hpp"

#include <cmath>
#include <stdexcept>

namespace spinsq {

SweepPoint SweepResult::point(std::size_t i) const {
    return SweepPoint{zeta_grid.at(i), min_xi2.at(i), xi2_to_db(min_xi2.at(i)), t_min.at(i)};
}

std::vector<double> zeta_grid(double lo, double hi, double step) {
    if (!(step > 0.0) || !(hi >= lo)) throw std::invalid_argument("zeta_grid: need step > 0 and hi >= lo");
    const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-3));
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n + 1));
    for (long k = 0; k <= n; ++k) {
        out.push_back(std::round((lo + static_cast<double>(k) * step) * 1e12) / 1e12);
    }
    return out;
}

Trajectory constant_trajectory(double zeta, const ModelParams& params, double t_final, bool noisy,
                               const SweepOptions& options) {
    const ControlSignal control = ControlSignal::constant(zeta, t_final, options.record_interval);
    IntegratorConfig cfg;
    cfg.t_final = t_final;
    cfg.dt = options.dt;
    if (noisy) {
        const double dt = resolve_dt(cfg, params, control, false);
        cfg.record_every = static_cast<int>(std::lround(options.record_interval / dt));
        return evolve(initial_state(params), control, params, cfg);
    }
    const ModelParams clean = params.without_noise();
    const double dt = resolve_dt(cfg, clean, control, true);
    cfg.record_every = static_cast<int>(std::lround(options.record_interval / dt));
    return evolve_unitary(initial_state_vector(clean), control, clean, cfg);
}

SweepResult sweep_constant(const std::vector<double>& grid, const ModelParams& params, double t_final, bool noisy,
                           const SweepOptions& options) {
    if (grid.empty()) throw std::invalid_argument("sweep_constant: empty zeta grid");
    params.validate();
    SweepResult out;
    out.zeta_grid = grid;
    out.noisy = noisy;
    out.t_final = t_final;
    out.min_xi2.assign(grid.size(), 1.0);
    out.t_min.assign(grid.size(), 0.0);

    parallel_for(grid.size(), options.threads, [&](std::size_t i) {
        Trajectory tr;
        try {
            tr = constant_trajectory(grid[i], params, t_final, noisy, options);
        } catch (const NumericalFailure& e) {
            throw NumericalFailure("sweep at zeta = " + std::to_string(grid[i]) + ": " + e.what(), e.step, e.time,
                                   e.trace_error, e.hermiticity, e.min_eigenvalue);
        }
        // minimum over (0, t_final]: skip the t = 0 record
        double best = 0.0, t_best = 0.0;
        bool first = true;
        for (std::size_t k = 0; k < tr.records.size(); ++k) {
            if (tr.times[k] <= 0.0) continue;
            if (first || tr.records[k].xi2 < best) {
                best = tr.records[k].xi2;
                t_best = tr.times[k];
                first = false;
            }
        }
        out.min_xi2[i] = first ? 1.0 : best;
        out.t_min[i] = t_best;
    });
    out.best = find_zeta_min(out);
    return out;
}

SweepPoint find_zeta_min(const SweepResult& sweep) {
    if (sweep.zeta_grid.empty()) throw std::invalid_argument("find_zeta_min: empty sweep");
    std::size_t best = 0;
    for (std::size_t i = 1; i < sweep.size(); ++i) {
        const double a = sweep.min_xi2[i], b = sweep.min_xi2[best];
        if (a < b || (a == b && std::abs(sweep.zeta_grid[i]) < std::abs(sweep.zeta_grid[best]))) best = i;
    }
    return sweep.point(best);
}

}  // namespace spinsq
