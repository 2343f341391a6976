// sweep.hpp — constant-amplitude control: scan zeta and locate the deepest squeezing.

#pragma once

#include "spinsq/dynamics.hpp"
#include "spinsq/parallel.hpp"

#include <vector>

namespace spinsq {

struct SweepOptions {
    double dt{0.0};               ///< <= 0: automatic step per zeta
    double record_interval{0.1};  ///< also the control bin width
    int threads{default_threads()};
};

struct SweepPoint {
    double zeta{0};
    double min_xi2{1};
    double min_xi2_db{0};
    double t_min{0};
};

struct SweepResult {
    std::vector<double> zeta_grid;
    std::vector<double> min_xi2;
    std::vector<double> t_min;
    bool noisy{false};
    double t_final{0};
    SweepPoint best;

    std::size_t size() const noexcept { return zeta_grid.size(); }
    SweepPoint point(std::size_t i) const;
};

/// lo, lo + step, ..., hi (inclusive within step/1000); values are lo + k*step rounded to 1e-12.
std::vector<double> zeta_grid(double lo, double hi, double step);

/// Constant control zeta over [0, t_final] with the given dynamics (unitary when !noisy).
Trajectory constant_trajectory(double zeta, const ModelParams& params, double t_final, bool noisy,
                               const SweepOptions& options = {});

/// One evolution per grid value; per-zeta global minimum of xi2 over (0, t_final].
/// Integrator failures are rethrown as NumericalFailure naming the offending zeta.
SweepResult sweep_constant(const std::vector<double>& grid, const ModelParams& params, double t_final, bool noisy,
                           const SweepOptions& options = {});

/// Grid argmin of min_xi2; ties toward smaller |zeta|. Throws std::invalid_argument when empty.
SweepPoint find_zeta_min(const SweepResult& sweep);

}  // namespace spinsq
