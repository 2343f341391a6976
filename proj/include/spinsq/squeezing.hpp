// squeezing.hpp — Kitagawa–Ueda squeezing parameter, optimal squeezing angle and the
// accumulated-squeezing (storage) functional.

#pragma once

#include "spinsq/hilbert.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace spinsq {

/// First and symmetrized second moments of the collective spin, plus cavity moments.
/// xy, xz, yz are <(J_a J_b + J_b J_a)/2>.
struct SpinMoments {
    double jx{0}, jy{0}, jz{0};
    double xx{0}, yy{0}, zz{0};
    double xy{0}, xz{0}, yz{0};
    double photon{0};
    double a_re{0}, a_im{0};

    std::array<double, 3> mean() const { return {jx, jy, jz}; }
    /// Symmetric second-moment matrix S_ab = <{J_a, J_b}>/2.
    std::array<std::array<double, 3>, 3> second() const {
        return {{{xx, xy, xz}, {xy, yy, yz}, {xz, yz, zz}}};
    }
};

/// Spin moments of a reduced spin density matrix (dimension N+1, Dicke basis).
SpinMoments spin_moments(const Matrix& rho_spin, int n_spins);

/// Reduced spin density matrix (partial trace over the boson).
Matrix reduce_to_spin(const DensityMatrix& rho);

/// All moments of a composite density matrix.
SpinMoments moments_of(const DensityMatrix& rho);

struct DegenerateDirection : std::domain_error {
    using std::domain_error::domain_error;
};

struct Direction {
    double theta{0};
    double phi{0};
};

/// Mean-spin polar and azimuthal angles; phi is quadrant-correct in [0, 2pi).
/// Throws DegenerateDirection when |<J>| < 1e-9.
Direction mean_spin_direction(const SpinMoments& m);

struct SqueezingRecord {
    double theta{0}, phi{0};
    double A{0}, B{0}, C{0};
    double xi2{1};
    double xi2_db{0};
    double phi_opt{0};
};

/// Squeezing parameter xi^2 = (2/N)(C - sqrt(A^2 + B^2)) and the optimal angle.
SqueezingRecord squeezing_parameter(const SpinMoments& m, int n_spins);
SqueezingRecord squeezing_parameter(const DensityMatrix& rho);

/// Optimal squeezing angle in [0, pi). Throws std::domain_error for (A, B) = (0, 0).
double optimal_angle(double A, double B);

/// Variance of J along n1 cos(angle) + n2 sin(angle) for the perpendicular frame of m.
double transverse_variance(const SpinMoments& m, double angle);

/// Floor applied before taking logarithms of xi^2.
inline constexpr double kXi2Floor = 1e-12;

/// 10 log10(xi2). Values <= 0 (numerical zeros) are clamped to kXi2Floor and counted.
double xi2_to_db(double xi2);

/// Number of clamped xi2_to_db calls since process start (or last reset).
std::uint64_t xi2_floor_hits();
void reset_xi2_floor_hits();

enum class StorageConvention { lifetime, full };

std::string to_string(StorageConvention c);
StorageConvention storage_convention_from_string(const std::string& s);

struct StorageResult {
    double S{0};            ///< value under the requested convention (dB * 1/g)
    double S_lifetime{0};
    double S_full{0};
    double t_cross{0};      ///< first xi2 = 1 crossing after the global minimum, else t_max
    bool crossed{false};
    double t_max_used{0};   ///< upper limit used for S
    StorageConvention convention{StorageConvention::lifetime};
};

/// S = -10 ∫ log10 xi2(t) dt by the trapezoidal rule over the recorded series.
/// LIFETIME stops at the (linearly interpolated) return of xi2 to 1 after its global minimum;
/// FULL integrates the whole record. Throws std::invalid_argument for empty or misaligned input.
StorageResult storage_integral(std::span<const double> times, std::span<const double> xi2,
                               StorageConvention convention = StorageConvention::lifetime);

}  // namespace spinsq
