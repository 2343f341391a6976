// effective.hpp — dispersive effective Hamiltonian of the modulated spin–cavity model,
// Bessel-function conditions for one-/two-axis twisting and a fidelity check of the
// effective model against the full dynamics.
//
// With zeta(t) = zeta constant, the drive phase zeta sin(nu t) is expanded with
// Jacobi–Anger; keeping the two slow sidebands (order 0 on J+a, order m0 on J+a†) gives
//   H1 = Delta a†a + g (Sigma† a + Sigma a†),   Sigma = [J_0(zeta) J- + J_m0(zeta) J+] / 2,
// and the second-order Schrieffer–Wolff generator R = (g/Delta)(Sigma a† - Sigma† a) yields
//   Heff = Delta a†a - ((g0² - gm0²)/Delta)(1 + 2a†a) J_z + ((g0 - gm0)²/Delta) J_z²
//          - (4 g0 gm0 / Delta) J_x²,       g0 = g J_0/2, gm0 = g J_m0/2.

#pragma once

#include "spinsq/dynamics.hpp"
#include "spinsq/hilbert.hpp"

#include <string>
#include <vector>

namespace spinsq {

/// Bessel function of the first kind J_n(x) for integer n. Validated for |n| <= 20, |x| <= 30;
/// throws std::out_of_range outside that window.
double bessel_j(int order, double x);

enum class M0Rule {
    argmin,    ///< argmin_m |m nu + omega_c + omega_z|, ties toward smaller |m|
    rounding,  ///< nearest integer to -2 omega_z / nu, the sideband that makes Delta_m0 = delta
};

int find_m0(const ModelParams& params, M0Rule rule = M0Rule::argmin);

/// Roots of J_0(zeta) = J_m0(zeta) in [lo, hi]: sign changes on a grid of `grid` followed by
/// bisection to `xtol`. Returned in increasing order.
std::vector<double> oat_condition_roots(int m0, double lo, double hi, double grid = 1e-3, double xtol = 1e-8);

/// Roots of J_0(zeta) = (3 ± 2 sqrt 2) J_m0(zeta), both branches, merged in increasing order.
std::vector<double> tat_condition_roots(int m0, double lo, double hi, double grid = 1e-3, double xtol = 1e-8);

struct EffectiveParams {
    int m0{0};
    double delta{0};         ///< omega_c - omega_z
    double Delta{0};         ///< m0 nu + omega_c + omega_z (used as the detuning)
    double g0{0};            ///< g J_0(zeta) / 2
    double gm0{0};           ///< g J_m0(zeta) / 2
    double chi{0};           ///< J_x² coefficient, -4 g0 gm0 / Delta (= -g² J_m0²/Delta when g0 = gm0)
    double lambda{0};        ///< 4 g0 gm0 / Delta
    double lambda_prime{0};  ///< (g0² - gm0²) / Delta
    bool weakly_dispersive{false};  ///< |Delta| <= 5 g: the second-order elimination is doubtful
};

/// Throws std::domain_error when Delta = 0.
EffectiveParams effective_params(double zeta, const ModelParams& params, M0Rule rule = M0Rule::argmin);

/// Heff on the composite space. Throws std::domain_error when Delta = 0.
Operator effective_hamiltonian(const EffectiveParams& ep, const CompositeOps& ops);
Operator effective_hamiltonian(double zeta, const ModelParams& params, const CompositeOps& ops);

/// H1 = Delta a†a + g (Sigma† a + Sigma a†) and the generator R = (g/Delta)(Sigma a† - Sigma† a).
Operator sideband_hamiltonian(const EffectiveParams& ep, const ModelParams& params, const CompositeOps& ops);
Matrix schrieffer_wolff_generator(const EffectiveParams& ep, const ModelParams& params, const CompositeOps& ops);

struct FidelitySeries {
    EffectiveParams effective;
    std::vector<double> times;
    /// |<e^{-i Heff t} e^R psi0 | e^R psi1(t)>|², both states in the Schrieffer–Wolff frame.
    std::vector<double> fidelity;
    /// |<e^{-i Heff t} psi0 | psi1(t)>|², ignoring the dressing by e^R.
    std::vector<double> fidelity_bare;
    double dt{0};

    double min_fidelity() const;
    double min_fidelity_bare() const;
    /// First recorded time with fidelity < threshold, or a negative value if none.
    double first_below(double threshold) const;
};

/// Evolves the default initial state under H0 + H_c (constant zeta, kappa = gamma = 0) and under
/// Heff. The full state is taken to the effective frame by V(t) and then V1(t)† = e^{-i Delta a†a t}
/// before the overlap. Records every `record_interval`.
FidelitySeries validate_effective(double zeta, const ModelParams& params, double t_final,
                                  double record_interval = 0.1, double dt = 0.0,
                                  M0Rule rule = M0Rule::argmin);

}  // namespace spinsq
