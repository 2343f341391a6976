// dynamics.hpp — driven spin–cavity Hamiltonian and fixed-step RK4 evolution under the
// Lindblad master equation (cavity loss kappa, collective dephasing gamma) or the
// Schrödinger equation, with a piecewise-constant modulation amplitude zeta(t).
//
// The integrators work in the interaction frame of the diagonal part
//     H_d(t) = omega_c a†a + (omega_z + zeta(t) nu cos(nu t)) J_z,
// whose propagator is an exact phase. Only the coupling g J_x (a + a†) is left for RK4.
// Both dissipators commute with that frame change, so the master equation keeps its form.
// Reported moments and states are always transformed back to the lab frame.

#pragma once

#include "spinsq/hilbert.hpp"
#include "spinsq/squeezing.hpp"

#include <array>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace spinsq {

struct ModelParams {
    // Cavity 110, spin 100: the assignment under which the resonant detuning of the m0 sideband
    // equals omega_c - omega_z, so the dispersive elimination has a consistent rotating frame.
    double omega_c{110.0};
    double omega_z{100.0};
    double g{1.0};
    double nu{200.0};
    double kappa{0.01};
    double gamma{0.01};
    int n_spins{6};
    int fock_cutoff{10};

    /// Throws std::invalid_argument on g <= 0, nu <= 0, kappa < 0, gamma < 0 or a bad space.
    void validate() const;
    SpaceDescriptor space() const { return SpaceDescriptor::make(n_spins, fock_cutoff); }
    bool noiseless() const noexcept { return kappa == 0.0 && gamma == 0.0; }
    ModelParams without_noise() const {
        ModelParams p = *this;
        p.kappa = 0.0;
        p.gamma = 0.0;
        return p;
    }
    /// 2*pi/(16 nu): the coarsest step that resolves the drive.
    double drive_resolving_dt() const;
    /// Fastest phase rate seen by the interaction-frame coupling for |zeta| <= zeta_max.
    double max_frame_rate(double zeta_max) const;
};

/// Piecewise-constant amplitude: zeta(t) = values[floor((t - t0) / dt_ctrl)].
struct ControlSignal {
    double t0{0.0};
    double dt_ctrl{1.0};
    std::vector<double> values;

    static ControlSignal constant(double zeta, double t_final, double dt_ctrl);
    static ControlSignal zero(double t_final, double dt_ctrl) { return constant(0.0, t_final, dt_ctrl); }

    double t_end() const noexcept { return t0 + dt_ctrl * static_cast<double>(values.size()); }
    /// Throws std::out_of_range outside [t0, t_end).
    double at(double t) const;
    void validate() const;
};

class NumericalFailure : public std::runtime_error {
public:
    NumericalFailure(const std::string& what, long step, double time, double trace_error, double hermiticity,
                     double min_eigenvalue);
    long step;
    double time;
    double trace_error;
    double hermiticity;
    double min_eigenvalue;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<SqueezingRecord> records;
    std::vector<SpinMoments> moments;
    DensityMatrix final_state;
    std::vector<DensityMatrix> states;  ///< only filled when requested
    double max_trace_drift{0.0};
    double max_hermiticity{0.0};
    double min_eigenvalue{0.0};         ///< lowest eigenvalue observed at positivity checks (0 if screened)
    double max_norm_drift{0.0};         ///< pure-state runs: largest per-step norm deviation before renormalization

    std::vector<double> xi2() const;
    std::vector<double> xi2_db() const;
    double min_xi2() const;
    /// Time of the global minimum of xi2 (first occurrence).
    double t_at_min() const;
};

StorageResult storage_integral(const Trajectory& traj, StorageConvention convention = StorageConvention::lifetime);

/// H0 = omega_c a†a + omega_z J_z + g J_x (a† + a) on the composite space.
Operator hamiltonian_h0(const ModelParams& params, const CompositeOps& ops);

/// H_c = zeta nu cos(nu t) J_z (jz must be the composite-space J_z).
Operator control_hamiltonian(double zeta, double t, const ModelParams& params, const Operator& jz_embedded);

/// Dense lab-frame master-equation right-hand side
///   -i[H, rho] + kappa(2 a rho a† - a†a rho - rho a†a) + gamma(2 Jz rho Jz - Jz² rho - rho Jz²).
Matrix lindblad_rhs(const Matrix& rho, const Operator& h_total, const ModelParams& params, const CompositeOps& ops);

/// |theta, phi> ⊗ |0>, defaulting to the pi/2, pi/2 coherent spin state.
Vector initial_state_vector(const ModelParams& params, double theta = std::numbers::pi / 2,
                            double phi = std::numbers::pi / 2);
DensityMatrix initial_state(const ModelParams& params, double theta = std::numbers::pi / 2,
                            double phi = std::numbers::pi / 2);

struct IntegratorConfig {
    double t_final{50.0};
    double dt{0.0};          ///< <= 0 selects auto_dt() for the control's largest |zeta|
    int record_every{0};     ///< integrator steps between records; <= 0 selects every 0.1/g
    bool keep_states{false};
    int check_every{1};      ///< density-invariant checks every this many records
    DensityTolerances tolerances{1e-6, 1e-8, -1e-6};
};

/// Frame-resolved evolution state. The payload is in the interaction frame of H_d; the
/// accumulated drive phase integral_0^t zeta nu cos(nu s) ds is carried so runs can be resumed
/// bit-identically from a snapshot.
struct EvolutionState {
    bool pure{false};
    Vector psi;
    Matrix rho;
    long step{0};
    double dt{0.0};
    double drive_phase{0.0};

    double time() const noexcept { return static_cast<double>(step) * dt; }
};

/// Precomputed coupling and dissipator tables for one ModelParams and step size.
/// In the composite basis the coupling has exactly four shifted diagonals (J±a, J±a†), so
/// products with it are done as strided vector updates rather than general sparse products.
/// Holds scratch buffers, so an instance must not be shared between threads; construct one
/// per concurrent evolution.
class Propagator {
public:
    Propagator(const ModelParams& params, double dt);

    const ModelParams& params() const noexcept { return params_; }
    const SpaceDescriptor& space() const noexcept { return space_; }
    double dt() const noexcept { return dt_; }

    EvolutionState start(const DensityMatrix& rho0) const;
    EvolutionState start(const Vector& psi0) const;

    /// One RK4 step of length dt with amplitude zeta held constant.
    void step(EvolutionState& st, double zeta) const;

    /// Moments of the current state, in the lab frame or (lab = false) in the frame co-rotating
    /// with the bare precession (omega_z t + drive about z, omega_c t for the cavity). The two
    /// differ by a rotation about z, so xi2 is the same in both.
    SpinMoments moments(const EvolutionState& st, bool lab = true) const;
    DensityMatrix lab_density(const EvolutionState& st) const;
    Vector lab_vector(const EvolutionState& st) const;

    /// Interaction-frame right-hand side at time t with drive phase theta(t) = omega_z t + drive.
    Matrix rhs(const Matrix& rho_int, double t, double drive) const;
    Vector rhs(const Vector& psi_int, double t, double drive) const;

    /// Lab-frame phase of basis state i: omega_c n_i t + m_i theta.
    double frame_phase(int i, double t, double drive) const;

private:
    void update_coupling(double t, double drive) const;
    double drive_at(const EvolutionState& st, double zeta, double t) const;
    void rhs_into(const Matrix& rho, double t, double drive, Matrix& out) const;
    void rhs_into(const Vector& psi, double t, double drive, Vector& out) const;

    ModelParams params_;
    SpaceDescriptor space_;
    double dt_;
    std::vector<double> m_;   // J_z eigenvalue per composite index
    std::vector<int> n_;      // photon number per composite index
    // Diagonal k holds H(r, r + offset_[k]); kinds 0: J+a, 1: J+a†, 2: J-a†, 3: J-a.
    std::array<int, 4> offset_{};
    std::array<Eigen::ArrayXd, 4> coef_;
    Matrix decay_;            // -gamma (m_i - m_j)^2 - kappa (n_i + n_j)
    Matrix jump_;             // 2 kappa sqrt((n_i+1)(n_j+1)) coupling to (i+1, j+1)
    mutable std::array<Eigen::ArrayXcd, 4> diag_;  // coupling diagonals with the current phases
    mutable Matrix mk_[5];    // RK4 stages and stage input
    mutable Vector vk_[5];
    mutable Eigen::ArrayXcd col_;
};

/// Fixed-step RK4 on the Lindblad equation. The control must cover [0, t_final).
/// Aborts with NumericalFailure if a recorded state violates the density invariants.
Trajectory evolve(const DensityMatrix& rho0, const ControlSignal& control, const ModelParams& params,
                  const IntegratorConfig& config);

/// RK4 on the Schrödinger equation (requires kappa = gamma = 0), renormalizing after every step.
Trajectory evolve_unitary(const Vector& psi0, const ControlSignal& control, const ModelParams& params,
                          const IntegratorConfig& config);

/// Fock-truncation guard: the same run at fock_cutoff and fock_cutoff + extra.
struct TruncationCheck {
    int cutoff{0};
    int reference_cutoff{0};
    double max_dxi2{0};
    double tolerance{1e-4};
    bool ok{true};
};

/// Unitary when params are noiseless, Lindblad otherwise.
TruncationCheck truncation_check(const ControlSignal& control, const ModelParams& params,
                                 const IntegratorConfig& config, int extra = 5, double tolerance = 1e-4);

/// Continue an existing state to config.t_final, recording on the global record grid.
/// Records include the starting time when it lies on the record grid.
Trajectory evolve_from(const Propagator& prop, EvolutionState st, const ControlSignal& control,
                       const IntegratorConfig& config, EvolutionState* final_state = nullptr);

/// Largest step on the ladder 0.00125 / 2^k that (a) resolves the drive, (b) keeps
/// max_frame_rate(zeta_max) * dt within the phase budget and (c) divides dt_ctrl.
/// Pure-state runs use the tighter budget so the per-step norm drift stays below 1e-10;
/// density-matrix runs have no norm guard and use the looser one (xi2 error ~1e-6).
inline constexpr double kAutoStepBase = 0.00125;
inline constexpr double kAutoStepPhasePure = 0.3;
inline constexpr double kAutoStepPhaseMixed = 0.8;
double auto_dt(const ModelParams& params, double zeta_max, double dt_ctrl, bool pure);

/// Resolved step and record interval for a config.
double resolve_dt(const IntegratorConfig& config, const ModelParams& params, const ControlSignal& control,
                  bool pure);
int resolve_record_every(const IntegratorConfig& config, double dt);

/// |<a|b>|^2 for normalized pure states.
double fidelity(const Vector& a, const Vector& b);
/// <psi|rho|psi>.
double fidelity(const Vector& psi, const DensityMatrix& rho);
/// Supported when at least one argument is pure (purity within 1e-10 of 1); throws
/// std::domain_error when both are mixed.
double fidelity(const DensityMatrix& a, const DensityMatrix& b);

}  // namespace spinsq
