// hilbert.hpp — composite spin ⊗ boson space, collective spin and truncated
// boson operators, coherent spin states.
//
// Basis conventions (fixed everywhere in the library):
//   spin:      Dicke basis |J,m>, index s = 0..N  <->  m = J - s (descending m)
//   boson:     Fock basis |n>, n = 0..n_max
//   composite: index = s * (n_max + 1) + n      (spin ⊗ boson, Kronecker order)

#pragma once

#include <Eigen/Dense>

#include <complex>
#include <string>

namespace spinsq {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

struct SpaceDescriptor {
    int n_spins{1};
    int fock_cutoff{1};

    /// Validates n_spins >= 1 and fock_cutoff >= 1.
    static SpaceDescriptor make(int n_spins, int fock_cutoff);

    double j() const noexcept { return 0.5 * n_spins; }
    int spin_dim() const noexcept { return n_spins + 1; }
    int boson_dim() const noexcept { return fock_cutoff + 1; }
    int total_dim() const noexcept { return spin_dim() * boson_dim(); }

    // m quantum number and photon number of a composite index
    double m_of(int index) const noexcept { return j() - static_cast<double>(index / boson_dim()); }
    int n_of(int index) const noexcept { return index % boson_dim(); }

    bool operator==(const SpaceDescriptor&) const = default;
};

enum class Subsystem { spin, boson, composite };

std::string to_string(Subsystem s);

struct Operator {
    SpaceDescriptor space;
    Subsystem subsystem{Subsystem::composite};
    Matrix matrix;

    Operator() = default;
    Operator(SpaceDescriptor sp, Subsystem sub, Matrix m);

    /// Expected dimension of the matrix for the tagged subsystem.
    int expected_dim() const noexcept;
};

struct SpinOps {
    Operator jx, jy, jz, jplus, jminus;
};

struct BosonOps {
    Operator a, a_dag, number;
};

/// Collective spin operators in the Dicke basis. Throws std::invalid_argument for n_spins < 1.
SpinOps build_spin_ops(int n_spins);

/// Truncated boson operators on |0>..|n_max>. Throws for fock_cutoff < 1.
BosonOps build_boson_ops(int fock_cutoff);

/// op ⊗ I (spin) or I ⊗ op (boson). Throws std::invalid_argument on dimension mismatch.
Operator embed(const Operator& op, const SpaceDescriptor& space, Subsystem subsystem);

/// Spin and boson operators embedded on the composite space.
struct CompositeOps {
    SpaceDescriptor space;
    Operator jx, jy, jz, jplus, jminus;
    Operator a, a_dag, number;
};

CompositeOps build_composite_ops(const SpaceDescriptor& space);

/// Coherent spin state |theta, phi> on the spin subsystem (dimension N+1).
///
/// Amplitudes follow (1+|eta|^2)^{-J} sqrt(C(2J, J+m)) eta^{J+m}, eta = -tan(theta/2) e^{-i phi}.
/// At theta = pi the parameter eta diverges; the limit is the pole state |J, J> (with the
/// global phase of the leading term dropped).
Vector coherent_spin_state(double theta, double phi, int n_spins);

/// Single Dicke basis vector |J, m> on the spin subsystem.
Vector dicke_state(int n_spins, double m);

struct DensityMatrix {
    SpaceDescriptor space;
    Matrix matrix;

    DensityMatrix() = default;
    DensityMatrix(SpaceDescriptor sp, Matrix m);

    static DensityMatrix from_pure(const SpaceDescriptor& space, const Vector& psi);

    cplx trace() const { return matrix.trace(); }
    double purity() const;
    /// max_ij |rho_ij - conj(rho_ji)|
    double hermiticity_error() const;
    double min_eigenvalue() const;
};

struct DensityCheck {
    bool ok{true};
    double trace_error{0.0};
    double hermiticity{0.0};
    double min_eigenvalue{0.0};
};

struct DensityTolerances {
    double trace{1e-9};
    double hermiticity{1e-10};
    double min_eigenvalue{-1e-8};
};

/// Checks trace, Hermiticity and positivity. Positivity is screened with a shifted Cholesky
/// factorization; the eigenvalue is only computed when the screen fails.
DensityCheck check_density(const Matrix& rho, const DensityTolerances& tol = {});

/// |psi_spin><psi_spin| ⊗ |0><0|
Vector product_with_vacuum(const SpaceDescriptor& space, const Vector& spin_state);

}  // namespace spinsq
