#include "spinsq/hilbert.hpp"

#include <cmath>
#include <stdexcept>

namespace spinsq {

SpaceDescriptor SpaceDescriptor::make(int n_spins, int fock_cutoff) {
    if (n_spins < 1) {
        throw std::invalid_argument("SpaceDescriptor: n_spins must be >= 1, got " + std::to_string(n_spins));
    }
    if (fock_cutoff < 1) {
        throw std::invalid_argument("SpaceDescriptor: fock_cutoff must be >= 1, got " +
                                    std::to_string(fock_cutoff));
    }
    return SpaceDescriptor{n_spins, fock_cutoff};
}

std::string to_string(Subsystem s) {
    switch (s) {
        case Subsystem::spin: return "spin";
        case Subsystem::boson: return "boson";
        case Subsystem::composite: return "composite";
    }
    return "unknown";
}

Operator::Operator(SpaceDescriptor sp, Subsystem sub, Matrix m) : space(sp), subsystem(sub), matrix(std::move(m)) {
    if (matrix.rows() != matrix.cols() || matrix.rows() != expected_dim()) {
        throw std::invalid_argument("Operator: matrix is " + std::to_string(matrix.rows()) + "x" +
                                    std::to_string(matrix.cols()) + ", expected square of size " +
                                    std::to_string(expected_dim()) + " for subsystem " + to_string(subsystem));
    }
}

int Operator::expected_dim() const noexcept {
    switch (subsystem) {
        case Subsystem::spin: return space.spin_dim();
        case Subsystem::boson: return space.boson_dim();
        case Subsystem::composite: return space.total_dim();
    }
    return 0;
}

SpinOps build_spin_ops(int n_spins) {
    if (n_spins < 1) {
        throw std::invalid_argument("build_spin_ops: n_spins must be >= 1");
    }
    // Spin-only operators carry a space with the minimal boson cutoff; only spin_dim matters.
    const SpaceDescriptor space{n_spins, 1};
    const int dim = space.spin_dim();
    const double j = space.j();

    Matrix jz = Matrix::Zero(dim, dim);
    Matrix jp = Matrix::Zero(dim, dim);
    for (int s = 0; s < dim; ++s) {
        const double m = j - s;
        jz(s, s) = m;
        // J+ |J,m> = sqrt(J(J+1) - m(m+1)) |J,m+1>; m+1 sits at index s-1
        if (s > 0) {
            jp(s - 1, s) = std::sqrt(j * (j + 1.0) - m * (m + 1.0));
        }
    }
    const Matrix jm = jp.adjoint();
    const Matrix jx = 0.5 * (jp + jm);
    const Matrix jy = cplx(0.0, -0.5) * (jp - jm);

    return SpinOps{
        Operator(space, Subsystem::spin, jx),
        Operator(space, Subsystem::spin, jy),
        Operator(space, Subsystem::spin, jz),
        Operator(space, Subsystem::spin, jp),
        Operator(space, Subsystem::spin, jm),
    };
}

BosonOps build_boson_ops(int fock_cutoff) {
    if (fock_cutoff < 1) {
        throw std::invalid_argument("build_boson_ops: fock_cutoff must be >= 1");
    }
    const SpaceDescriptor space{1, fock_cutoff};
    const int dim = space.boson_dim();
    Matrix a = Matrix::Zero(dim, dim);
    for (int n = 1; n < dim; ++n) {
        a(n - 1, n) = std::sqrt(static_cast<double>(n));
    }
    const Matrix ad = a.adjoint();
    const Matrix num = ad * a;
    return BosonOps{
        Operator(space, Subsystem::boson, a),
        Operator(space, Subsystem::boson, ad),
        Operator(space, Subsystem::boson, num),
    };
}

Operator embed(const Operator& op, const SpaceDescriptor& space, Subsystem subsystem) {
    const int ds = space.spin_dim();
    const int db = space.boson_dim();
    if (subsystem == Subsystem::composite) {
        if (op.matrix.rows() != space.total_dim()) {
            throw std::invalid_argument("embed: composite operator dimension mismatch");
        }
        return Operator(space, Subsystem::composite, op.matrix);
    }
    const int sub_dim = subsystem == Subsystem::spin ? ds : db;
    if (op.matrix.rows() != sub_dim || op.matrix.cols() != sub_dim) {
        throw std::invalid_argument("embed: operator of size " + std::to_string(op.matrix.rows()) +
                                    " does not match " + to_string(subsystem) + " dimension " +
                                    std::to_string(sub_dim));
    }
    const int d = space.total_dim();
    Matrix out = Matrix::Zero(d, d);
    if (subsystem == Subsystem::spin) {
        for (int s = 0; s < ds; ++s) {
            for (int sp = 0; sp < ds; ++sp) {
                const cplx v = op.matrix(s, sp);
                if (v == cplx(0.0)) continue;
                for (int n = 0; n < db; ++n) {
                    out(s * db + n, sp * db + n) = v;
                }
            }
        }
    } else {
        for (int s = 0; s < ds; ++s) {
            out.block(s * db, s * db, db, db) = op.matrix;
        }
    }
    return Operator(space, Subsystem::composite, std::move(out));
}

CompositeOps build_composite_ops(const SpaceDescriptor& space) {
    const SpinOps spin = build_spin_ops(space.n_spins);
    const BosonOps boson = build_boson_ops(space.fock_cutoff);
    return CompositeOps{
        space,
        embed(spin.jx, space, Subsystem::spin),
        embed(spin.jy, space, Subsystem::spin),
        embed(spin.jz, space, Subsystem::spin),
        embed(spin.jplus, space, Subsystem::spin),
        embed(spin.jminus, space, Subsystem::spin),
        embed(boson.a, space, Subsystem::boson),
        embed(boson.a_dag, space, Subsystem::boson),
        embed(boson.number, space, Subsystem::boson),
    };
}

namespace {

double binomial(int n, int k) {
    return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0));
}

}  // namespace

Vector coherent_spin_state(double theta, double phi, int n_spins) {
    if (n_spins < 1) {
        throw std::invalid_argument("coherent_spin_state: n_spins must be >= 1");
    }
    const int two_j = n_spins;
    const int dim = two_j + 1;
    // (1+|eta|^2)^{-J} eta^k = |c|^{2J-k} (-s sgn c)^k e^{-ik phi}, with c = cos(theta/2),
    // s = sin(theta/2). This form stays finite at theta = pi where eta diverges.
    const double c = std::cos(0.5 * theta);
    const double s = std::sin(0.5 * theta);
    const double sgn = c < 0.0 ? -1.0 : 1.0;
    const double abs_c = std::abs(c);
    const double ratio = -s * sgn;

    Vector psi = Vector::Zero(dim);
    for (int k = 0; k <= two_j; ++k) {
        // k = J + m, index = J - m = 2J - k
        const double mag = std::sqrt(binomial(two_j, k)) * std::pow(abs_c, two_j - k) * std::pow(ratio, k);
        psi(two_j - k) = mag * std::polar(1.0, -k * phi);
    }
    return psi;
}

Vector dicke_state(int n_spins, double m) {
    const double j = 0.5 * n_spins;
    const double idx = j - m;
    const int s = static_cast<int>(std::lround(idx));
    if (std::abs(idx - s) > 1e-12 || s < 0 || s > n_spins) {
        throw std::invalid_argument("dicke_state: m out of range");
    }
    Vector v = Vector::Zero(n_spins + 1);
    v(s) = 1.0;
    return v;
}

DensityMatrix::DensityMatrix(SpaceDescriptor sp, Matrix m) : space(sp), matrix(std::move(m)) {
    if (matrix.rows() != space.total_dim() || matrix.cols() != space.total_dim()) {
        throw std::invalid_argument("DensityMatrix: dimension mismatch");
    }
}

DensityMatrix DensityMatrix::from_pure(const SpaceDescriptor& space, const Vector& psi) {
    return DensityMatrix(space, psi * psi.adjoint());
}

double DensityMatrix::purity() const {
    // tr(rho^2) = sum_ij rho_ij rho_ji
    return (matrix.cwiseProduct(matrix.transpose())).sum().real();
}

double DensityMatrix::hermiticity_error() const {
    return (matrix - matrix.adjoint()).cwiseAbs().maxCoeff();
}

double DensityMatrix::min_eigenvalue() const {
    const Matrix h = 0.5 * (matrix + matrix.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

DensityCheck check_density(const Matrix& rho, const DensityTolerances& tol) {
    DensityCheck out;
    out.trace_error = std::abs(rho.trace() - cplx(1.0));
    out.hermiticity = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
    const Matrix h = 0.5 * (rho + rho.adjoint());
    Matrix shifted = h;
    shifted.diagonal().array() += -tol.min_eigenvalue;
    Eigen::LLT<Matrix> llt(shifted);
    if (llt.info() == Eigen::Success) {
        out.min_eigenvalue = 0.0;  // screened: >= tol.min_eigenvalue
    } else {
        Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
        out.min_eigenvalue = es.eigenvalues().minCoeff();
    }
    out.ok = out.trace_error <= tol.trace && out.hermiticity <= tol.hermiticity &&
             out.min_eigenvalue >= tol.min_eigenvalue;
    return out;
}

Vector product_with_vacuum(const SpaceDescriptor& space, const Vector& spin_state) {
    if (spin_state.size() != space.spin_dim()) {
        throw std::invalid_argument("product_with_vacuum: spin state dimension mismatch");
    }
    Vector out = Vector::Zero(space.total_dim());
    for (int s = 0; s < space.spin_dim(); ++s) {
        out(s * space.boson_dim()) = spin_state(s);
    }
    return out;
}

}  // namespace spinsq
