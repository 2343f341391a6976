#include "spinsq/effective.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spinsq {

double bessel_j(int order, double x) {
    if (std::abs(order) > 20 || !(std::abs(x) <= 30.0)) {
        throw std::out_of_range("bessel_j: (n, x) = (" + std::to_string(order) + ", " + std::to_string(x) +
                                ") outside the validated window |n| <= 20, |x| <= 30");
    }
    // J_{-n} = (-1)^n J_n and J_n(-x) = (-1)^n J_n(x)
    const int n = std::abs(order);
    double sign = 1.0;
    if (order < 0 && (n % 2 == 1)) sign = -sign;
    if (x < 0.0 && (n % 2 == 1)) sign = -sign;
    return sign * std::cyl_bessel_j(static_cast<double>(n), std::abs(x));
}

int find_m0(const ModelParams& params, M0Rule rule) {
    if (!(params.nu > 0.0)) throw std::invalid_argument("find_m0: nu must be > 0");
    if (rule == M0Rule::rounding) {
        return static_cast<int>(std::lround(-2.0 * params.omega_z / params.nu));
    }
    const double s = params.omega_c + params.omega_z;
    const int centre = static_cast<int>(std::lround(-s / params.nu));
    int best = centre;
    double best_val = std::abs(centre * params.nu + s);
    for (int m = centre - 2; m <= centre + 2; ++m) {
        const double v = std::abs(m * params.nu + s);
        if (v < best_val - 1e-12 * std::max(1.0, std::abs(s)) ||
            (std::abs(v - best_val) <= 1e-12 * std::max(1.0, std::abs(s)) && std::abs(m) < std::abs(best))) {
            best = m;
            best_val = v;
        }
    }
    return best;
}

namespace {

template <class F>
std::vector<double> grid_roots(F f, double lo, double hi, double grid, double xtol) {
    std::vector<double> roots;
    if (!(hi > lo)) return roots;
    if (!(grid > 0.0) || !(xtol > 0.0)) throw std::invalid_argument("root search: grid and xtol must be > 0");
    const auto n = static_cast<long>(std::ceil((hi - lo) / grid - 1e-9));
    double x0 = lo;
    double f0 = f(x0);
    if (f0 == 0.0) roots.push_back(x0);
    for (long i = 1; i <= n; ++i) {
        const double x1 = std::min(hi, lo + static_cast<double>(i) * grid);
        const double f1 = f(x1);
        if (f1 == 0.0) {
            roots.push_back(x1);
        } else if (f0 != 0.0 && (f0 < 0.0) != (f1 < 0.0)) {
            double a = x0, b = x1, fa = f0;
            while (b - a > xtol) {
                const double m = 0.5 * (a + b);
                const double fm = f(m);
                if (fm == 0.0) {
                    a = b = m;
                    break;
                }
                if ((fm < 0.0) == (fa < 0.0)) {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            roots.push_back(0.5 * (a + b));
        }
        x0 = x1;
        f0 = f1;
    }
    return roots;
}

}  // namespace

std::vector<double> oat_condition_roots(int m0, double lo, double hi, double grid, double xtol) {
    return grid_roots([m0](double z) { return bessel_j(0, z) - bessel_j(m0, z); }, lo, hi, grid, xtol);
}

std::vector<double> tat_condition_roots(int m0, double lo, double hi, double grid, double xtol) {
    std::vector<double> out;
    for (double branch : {3.0 + 2.0 * std::sqrt(2.0), 3.0 - 2.0 * std::sqrt(2.0)}) {
        auto r = grid_roots([m0, branch](double z) { return bessel_j(0, z) - branch * bessel_j(m0, z); }, lo, hi,
                            grid, xtol);
        out.insert(out.end(), r.begin(), r.end());
    }
    std::sort(out.begin(), out.end());
    return out;
}

EffectiveParams effective_params(double zeta, const ModelParams& params, M0Rule rule) {
    EffectiveParams ep;
    ep.m0 = find_m0(params, rule);
    ep.delta = params.omega_c - params.omega_z;
    ep.Delta = ep.m0 * params.nu + params.omega_c + params.omega_z;
    if (ep.Delta == 0.0) {
        throw std::domain_error("effective_params: Delta = m0 nu + omega_c + omega_z vanishes");
    }
    ep.g0 = 0.5 * params.g * bessel_j(0, zeta);
    ep.gm0 = 0.5 * params.g * bessel_j(ep.m0, zeta);
    ep.lambda = 4.0 * ep.g0 * ep.gm0 / ep.Delta;
    ep.chi = -ep.lambda;
    ep.lambda_prime = (ep.g0 * ep.g0 - ep.gm0 * ep.gm0) / ep.Delta;
    ep.weakly_dispersive = std::abs(ep.Delta) <= 5.0 * params.g;
    return ep;
}

Operator effective_hamiltonian(const EffectiveParams& ep, const CompositeOps& ops) {
    if (ep.Delta == 0.0) throw std::domain_error("effective_hamiltonian: Delta = 0");
    const int d = ops.space.total_dim();
    const Matrix id = Matrix::Identity(d, d);
    const Matrix& n = ops.number.matrix;
    const Matrix& jz = ops.jz.matrix;
    const Matrix& jx = ops.jx.matrix;
    const double dg = ep.g0 - ep.gm0;
    Matrix h = ep.Delta * n - ep.lambda_prime * (id + 2.0 * n) * jz + (dg * dg / ep.Delta) * jz * jz -
               ep.lambda * jx * jx;
    return Operator(ops.space, Subsystem::composite, std::move(h));
}

Operator effective_hamiltonian(double zeta, const ModelParams& params, const CompositeOps& ops) {
    return effective_hamiltonian(effective_params(zeta, params), ops);
}

namespace {

Matrix sigma_op(const EffectiveParams& ep, const ModelParams& params, const CompositeOps& ops) {
    // Sigma = [J_0 J- + J_m0 J+]/2 = (g0 J- + gm0 J+)/g
    return (ep.g0 * ops.jminus.matrix + ep.gm0 * ops.jplus.matrix) / params.g;
}

/// exp(-i H t) for Hermitian H via its eigendecomposition.
Matrix hermitian_propagator(const Matrix& h, double t) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (h + h.adjoint()));
    const Eigen::VectorXcd ph = (es.eigenvalues().cast<cplx>() * cplx(0.0, -t)).array().exp();
    return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace

Operator sideband_hamiltonian(const EffectiveParams& ep, const ModelParams& params, const CompositeOps& ops) {
    const Matrix s = sigma_op(ep, params, ops);
    Matrix h = ep.Delta * ops.number.matrix + params.g * (s.adjoint() * ops.a.matrix + s * ops.a_dag.matrix);
    return Operator(ops.space, Subsystem::composite, std::move(h));
}

Matrix schrieffer_wolff_generator(const EffectiveParams& ep, const ModelParams& params, const CompositeOps& ops) {
    const Matrix s = sigma_op(ep, params, ops);
    return (params.g / ep.Delta) * (s * ops.a_dag.matrix - s.adjoint() * ops.a.matrix);
}

double FidelitySeries::min_fidelity() const {
    return fidelity.empty() ? 1.0 : *std::min_element(fidelity.begin(), fidelity.end());
}

double FidelitySeries::min_fidelity_bare() const {
    return fidelity_bare.empty() ? 1.0 : *std::min_element(fidelity_bare.begin(), fidelity_bare.end());
}

double FidelitySeries::first_below(double threshold) const {
    for (std::size_t i = 0; i < fidelity.size(); ++i) {
        if (fidelity[i] < threshold) return times[i];
    }
    return -1.0;
}

FidelitySeries validate_effective(double zeta, const ModelParams& params_in, double t_final, double record_interval,
                                  double dt, M0Rule rule) {
    const ModelParams params = params_in.without_noise();
    params.validate();
    if (!(t_final >= 0.0) || !(record_interval > 0.0)) {
        throw std::invalid_argument("validate_effective: need t_final >= 0 and record_interval > 0");
    }
    FidelitySeries out;
    out.effective = effective_params(zeta, params, rule);
    const EffectiveParams& ep = out.effective;
    const CompositeOps ops = build_composite_ops(params.space());
    const int d = params.space().total_dim();

    const Matrix heff = effective_hamiltonian(ep, ops).matrix;
    const Matrix r = schrieffer_wolff_generator(ep, params, ops);
    // R is anti-Hermitian: e^R = exp(-i (iR) * 1) with iR Hermitian.
    const Matrix eR = hermitian_propagator(cplx(0.0, 1.0) * r, 1.0);
    const Matrix u_rec = hermitian_propagator(heff, record_interval);

    out.dt = dt > 0.0 ? dt : auto_dt(params, zeta, record_interval, true);
    const Propagator prop(params, out.dt);
    const Vector psi0 = initial_state_vector(params);
    EvolutionState st = prop.start(psi0);
    const long per_record = std::lround(record_interval / out.dt);
    if (std::abs(per_record * out.dt - record_interval) > 1e-9 * record_interval) {
        throw std::invalid_argument("validate_effective: dt must divide record_interval");
    }
    const long n_records = std::lround(std::floor(t_final / record_interval + 1e-9));

    Vector eff_bare = psi0;
    Vector eff_dressed = eR * psi0;
    auto push = [&]() {
        const double t = st.time();
        // st.psi is already in the frame of V(t); apply V1(t)† = exp(-i Delta a†a t).
        Vector psi1(d);
        for (int i = 0; i < d; ++i) {
            psi1(i) = std::polar(1.0, -ep.Delta * params.space().n_of(i) * t) * st.psi(i);
        }
        out.times.push_back(t);
        out.fidelity.push_back(fidelity(eff_dressed, Vector(eR * psi1)));
        out.fidelity_bare.push_back(fidelity(eff_bare, psi1));
    };
    push();
    for (long k = 0; k < n_records; ++k) {
        for (long s = 0; s < per_record; ++s) {
            prop.step(st, zeta);
            st.psi /= st.psi.norm();
        }
        eff_bare = u_rec * eff_bare;
        eff_dressed = u_rec * eff_dressed;
        push();
    }
    return out;
}

}  // namespace spinsq
