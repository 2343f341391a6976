#include "spinsq/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace spinsq {

void ModelParams::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("ModelParams: " + msg); };
    if (!(g > 0.0)) fail("g must be > 0");
    if (!(nu > 0.0)) fail("nu must be > 0");
    if (!(kappa >= 0.0)) fail("kappa must be >= 0");
    if (!(gamma >= 0.0)) fail("gamma must be >= 0");
    if (!std::isfinite(omega_c) || !std::isfinite(omega_z)) fail("frequencies must be finite");
    (void)space();
}

double ModelParams::drive_resolving_dt() const { return 2.0 * std::numbers::pi / (16.0 * nu); }

double ModelParams::max_frame_rate(double zeta_max) const {
    return std::abs(omega_c) + std::abs(omega_z) + std::abs(zeta_max) * nu;
}

ControlSignal ControlSignal::constant(double zeta, double t_final, double dt_ctrl) {
    if (!(dt_ctrl > 0.0)) {
        throw std::invalid_argument("ControlSignal::constant: dt_ctrl must be > 0");
    }
    const auto bins = static_cast<std::size_t>(std::ceil(t_final / dt_ctrl - 1e-9));
    ControlSignal c;
    c.t0 = 0.0;
    c.dt_ctrl = dt_ctrl;
    c.values.assign(std::max<std::size_t>(bins, 1), zeta);
    return c;
}

double ControlSignal::at(double t) const {
    const double rel = (t - t0) / dt_ctrl;
    if (rel < 0.0 || rel >= static_cast<double>(values.size())) {
        throw std::out_of_range("ControlSignal::at: t = " + std::to_string(t) + " outside the control window");
    }
    return values[static_cast<std::size_t>(std::floor(rel))];
}

void ControlSignal::validate() const {
    if (!(dt_ctrl > 0.0)) throw std::invalid_argument("ControlSignal: dt_ctrl must be > 0");
    if (values.empty()) throw std::invalid_argument("ControlSignal: no values");
    for (double v : values) {
        if (!std::isfinite(v)) throw std::invalid_argument("ControlSignal: non-finite amplitude");
    }
}

NumericalFailure::NumericalFailure(const std::string& what, long step_, double time_, double trace_error_,
                                   double hermiticity_, double min_eigenvalue_)
    : std::runtime_error([&] {
          std::ostringstream os;
          os << what << " (step " << step_ << ", t = " << time_ << ", |tr-1| = " << trace_error_
             << ", hermiticity = " << hermiticity_ << ", min eigenvalue = " << min_eigenvalue_ << ")";
          return os.str();
      }()),
      step(step_),
      time(time_),
      trace_error(trace_error_),
      hermiticity(hermiticity_),
      min_eigenvalue(min_eigenvalue_) {}

std::vector<double> Trajectory::xi2() const {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.xi2);
    return out;
}

std::vector<double> Trajectory::xi2_db() const {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.xi2_db);
    return out;
}

double Trajectory::min_xi2() const {
    if (records.empty()) throw std::logic_error("Trajectory::min_xi2: empty trajectory");
    double best = records.front().xi2;
    for (const auto& r : records) best = std::min(best, r.xi2);
    return best;
}

double Trajectory::t_at_min() const {
    if (records.empty()) throw std::logic_error("Trajectory::t_at_min: empty trajectory");
    std::size_t best = 0;
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].xi2 < records[best].xi2) best = i;
    }
    return times[best];
}

StorageResult storage_integral(const Trajectory& traj, StorageConvention convention) {
    const std::vector<double> x = traj.xi2();
    return storage_integral(traj.times, x, convention);
}

Operator hamiltonian_h0(const ModelParams& params, const CompositeOps& ops) {
    const Matrix h = params.omega_c * ops.number.matrix + params.omega_z * ops.jz.matrix +
                     params.g * ops.jx.matrix * (ops.a_dag.matrix + ops.a.matrix);
    return Operator(ops.space, Subsystem::composite, h);
}

Operator control_hamiltonian(double zeta, double t, const ModelParams& params, const Operator& jz_embedded) {
    return Operator(jz_embedded.space, jz_embedded.subsystem,
                    (zeta * params.nu * std::cos(params.nu * t)) * jz_embedded.matrix);
}

Matrix lindblad_rhs(const Matrix& rho, const Operator& h_total, const ModelParams& params, const CompositeOps& ops) {
    if (h_total.matrix.rows() != rho.rows()) {
        throw std::invalid_argument("lindblad_rhs: Hamiltonian and state dimensions differ");
    }
    const cplx i{0.0, 1.0};
    const Matrix& H = h_total.matrix;
    const Matrix& a = ops.a.matrix;
    const Matrix& ad = ops.a_dag.matrix;
    const Matrix& num = ops.number.matrix;
    const Matrix& jz = ops.jz.matrix;
    const Matrix jz2 = jz * jz;
    Matrix out = -i * (H * rho - rho * H);
    if (params.kappa != 0.0) {
        out += params.kappa * (2.0 * a * rho * ad - num * rho - rho * num);
    }
    if (params.gamma != 0.0) {
        out += params.gamma * (2.0 * jz * rho * jz - jz2 * rho - rho * jz2);
    }
    return out;
}

Vector initial_state_vector(const ModelParams& params, double theta, double phi) {
    const SpaceDescriptor sp = params.space();
    return product_with_vacuum(sp, coherent_spin_state(theta, phi, params.n_spins));
}

DensityMatrix initial_state(const ModelParams& params, double theta, double phi) {
    return DensityMatrix::from_pure(params.space(), initial_state_vector(params, theta, phi));
}

// ---------------------------------------------------------------------------
// Propagator

Propagator::Propagator(const ModelParams& params, double dt) : params_(params), space_(params.space()), dt_(dt) {
    params_.validate();
    if (!(dt > 0.0)) {
        throw std::invalid_argument("Propagator: dt must be > 0");
    }
    const int d = space_.total_dim();
    const int db = space_.boson_dim();
    m_.resize(d);
    n_.resize(d);
    for (int i = 0; i < d; ++i) {
        m_[i] = space_.m_of(i);
        n_[i] = space_.n_of(i);
    }

    // Coupling (g/2)(J+ + J-)(a + a†), split by the phase each term picks up in the frame.
    // With index s*db + n the four terms sit on fixed diagonals.
    offset_ = {db + 1, db - 1, -(db + 1), -(db - 1)};
    for (auto& c : coef_) c = Eigen::ArrayXd::Zero(d);
    const double j = space_.j();
    const double half_g = 0.5 * params_.g;
    for (int col = 0; col < d; ++col) {
        const int s = col / db;
        const int n = col % db;
        const double m = j - s;
        const double jp = s > 0 ? std::sqrt(j * (j + 1.0) - m * (m + 1.0)) : 0.0;
        const double jm = s < space_.spin_dim() - 1 ? std::sqrt(j * (j + 1.0) - m * (m - 1.0)) : 0.0;
        if (jp != 0.0 && n >= 1) coef_[0][col - offset_[0]] = half_g * jp * std::sqrt(n);
        if (jp != 0.0 && n + 1 < db) coef_[1][col - offset_[1]] = half_g * jp * std::sqrt(n + 1.0);
        if (jm != 0.0 && n + 1 < db) coef_[2][col - offset_[2]] = half_g * jm * std::sqrt(n + 1.0);
        if (jm != 0.0 && n >= 1) coef_[3][col - offset_[3]] = half_g * jm * std::sqrt(n);
    }
    for (auto& v : diag_) v.resize(d);
    col_.resize(d);

    decay_.resize(d, d);
    jump_.resize(d, d);
    for (int c = 0; c < d; ++c) {
        for (int r = 0; r < d; ++r) {
            const double dm = m_[r] - m_[c];
            decay_(r, c) = -params_.gamma * dm * dm - params_.kappa * (n_[r] + n_[c]);
            const bool open = n_[r] + 1 < db && n_[c] + 1 < db;
            jump_(r, c) = open ? 2.0 * params_.kappa * std::sqrt((n_[r] + 1.0) * (n_[c] + 1.0)) : 0.0;
        }
    }
}

EvolutionState Propagator::start(const DensityMatrix& rho0) const {
    if (!(rho0.space == space_)) {
        throw std::invalid_argument("Propagator::start: state space does not match the model");
    }
    EvolutionState st;
    st.pure = false;
    st.rho = rho0.matrix;
    st.dt = dt_;
    return st;
}

EvolutionState Propagator::start(const Vector& psi0) const {
    if (psi0.size() != space_.total_dim()) {
        throw std::invalid_argument("Propagator::start: state vector dimension mismatch");
    }
    EvolutionState st;
    st.pure = true;
    st.psi = psi0 / psi0.norm();
    st.dt = dt_;
    return st;
}

void Propagator::update_coupling(double t, double drive) const {
    // J+a picks up exp(i(theta - omega_c t)), J+a† exp(i(theta + omega_c t)), theta = omega_z t + drive.
    const cplx p = std::polar(1.0, (params_.omega_z - params_.omega_c) * t + drive);
    const cplx q = std::polar(1.0, (params_.omega_z + params_.omega_c) * t + drive);
    const cplx phase[4] = {p, q, std::conj(p), std::conj(q)};
    for (int k = 0; k < 4; ++k) diag_[k] = coef_[k].cast<cplx>() * phase[k];
}

void Propagator::rhs_into(const Matrix& rho, double t, double drive, Matrix& out) const {
    update_coupling(t, drive);
    const int d = space_.total_dim();
    out.resize(d, d);
    const bool dissipative = !params_.noiseless();
    for (int c = 0; c < d; ++c) {
        // (H rho)(:, c): row-shifted copies of column c
        col_.setZero();
        for (int k = 0; k < 4; ++k) {
            const int o = offset_[k];
            const int len = d - std::abs(o);
            if (o > 0) {
                col_.head(len) += diag_[k].head(len) * rho.col(c).segment(o, len).array();
            } else {
                col_.tail(len) += diag_[k].tail(len) * rho.col(c).head(len).array();
            }
        }
        // (rho H)(:, c) = sum_k rho(:, c - o) H(c - o, c)
        for (int k = 0; k < 4; ++k) {
            const int src = c - offset_[k];
            if (src >= 0 && src < d) col_ -= diag_[k][src] * rho.col(src).array();
        }
        auto dst = out.col(c).array();
        dst = cplx(0.0, -1.0) * col_;
        if (dissipative) {
            dst += decay_.col(c).array() * rho.col(c).array();
            if (c + 1 < d) {
                dst.head(d - 1) += jump_.col(c).head(d - 1).array() * rho.col(c + 1).tail(d - 1).array();
            }
        }
    }
}

void Propagator::rhs_into(const Vector& psi, double t, double drive, Vector& out) const {
    update_coupling(t, drive);
    const int d = space_.total_dim();
    col_.setZero();
    for (int k = 0; k < 4; ++k) {
        const int o = offset_[k];
        const int len = d - std::abs(o);
        if (o > 0) {
            col_.head(len) += diag_[k].head(len) * psi.segment(o, len).array();
        } else {
            col_.tail(len) += diag_[k].tail(len) * psi.head(len).array();
        }
    }
    out = cplx(0.0, -1.0) * col_.matrix();
}

Matrix Propagator::rhs(const Matrix& rho, double t, double drive) const {
    if (rho.rows() != space_.total_dim() || rho.cols() != space_.total_dim()) {
        throw std::invalid_argument("Propagator::rhs: dimension mismatch");
    }
    Matrix out;
    rhs_into(rho, t, drive, out);
    return out;
}

Vector Propagator::rhs(const Vector& psi, double t, double drive) const {
    if (psi.size() != space_.total_dim()) throw std::invalid_argument("Propagator::rhs: dimension mismatch");
    Vector out;
    rhs_into(psi, t, drive, out);
    return out;
}

double Propagator::drive_at(const EvolutionState& st, double zeta, double t) const {
    const double t0 = st.time();
    return st.drive_phase + zeta * (std::sin(params_.nu * t) - std::sin(params_.nu * t0));
}

void Propagator::step(EvolutionState& st, double zeta) const {
    const double t0 = st.time();
    const double th = (static_cast<double>(st.step) + 0.5) * dt_;
    const double t1 = static_cast<double>(st.step + 1) * dt_;
    const double d0 = st.drive_phase;
    const double dh = drive_at(st, zeta, th);
    const double d1 = drive_at(st, zeta, t1);
    const double h = dt_;
    if (st.pure) {
        Vector* k = vk_;
        rhs_into(st.psi, t0, d0, k[0]);
        k[4] = st.psi + (0.5 * h) * k[0];
        rhs_into(k[4], th, dh, k[1]);
        k[4] = st.psi + (0.5 * h) * k[1];
        rhs_into(k[4], th, dh, k[2]);
        k[4] = st.psi + h * k[2];
        rhs_into(k[4], t1, d1, k[3]);
        st.psi += (h / 6.0) * (k[0] + 2.0 * k[1] + 2.0 * k[2] + k[3]);
    } else {
        Matrix* k = mk_;
        rhs_into(st.rho, t0, d0, k[0]);
        k[4] = st.rho + (0.5 * h) * k[0];
        rhs_into(k[4], th, dh, k[1]);
        k[4] = st.rho + (0.5 * h) * k[1];
        rhs_into(k[4], th, dh, k[2]);
        k[4] = st.rho + h * k[2];
        rhs_into(k[4], t1, d1, k[3]);
        st.rho += (h / 6.0) * (k[0] + 2.0 * k[1] + 2.0 * k[2] + k[3]);
    }
    st.drive_phase = d1;
    ++st.step;
}

double Propagator::frame_phase(int i, double t, double drive) const {
    return params_.omega_c * n_[i] * t + m_[i] * (params_.omega_z * t + drive);
}

SpinMoments Propagator::moments(const EvolutionState& st, bool lab) const {
    const int ds = space_.spin_dim();
    const int db = space_.boson_dim();
    const double t = lab ? st.time() : 0.0;
    const double theta = lab ? params_.omega_z * t + st.drive_phase : 0.0;

    Matrix spin_int = Matrix::Zero(ds, ds);
    double photon = 0.0;
    cplx a_int{0.0};
    double norm = 0.0;
    if (st.pure) {
        const Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> psi(
            st.psi.data(), ds, db);
        spin_int = psi * psi.adjoint();
        for (int s = 0; s < ds; ++s) {
            for (int n = 0; n < db; ++n) {
                const double p = std::norm(psi(s, n));
                photon += n * p;
                norm += p;
                if (n >= 1) a_int += std::sqrt(static_cast<double>(n)) * psi(s, n - 1) * std::conj(psi(s, n));
            }
        }
        a_int = std::conj(a_int);  // the sum above is <a†>
    } else {
        for (int s = 0; s < ds; ++s) {
            for (int sp = 0; sp < ds; ++sp) {
                cplx acc{0.0};
                for (int n = 0; n < db; ++n) acc += st.rho(s * db + n, sp * db + n);
                spin_int(s, sp) = acc;
            }
        }
        const int d = space_.total_dim();
        for (int i = 0; i < d; ++i) {
            const double p = st.rho(i, i).real();
            photon += n_[i] * p;
            norm += p;
            if (n_[i] >= 1) a_int += std::sqrt(static_cast<double>(n_[i])) * st.rho(i, i - 1);
        }
    }
    // Back to the lab frame: rho_lab(s, s') = exp(-i (m_s - m_s') theta) rho_int(s, s'), m_s - m_s' = s' - s.
    for (int s = 0; s < ds; ++s) {
        for (int sp = 0; sp < ds; ++sp) {
            if (s != sp) spin_int(s, sp) *= std::polar(1.0, -(sp - s) * theta);
        }
    }
    SpinMoments m = spin_moments(spin_int, space_.n_spins);
    const cplx a_lab = a_int * std::polar(1.0, -params_.omega_c * t);
    m.photon = photon / norm;
    m.a_re = a_lab.real() / norm;
    m.a_im = a_lab.imag() / norm;
    return m;
}

DensityMatrix Propagator::lab_density(const EvolutionState& st) const {
    if (st.pure) {
        const Vector v = lab_vector(st);
        return DensityMatrix::from_pure(space_, v);
    }
    const int d = space_.total_dim();
    const double t = st.time();
    std::vector<cplx> ph(d);
    for (int i = 0; i < d; ++i) ph[i] = std::polar(1.0, -frame_phase(i, t, st.drive_phase));
    Matrix out(d, d);
    for (int c = 0; c < d; ++c) {
        for (int r = 0; r < d; ++r) out(r, c) = ph[r] * st.rho(r, c) * std::conj(ph[c]);
    }
    return DensityMatrix(space_, std::move(out));
}

Vector Propagator::lab_vector(const EvolutionState& st) const {
    if (!st.pure) throw std::logic_error("Propagator::lab_vector: state is mixed");
    const int d = space_.total_dim();
    const double t = st.time();
    Vector out(d);
    for (int i = 0; i < d; ++i) out(i) = std::polar(1.0, -frame_phase(i, t, st.drive_phase)) * st.psi(i);
    return out;
}

// ---------------------------------------------------------------------------
// Trajectory drivers

double auto_dt(const ModelParams& params, double zeta_max, double dt_ctrl, bool pure) {
    const double rate = params.max_frame_rate(zeta_max);
    const double budget = pure ? kAutoStepPhasePure : kAutoStepPhaseMixed;
    double dt = kAutoStepBase;
    for (int k = 0; k < 40; ++k, dt *= 0.5) {
        if (dt > params.drive_resolving_dt() || rate * dt > budget) continue;
        const double r = dt_ctrl / dt;
        if (std::abs(r - std::round(r)) <= 1e-9 * r) return dt;
    }
    throw std::invalid_argument("auto_dt: no step on the ladder divides dt_ctrl = " + std::to_string(dt_ctrl));
}

double resolve_dt(const IntegratorConfig& config, const ModelParams& params, const ControlSignal& control,
                  bool pure) {
    if (config.dt > 0.0) return config.dt;
    double zmax = 0.0;
    for (double v : control.values) zmax = std::max(zmax, std::abs(v));
    return auto_dt(params, zmax, control.dt_ctrl, pure);
}

int resolve_record_every(const IntegratorConfig& config, double dt) {
    if (config.record_every > 0) return config.record_every;
    return std::max(1, static_cast<int>(std::lround(0.1 / dt)));
}

namespace {

long checked_ratio(double num, double den, const char* what) {
    const double r = num / den;
    const long k = std::lround(r);
    if (std::abs(r - static_cast<double>(k)) > 1e-6 * std::max(1.0, std::abs(r))) {
        std::ostringstream os;
        os << what << ": " << num << " is not an integer multiple of the step " << den;
        throw std::invalid_argument(os.str());
    }
    return k;
}

constexpr double kStateMemoryLimit = 2.0e9;  // bytes kept for Trajectory::states

}  // namespace

Trajectory evolve_from(const Propagator& prop, EvolutionState st, const ControlSignal& control,
                       const IntegratorConfig& config, EvolutionState* final_state) {
    control.validate();
    const double dt = prop.dt();
    if (std::abs(st.dt - dt) > 0.0) {
        throw std::invalid_argument("evolve_from: state step differs from propagator step");
    }
    const long total_steps = checked_ratio(config.t_final, dt, "t_final");
    const long steps_per_bin = checked_ratio(control.dt_ctrl, dt, "control dt");
    const long control_first = checked_ratio(control.t0, dt, "control t0");
    const int every = resolve_record_every(config, dt);
    const int d = prop.space().total_dim();

    const long n_records = (total_steps - st.step) / every + 2;
    if (config.keep_states && static_cast<double>(n_records) * d * d * 16.0 > kStateMemoryLimit) {
        throw std::invalid_argument("evolve: keep_states would exceed the state memory guard");
    }

    Trajectory traj;
    traj.times.reserve(static_cast<std::size_t>(std::max<long>(n_records, 0)));
    traj.min_eigenvalue = 0.0;
    long record_count = 0;
    double step_norm_drift = 0.0;

    auto record = [&]() {
        if (!st.pure && (record_count % std::max(1, config.check_every) == 0)) {
            const DensityCheck chk = check_density(st.rho, config.tolerances);
            traj.max_trace_drift = std::max(traj.max_trace_drift, chk.trace_error);
            traj.max_hermiticity = std::max(traj.max_hermiticity, chk.hermiticity);
            traj.min_eigenvalue = std::min(traj.min_eigenvalue, chk.min_eigenvalue);
            if (!chk.ok) {
                throw NumericalFailure("evolve: density-matrix invariant violated", st.step, st.time(),
                                       chk.trace_error, chk.hermiticity, chk.min_eigenvalue);
            }
        }
        ++record_count;
        const SpinMoments m = prop.moments(st);
        traj.times.push_back(st.time());
        traj.moments.push_back(m);
        traj.records.push_back(squeezing_parameter(m, prop.space().n_spins));
        if (config.keep_states) traj.states.push_back(prop.lab_density(st));
    };

    if (st.step % every == 0) record();
    for (long k = st.step; k < total_steps; ++k) {
        const long rel = k - control_first;
        if (rel < 0) {
            throw std::out_of_range("evolve: control starts after t = " + std::to_string(k * dt));
        }
        const auto bin = static_cast<std::size_t>(rel / steps_per_bin);
        if (bin >= control.values.size()) {
            throw std::out_of_range("evolve: control ends at t = " + std::to_string(control.t_end()) +
                                    " before t_final = " + std::to_string(config.t_final));
        }
        prop.step(st, control.values[bin]);
        if (st.pure) {
            const double nrm = st.psi.norm();
            step_norm_drift = std::max(step_norm_drift, std::abs(nrm - 1.0));
            st.psi /= nrm;
        }
        if (st.step % every == 0) record();
    }
    traj.max_norm_drift = step_norm_drift;
    if (st.pure && step_norm_drift > 1e-10) {
        throw NumericalFailure("evolve_unitary: per-step norm drift exceeds 1e-10 (reduce dt)", st.step, st.time(),
                               step_norm_drift, 0.0, 0.0);
    }
    traj.final_state = prop.lab_density(st);
    if (final_state != nullptr) *final_state = std::move(st);
    return traj;
}

Trajectory evolve(const DensityMatrix& rho0, const ControlSignal& control, const ModelParams& params,
                  const IntegratorConfig& config) {
    const double dt = resolve_dt(config, params, control, false);
    const Propagator prop(params, dt);
    return evolve_from(prop, prop.start(rho0), control, config);
}

Trajectory evolve_unitary(const Vector& psi0, const ControlSignal& control, const ModelParams& params,
                          const IntegratorConfig& config) {
    if (!params.noiseless()) {
        throw std::invalid_argument("evolve_unitary: requires kappa = gamma = 0");
    }
    const double dt = resolve_dt(config, params, control, true);
    const Propagator prop(params, dt);
    return evolve_from(prop, prop.start(psi0), control, config);
}

double fidelity(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw std::invalid_argument("fidelity: dimension mismatch");
    const double v = std::norm(a.dot(b)) / (a.squaredNorm() * b.squaredNorm());
    return std::clamp(v, 0.0, 1.0);
}

double fidelity(const Vector& psi, const DensityMatrix& rho) {
    if (psi.size() != rho.matrix.rows()) throw std::invalid_argument("fidelity: dimension mismatch");
    const double v = psi.dot(rho.matrix * psi).real() / psi.squaredNorm();
    return std::clamp(v, 0.0, 1.0);
}

double fidelity(const DensityMatrix& a, const DensityMatrix& b) {
    if (!(a.space == b.space)) throw std::invalid_argument("fidelity: states live on different spaces");
    auto dominant = [](const DensityMatrix& r) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (r.matrix + r.matrix.adjoint()));
        const Eigen::Index last = es.eigenvalues().size() - 1;
        return Vector(es.eigenvectors().col(last));
    };
    if (std::abs(a.purity() - 1.0) < 1e-10) return fidelity(dominant(a), b);
    if (std::abs(b.purity() - 1.0) < 1e-10) return fidelity(dominant(b), a);
    throw std::domain_error("fidelity: both states are mixed; only pure-pure and pure-mixed are supported");
}

TruncationCheck truncation_check(const ControlSignal& control, const ModelParams& params,
                                 const IntegratorConfig& config, int extra, double tolerance) {
    if (extra < 1) throw std::invalid_argument("truncation_check: extra must be >= 1");
    ModelParams ref = params;
    ref.fock_cutoff += extra;
    IntegratorConfig cfg = config;
    cfg.keep_states = false;
    auto run = [&](const ModelParams& p) {
        return p.noiseless() ? evolve_unitary(initial_state_vector(p), control, p, cfg)
                             : evolve(initial_state(p), control, p, cfg);
    };
    const Trajectory a = run(params);
    const Trajectory b = run(ref);
    TruncationCheck out;
    out.cutoff = params.fock_cutoff;
    out.reference_cutoff = ref.fock_cutoff;
    out.tolerance = tolerance;
    const std::size_t n = std::min(a.records.size(), b.records.size());
    for (std::size_t i = 0; i < n; ++i) {
        out.max_dxi2 = std::max(out.max_dxi2, std::abs(a.records[i].xi2 - b.records[i].xi2));
    }
    out.ok = out.max_dxi2 < tolerance;
    return out;
}

}  // namespace spinsq
