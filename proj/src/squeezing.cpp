#include "spinsq/squeezing.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>

namespace spinsq {

namespace {

std::atomic<std::uint64_t> g_floor_hits{0};

using Vec3 = std::array<double, 3>;

double quad(const std::array<std::array<double, 3>, 3>& s, const Vec3& u, const Vec3& v) {
    double acc = 0.0;
    for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
            acc += u[a] * s[a][b] * v[b];
        }
    }
    return acc;
}

double dot(const Vec3& u, const Vec3& v) { return u[0] * v[0] + u[1] * v[1] + u[2] * v[2]; }

struct Frame {
    Vec3 n1, n2;
};

Frame perpendicular_frame(const Direction& d) {
    const double st = std::sin(d.theta), ct = std::cos(d.theta);
    const double sp = std::sin(d.phi), cp = std::cos(d.phi);
    return Frame{{-sp, cp, 0.0}, {-ct * cp, -ct * sp, st}};
}

}  // namespace

SpinMoments spin_moments(const Matrix& rho_spin, int n_spins) {
    if (rho_spin.rows() != n_spins + 1 || rho_spin.cols() != n_spins + 1) {
        throw std::invalid_argument("spin_moments: reduced density has wrong dimension");
    }
    const int dim = n_spins + 1;
    const double j = 0.5 * n_spins;
    const double norm = rho_spin.trace().real();

    // J+ matrix elements: <m+1|J+|m> at (s-1, s)
    std::vector<double> jp(dim, 0.0);
    for (int s = 1; s < dim; ++s) {
        const double m = j - s;
        jp[s] = std::sqrt(j * (j + 1.0) - m * (m + 1.0));
    }
    // <J+> = sum_s jp[s] rho(s, s-1); <J+^2> = sum_s jp[s] jp[s-1] rho(s, s-2)
    cplx ep{0.0}, ep2{0.0}, ezp{0.0};
    double ez = 0.0, ez2 = 0.0, epm = 0.0;
    for (int s = 0; s < dim; ++s) {
        const double m = j - s;
        const double p = rho_spin(s, s).real();
        ez += m * p;
        ez2 += m * m * p;
        // J+J- = J^2 - Jz^2 + Jz
        epm += (j * (j + 1.0) - m * m + m) * p;
        if (s >= 1) {
            ep += jp[s] * rho_spin(s, s - 1);
            // Jz J+: J+ takes s -> s-1, then Jz gives m+1
            ezp += (m + 1.0) * jp[s] * rho_spin(s, s - 1);
        }
        if (s >= 2) {
            ep2 += jp[s] * jp[s - 1] * rho_spin(s, s - 2);
        }
    }
    ep /= norm;
    ep2 /= norm;
    ezp /= norm;
    ez /= norm;
    ez2 /= norm;
    epm /= norm;
    const double emp = epm - 2.0 * ez;  // J-J+ = J+J- - 2Jz

    SpinMoments out;
    out.jx = ep.real();
    out.jy = ep.imag();
    out.jz = ez;
    // Jx^2 = (J+^2 + J-^2 + J+J- + J-J+)/4, Jy^2 = -(J+^2 + J-^2 - J+J- - J-J+)/4
    out.xx = 0.25 * (2.0 * ep2.real() + epm + emp);
    out.yy = 0.25 * (-2.0 * ep2.real() + epm + emp);
    out.zz = ez2;
    // {Jx,Jy}/2 = (J+^2 - J-^2)/(4i) -> Im<J+^2>/2
    out.xy = 0.5 * ep2.imag();
    // {Jz, J+} = 2 Jz J+ - J+ (since [Jz, J+] = J+); {Jz,Jx}/2 = Re<{Jz,J+}>/2
    const cplx anti_zp = 2.0 * ezp - ep;
    out.xz = 0.5 * anti_zp.real();
    out.yz = 0.5 * anti_zp.imag();
    return out;
}

Matrix reduce_to_spin(const DensityMatrix& rho) {
    const int ds = rho.space.spin_dim();
    const int db = rho.space.boson_dim();
    Matrix out = Matrix::Zero(ds, ds);
    for (int s = 0; s < ds; ++s) {
        for (int sp = 0; sp < ds; ++sp) {
            cplx acc{0.0};
            for (int n = 0; n < db; ++n) {
                acc += rho.matrix(s * db + n, sp * db + n);
            }
            out(s, sp) = acc;
        }
    }
    return out;
}

SpinMoments moments_of(const DensityMatrix& rho) {
    SpinMoments m = spin_moments(reduce_to_spin(rho), rho.space.n_spins);
    const int d = rho.space.total_dim();
    const double norm = rho.matrix.trace().real();
    double photon = 0.0;
    cplx a{0.0};
    for (int i = 0; i < d; ++i) {
        const int n = rho.space.n_of(i);
        photon += n * rho.matrix(i, i).real();
        if (n >= 1) {
            a += std::sqrt(static_cast<double>(n)) * rho.matrix(i, i - 1);
        }
    }
    m.photon = photon / norm;
    m.a_re = a.real() / norm;
    m.a_im = a.imag() / norm;
    return m;
}

Direction mean_spin_direction(const SpinMoments& m) {
    const double r = std::sqrt(m.jx * m.jx + m.jy * m.jy + m.jz * m.jz);
    if (r < 1e-9) {
        throw DegenerateDirection("mean_spin_direction: |<J>| = " + std::to_string(r) + " is degenerate");
    }
    Direction d;
    d.theta = std::acos(std::clamp(m.jz / r, -1.0, 1.0));
    const double rho_xy = std::hypot(m.jx, m.jy);
    if (rho_xy <= 1e-12 * r) {
        d.phi = 0.0;
    } else {
        double phi = std::atan2(m.jy, m.jx);
        if (phi < 0.0) phi += 2.0 * std::numbers::pi;
        if (phi >= 2.0 * std::numbers::pi) phi = 0.0;
        d.phi = phi;
    }
    return d;
}

double optimal_angle(double A, double B) {
    const double norm = std::hypot(A, B);
    if (norm == 0.0) {
        throw std::domain_error("optimal_angle: undefined for A = B = 0");
    }
    const double half = 0.5 * std::acos(std::clamp(-A / norm, -1.0, 1.0));
    return B <= 0.0 ? half : std::numbers::pi - half;
}

SqueezingRecord squeezing_parameter(const SpinMoments& m, int n_spins) {
    const Direction d = mean_spin_direction(m);
    const Frame f = perpendicular_frame(d);
    const auto s = m.second();
    const double v11 = quad(s, f.n1, f.n1);
    const double v22 = quad(s, f.n2, f.n2);
    const double v12 = quad(s, f.n1, f.n2);

    SqueezingRecord r;
    r.theta = d.theta;
    r.phi = d.phi;
    r.C = v11 + v22;
    r.A = v11 - v22;
    r.B = 2.0 * v12;
    r.xi2 = (2.0 / n_spins) * (r.C - std::hypot(r.A, r.B));
    r.xi2_db = xi2_to_db(r.xi2);
    r.phi_opt = (r.A == 0.0 && r.B == 0.0) ? 0.0 : optimal_angle(r.A, r.B);
    return r;
}

SqueezingRecord squeezing_parameter(const DensityMatrix& rho) {
    return squeezing_parameter(moments_of(rho), rho.space.n_spins);
}

double transverse_variance(const SpinMoments& m, double angle) {
    const Frame f = perpendicular_frame(mean_spin_direction(m));
    Vec3 n;
    for (int a = 0; a < 3; ++a) {
        n[a] = f.n1[a] * std::cos(angle) + f.n2[a] * std::sin(angle);
    }
    const double mean = dot(n, m.mean());
    return quad(m.second(), n, n) - mean * mean;
}

double xi2_to_db(double xi2) {
    if (!(xi2 > 0.0)) {
        g_floor_hits.fetch_add(1, std::memory_order_relaxed);
        xi2 = kXi2Floor;
    }
    return 10.0 * std::log10(std::max(xi2, kXi2Floor));
}

std::uint64_t xi2_floor_hits() { return g_floor_hits.load(std::memory_order_relaxed); }
void reset_xi2_floor_hits() { g_floor_hits.store(0, std::memory_order_relaxed); }

std::string to_string(StorageConvention c) { return c == StorageConvention::lifetime ? "lifetime" : "full"; }

StorageConvention storage_convention_from_string(const std::string& s) {
    if (s == "lifetime") return StorageConvention::lifetime;
    if (s == "full") return StorageConvention::full;
    throw std::invalid_argument("unknown storage convention '" + s + "' (expected lifetime|full)");
}

StorageResult storage_integral(std::span<const double> times, std::span<const double> xi2,
                               StorageConvention convention) {
    if (times.empty() || times.size() != xi2.size()) {
        throw std::invalid_argument("storage_integral: empty or misaligned series");
    }
    const std::size_t n = times.size();
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i) {
        f[i] = -xi2_to_db(xi2[i]);
    }
    auto trapz = [&](std::size_t last) {
        double acc = 0.0;
        for (std::size_t i = 1; i <= last; ++i) {
            acc += 0.5 * (f[i] + f[i - 1]) * (times[i] - times[i - 1]);
        }
        return acc;
    };

    StorageResult out;
    out.convention = convention;
    out.S_full = trapz(n - 1);

    const auto imin = static_cast<std::size_t>(std::min_element(xi2.begin(), xi2.end()) - xi2.begin());
    if (xi2[imin] >= 1.0) {
        out.crossed = true;
        out.t_cross = times[imin];
        out.S_lifetime = trapz(imin);
    } else {
        std::size_t k = imin + 1;
        while (k < n && xi2[k] < 1.0) ++k;
        if (k == n) {
            out.crossed = false;
            out.t_cross = times[n - 1];
            out.S_lifetime = out.S_full;
        } else {
            const double x0 = xi2[k - 1], x1 = xi2[k];
            const double frac = (1.0 - x0) / (x1 - x0);
            out.crossed = true;
            out.t_cross = times[k - 1] + frac * (times[k] - times[k - 1]);
            out.S_lifetime = trapz(k - 1) + 0.5 * f[k - 1] * (out.t_cross - times[k - 1]);
        }
    }
    if (convention == StorageConvention::lifetime) {
        out.S = out.S_lifetime;
        out.t_max_used = out.t_cross;
    } else {
        out.S = out.S_full;
        out.t_max_used = times[n - 1];
    }
    return out;
}

}  // namespace spinsq
