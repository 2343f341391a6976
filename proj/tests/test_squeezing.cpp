#include "oracles.hpp"

#include "spinsq/squeezing.hpp"

#include <doctest.h>

#include <functional>
#include <random>

using namespace spinsq;

namespace {

constexpr double pi = std::numbers::pi;

SpinMoments moments_of_spin_state(const Vector& v, int n) { return spin_moments(v * v.adjoint(), n); }

Vector oat_state(int n, double chi_t) {
    const oracle::Spin s = oracle::spin(n);
    const Matrix u = oracle::expm(cplx(0, -chi_t) * s.jx * s.jx);
    return u * coherent_spin_state(pi / 2, pi / 2, n);
}

double simpson(const std::function<double(double)>& f, double a, double b, int n = 200000) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4 : 2);
    return s * h / 3;
}

}  // namespace

TEST_CASE("mean-spin direction") {
    SpinMoments m;
    m.jy = 2.0;
    Direction d = mean_spin_direction(m);
    CHECK(d.theta == doctest::Approx(pi / 2));
    CHECK(d.phi == doctest::Approx(pi / 2));
    m = {};
    m.jz = 1.0;
    d = mean_spin_direction(m);
    CHECK(d.theta == doctest::Approx(0.0));
    CHECK(d.phi == 0.0);
    m = {};
    m.jx = 1 / std::sqrt(2.0);
    m.jy = -1 / std::sqrt(2.0);
    d = mean_spin_direction(m);
    CHECK(d.phi == doctest::Approx(7 * pi / 4));
    CHECK(d.theta == doctest::Approx(pi / 2));
    m = {};
    m.jx = -1.0;
    m.jy = -1e-3;
    CHECK(mean_spin_direction(m).phi > pi);
    CHECK_THROWS_AS(mean_spin_direction(SpinMoments{}), DegenerateDirection);
}

TEST_CASE("optimal angle") {
    CHECK(optimal_angle(-1, 0) == doctest::Approx(0.0));
    CHECK(optimal_angle(1, 0) == doctest::Approx(pi / 2));
    CHECK(optimal_angle(0, 1) == doctest::Approx(3 * pi / 4));
    CHECK(optimal_angle(0, -1) == doctest::Approx(pi / 4));
    CHECK_THROWS_AS(optimal_angle(0, 0), std::domain_error);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n01;
    for (int k = 0; k < 100; ++k) {
        const double A = n01(rng), B = n01(rng);
        const double phi = optimal_angle(A, B);
        CHECK(phi >= 0.0);
        CHECK(phi < pi);
        // the variance along n1 cos(phi) + n2 sin(phi) is (C + A cos 2phi + B sin 2phi)/2: minimal here
        CHECK(A * std::cos(2 * phi) + B * std::sin(2 * phi) == doctest::Approx(-std::hypot(A, B)).epsilon(1e-12));
    }
}

TEST_CASE("dB conversion and the log floor") {
    CHECK(xi2_to_db(1.0) == 0.0);
    CHECK(xi2_to_db(0.1) == doctest::Approx(-10.0));
    CHECK(xi2_to_db(0.5) == doctest::Approx(-3.0103).epsilon(1e-5));
    reset_xi2_floor_hits();
    CHECK(xi2_to_db(0.0) == doctest::Approx(-120.0));
    CHECK(xi2_to_db(-1e-3) == doctest::Approx(-120.0));
    CHECK(xi2_floor_hits() == 2);
    reset_xi2_floor_hits();
}

TEST_CASE("Dicke pole state is unsqueezed") {
    for (int n : {2, 5, 8}) {
        const SqueezingRecord r = squeezing_parameter(moments_of_spin_state(dicke_state(n, 0.5 * n), n), n);
        CHECK(r.xi2 == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(r.theta == doctest::Approx(0.0));
    }
}

TEST_CASE("one-axis twisting against the Kitagawa-Ueda closed form") {
    for (int n : {4, 6, 10}) {
        CAPTURE(n);
        double worst = 0;
        for (int k = 0; k <= 400; ++k) {
            const double chi_t = pi * k / 400.0;
            const Vector v = oat_state(n, chi_t);
            const SpinMoments m = moments_of_spin_state(v, n);
            if (std::hypot(m.jx, m.jy, m.jz) < 1e-6) continue;  // mean spin vanishes at the cat point
            worst = std::max(worst, std::abs(squeezing_parameter(m, n).xi2 - oracle::kitagawa_ueda_xi2(n, chi_t)));
        }
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("squeezing parameter: brute-force oracle, invariants and record consistency") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n01;
    for (int k = 0; k < 20; ++k) {
        const int n = 2 + k % 6;
        // twisted and rotated coherent states, plus a little mixing
        const oracle::Spin s = oracle::spin(n);
        const Vector v = oracle::expm(cplx(0, -0.05 * (1 + k)) * (s.jx * s.jx - 0.3 * s.jz * s.jz)) *
                         coherent_spin_state(1.0 + 0.1 * k, 0.4 * k, n);
        Matrix rho = 0.9 * v * v.adjoint() + 0.1 * Matrix::Identity(n + 1, n + 1) / (n + 1.0);
        const SpinMoments m = spin_moments(rho, n);
        const SqueezingRecord r = squeezing_parameter(m, n);
        CAPTURE(k);
        CHECK(r.xi2 == doctest::Approx(oracle::xi2_bruteforce(rho, n)).epsilon(1e-9));
        CHECK(r.C >= std::hypot(r.A, r.B) - 1e-9);
        CHECK(r.xi2 == doctest::Approx(2.0 / n * (r.C - std::hypot(r.A, r.B))).epsilon(1e-12));
        CHECK(r.xi2_db == doctest::Approx(xi2_to_db(r.xi2)));

        // the variance along the optimal direction reproduces xi2
        CHECK(4.0 / n * transverse_variance(m, r.phi_opt) == doctest::Approx(r.xi2).epsilon(1e-9));
        // minimality over 180 angles
        for (int a = 0; a < 180; ++a) {
            CHECK(transverse_variance(m, pi * a / 180.0) >= 0.25 * n * r.xi2 - 1e-9);
        }

        // rotation about the mean-spin axis leaves xi2 unchanged
        const Direction d = mean_spin_direction(m);
        const Matrix axis = std::sin(d.theta) * std::cos(d.phi) * s.jx + std::sin(d.theta) * std::sin(d.phi) * s.jy +
                            std::cos(d.theta) * s.jz;
        const Matrix R = oracle::expm(cplx(0, -0.7 - 0.3 * k) * axis);
        const Matrix rot = R * rho * R.adjoint();
        CHECK(squeezing_parameter(spin_moments(rot, n), n).xi2 == doctest::Approx(r.xi2).epsilon(1e-8));
    }
}

TEST_CASE("composite states: partial trace and moments") {
    const SpaceDescriptor sp = SpaceDescriptor::make(3, 2);
    const Vector spin = coherent_spin_state(0.8, 0.3, 3);
    Vector boson(3);
    boson << 0.6, cplx(0, 0.8), 0;
    Vector psi(sp.total_dim());
    for (int s = 0; s < 4; ++s)
        for (int n = 0; n < 3; ++n) psi(s * 3 + n) = spin(s) * boson(n);
    const DensityMatrix rho = DensityMatrix::from_pure(sp, psi);
    const Matrix red = reduce_to_spin(rho);
    CHECK((red - spin * spin.adjoint()).cwiseAbs().maxCoeff() < 1e-14);
    const SpinMoments m = moments_of(rho);
    CHECK(m.photon == doctest::Approx(0.64));
    CHECK(m.a_re == doctest::Approx((boson.adjoint() * oracle::annihilation(2) * boson)(0, 0).real()));
    CHECK(m.a_im == doctest::Approx((boson.adjoint() * oracle::annihilation(2) * boson)(0, 0).imag()));
    CHECK(squeezing_parameter(rho).xi2 == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("storage integral") {
    const std::vector<double> t{0, 2, 4, 6, 8, 10};
    std::vector<double> ones(6, 1.0), tenth(6, 0.1);
    CHECK(storage_integral(t, ones).S == 0.0);
    const StorageResult r = storage_integral(t, tenth);
    CHECK(r.S == doctest::Approx(100.0));
    CHECK_FALSE(r.crossed);
    CHECK(r.t_cross == 10.0);
    CHECK(r.t_cross <= r.t_max_used);
    CHECK_THROWS_AS(storage_integral(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
    CHECK_THROWS_AS(storage_integral(t, std::vector<double>{1, 2}), std::invalid_argument);

    // xi2 dips below 1 on (0, 10), returns above it afterwards; the window [0, 15] is not a full
    // period, so the trapezoid error is O(h^2) rather than spectrally small
    auto f = [](double x) { return 1.0 - 0.5 * std::sin(pi * x / 10.0); };
    auto integrand = [&](double x) { return -10.0 * std::log10(f(x)); };
    const double want_life = simpson(integrand, 0.0, 10.0);
    const double want_full = simpson(integrand, 0.0, 15.0);
    double prev_err = 0;
    for (int n : {300, 600, 1200}) {
        std::vector<double> ts, xs;
        for (int i = 0; i <= n; ++i) {
            ts.push_back(15.0 * i / n);
            xs.push_back(f(ts.back()));
        }
        const StorageResult life = storage_integral(ts, xs, StorageConvention::lifetime);
        const StorageResult full = storage_integral(ts, xs, StorageConvention::full);
        CHECK(life.crossed);
        CHECK(life.t_cross == doctest::Approx(10.0).epsilon(1e-6));
        CHECK(life.S == life.S_lifetime);
        CHECK(full.S == full.S_full);
        CHECK(full.S_lifetime == life.S_lifetime);
        CHECK(life.S == doctest::Approx(want_life).epsilon(1e-3));
        CHECK(full.S == doctest::Approx(want_full).epsilon(1e-3));
        const double err = std::abs(full.S - want_full);
        if (prev_err > 0) CHECK(err < 0.5 * prev_err);
        prev_err = err;
    }
    CHECK(storage_convention_from_string("full") == StorageConvention::full);
    CHECK(to_string(StorageConvention::lifetime) == "lifetime");
    CHECK_THROWS(storage_convention_from_string("forever"));
}
