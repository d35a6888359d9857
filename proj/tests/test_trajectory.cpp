#include "nmqsd/coefficients.hpp"
#include "nmqsd/errors.hpp"
#include "nmqsd/noise.hpp"
#include "nmqsd/trajectory.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace nmqsd;

namespace {

const Complex I(0.0, 1.0);

NoisePath ou_noise(double gamma, const TimeGrid& grid, std::uint64_t seed, std::uint64_t index = 0) {
    RandomStream s(seed, index);
    return sample_ou_path(gamma, grid, s);
}

Eigen::Vector3cd random_vector(std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    return Eigen::Vector3cd(Complex(n(rng), n(rng)), Complex(n(rng), n(rng)), Complex(n(rng), n(rng)));
}

Complex random_complex(std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    return {n(rng), n(rng)};
}

CoefficientSet zero_coefficients(const TimeGrid& grid) {
    const std::vector<Complex> zeros(static_cast<std::size_t>(grid.n_half() + 1), 0.0);
    return CoefficientSet(1.0, 1.0, grid, zeros, zeros, zeros, zeros);
}

} // namespace

TEST_CASE("generators agree with the dense operator form") {
    const auto& J = spin1_operators();
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Vector3cd psi = random_vector(rng);
        const double omega = 0.3 + trial * 0.1;
        const Complex z = random_complex(rng), F = random_complex(rng), G = random_complex(rng), Q = random_complex(rng);

        const Operator3 L = -I * omega * J.Jz + z * J.Jminus - F * J.JpJm - G * J.JpJzJm - I * Q * J.JpJm2;
        CHECK((detail::linear_rhs(psi, omega, z, F, G, Q) - L * psi).norm() < 1e-12 * (1 + psi.norm()));

        const Eigen::Vector3cd u = psi / psi.norm();
        auto ev = [&](const Operator3& A) { return Complex(u.dot(A * u)); };
        auto delta = [&](const Operator3& A) { return Operator3(A - ev(A) * Operator3::Identity()); };
        const Complex e = ev(J.Jplus);
        const Operator3 N = -I * omega * J.Jz + delta(J.Jminus) * z + e * F * delta(J.Jminus) - F * delta(J.JpJm) +
                            e * G * delta(J.JzJm) - G * delta(J.JpJzJm) + I * e * Q * delta(J.Jm2) -
                            I * Q * delta(J.JpJm2);
        Complex jplus;
        const Eigen::Vector3cd got = detail::nonlinear_rhs(u, omega, z, F, G, Q, jplus);
        CHECK(std::abs(jplus - e) < 1e-12);
        CHECK((got - N * u).norm() < 1e-11);
        // The generator preserves the norm to first order: Re <psi|d psi> = 0.
        CHECK(std::abs(u.dot(got).real()) < 1e-11);
    }
}

TEST_CASE("memory integral: single RK4 step") {
    std::array<Complex, 3> z{0.3, 0.3, 0.3};
    const StageCoefficients zeroG{{0.2, 0.2, 0.2}, {0.0, 0.0, 0.0}};
    CHECK(propagate_noise_integral(0.0, zeroG, 1.0, 1.0, z, 0.1) == Complex(0.0));

    // Constant coefficients: dQ/dt = r Q + b has Q(h) = e^{rh} (Q0 + b/r) - b/r.
    const double gamma = 0.7, omega = 1.3;
    const Complex F(0.4, 0.1), G(-0.2, 0.05), zc(0.5, -0.8), Q0(0.1, 0.2);
    const StageCoefficients c{{F, F, F}, {G, G, G}};
    const Complex r = Complex(-gamma, 2 * omega) + 4.0 * F - 2.0 * G;
    const Complex b = -I * G * zc;
    auto err = [&](double h) {
        const Complex exact = std::exp(r * h) * (Q0 + b / r) - b / r;
        return std::abs(propagate_noise_integral(Q0, c, gamma, omega, {zc, zc, zc}, h) - exact);
    };
    CHECK(err(0.1) < 1e-5);
    CHECK(err(0.1) / err(0.05) == doctest::Approx(32.0).epsilon(0.15));

    const StageCoefficients bad{{std::nan(""), 0.0, 0.0}, {0.0, 0.0, 0.0}};
    CHECK_THROWS_AS(propagate_noise_integral(0.0, bad, 1.0, 1.0, z, 0.1), DivergenceError);
}

TEST_CASE("memory integral: ODE route vs quadrature of the closed form") {
    const double gamma = 0.5, omega = 1.0;
    const TimeGrid grid(0.005, 400);  // t = 2
    const auto coeffs = integrate_ou_coefficients(gamma, omega, grid);
    const auto noise = ou_noise(gamma, grid, 77);

    Complex Q = 0.0;
    for (std::int64_t n = 0; n < grid.n_steps(); ++n) {
        Q = propagate_noise_integral(Q, coeffs, n, {noise.at_half(2 * n), noise.at_half(2 * n + 1), noise.at_half(2 * n + 2)});
    }
    const double t = grid.horizon();
    const double h = grid.half_dt();
    Complex quad = 0.0;
    for (std::int64_t k = 0; k <= grid.n_half(); ++k) {
        const double w = (k == 0 || k == grid.n_half()) ? 0.5 * h : h;
        quad += w * closed_form_P(coeffs, t, grid.half_time(k)) * noise.at_half(k);
    }
    CHECK(std::abs(Q - quad) < 1e-4);
}

TEST_CASE("memory integral: general-kernel quadrature vs OU ODE route") {
    const double gamma = 0.5, omega = 1.0;
    const TimeGrid grid(0.005, 500);  // t <= 2.5; the acceptance suite covers t <= 5
    const auto coeffs = integrate_ou_coefficients(gamma, omega, grid);
    const auto surface = integrate_general_kernel(OuKernel{gamma}, omega, half_step_grid(grid));
    const auto noise = ou_noise(gamma, grid, 5);

    CHECK(memory_integral_general(surface, noise, 0) == Complex(0.0));
    Complex Q = 0.0;
    double dev = 0.0;
    for (std::int64_t n = 0; n < grid.n_steps(); ++n) {
        Q = propagate_noise_integral(Q, coeffs, n, {noise.at_half(2 * n), noise.at_half(2 * n + 1), noise.at_half(2 * n + 2)});
        dev = std::max(dev, std::abs(Q - memory_integral_general(surface, noise, 2 * n + 2)));
    }
    MESSAGE("max |Q_ode - Q_quad| = " << dev);
    CHECK(dev < 1e-4);

    const auto other = ou_noise(gamma, TimeGrid(0.01, 250), 5);
    CHECK_THROWS_AS(memory_integral_general(surface, other, 3), ShapeError);
    CHECK_THROWS_AS(memory_integral_general(surface, noise, surface.size()), ShapeError);
}

TEST_CASE("linear trajectory: dark state and closed system") {
    const TimeGrid grid(0.01, 1000);
    for (double gamma : {0.2, 0.8, 2.0}) {
        const auto coeffs = integrate_ou_coefficients(gamma, 1.0, grid);
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto rec = run_linear_trajectory(coeffs, ou_noise(gamma, grid, seed), StateVector::level(0));
            for (std::size_t i = 0; i < rec.times.size(); ++i) {
                // Modulus exact to rounding; the RK4 phase error is O(dt^4) t.
                CHECK(std::abs(std::abs(rec.states[i].amp0()) - 1.0) < 1e-10);
                CHECK(std::abs(rec.states[i].amp0() - std::exp(I * rec.times[i])) < 1e-8);
                CHECK(std::abs(rec.states[i].amp1()) + std::abs(rec.states[i].amp2()) == 0.0);
            }
        }
    }

    // No coupling and no noise: unitary evolution.
    const NoisePath silent{grid, std::vector<Complex>(static_cast<std::size_t>(grid.n_half() + 1), 0.0)};
    const auto rec = run_linear_trajectory(zero_coefficients(grid), silent, StateVector::symmetric());
    const auto& J = spin1_operators();
    for (const auto& s : rec.states) {
        CHECK(std::abs(s.norm() - 1.0) < 1e-10);
        CHECK(std::abs(expectation(s, J.Jz)) < 1e-10);
    }
    CHECK(std::abs(expectation(rec.states.back(), J.Jx) - 2.0 * std::sqrt(2.0) / 3.0 * std::cos(grid.horizon())) < 1e-8);
}

TEST_CASE("linear trajectory: mean squared norm is one") {
    const double gamma = 2.0;
    const TimeGrid grid(0.005, 1000);  // t = 5
    const auto coeffs = integrate_ou_coefficients(gamma, 1.0, grid);
    TrajectoryOptions opts;
    opts.output_stride = 1000;
    const int M = 10000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < M; ++i) {
        const auto rec = run_linear_trajectory(coeffs, ou_noise(gamma, grid, 99, i), StateVector::symmetric(), opts);
        REQUIRE(rec.times.size() == 2);
        const double n2 = rec.states.back().squared_norm();
        sum += n2;
        sum2 += n2 * n2;
    }
    const double mean = sum / M;
    const double se = std::sqrt((sum2 / M - mean * mean) / (M - 1));
    CHECK(std::abs(mean - 1.0) < 3.0 * se);
}

TEST_CASE("nonlinear trajectory: dark state, normalization and drift") {
    const TimeGrid grid(0.01, 1000);
    for (double gamma : {0.2, 0.8, 2.0}) {
        const auto coeffs = integrate_ou_coefficients(gamma, 1.0, grid);
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto rec = run_nonlinear_trajectory(coeffs, ou_noise(gamma, grid, seed), StateVector::level(0));
            for (const auto& s : rec.states) CHECK(std::abs(std::abs(s.amp0()) - 1.0) < 1e-8);
        }
    }

    const double gamma = 0.5;
    double drift[2];
    int i = 0;
    for (double dt : {1e-2, 5e-3}) {
        const auto g = TimeGrid::from_horizon(dt, 10.0);
        const auto coeffs = integrate_ou_coefficients(gamma, 1.0, g);
        TrajectoryOptions opts;
        opts.record_step_drift = true;
        double worst = 0.0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto rec = run_nonlinear_trajectory(coeffs, ou_noise(gamma, g, seed), StateVector::symmetric(), opts);
            CHECK(rec.step_drift.size() == static_cast<std::size_t>(g.n_steps()));
            for (const auto& s : rec.states) CHECK(s.is_normalized(1e-9));
            worst = std::max(worst, rec.max_norm_drift);
        }
        CHECK(worst < 10.0 * dt * dt);
        drift[i++] = worst;
    }
    CHECK(drift[0] / drift[1] > 2.0);

    CHECK_THROWS_AS(run_nonlinear_trajectory(integrate_ou_coefficients(gamma, 1.0, grid), ou_noise(gamma, grid, 1),
                                             StateVector(1.0, 1.0, 0.0)),
                    ParameterError);
}

TEST_CASE("trajectories are deterministic and respect the output stride") {
    const TimeGrid grid(0.01, 100);
    const auto coeffs = integrate_ou_coefficients(0.8, 1.0, grid);
    TrajectoryOptions opts;
    opts.output_stride = 20;
    const auto a = run_nonlinear_trajectory(coeffs, ou_noise(0.8, grid, 3), StateVector::symmetric(), opts);
    const auto b = run_nonlinear_trajectory(coeffs, ou_noise(0.8, grid, 3), StateVector::symmetric(), opts);
    REQUIRE(a.times.size() == 6);
    CHECK(a.times[5] == doctest::Approx(1.0));
    for (std::size_t i = 0; i < a.states.size(); ++i) CHECK(a.states[i].amplitudes() == b.states[i].amplitudes());
    opts.output_stride = 0;
    CHECK_THROWS_AS(run_linear_trajectory(coeffs, ou_noise(0.8, grid, 3), StateVector::symmetric(), opts),
                    ParameterError);
    CHECK_THROWS_AS(run_linear_trajectory(coeffs, ou_noise(0.8, TimeGrid(0.02, 50), 3), StateVector::symmetric()),
                    ShapeError);
}

TEST_CASE("general-kernel trajectories agree with the OU fast path") {
    const double gamma = 0.8, omega = 1.0;
    const TimeGrid grid(0.01, 400);
    const auto coeffs = integrate_ou_coefficients(gamma, omega, grid);
    const auto surface = integrate_general_kernel(OuKernel{gamma}, omega, half_step_grid(grid));
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto noise = ou_noise(gamma, grid, seed);
        const auto lin_a = run_linear_trajectory(coeffs, noise, StateVector::symmetric());
        const auto lin_b = run_linear_trajectory(surface, noise, StateVector::symmetric());
        const auto nl_a = run_nonlinear_trajectory(coeffs, noise, StateVector::symmetric());
        const auto nl_b = run_nonlinear_trajectory(surface, noise, StateVector::symmetric());
        double dl = 0.0, dn = 0.0;
        for (std::size_t i = 0; i < lin_a.states.size(); ++i) {
            dl = std::max(dl, (lin_a.states[i].amplitudes() - lin_b.states[i].amplitudes()).norm() /
                                  std::max(1.0, lin_a.states[i].norm()));
            dn = std::max(dn, (nl_a.states[i].amplitudes() - nl_b.states[i].amplitudes()).norm());
        }
        CHECK(dl < 1e-3);
        CHECK(dn < 1e-3);
    }
}

TEST_CASE("general-kernel trajectories: zero kernel is unitary") {
    TabulatedKernel zero;
    for (int i = 0; i <= 160; ++i) {
        zero.lags.push_back(0.00125 * i);
        zero.values.push_back(0.0);
    }
    const TimeGrid grid(0.005, 40);
    const auto surface = integrate_general_kernel(zero, 1.0, half_step_grid(grid));
    CHECK(memory_integral_general(surface, std::vector<Complex>(81, 1.0), 60) == Complex(0.0));
    RandomStream s(1, 1);
    const auto noise = CholeskySampler(zero, grid).sample(s);
    for (const auto& z : noise.samples) CHECK(z == Complex(0.0));
    const auto rec = run_nonlinear_trajectory(surface, noise, StateVector::symmetric());
    const auto& J = spin1_operators();
    for (const auto& st : rec.states) CHECK(std::abs(expectation(st, J.Jz)) < 1e-12);
}

TEST_CASE("Markov trajectory") {
    const TimeGrid grid(0.005, 1000);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RandomStream s(seed, 0);
        const auto rec = run_markov_trajectory(1.0, StateVector::level(0), grid, s);
        for (const auto& st : rec.states) CHECK(std::abs(std::abs(st.amp0()) - 1.0) < 1e-8);
    }

    // |1> decays at rate 2: population e^{-2t}.
    const int M = 4000;
    TrajectoryOptions opts;
    opts.output_stride = 100;
    std::vector<double> sum(11, 0.0), sum2(11, 0.0);
    for (int i = 0; i < M; ++i) {
        RandomStream s(17, static_cast<std::uint64_t>(i));
        const auto rec = run_markov_trajectory(1.0, StateVector::level(1), grid, s, opts);
        for (std::size_t k = 0; k < rec.states.size(); ++k) {
            const double p = std::norm(rec.states[k].amp1());
            sum[k] += p;
            sum2[k] += p * p;
        }
    }
    for (std::size_t k = 1; k < sum.size(); ++k) {
        const double t = 0.5 * static_cast<double>(k);
        const double mean = sum[k] / M;
        const double se = std::sqrt(std::max(sum2[k] / M - mean * mean, 0.0) / (M - 1));
        // Euler-Maruyama bias is O(dt); allow it on top of 4 sigma.
        CHECK(std::abs(mean - std::exp(-2.0 * t)) < 4.0 * se + 0.01);
    }
}
