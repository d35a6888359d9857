#include "nmqsd/trajectory.hpp"

#include "nmqsd/errors.hpp"

#include <cmath>
#include <string>

namespace nmqsd {

namespace {

const double kSqrt2 = std::sqrt(2.0);
constexpr double kCollapseNorm = 1e-8;

void check_stride(const TrajectoryOptions& options) {
    if (options.output_stride < 1) throw ParameterError("trajectory: output_stride must be >= 1");
}

void check_finite(const Eigen::Vector3cd& psi, double t) {
    if (!psi.allFinite()) throw DivergenceError("trajectory diverged at t = " + std::to_string(t));
}

bool finite(Complex z) {
    return std::isfinite(z.real()) && std::isfinite(z.imag());
}

Complex jplus_of(const Eigen::Vector3cd& a) {
    return kSqrt2 * (std::conj(a[0]) * a[1] + std::conj(a[1]) * a[2]) / a.squaredNorm();
}

void record(TrajectoryRecord& rec, double t, const Eigen::Vector3cd& psi) {
    rec.times.push_back(t);
    rec.states.emplace_back(psi);
}

// Rescales psi to unit norm and tracks the pre-normalization drift.
void renormalize(Eigen::Vector3cd& psi, TrajectoryRecord& rec, const TrajectoryOptions& options, double t) {
    check_finite(psi, t);
    const double norm = psi.norm();
    if (norm < kCollapseNorm) {
        throw DegenerateStateError("trajectory norm collapsed (" + std::to_string(norm) + ") at t = " +
                                   std::to_string(t));
    }
    const double drift = std::abs(norm - 1.0);
    rec.max_norm_drift = std::max(rec.max_norm_drift, drift);
    if (options.record_step_drift) rec.step_drift.push_back(drift);
    psi /= norm;
}

void reserve(TrajectoryRecord& rec, std::int64_t n_steps, const TrajectoryOptions& options) {
    const auto n_out = static_cast<std::size_t>(n_steps / options.output_stride + 1);
    rec.times.reserve(n_out);
    rec.states.reserve(n_out);
    if (options.record_step_drift) rec.step_drift.reserve(static_cast<std::size_t>(n_steps));
}

void require_ou(const CoefficientSet& coeffs, const NoisePath& noise) {
    if (coeffs.is_markov()) {
        throw ParameterError("colored-noise trajectory needs OU coefficients; use run_markov_trajectory");
    }
    if (!(coeffs.grid() == noise.grid)) throw ShapeError("trajectory: noise and coefficient grids differ");
}

void require_surface_grid(const KernelCoefficientSurface& surface, const NoisePath& noise) {
    if (!(surface.grid() == half_step_grid(noise.grid))) {
        throw ShapeError("trajectory: kernel surface must live on the half-step grid of the noise path");
    }
    if (!surface.has_P_rows()) throw StateError("trajectory: kernel surface has no stored P rows");
}

double trapezoid_weight(std::int64_t k, std::int64_t m, double h) {
    if (m == 0) return 0.0;
    return (k == 0 || k == m) ? 0.5 * h : h;
}

} // namespace

namespace detail {

Eigen::Vector3cd linear_rhs(const Eigen::Vector3cd& psi, double omega, Complex z, Complex F, Complex G,
                            Complex Q) {
    const Complex a2 = psi[0], a1 = psi[1], a0 = psi[2];
    const Complex iw(0.0, omega);
    return {
        (-iw - 2.0 * F) * a2,
        kSqrt2 * z * a2 + (2.0 * G - 2.0 * F) * a1 - 2.0 * kSqrt2 * kI * Q * a2,
        iw * a0 + kSqrt2 * z * a1,
    };
}

Eigen::Vector3cd nonlinear_rhs(const Eigen::Vector3cd& psi, double omega, Complex z_shifted, Complex F,
                               Complex G, Complex Q, Complex& jplus) {
    const Complex a2 = psi[0], a1 = psi[1], a0 = psi[2];
    const double n2 = psi.squaredNorm();
    const Complex iw(0.0, omega);
    const Complex e = kSqrt2 * (std::conj(a2) * a1 + std::conj(a1) * a0) / n2;
    jplus = e;

    // A psi for A = -i w Jz + u J- - F J+J- + v Jz J- - G J+JzJ- + w J-^2 - i Q J+J-^2.
    const Complex u = z_shifted + e * F;
    const Complex v = e * G;
    const Complex w = kI * e * Q;
    const Eigen::Vector3cd Apsi{
        (-iw - 2.0 * F) * a2,
        kSqrt2 * u * a2 + (2.0 * G - 2.0 * F) * a1 - 2.0 * kSqrt2 * kI * Q * a2,
        iw * a0 + kSqrt2 * (u - v) * a1 + 2.0 * w * a2,
    };
    // Every non-Hamiltonian term enters as Delta(X) = X - <X>; the Hamiltonian part does not.
    const double jz = (std::norm(a2) - std::norm(a0)) / n2;
    const Complex shift = psi.dot(Apsi) / n2 + iw * jz;
    return Apsi - shift * psi;
}

} // namespace detail

Complex propagate_noise_integral(Complex Q, const StageCoefficients& c, double gamma, double omega,
                                 const std::array<Complex, 3>& z, double dt) {
    auto rate = [&](int i) { return Complex(-gamma, 2.0 * omega) + 4.0 * c.F[i] - 2.0 * c.G[i]; };
    auto deriv = [&](int i, Complex q) { return rate(i) * q - kI * c.G[i] * z[i]; };
    const Complex k1 = deriv(0, Q);
    const Complex k2 = deriv(1, Q + 0.5 * dt * k1);
    const Complex k3 = deriv(1, Q + 0.5 * dt * k2);
    const Complex k4 = deriv(2, Q + dt * k3);
    const Complex out = Q + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!finite(out)) throw DivergenceError("propagate_noise_integral: non-finite memory integral");
    return out;
}

Complex propagate_noise_integral(Complex Q, const CoefficientSet& coeffs, std::int64_t step,
                                 const std::array<Complex, 3>& z_input) {
    if (coeffs.is_markov()) throw ParameterError("propagate_noise_integral: needs OU coefficients");
    const auto k = 2 * step;
    const StageCoefficients c{{coeffs.F(k), coeffs.F(k + 1), coeffs.F(k + 2)},
                              {coeffs.G(k), coeffs.G(k + 1), coeffs.G(k + 2)}};
    return propagate_noise_integral(Q, c, coeffs.gamma(), coeffs.omega(), z_input, coeffs.grid().dt());
}

TrajectoryRecord run_linear_trajectory(const CoefficientSet& coeffs, const NoisePath& noise,
                                       const StateVector& psi0, const TrajectoryOptions& options) {
    require_ou(coeffs, noise);
    check_stride(options);
    if (!psi0.is_finite()) throw ParameterError("run_linear_trajectory: psi0 is not finite");
    const TimeGrid& grid = noise.grid;
    const double dt = grid.dt();
    const double omega = coeffs.omega();

    TrajectoryRecord rec;
    reserve(rec, grid.n_steps(), options);
    Eigen::Vector3cd psi = psi0.amplitudes();
    Complex Q = 0.0;
    record(rec, 0.0, psi);

    auto deriv = [&](std::int64_t k, const Eigen::Vector3cd& y, Complex q, Complex& dq) {
        const Complex z = noise.at_half(k);
        dq = coeffs.memory_rate(k) * q - kI * coeffs.G(k) * z;
        return detail::linear_rhs(y, omega, z, coeffs.F(k), coeffs.G(k), q);
    };

    for (std::int64_t n = 0; n < grid.n_steps(); ++n) {
        const auto k = 2 * n;
        Complex q1, q2, q3, q4;
        const Eigen::Vector3cd k1 = deriv(k, psi, Q, q1);
        const Eigen::Vector3cd k2 = deriv(k + 1, psi + 0.5 * dt * k1, Q + 0.5 * dt * q1, q2);
        const Eigen::Vector3cd k3 = deriv(k + 1, psi + 0.5 * dt * k2, Q + 0.5 * dt * q2, q3);
        const Eigen::Vector3cd k4 = deriv(k + 2, psi + dt * k3, Q + dt * q3, q4);
        psi += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        Q += dt / 6.0 * (q1 + 2.0 * q2 + 2.0 * q3 + q4);
        check_finite(psi, grid.time(n + 1));
        if ((n + 1) % options.output_stride == 0) record(rec, grid.time(n + 1), psi);
    }
    return rec;
}

TrajectoryRecord run_nonlinear_trajectory(const CoefficientSet& coeffs, const NoisePath& noise,
                                          const StateVector& psi0, const TrajectoryOptions& options) {
    require_ou(coeffs, noise);
    check_stride(options);
    if (!psi0.is_normalized()) throw ParameterError("run_nonlinear_trajectory: psi0 must be normalized");
    const TimeGrid& grid = noise.grid;
    const double dt = grid.dt();
    const double omega = coeffs.omega();
    const double gamma = coeffs.gamma();

    TrajectoryRecord rec;
    reserve(rec, grid.n_steps(), options);
    Eigen::Vector3cd psi = psi0.amplitudes();
    Complex Q = 0.0, Y = 0.0;
    record(rec, 0.0, psi);

    struct Deriv {
        Eigen::Vector3cd psi;
        Complex Q, Y;
    };
    auto deriv = [&](std::int64_t k, const Eigen::Vector3cd& y, Complex q, Complex shift) {
        const Complex z_shifted = noise.at_half(k) + shift;
        Complex e;
        Deriv d;
        d.psi = detail::nonlinear_rhs(y, omega, z_shifted, coeffs.F(k), coeffs.G(k), q, e);
        d.Q = coeffs.memory_rate(k) * q - kI * coeffs.G(k) * z_shifted;
        d.Y = 0.5 * gamma * e - gamma * shift;
        return d;
    };

    for (std::int64_t n = 0; n < grid.n_steps(); ++n) {
        const auto k = 2 * n;
        const Deriv d1 = deriv(k, psi, Q, Y);
        const Deriv d2 = deriv(k + 1, psi + 0.5 * dt * d1.psi, Q + 0.5 * dt * d1.Q, Y + 0.5 * dt * d1.Y);
        const Deriv d3 = deriv(k + 1, psi + 0.5 * dt * d2.psi, Q + 0.5 * dt * d2.Q, Y + 0.5 * dt * d2.Y);
        const Deriv d4 = deriv(k + 2, psi + dt * d3.psi, Q + dt * d3.Q, Y + dt * d3.Y);
        psi += dt / 6.0 * (d1.psi + 2.0 * d2.psi + 2.0 * d3.psi + d4.psi);
        Q += dt / 6.0 * (d1.Q + 2.0 * d2.Q + 2.0 * d3.Q + d4.Q);
        Y += dt / 6.0 * (d1.Y + 2.0 * d2.Y + 2.0 * d3.Y + d4.Y);
        if (!finite(Q) || !finite(Y)) throw DivergenceError("trajectory diverged at t = " + std::to_string(grid.time(n + 1)));
        renormalize(psi, rec, options, grid.time(n + 1));
        if ((n + 1) % options.output_stride == 0) record(rec, grid.time(n + 1), psi);
    }
    return rec;
}

TrajectoryRecord run_markov_trajectory(double omega, const StateVector& psi0, const TimeGrid& grid,
                                       RandomStream& stream, const TrajectoryOptions& options) {
    check_stride(options);
    if (!psi0.is_normalized()) throw ParameterError("run_markov_trajectory: psi0 must be normalized");
    static const CoefficientSet markov = markov_coefficients();
    const Complex F = markov.F(0);
    const double dt = grid.dt();

    TrajectoryRecord rec;
    reserve(rec, grid.n_steps(), options);
    Eigen::Vector3cd psi = psi0.amplitudes();
    record(rec, 0.0, psi);

    for (std::int64_t n = 0; n < grid.n_steps(); ++n) {
        // Drift Delta(J-) 2F<J+> - F Delta(J+J-) is the colored-noise generator with the
        // shift F<J+> folded into z and G = Q = 0.
        const Complex e = jplus_of(psi);
        Complex unused;
        const Eigen::Vector3cd drift = detail::nonlinear_rhs(psi, omega, F * e, F, 0.0, 0.0, unused);
        const Complex dW = stream.complex_normal(0.5 * dt);
        const Eigen::Vector3cd lowered{0.0, kSqrt2 * psi[0], kSqrt2 * psi[1]};
        psi += dt * drift + dW * (lowered - std::conj(e) * psi);
        renormalize(psi, rec, options, grid.time(n + 1));
        if ((n + 1) % options.output_stride == 0) record(rec, grid.time(n + 1), psi);
    }
    return rec;
}

TimeGrid half_step_grid(const TimeGrid& grid) {
    return TimeGrid(grid.half_dt(), grid.n_half());
}

Complex memory_integral_general(const KernelCoefficientSurface& surface, std::span<const Complex> z_input,
                                std::int64_t t_index) {
    if (!surface.has_P_rows()) throw StateError("memory_integral_general: surface has no stored P rows");
    if (t_index < 0 || t_index >= surface.size()) {
        throw ShapeError("memory_integral_general: t-index outside the surface grid");
    }
    if (static_cast<std::int64_t>(z_input.size()) <= t_index) {
        throw ShapeError("memory_integral_general: driving samples shorter than t-index");
    }
    const double h = surface.grid().dt();
    Complex acc = 0.0;
    for (std::int64_t k = 0; k <= t_index; ++k) {
        acc += trapezoid_weight(k, t_index, h) * surface.P(t_index, k) * z_input[static_cast<std::size_t>(k)];
    }
    return acc;
}

Complex memory_integral_general(const KernelCoefficientSurface& surface, const NoisePath& noise,
                                std::int64_t t_index) {
    const double ratio = surface.grid().dt() / noise.grid.half_dt();
    if (std::abs(ratio - 1.0) > 1e-9) {
        throw ShapeError("memory_integral_general: surface step must equal the noise half step");
    }
    return memory_integral_general(surface, std::span<const Complex>(noise.samples), t_index);
}

TrajectoryRecord run_linear_trajectory(const KernelCoefficientSurface& surface, const NoisePath& noise,
                                       const StateVector& psi0, const TrajectoryOptions& options) {
    require_surface_grid(surface, noise);
    check_stride(options);
    if (!psi0.is_finite()) throw ParameterError("run_linear_trajectory: psi0 is not finite");
    const TimeGrid& grid = noise.grid;
    const double dt = grid.dt();
    const double omega = surface.omega();

    std::vector<Complex> Q(static_cast<std::size_t>(grid.n_half() + 1));
    for (std::int64_t m = 0; m <= grid.n_half(); ++m) {
        Q[static_cast<std::size_t>(m)] = memory_integral_general(surface, noise, m);
    }
    auto deriv = [&](std::int64_t m, const Eigen::Vector3cd& y) {
        return detail::linear_rhs(y, omega, noise.at_half(m), surface.F(m), surface.G(m),
                                  Q[static_cast<std::size_t>(m)]);
    };

    TrajectoryRecord rec;
    reserve(rec, grid.n_steps(), options);
    Eigen::Vector3cd psi = psi0.amplitudes();
    record(rec, 0.0, psi);
    for (std::int64_t n = 0; n < grid.n_steps(); ++n) {
        const auto m = 2 * n;
        const Eigen::Vector3cd k1 = deriv(m, psi);
        const Eigen::Vector3cd k2 = deriv(m + 1, psi + 0.5 * dt * k1);
        const Eigen::Vector3cd k3 = deriv(m + 1, psi + 0.5 * dt * k2);
        const Eigen::Vector3cd k4 = deriv(m + 2, psi + dt * k3);
        psi += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        check_finite(psi, grid.time(n + 1));
        if ((n + 1) % options.output_stride == 0) record(rec, grid.time(n + 1), psi);
    }
    return rec;
}

TrajectoryRecord run_nonlinear_trajectory(const KernelCoefficientSurface& surface, const NoisePath& noise,
                                          const StateVector& psi0, const TrajectoryOptions& options) {
    require_surface_grid(surface, noise);
    check_stride(options);
    if (!psi0.is_normalized()) throw ParameterError("run_nonlinear_trajectory: psi0 must be normalized");
    const TimeGrid& grid = noise.grid;
    const double dt = grid.dt();
    const double hs = surface.grid().dt();
    const double omega = surface.omega();
    const auto n_half = static_cast<std::size_t>(grid.n_half() + 1);

    // <J+> and shifted noise on the half-step grid; entries beyond the current step are unused.
    std::vector<Complex> jplus_hist(n_half, 0.0), zshift_hist(n_half, 0.0);

    // History parts (k < m) of Y(tau_m) and of the memory integral.
    auto history_shift = [&](std::int64_t m) {
        Complex y = 0.0;
        for (std::int64_t k = 0; k < m; ++k) {
            y += trapezoid_weight(k, m, hs) * std::conj(surface.alpha_half_lag(2 * (m - k))) *
                 jplus_hist[static_cast<std::size_t>(k)];
        }
        return y;
    };
    auto history_memory = [&](std::int64_t m) {
        Complex q = 0.0;
        for (std::int64_t k = 0; k < m; ++k) {
            q += trapezoid_weight(k, m, hs) * surface.P(m, k) * zshift_hist[static_cast<std::size_t>(k)];
        }
        return q;
    };

    struct Stage {
        Eigen::Vector3cd dpsi;
        Complex jplus, zshift;
    };
    auto deriv = [&](std::int64_t m, const Eigen::Vector3cd& y, Complex hist_shift, Complex hist_memory) {
        Stage s;
        s.jplus = jplus_of(y);
        const double w_end = trapezoid_weight(m, m, hs);
        const Complex shift = hist_shift + w_end * std::conj(surface.alpha_half_lag(0)) * s.jplus;
        s.zshift = noise.at_half(m) + shift;
        const Complex q = hist_memory + w_end * surface.P(m, m) * s.zshift;
        Complex e;
        s.dpsi = detail::nonlinear_rhs(y, omega, s.zshift, surface.F(m), surface.G(m), q, e);
        return s;
    };

    TrajectoryRecord rec;
    reserve(rec, grid.n_steps(), options);
    Eigen::Vector3cd psi = psi0.amplitudes();
    jplus_hist[0] = jplus_of(psi);
    zshift_hist[0] = noise.at_half(0);
    record(rec, 0.0, psi);

    for (std::int64_t n = 0; n < grid.n_steps(); ++n) {
        const auto m = 2 * n;
        const Stage s1 = deriv(m, psi, history_shift(m), history_memory(m));
        const Complex mid_shift = history_shift(m + 1), mid_memory = history_memory(m + 1);
        const Stage s2 = deriv(m + 1, psi + 0.5 * dt * s1.dpsi, mid_shift, mid_memory);
        const Stage s3 = deriv(m + 1, psi + 0.5 * dt * s2.dpsi, mid_shift, mid_memory);
        jplus_hist[static_cast<std::size_t>(m + 1)] = 0.5 * (s2.jplus + s3.jplus);
        zshift_hist[static_cast<std::size_t>(m + 1)] = 0.5 * (s2.zshift + s3.zshift);
        const Stage s4 = deriv(m + 2, psi + dt * s3.dpsi, history_shift(m + 2), history_memory(m + 2));
        psi += dt / 6.0 * (s1.dpsi + 2.0 * s2.dpsi + 2.0 * s3.dpsi + s4.dpsi);
        renormalize(psi, rec, options, grid.time(n + 1));

        const Complex e = jplus_of(psi);
        jplus_hist[static_cast<std::size_t>(m + 2)] = e;
        const Complex shift =
            history_shift(m + 2) + trapezoid_weight(m + 2, m + 2, hs) * std::conj(surface.alpha_half_lag(0)) * e;
        zshift_hist[static_cast<std::size_t>(m + 2)] = noise.at_half(m + 2) + shift;
        if ((n + 1) % options.output_stride == 0) record(rec, grid.time(n + 1), psi);
    }
    return rec;
}

} // namespace nmqsd
