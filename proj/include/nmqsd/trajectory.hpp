#pragma once

#include "nmqsd/algebra.hpp"
#include "nmqsd/coefficients.hpp"
#include "nmqsd/noise.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace nmqsd {

struct TrajectoryOptions {
    std::int64_t output_stride = 1;   // record every `output_stride` integration steps
    bool record_step_drift = false;   // keep |norm - 1| before renormalization for every step
};

struct TrajectoryRecord {
    std::vector<double> times;
    std::vector<StateVector> states;   // raw states (unnormalized in linear mode)
    double max_norm_drift = 0.0;       // nonlinear / Markov modes: max |norm - 1| before renormalization
    std::vector<double> step_drift;    // only when requested
};

// Auxiliary state carried alongside psi.
struct TrajectoryState {
    StateVector psi;
    Complex Q = 0.0;   // memory integral int_0^t P(t, s') z_{s'} ds' (z shifted in nonlinear mode)
    Complex Y = 0.0;   // noise shift int_0^t alpha*(t, s) <J+>_s ds (nonlinear mode)
    double t = 0.0;
};

// Coefficients sampled at the three RK4 stage times of one step (start, midpoint, end).
struct StageCoefficients {
    std::array<Complex, 3> F;
    std::array<Complex, 3> G;
};

// One RK4 step of dQ/dt = (-gamma + 2 i omega + 4 F - 2 G) Q - i G z_input, with the
// coefficients and the driving samples given at start, midpoint and end of the step.
Complex propagate_noise_integral(Complex Q, const StageCoefficients& coeffs, double gamma, double omega,
                                 const std::array<Complex, 3>& z_input, double dt);

// Same, reading F and G from the OU coefficient set for integration step `step`.
Complex propagate_noise_integral(Complex Q, const CoefficientSet& coeffs, std::int64_t step,
                                 const std::array<Complex, 3>& z_input);

// Time-local linear QSD driven by z, OU fast path. Records raw psi.
TrajectoryRecord run_linear_trajectory(const CoefficientSet& coeffs, const NoisePath& noise,
                                       const StateVector& psi0, const TrajectoryOptions& options = {});

// Norm-preserving nonlinear QSD driven by the shifted noise z + Y, OU fast path.
TrajectoryRecord run_nonlinear_trajectory(const CoefficientSet& coeffs, const NoisePath& noise,
                                          const StateVector& psi0, const TrajectoryOptions& options = {});

// White-noise QSD (Euler-Maruyama, renormalized every step) with constant Markov coefficients.
TrajectoryRecord run_markov_trajectory(double omega, const StateVector& psi0, const TimeGrid& grid,
                                       RandomStream& stream, const TrajectoryOptions& options = {});

// Trapezoidal quadrature of P(t_i, s'_k) z(s'_k) over the surface grid up to index t_index.
Complex memory_integral_general(const KernelCoefficientSurface& surface, std::span<const Complex> z_input,
                                std::int64_t t_index);

// Same with samples taken from a noise path whose half-step grid coincides with the surface grid.
Complex memory_integral_general(const KernelCoefficientSurface& surface, const NoisePath& noise,
                                std::int64_t t_index);

// General-kernel variants. The surface must live on the half-step grid of the noise path,
// i.e. surface step = dt / 2 and surface n_steps = 2 n_steps; build it with
// integrate_general_kernel(kernel, omega, half_step_grid(grid)).
TimeGrid half_step_grid(const TimeGrid& grid);

TrajectoryRecord run_linear_trajectory(const KernelCoefficientSurface& surface, const NoisePath& noise,
                                       const StateVector& psi0, const TrajectoryOptions& options = {});

TrajectoryRecord run_nonlinear_trajectory(const KernelCoefficientSurface& surface, const NoisePath& noise,
                                          const StateVector& psi0, const TrajectoryOptions& options = {});

namespace detail {

// Right-hand sides used by the integrators, exposed for testing against the dense operator form.
Eigen::Vector3cd linear_rhs(const Eigen::Vector3cd& psi, double omega, Complex z, Complex F, Complex G,
                            Complex Q);
// `jplus` receives <J+> of the (normalized) state.
Eigen::Vector3cd nonlinear_rhs(const Eigen::Vector3cd& psi, double omega, Complex z_shifted, Complex F,
                               Complex G, Complex Q, Complex& jplus);

} // namespace detail

} // namespace nmqsd
