#pragma once

#include "nmqsd/algebra.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <utility>
#include <variant>
#include <vector>

namespace nmqsd {

// Uniform integration grid starting at t = 0. Noise and coefficients live on the
// half-step grid t_k = k dt / 2, k = 0 .. 2 n_steps, so RK4 midpoints hit real samples.
class TimeGrid {
public:
    TimeGrid(double dt, std::int64_t n_steps);

    // Grid with n_steps = round(t_max / dt); rejects horizons that are not a whole number of steps.
    static TimeGrid from_horizon(double dt, double t_max);

    double dt() const { return dt_; }
    std::int64_t n_steps() const { return n_steps_; }
    double half_dt() const { return 0.5 * dt_; }
    std::int64_t n_half() const { return 2 * n_steps_; }
    double horizon() const { return static_cast<double>(n_steps_) * dt_; }
    double time(std::int64_t step) const { return static_cast<double>(step) * dt_; }
    double half_time(std::int64_t k) const { return 0.5 * static_cast<double>(k) * dt_; }

    // Half-step index of time t if it lies on the half grid (relative tolerance 1e-9), else -1.
    std::int64_t half_index_of(double t) const;

    bool operator==(const TimeGrid&) const = default;

private:
    double dt_;
    std::int64_t n_steps_;
};

// alpha(t, s) = (gamma / 2) exp(-gamma |t - s|).
struct OuKernel {
    double gamma;
};

// Stationary kernel alpha(t, s) = alpha(t - s) tabulated at non-negative lags,
// linearly interpolated; alpha(-tau) = conj(alpha(tau)).
struct TabulatedKernel {
    std::vector<double> lags;
    std::vector<Complex> values;
};

using KernelSpec = std::variant<OuKernel, TabulatedKernel>;

double ou_correlation(double gamma, double t, double s);

// alpha(lag) for any real lag (negative lags use Hermitian symmetry).
Complex kernel_value(const KernelSpec& kernel, double lag);

void validate_kernel(const KernelSpec& kernel);
// Tabulated kernels must cover the horizon at spacing <= dt / 2.
void validate_kernel_for_grid(const KernelSpec& kernel, const TimeGrid& grid);

// Reads a tabulated kernel from CSV with header `lag,re_alpha,im_alpha`.
TabulatedKernel read_tabulated_kernel(const std::filesystem::path& path);

// Per-trajectory random stream. Seeded from (master_seed, index) through splitmix64,
// so streams for different trajectory indices are independent and order-insensitive.
class RandomStream {
public:
    RandomStream(std::uint64_t master_seed, std::uint64_t index);

    // Circular complex Gaussian with the given variance per real component.
    Complex complex_normal(double component_variance);
    double normal() { return normal_(engine_); }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

struct NoisePath {
    TimeGrid grid;
    std::vector<Complex> samples;  // 2 n_steps + 1 values on the half-step grid

    Complex at_half(std::int64_t k) const { return samples[static_cast<std::size_t>(k)]; }
};

// Exact stationary complex OU recursion on the half-step grid.
NoisePath sample_ou_path(double gamma, const TimeGrid& grid, RandomStream& stream);

// Exact Gaussian sampler for any positive semidefinite stationary kernel via a
// Cholesky factor of the half-grid covariance. Factor once, sample many times.
class CholeskySampler {
public:
    CholeskySampler(const KernelSpec& kernel, const TimeGrid& grid);

    NoisePath sample(RandomStream& stream) const;
    const Eigen::MatrixXcd& factor() const { return factor_; }
    const TimeGrid& grid() const { return grid_; }

private:
    TimeGrid grid_;
    Eigen::MatrixXcd factor_;
};

NoisePath sample_cholesky_path(const KernelSpec& kernel, const TimeGrid& grid, RandomStream& stream);

// Cholesky factor L (lower) with L L^dagger = c for Hermitian PSD c. Zero pivots within
// `tol` times the largest diagonal are accepted; negative ones raise KernelError naming the minor.
Eigen::MatrixXcd psd_cholesky(const Eigen::MatrixXcd& c, double tol = 1e-10);

struct CovarianceEstimate {
    Complex cross;       // M[z*(t) z(s)]
    double cross_se;
    Complex pseudo;      // M[z(t) z(s)]
    double pseudo_se;
};

// Sample means over paths at the requested (t, s) pairs, with standard errors.
std::vector<CovarianceEstimate> empirical_covariance(std::span<const NoisePath> paths,
                                                     std::span<const std::pair<double, double>> pairs);

// Stationary estimate at a fixed half-grid lag: each path contributes the average over all
// origins, and the standard error is taken across paths.
CovarianceEstimate lagged_covariance(std::span<const NoisePath> paths, std::int64_t lag_half_steps);

void write_noise_csv(const NoisePath& path, const std::filesystem::path& file);

} // namespace nmqsd
