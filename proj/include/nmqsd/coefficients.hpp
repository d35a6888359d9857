#pragma once

#include "nmqsd/algebra.hpp"
#include "nmqsd/noise.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace nmqsd {

// Time-dependent coefficients F(t), G(t), Pbar(t) of the time-local QSD generator.
//
// The OU variant stores values on the half-step grid together with
// log E(t) = int_0^t [-gamma + 2 i omega + 4 F(s) - 2 G(s)] ds, from which the memory
// kernel P(t, s') = -i G(s') E(t) / E(s') follows. The Markov variant is the constant
// set F = 1/2, G = Pbar = 0.
class CoefficientSet {
public:
    enum class Kind { OrnsteinUhlenbeck, Markov };

    // Raw OU-variant series; all four vectors must have grid.n_half() + 1 entries.
    CoefficientSet(double gamma, double omega, const TimeGrid& grid, std::vector<Complex> F,
                   std::vector<Complex> G, std::vector<Complex> Pbar, std::vector<Complex> logE);

    static CoefficientSet markov();

    Kind kind() const { return kind_; }
    bool is_markov() const { return kind_ == Kind::Markov; }
    double gamma() const { return gamma_; }
    double omega() const { return omega_; }
    // Throws StateError for the Markov variant.
    const TimeGrid& grid() const;

    Complex F(std::int64_t half_index) const;
    Complex G(std::int64_t half_index) const;
    Complex Pbar(std::int64_t half_index) const;
    Complex logE(std::int64_t half_index) const;

    // Rate multiplying Q in dQ/dt: -gamma + 2 i omega + 4 F - 2 G.
    Complex memory_rate(std::int64_t half_index) const;

    const std::vector<Complex>& F_series() const { return F_; }
    const std::vector<Complex>& G_series() const { return G_; }
    const std::vector<Complex>& Pbar_series() const { return Pbar_; }
    const std::vector<Complex>& logE_series() const { return logE_; }

private:
    CoefficientSet() = default;

    Kind kind_ = Kind::OrnsteinUhlenbeck;
    double gamma_ = 0.0;
    double omega_ = 0.0;
    std::optional<TimeGrid> grid_;
    std::vector<Complex> F_, G_, Pbar_, logE_;
};

// Classical RK4 at half-step resolution for the OU coefficient ODEs with F = G = Pbar = 0 at t = 0.
CoefficientSet integrate_ou_coefficients(double gamma, double omega, const TimeGrid& grid);

CoefficientSet markov_coefficients();

// P(t, s') = -i G(s') exp(log E(t) - log E(s')). Off-grid times are linearly interpolated.
Complex closed_form_P(const CoefficientSet& coeffs, double t, double s_prime);

// Solution of the f, g, p coefficient PDEs for a general stationary kernel on the
// integer points of `grid`. f and g are kept as lower-triangular histories, P(t_i, s'_k)
// as rows; p itself is only held for the current time front.
class KernelCoefficientSurface {
public:
    const TimeGrid& grid() const { return grid_; }
    double omega() const { return omega_; }
    std::int64_t size() const { return grid_.n_steps() + 1; }

    Complex f(std::int64_t i, std::int64_t j) const { return f_[tri(i, j)]; }
    Complex g(std::int64_t i, std::int64_t j) const { return g_[tri(i, j)]; }
    Complex P(std::int64_t i, std::int64_t k) const { return P_[tri(i, k)]; }
    Complex F(std::int64_t i) const { return F_[static_cast<std::size_t>(i)]; }
    Complex G(std::int64_t i) const { return G_[static_cast<std::size_t>(i)]; }
    Complex Pbar(std::int64_t i) const { return Pbar_[static_cast<std::size_t>(i)]; }
    // alpha at lag m * dt / 2 of the surface grid.
    Complex alpha_half_lag(std::int64_t m) const { return alpha_half_[static_cast<std::size_t>(m)]; }
    bool has_P_rows() const { return !P_.empty(); }

private:
    friend KernelCoefficientSurface integrate_general_kernel(const KernelSpec&, double, const TimeGrid&);

    explicit KernelCoefficientSurface(const TimeGrid& grid) : grid_(grid) {}

    static std::size_t tri(std::int64_t i, std::int64_t j) {
        return static_cast<std::size_t>(i * (i + 1) / 2 + j);
    }

    TimeGrid grid_;
    double omega_ = 0.0;
    std::vector<Complex> alpha_half_;
    std::vector<Complex> f_, g_, P_;
    std::vector<Complex> F_, G_, Pbar_;
};

inline constexpr std::int64_t kMaxSurfaceSteps = 4096;

KernelCoefficientSurface integrate_general_kernel(const KernelSpec& kernel, double omega, const TimeGrid& grid);

// CSV `t,re_F,im_F,re_G,im_G,re_Pbar,im_Pbar` on the half-step grid.
void write_coefficients_csv(const CoefficientSet& coeffs, const std::filesystem::path& file);

} // namespace nmqsd
