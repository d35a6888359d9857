#include "nmqsd/coefficients.hpp"

#include "nmqsd/errors.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <string>

namespace nmqsd {

namespace {

bool finite(Complex z) {
    return std::isfinite(z.real()) && std::isfinite(z.imag());
}

struct OuState {
    Complex F, G, Pbar, logE;
};

OuState ou_derivative(const OuState& s, double gamma, double omega) {
    const Complex decay(-gamma, omega);
    return {
        0.5 * gamma + decay * s.F + 2.0 * s.F * s.G - 2.0 * kI * s.Pbar,
        decay * s.G - 2.0 * s.F * s.F + 6.0 * s.F * s.G - 2.0 * s.G * s.G - 2.0 * kI * s.Pbar,
        -kI * (0.5 * gamma) * s.G + 2.0 * decay * s.Pbar + 4.0 * s.F * s.Pbar - 2.0 * s.G * s.Pbar,
        Complex(-gamma, 2.0 * omega) + 4.0 * s.F - 2.0 * s.G,
    };
}

OuState axpy(const OuState& y, double h, const OuState& k) {
    return {y.F + h * k.F, y.G + h * k.G, y.Pbar + h * k.Pbar, y.logE + h * k.logE};
}

// sum_j w_j x_j without conjugation.
Complex bilinear(const Eigen::VectorXcd& w, const Eigen::VectorXcd& x) {
    return (w.array() * x.array()).sum();
}

// Linear interpolation of a half-grid series at time t.
Complex interpolate_half(const std::vector<Complex>& v, const TimeGrid& grid, double t) {
    const double x = t / grid.half_dt();
    const auto exact = grid.half_index_of(t);
    if (exact >= 0) return v[static_cast<std::size_t>(exact)];
    const auto lo = static_cast<std::int64_t>(std::floor(x));
    const double w = x - static_cast<double>(lo);
    return (1.0 - w) * v[static_cast<std::size_t>(lo)] + w * v[static_cast<std::size_t>(lo + 1)];
}

} // namespace

CoefficientSet::CoefficientSet(double gamma, double omega, const TimeGrid& grid, std::vector<Complex> F,
                               std::vector<Complex> G, std::vector<Complex> Pbar, std::vector<Complex> logE)
    : kind_(Kind::OrnsteinUhlenbeck), gamma_(gamma), omega_(omega), grid_(grid), F_(std::move(F)),
      G_(std::move(G)), Pbar_(std::move(Pbar)), logE_(std::move(logE)) {
    const auto n = static_cast<std::size_t>(grid.n_half() + 1);
    if (F_.size() != n || G_.size() != n || Pbar_.size() != n || logE_.size() != n) {
        throw ShapeError("CoefficientSet: series length does not match the half-step grid");
    }
}

CoefficientSet CoefficientSet::markov() {
    CoefficientSet c;
    c.kind_ = Kind::Markov;
    return c;
}

const TimeGrid& CoefficientSet::grid() const {
    if (!grid_) throw StateError("CoefficientSet: the Markov set has no time grid");
    return *grid_;
}

Complex CoefficientSet::F(std::int64_t k) const {
    return is_markov() ? Complex(0.5) : F_[static_cast<std::size_t>(k)];
}

Complex CoefficientSet::G(std::int64_t k) const {
    return is_markov() ? Complex(0.0) : G_[static_cast<std::size_t>(k)];
}

Complex CoefficientSet::Pbar(std::int64_t k) const {
    return is_markov() ? Complex(0.0) : Pbar_[static_cast<std::size_t>(k)];
}

Complex CoefficientSet::logE(std::int64_t k) const {
    if (is_markov()) throw StateError("CoefficientSet: the Markov set has no memory exponent");
    return logE_[static_cast<std::size_t>(k)];
}

Complex CoefficientSet::memory_rate(std::int64_t k) const {
    return Complex(-gamma_, 2.0 * omega_) + 4.0 * F(k) - 2.0 * G(k);
}

CoefficientSet integrate_ou_coefficients(double gamma, double omega, const TimeGrid& grid) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
        throw ParameterError("integrate_ou_coefficients: gamma must be positive");
    }
    if (!std::isfinite(omega)) throw ParameterError("integrate_ou_coefficients: omega must be finite");
    const auto n = static_cast<std::size_t>(grid.n_half() + 1);
    std::vector<Complex> F(n), G(n), Pbar(n), logE(n);
    const double h = grid.half_dt();

    OuState y{0.0, 0.0, 0.0, 0.0};
    F[0] = G[0] = Pbar[0] = logE[0] = 0.0;
    for (std::size_t k = 1; k < n; ++k) {
        const OuState k1 = ou_derivative(y, gamma, omega);
        const OuState k2 = ou_derivative(axpy(y, 0.5 * h, k1), gamma, omega);
        const OuState k3 = ou_derivative(axpy(y, 0.5 * h, k2), gamma, omega);
        const OuState k4 = ou_derivative(axpy(y, h, k3), gamma, omega);
        y.F += h / 6.0 * (k1.F + 2.0 * k2.F + 2.0 * k3.F + k4.F);
        y.G += h / 6.0 * (k1.G + 2.0 * k2.G + 2.0 * k3.G + k4.G);
        y.Pbar += h / 6.0 * (k1.Pbar + 2.0 * k2.Pbar + 2.0 * k3.Pbar + k4.Pbar);
        y.logE += h / 6.0 * (k1.logE + 2.0 * k2.logE + 2.0 * k3.logE + k4.logE);
        if (!finite(y.F) || !finite(y.G) || !finite(y.Pbar) || !finite(y.logE)) {
            throw DivergenceError("OU coefficients diverged at t = " +
                                  std::to_string(grid.half_time(static_cast<std::int64_t>(k))));
        }
        F[k] = y.F;
        G[k] = y.G;
        Pbar[k] = y.Pbar;
        logE[k] = y.logE;
    }
    return CoefficientSet(gamma, omega, grid, std::move(F), std::move(G), std::move(Pbar), std::move(logE));
}

CoefficientSet markov_coefficients() {
    return CoefficientSet::markov();
}

Complex closed_form_P(const CoefficientSet& coeffs, double t, double s_prime) {
    if (coeffs.is_markov()) return 0.0;
    if (s_prime > t) throw DomainError("closed_form_P: s' > t");
    const auto& grid = coeffs.grid();
    if (s_prime < 0.0 || t > grid.horizon() * (1.0 + 1e-12)) {
        throw DomainError("closed_form_P: times outside [0, horizon]");
    }
    const Complex g = interpolate_half(coeffs.G_series(), grid, s_prime);
    const Complex log_ratio =
        interpolate_half(coeffs.logE_series(), grid, t) - interpolate_half(coeffs.logE_series(), grid, s_prime);
    return -kI * g * std::exp(log_ratio);
}

KernelCoefficientSurface integrate_general_kernel(const KernelSpec& kernel, double omega, const TimeGrid& grid) {
    using RowMat = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Block = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;

    validate_kernel_for_grid(kernel, grid);
    if (!std::isfinite(omega)) throw ParameterError("integrate_general_kernel: omega must be finite");
    const std::int64_t N = grid.n_steps();
    if (N > kMaxSurfaceSteps) {
        throw ParameterError("integrate_general_kernel: n_steps " + std::to_string(N) + " exceeds " +
                             std::to_string(kMaxSurfaceSteps));
    }
    const double h = grid.dt();
    const Eigen::Index size = N + 1;

    KernelCoefficientSurface out(grid);
    out.omega_ = omega;
    out.alpha_half_.resize(static_cast<std::size_t>(2 * N + 1));
    for (std::int64_t m = 0; m <= 2 * N; ++m) {
        out.alpha_half_[static_cast<std::size_t>(m)] = kernel_value(kernel, 0.5 * h * static_cast<double>(m));
    }
    const auto& alpha = out.alpha_half_;
    const auto tri_size = static_cast<std::size_t>(size * (size + 1) / 2);
    out.f_.reserve(tri_size);
    out.g_.reserve(tri_size);
    out.P_.reserve(tri_size);
    out.F_.reserve(static_cast<std::size_t>(size));
    out.G_.reserve(static_cast<std::size_t>(size));
    out.Pbar_.reserve(static_cast<std::size_t>(size));

    // Current time front: f(t_n, s_j), g(t_n, s_j) and p(t_n, s_j, s'_k) for j, k <= n.
    Eigen::VectorXcd f = Eigen::VectorXcd::Zero(size);
    Eigen::VectorXcd g = Eigen::VectorXcd::Zero(size);
    std::vector<Complex> p_storage(static_cast<std::size_t>(size * size), Complex(0.0));
    Eigen::RowVectorXcd P_now = Eigen::RowVectorXcd::Zero(size);  // P(t_n, s'_k)
    Complex F_now = 0.0, G_now = 0.0;

    f[0] = 1.0;
    out.f_.push_back(1.0);
    out.g_.push_back(0.0);
    out.P_.push_back(0.0);
    out.F_.push_back(0.0);
    out.G_.push_back(0.0);
    out.Pbar_.push_back(0.0);

    // Quadrature weights times kernel for a stage at t_n + c h, c in {0, 1/2, 1}:
    // trapezoid on [0, t_n] plus a trapezoid strip on [t_n, t_n + c h].
    auto stage_weights = [&](std::int64_t n, int half_offset) {
        const double c = 0.5 * half_offset;
        Eigen::VectorXcd w(n + 1);
        for (std::int64_t j = 0; j <= n; ++j) {
            double base = (n == 0) ? 0.0 : ((j == 0 || j == n) ? 0.5 * h : h);
            if (j == n) base += 0.5 * c * h;
            w[j] = base * alpha[static_cast<std::size_t>(2 * (n - j) + half_offset)];
        }
        return w;
    };

    auto check_row = [&](const Eigen::RowVectorXcd& row, std::int64_t len, double t) {
        for (std::int64_t k = 0; k < len; ++k) {
            if (!finite(row[k])) {
                throw DivergenceError("general-kernel coefficients diverged at (t, s) = (" + std::to_string(t) +
                                      ", " + std::to_string(grid.time(k)) + ")");
            }
        }
    };

    constexpr std::array<double, 4> c_stage{0.0, 0.5, 0.5, 1.0};
    constexpr std::array<int, 4> half_offset{0, 1, 1, 2};
    constexpr std::array<double, 4> b_stage{1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0};

    for (std::int64_t n = 0; n < N; ++n) {
        const Eigen::Index m = n + 1;
        Block p(p_storage.data(), m, m, Eigen::OuterStride<>(size));

        const Eigen::VectorXcd f0 = f.head(m);
        const Eigen::VectorXcd g0 = g.head(m);

        // RK4 stage s has p^(s) = mu_s p + sum_{r<s} nu_{s,r} a^(r) (P^(r))^T, where a = f - g,
        // so stage reductions need only products of weights with the step-start slice.
        std::array<Eigen::VectorXcd, 4> a_stage;
        std::array<Eigen::RowVectorXcd, 4> P_stage;
        std::array<Complex, 4> lambda{}, mu{};
        std::array<std::array<Complex, 4>, 4> nu{};
        Eigen::VectorXcd kf_sum = Eigen::VectorXcd::Zero(m), kg_sum = Eigen::VectorXcd::Zero(m);
        Eigen::VectorXcd kf_prev, kg_prev;
        Eigen::RowVectorXcd Wp;
        Eigen::VectorXcd W;

        mu[0] = 1.0;
        for (int s = 0; s < 4; ++s) {
            Eigen::VectorXcd fs = f0, gs = g0;
            if (s > 0) {
                fs += c_stage[s] * h * kf_prev;
                gs += c_stage[s] * h * kg_prev;
            }
            Complex Fs, Gs;
            Eigen::RowVectorXcd Ps;
            if (s == 0) {
                Fs = F_now;
                Gs = G_now;
                Ps = P_now.head(m);
            } else {
                if (s != 2) {
                    W = stage_weights(n, half_offset[s]);
                    Wp = W.transpose() * p;
                }
                Fs = bilinear(W, fs) + 0.5 * c_stage[s] * h * alpha[0];
                Gs = bilinear(W, gs);
                Ps = mu[s] * Wp;
                for (int r = 0; r < s; ++r) {
                    Ps += (nu[s][r] * bilinear(W, a_stage[r])) * P_stage[r];
                }
                check_row(Ps, m, grid.time(n) + c_stage[s] * h);
            }
            const Complex iw(0.0, omega);
            kf_prev = iw * fs + 2.0 * Gs * fs - 2.0 * kI * Ps.transpose();
            kg_prev = iw * gs - 2.0 * Fs * fs + 2.0 * Fs * gs + 4.0 * Gs * fs - 2.0 * Gs * gs -
                      2.0 * kI * Ps.transpose();
            kf_sum += b_stage[s] * kf_prev;
            kg_sum += b_stage[s] * kg_prev;
            lambda[s] = 2.0 * iw + 2.0 * Fs;
            a_stage[s] = fs - gs;
            P_stage[s] = Ps;
            if (s < 3) {
                const double ch = c_stage[s + 1] * h;
                mu[s + 1] = 1.0 + ch * lambda[s] * mu[s];
                for (int r = 0; r < s; ++r) nu[s + 1][r] = ch * lambda[s] * nu[s][r];
                nu[s + 1][s] = 2.0 * ch;
            }
        }

        // Step completion: p <- kappa p + sum_r beta_r a^(r) (P^(r))^T.
        Complex kappa = 1.0;
        for (int s = 0; s < 4; ++s) kappa += h * b_stage[s] * lambda[s] * mu[s];
        Eigen::MatrixXcd A(m, 4), B(m, 4);
        for (int r = 0; r < 4; ++r) {
            Complex beta = 2.0 * h * b_stage[r];
            for (int s = r + 1; s < 4; ++s) beta += h * b_stage[s] * lambda[s] * nu[s][r];
            A.col(r) = beta * a_stage[r];
            B.col(r) = P_stage[r].transpose();
        }
        p *= kappa;
        p.noalias() += A * B.transpose();
        f.head(m) = f0 + h * kf_sum;
        g.head(m) = g0 + h * kg_sum;

        // Boundary seeding at t_{n+1}: f(s,s) = 1, g(s,s) = 0, p(t,t,s') = 0, p(t,s,t) = -i g(t,s).
        const std::int64_t n1 = n + 1;
        f[n1] = 1.0;
        g[n1] = 0.0;
        for (std::int64_t k = 0; k <= n1; ++k) p_storage[static_cast<std::size_t>(n1 * size + k)] = 0.0;
        for (std::int64_t j = 0; j <= n; ++j) p_storage[static_cast<std::size_t>(j * size + n1)] = -kI * g[j];

        // Reductions at t_{n+1}.
        const Eigen::Index m1 = n1 + 1;
        Block p_new(p_storage.data(), m1, m1, Eigen::OuterStride<>(size));
        Eigen::VectorXcd Wend(m1);
        Eigen::VectorXd trap(m1);
        for (std::int64_t j = 0; j <= n1; ++j) {
            trap[j] = (j == 0 || j == n1) ? 0.5 * h : h;
            Wend[j] = trap[j] * alpha[static_cast<std::size_t>(2 * (n1 - j))];
        }
        F_now = bilinear(Wend, f.head(m1));
        G_now = bilinear(Wend, g.head(m1));
        P_now.head(m1) = Wend.transpose() * p_new;
        check_row(P_now, m1, grid.time(n1));
        Complex pbar = 0.0;
        for (std::int64_t k = 0; k <= n1; ++k) pbar += Wend[k] * P_now[k];
        if (!finite(F_now) || !finite(G_now) || !finite(pbar)) {
            throw DivergenceError("general-kernel reductions diverged at t = " + std::to_string(grid.time(n1)));
        }

        out.F_.push_back(F_now);
        out.G_.push_back(G_now);
        out.Pbar_.push_back(pbar);
        for (std::int64_t j = 0; j <= n1; ++j) {
            out.f_.push_back(f[j]);
            out.g_.push_back(g[j]);
            out.P_.push_back(P_now[j]);
        }
    }
    return out;
}

void write_coefficients_csv(const CoefficientSet& coeffs, const std::filesystem::path& file) {
    const auto& grid = coeffs.grid();
    std::ofstream out(file);
    if (!out) throw Error("cannot open " + file.string() + " for writing");
    out << "t,re_F,im_F,re_G,im_G,re_Pbar,im_Pbar\n" << std::setprecision(17);
    for (std::int64_t k = 0; k <= grid.n_half(); ++k) {
        out << grid.half_time(k) << ',' << coeffs.F(k).real() << ',' << coeffs.F(k).imag() << ','
            << coeffs.G(k).real() << ',' << coeffs.G(k).imag() << ',' << coeffs.Pbar(k).real() << ','
            << coeffs.Pbar(k).imag() << '\n';
    }
    if (!out) throw Error("write failed for " + file.string());
}

} // namespace nmqsd
