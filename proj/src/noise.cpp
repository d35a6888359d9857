#include "nmqsd/noise.hpp"

#include "nmqsd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

namespace nmqsd {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Complex interpolate_table(const TabulatedKernel& k, double lag) {
    const auto& lags = k.lags;
    if (lag > lags.back() * (1.0 + 1e-12) + 1e-14) {
        throw DomainError("tabulated kernel: lag " + std::to_string(lag) + " beyond table end " +
                          std::to_string(lags.back()));
    }
    if (lag <= lags.front()) return k.values.front();
    auto it = std::upper_bound(lags.begin(), lags.end(), lag);
    if (it == lags.end()) return k.values.back();
    const auto hi = static_cast<std::size_t>(it - lags.begin());
    const std::size_t lo = hi - 1;
    const double w = (lag - lags[lo]) / (lags[hi] - lags[lo]);
    return (1.0 - w) * k.values[lo] + w * k.values[hi];
}

std::int64_t require_half_index(const TimeGrid& grid, double t) {
    const auto k = grid.half_index_of(t);
    if (k < 0) throw ShapeError("time " + std::to_string(t) + " is not on the half-step grid");
    return k;
}

} // namespace

TimeGrid::TimeGrid(double dt, std::int64_t n_steps) : dt_(dt), n_steps_(n_steps) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ParameterError("TimeGrid: dt must be positive");
    if (n_steps < 1) throw ParameterError("TimeGrid: n_steps must be >= 1");
}

TimeGrid TimeGrid::from_horizon(double dt, double t_max) {
    if (!(dt > 0.0)) throw ParameterError("TimeGrid: dt must be positive");
    if (!(t_max > 0.0)) throw ParameterError("TimeGrid: t_max must be positive");
    const double ratio = t_max / dt;
    const auto n = static_cast<std::int64_t>(std::llround(ratio));
    if (n < 1 || std::abs(ratio - static_cast<double>(n)) > 1e-9 * std::max(1.0, ratio)) {
        throw ParameterError("TimeGrid: t_max " + std::to_string(t_max) + " is not a whole number of steps dt " +
                             std::to_string(dt));
    }
    return TimeGrid(dt, n);
}

std::int64_t TimeGrid::half_index_of(double t) const {
    const double x = t / half_dt();
    const auto k = static_cast<std::int64_t>(std::llround(x));
    if (k < 0 || k > n_half()) return -1;
    if (std::abs(x - static_cast<double>(k)) > 1e-9 * std::max(1.0, std::abs(x))) return -1;
    return k;
}

double ou_correlation(double gamma, double t, double s) {
    if (!(gamma > 0.0)) throw ParameterError("ou_correlation: gamma must be positive");
    return 0.5 * gamma * std::exp(-gamma * std::abs(t - s));
}

Complex kernel_value(const KernelSpec& kernel, double lag) {
    if (const auto* ou = std::get_if<OuKernel>(&kernel)) {
        return ou_correlation(ou->gamma, lag, 0.0);
    }
    const auto& tab = std::get<TabulatedKernel>(kernel);
    if (lag < 0.0) return std::conj(interpolate_table(tab, -lag));
    return interpolate_table(tab, lag);
}

void validate_kernel(const KernelSpec& kernel) {
    if (const auto* ou = std::get_if<OuKernel>(&kernel)) {
        if (!(ou->gamma > 0.0) || !std::isfinite(ou->gamma)) {
            throw ParameterError("OU kernel: gamma must be positive");
        }
        return;
    }
    const auto& tab = std::get<TabulatedKernel>(kernel);
    if (tab.lags.size() < 2 || tab.lags.size() != tab.values.size()) {
        throw ParameterError("tabulated kernel: need >= 2 lags and matching values");
    }
    if (tab.lags.front() != 0.0) throw ParameterError("tabulated kernel: first lag must be 0");
    for (std::size_t i = 1; i < tab.lags.size(); ++i) {
        if (!(tab.lags[i] > tab.lags[i - 1])) {
            throw ParameterError("tabulated kernel: lags must be strictly increasing");
        }
    }
    for (const auto& v : tab.values) {
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
            throw ParameterError("tabulated kernel: non-finite value");
        }
    }
    const Complex a0 = tab.values.front();
    if (!(a0.real() >= 0.0) || std::abs(a0.imag()) > 1e-12 * std::max(1.0, a0.real())) {
        throw ParameterError("tabulated kernel: alpha(0) must be real and non-negative");
    }
}

void validate_kernel_for_grid(const KernelSpec& kernel, const TimeGrid& grid) {
    validate_kernel(kernel);
    const auto* tab = std::get_if<TabulatedKernel>(&kernel);
    if (!tab) return;
    if (tab->lags.back() < grid.horizon() * (1.0 - 1e-12)) {
        throw ShapeError("tabulated kernel: table ends at lag " + std::to_string(tab->lags.back()) +
                         " before the horizon " + std::to_string(grid.horizon()));
    }
    for (std::size_t i = 1; i < tab->lags.size(); ++i) {
        if (tab->lags[i] - tab->lags[i - 1] > grid.half_dt() * (1.0 + 1e-9)) {
            throw ShapeError("tabulated kernel: spacing exceeds dt/2 near lag " + std::to_string(tab->lags[i]));
        }
    }
}

TabulatedKernel read_tabulated_kernel(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("kernel: cannot open tabulated kernel file " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "lag,re_alpha,im_alpha") {
        throw ConfigError("kernel: " + path.string() + " must start with header lag,re_alpha,im_alpha");
    }
    TabulatedKernel k;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::istringstream ss(line);
        double lag = 0, re = 0, im = 0;
        char c1 = 0, c2 = 0;
        if (!(ss >> lag >> c1 >> re >> c2 >> im) || c1 != ',' || c2 != ',') {
            throw ConfigError("kernel: malformed row " + std::to_string(row) + " in " + path.string());
        }
        k.lags.push_back(lag);
        k.values.emplace_back(re, im);
    }
    validate_kernel(k);
    return k;
}

RandomStream::RandomStream(std::uint64_t master_seed, std::uint64_t index) {
    std::uint64_t state = master_seed;
    const std::uint64_t a = splitmix64(state);
    state ^= index * 0xD1B54A32D192ED03ULL;
    const std::uint64_t b = splitmix64(state);
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    engine_.seed(seq);
}

Complex RandomStream::complex_normal(double component_variance) {
    const double sd = std::sqrt(component_variance);
    const double re = normal_(engine_);
    const double im = normal_(engine_);
    return {sd * re, sd * im};
}

NoisePath sample_ou_path(double gamma, const TimeGrid& grid, RandomStream& stream) {
    if (!(gamma > 0.0)) throw ParameterError("sample_ou_path: gamma must be positive");
    const double decay = std::exp(-gamma * grid.half_dt());
    const double stationary_var = gamma / 4.0;
    // 1 - e^{-2 gamma Delta} via expm1 to keep precision for small gamma Delta.
    const double innovation_var = stationary_var * -std::expm1(-2.0 * gamma * grid.half_dt());

    NoisePath path{grid, {}};
    path.samples.resize(static_cast<std::size_t>(grid.n_half() + 1));
    path.samples[0] = stream.complex_normal(stationary_var);
    for (std::size_t k = 1; k < path.samples.size(); ++k) {
        path.samples[k] = decay * path.samples[k - 1] + stream.complex_normal(innovation_var);
    }
    return path;
}

Eigen::MatrixXcd psd_cholesky(const Eigen::MatrixXcd& c, double tol) {
    const Eigen::Index n = c.rows();
    if (c.cols() != n) throw ShapeError("psd_cholesky: matrix is not square");
    const double scale = std::max(c.diagonal().real().cwiseAbs().maxCoeff(), 1e-300);
    Eigen::MatrixXcd l = Eigen::MatrixXcd::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        Complex d = c(j, j);
        for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * std::conj(l(j, k));
        const double pivot = d.real();
        if (pivot < -tol * scale) {
            throw KernelError("kernel covariance is not positive semidefinite: leading minor " +
                              std::to_string(j + 1) + " has pivot " + std::to_string(pivot));
        }
        if (pivot <= tol * scale) {
            // Semidefinite direction: the column stays zero, which requires a vanishing remainder
            // (|c_ij|^2 <= c_ii c_jj bounds it by sqrt(tol) * scale for a PSD matrix).
            for (Eigen::Index i = j + 1; i < n; ++i) {
                Complex s = c(i, j);
                for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * std::conj(l(j, k));
                if (std::abs(s) > 10.0 * std::sqrt(tol) * scale) {
                    throw KernelError("kernel covariance is not positive semidefinite: leading minor " +
                                      std::to_string(i + 1) + " is indefinite (zero pivot at " +
                                      std::to_string(j + 1) + ")");
                }
            }
            continue;
        }
        const double ljj = std::sqrt(pivot);
        l(j, j) = ljj;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            Complex s = c(i, j);
            for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * std::conj(l(j, k));
            l(i, j) = s / ljj;
        }
    }
    return l;
}

CholeskySampler::CholeskySampler(const KernelSpec& kernel, const TimeGrid& grid) : grid_(grid) {
    validate_kernel_for_grid(kernel, grid);
    const Eigen::Index n = grid.n_half() + 1;
    // z = L w with M[w w^dagger] = 1 gives M[z_a z_b^*] = (L L^dagger)_{ab}; we need
    // M[z_a^* z_b] = alpha(t_a, t_b), i.e. (L L^dagger)_{ba} = alpha(t_a - t_b).
    Eigen::MatrixXcd cov(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
        for (Eigen::Index b = 0; b < n; ++b) {
            cov(a, b) = kernel_value(kernel, grid.half_time(b) - grid.half_time(a));
        }
    }
    factor_ = psd_cholesky(cov);
}

NoisePath CholeskySampler::sample(RandomStream& stream) const {
    const Eigen::Index n = factor_.rows();
    Eigen::VectorXcd w(n);
    for (Eigen::Index i = 0; i < n; ++i) w[i] = stream.complex_normal(0.5);
    const Eigen::VectorXcd z = factor_.triangularView<Eigen::Lower>() * w;
    NoisePath path{grid_, std::vector<Complex>(z.data(), z.data() + n)};
    return path;
}

NoisePath sample_cholesky_path(const KernelSpec& kernel, const TimeGrid& grid, RandomStream& stream) {
    return CholeskySampler(kernel, grid).sample(stream);
}

std::vector<CovarianceEstimate> empirical_covariance(std::span<const NoisePath> paths,
                                                     std::span<const std::pair<double, double>> pairs) {
    if (paths.size() < 2) throw ParameterError("empirical_covariance: need at least 2 paths");
    const TimeGrid& grid = paths.front().grid;
    for (const auto& p : paths) {
        if (!(p.grid == grid) || p.samples.size() != paths.front().samples.size()) {
            throw ShapeError("empirical_covariance: paths are not on a common grid");
        }
    }
    const double m = static_cast<double>(paths.size());
    std::vector<CovarianceEstimate> out;
    out.reserve(pairs.size());
    for (const auto& [t, s] : pairs) {
        const auto kt = require_half_index(grid, t);
        const auto ks = require_half_index(grid, s);
        Complex cross_sum = 0, pseudo_sum = 0;
        for (const auto& p : paths) {
            cross_sum += std::conj(p.at_half(kt)) * p.at_half(ks);
            pseudo_sum += p.at_half(kt) * p.at_half(ks);
        }
        const Complex cross_mean = cross_sum / m;
        const Complex pseudo_mean = pseudo_sum / m;
        double cross_ss = 0, pseudo_ss = 0;
        for (const auto& p : paths) {
            cross_ss += std::norm(std::conj(p.at_half(kt)) * p.at_half(ks) - cross_mean);
            pseudo_ss += std::norm(p.at_half(kt) * p.at_half(ks) - pseudo_mean);
        }
        out.push_back({cross_mean, std::sqrt(cross_ss / (m - 1.0) / m), pseudo_mean,
                       std::sqrt(pseudo_ss / (m - 1.0) / m)});
    }
    return out;
}

CovarianceEstimate lagged_covariance(std::span<const NoisePath> paths, std::int64_t lag_half_steps) {
    if (paths.size() < 2) throw ParameterError("lagged_covariance: need at least 2 paths");
    const TimeGrid& grid = paths.front().grid;
    if (lag_half_steps < 0 || lag_half_steps > grid.n_half()) {
        throw ShapeError("lagged_covariance: lag outside the grid");
    }
    const std::int64_t n_origins = grid.n_half() + 1 - lag_half_steps;
    std::vector<Complex> cross(paths.size()), pseudo(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const auto& p = paths[i];
        if (!(p.grid == grid)) throw ShapeError("lagged_covariance: paths are not on a common grid");
        Complex c = 0, q = 0;
        for (std::int64_t k = 0; k < n_origins; ++k) {
            c += std::conj(p.at_half(k)) * p.at_half(k + lag_half_steps);
            q += p.at_half(k) * p.at_half(k + lag_half_steps);
        }
        cross[i] = c / static_cast<double>(n_origins);
        pseudo[i] = q / static_cast<double>(n_origins);
    }
    auto mean_se = [](const std::vector<Complex>& v) {
        const double m = static_cast<double>(v.size());
        Complex sum = 0;
        for (const auto& x : v) sum += x;
        const Complex mean = sum / m;
        double ss = 0;
        for (const auto& x : v) ss += std::norm(x - mean);
        return std::pair{mean, std::sqrt(ss / (m - 1.0) / m)};
    };
    const auto [cm, cs] = mean_se(cross);
    const auto [pm, ps] = mean_se(pseudo);
    return {cm, cs, pm, ps};
}

void write_noise_csv(const NoisePath& path, const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw Error("cannot open " + file.string() + " for writing");
    out << "t,re_z,im_z\n" << std::setprecision(17);
    for (std::size_t k = 0; k < path.samples.size(); ++k) {
        out << path.grid.half_time(static_cast<std::int64_t>(k)) << ',' << path.samples[k].real() << ','
            << path.samples[k].imag() << '\n';
    }
    if (!out) throw Error("write failed for " + file.string());
}

} // namespace nmqsd
