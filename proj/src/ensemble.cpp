#include "nmqsd/ensemble.hpp"

#include "nmqsd/errors.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

namespace nmqsd {

namespace {

using Fixed = EnsembleAccumulator::Fixed;
using Real = long double;

constexpr double kScale = 0x1p64;
constexpr double kMaxAddend = 0x1p60;
constexpr double kSqrt2 = 1.41421356237309504880;

Fixed to_fixed(double x) {
    if (!(std::abs(x) < kMaxAddend)) {
        throw DivergenceError("ensemble accumulator: moment out of range (" + std::to_string(x) + ")");
    }
    return static_cast<Fixed>(std::nearbyint(x * kScale));
}

Real to_real(Fixed f) { return static_cast<Real>(f) / static_cast<Real>(kScale); }

void add_checked(Fixed& acc, Fixed x) {
    if (__builtin_add_overflow(acc, x, &acc)) throw DivergenceError("ensemble accumulator: overflow");
}

constexpr int packed(int a, int b) {
    if (a > b) std::swap(a, b);
    return a * 9 - a * (a - 1) / 2 + (b - a);
}

using Coords = std::array<Real, 9>;

Coords coords_of(const Operator3& op) {
    const auto r = hermitian_coordinates(op);
    Coords out;
    for (int i = 0; i < 9; ++i) out[i] = r[i];
    return out;
}

Real dot(const Coords& a, const Coords& b) {
    Real s = 0;
    for (int i = 0; i < 9; ++i) s += a[i] * b[i];
    return s;
}

struct BlockView {
    Coords S{};
    std::array<Real, 45> M2{};
    Coords Syr{};
    Real Sy = 0;
    Real Syy = 0;
};

BlockView view(const EnsembleAccumulator& acc, std::size_t t) {
    BlockView v;
    const auto s = acc.sum(t);
    const auto syr = acc.purity_weighted_sum(t);
    for (int a = 0; a < 9; ++a) {
        v.S[a] = s[a];
        v.Syr[a] = syr[a];
        for (int b = a; b < 9; ++b) v.M2[packed(a, b)] = acc.second_moment(t, a, b);
    }
    v.Sy = acc.purity_sum(t);
    v.Syy = acc.purity_square_sum(t);
    return v;
}

Real quadratic(const BlockView& v, const Coords& w) {
    Real q = 0;
    for (int a = 0; a < 9; ++a) {
        q += w[a] * w[a] * v.M2[packed(a, a)];
        for (int b = a + 1; b < 9; ++b) q += 2 * w[a] * w[b] * v.M2[packed(a, b)];
    }
    return q;
}

double stderr_from(Real sum_sq_centered, Real M) {
    const Real var = std::max<Real>(sum_sq_centered, 0) / (M - 1);
    return static_cast<double>(std::sqrt(var / M));
}

const Coords& identity_coords() {
    static const Coords c = coords_of(Operator3::Identity());
    return c;
}

const std::array<Coords, 3>& spin_coords() {
    static const std::array<Coords, 3> c{coords_of(spin1_operators().Jx), coords_of(spin1_operators().Jy),
                                         coords_of(spin1_operators().Jz)};
    return c;
}

} // namespace

std::array<double, 9> hermitian_coordinates(const Operator3& h) {
    return {h(0, 0).real(),         h(1, 1).real(),         h(2, 2).real(),
            kSqrt2 * h(0, 1).real(), kSqrt2 * h(0, 1).imag(), kSqrt2 * h(0, 2).real(),
            kSqrt2 * h(0, 2).imag(), kSqrt2 * h(1, 2).real(), kSqrt2 * h(1, 2).imag()};
}

Operator3 from_hermitian_coordinates(const std::array<double, 9>& r) {
    Operator3 m;
    const Complex o01(r[3] / kSqrt2, r[4] / kSqrt2);
    const Complex o02(r[5] / kSqrt2, r[6] / kSqrt2);
    const Complex o12(r[7] / kSqrt2, r[8] / kSqrt2);
    m << r[0], o01, o02,
         std::conj(o01), r[1], o12,
         std::conj(o02), std::conj(o12), r[2];
    return m;
}

EnsembleAccumulator::EnsembleAccumulator(std::vector<double> times)
    : times_(std::move(times)), blocks_(times_.size()) {}

void EnsembleAccumulator::add_state(Block& block, const StateVector& state) {
    const auto& v = state.amplitudes();
    const Operator3 p = v * v.adjoint();
    const auto r = hermitian_coordinates(p);
    double y = 0.0;
    for (double c : r) y += c * c;

    for (int a = 0; a < 9; ++a) {
        add_checked(block.sum[a], to_fixed(r[a]));
        add_checked(block.purity_weighted[a], to_fixed(y * r[a]));
        for (int b = a; b < 9; ++b) add_checked(block.second[packed(a, b)], to_fixed(r[a] * r[b]));
    }
    add_checked(block.purity_sum, to_fixed(y));
    add_checked(block.purity_square, to_fixed(y * y));
}

void EnsembleAccumulator::add_states(const std::vector<StateVector>& states) {
    if (states.size() != times_.size()) {
        throw ShapeError("ensemble accumulator: expected " + std::to_string(times_.size()) + " states, got " +
                         std::to_string(states.size()));
    }
    for (std::size_t i = 0; i < states.size(); ++i) add_state(blocks_[i], states[i]);
    ++count_;
}

void EnsembleAccumulator::add(const TrajectoryRecord& record) {
    if (record.times.size() != times_.size()) {
        throw ShapeError("ensemble accumulator: trajectory output grid has " + std::to_string(record.times.size()) +
                         " points, expected " + std::to_string(times_.size()));
    }
    for (std::size_t i = 0; i < times_.size(); ++i) {
        if (std::abs(record.times[i] - times_[i]) > 1e-12 * std::max(1.0, std::abs(times_[i]))) {
            throw ShapeError("ensemble accumulator: trajectory output time mismatch at index " + std::to_string(i));
        }
    }
    add_states(record.states);
}

void EnsembleAccumulator::merge(const EnsembleAccumulator& other) {
    if (other.count_ == 0 && other.times_.empty()) return;
    if (count_ == 0 && times_.empty()) {
        *this = other;
        return;
    }
    if (times_ != other.times_) throw ShapeError("merge_accumulators: output grids differ");
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        Block& a = blocks_[i];
        const Block& b = other.blocks_[i];
        for (int k = 0; k < 9; ++k) {
            add_checked(a.sum[k], b.sum[k]);
            add_checked(a.purity_weighted[k], b.purity_weighted[k]);
        }
        for (int k = 0; k < 45; ++k) add_checked(a.second[k], b.second[k]);
        add_checked(a.purity_sum, b.purity_sum);
        add_checked(a.purity_square, b.purity_square);
    }
    count_ += other.count_;
}

std::array<double, 9> EnsembleAccumulator::sum(std::size_t t) const {
    std::array<double, 9> out;
    for (int k = 0; k < 9; ++k) out[k] = static_cast<double>(to_real(blocks_.at(t).sum[k]));
    return out;
}

double EnsembleAccumulator::second_moment(std::size_t t, int a, int b) const {
    return static_cast<double>(to_real(blocks_.at(t).second[packed(a, b)]));
}

std::array<double, 9> EnsembleAccumulator::purity_weighted_sum(std::size_t t) const {
    std::array<double, 9> out;
    for (int k = 0; k < 9; ++k) out[k] = static_cast<double>(to_real(blocks_.at(t).purity_weighted[k]));
    return out;
}

double EnsembleAccumulator::purity_sum(std::size_t t) const {
    return static_cast<double>(to_real(blocks_.at(t).purity_sum));
}

double EnsembleAccumulator::purity_square_sum(std::size_t t) const {
    return static_cast<double>(to_real(blocks_.at(t).purity_square));
}

EnsembleAccumulator merge_accumulators(const EnsembleAccumulator& a, const EnsembleAccumulator& b) {
    EnsembleAccumulator out = a;
    out.merge(b);
    return out;
}

DensityMatrix reduce_density(const EnsembleAccumulator& acc, std::size_t t_index, bool trace_normalize) {
    if (acc.count() == 0) throw StateError("reduce_density: accumulator is empty");
    if (t_index >= acc.size()) throw ShapeError("reduce_density: time index out of range");
    auto r = acc.sum(t_index);
    for (double& c : r) c /= static_cast<double>(acc.count());
    DensityMatrix rho = DensityMatrix(from_hermitian_coordinates(r)).hermitized();
    if (trace_normalize) {
        const double tr = rho.trace().real();
        if (!(tr > 0.0)) throw DegenerateStateError("reduce_density: non-positive trace");
        rho = DensityMatrix(rho.matrix() / tr);
    }
    return rho;
}

StandardErrors standard_errors(const EnsembleAccumulator& acc, bool trace_normalize) {
    if (acc.count() < 2) throw StateError("standard_errors: need at least two trajectories");
    const Real M = static_cast<Real>(acc.count());
    const auto& I = identity_coords();
    const auto& spins = spin_coords();

    StandardErrors out;
    out.J.resize(acc.size());
    out.purity.resize(acc.size());
    for (std::size_t t = 0; t < acc.size(); ++t) {
        const BlockView v = view(acc, t);
        const Real c = dot(v.S, v.S);
        if (!trace_normalize) {
            for (int k = 0; k < 3; ++k) {
                const Real sx = dot(spins[k], v.S);
                out.J[t][k] = stderr_from(quadratic(v, spins[k]) - sx * sx / M, M);
            }
            // Jackknife: theta_{-i} = (c - 2 x_i + y_i) / (M-1)^2 with x_i = S . r_i, y_i = r_i . r_i.
            const Real sxx = quadratic(v, v.S) - c * c / M;
            const Real syy = v.Syy - v.Sy * v.Sy / M;
            const Real sxy = dot(v.S, v.Syr) - c * v.Sy / M;
            const Real ss = std::max<Real>(4 * sxx + syy - 4 * sxy, 0);
            const Real m1 = M - 1;
            out.purity[t] = static_cast<double>(std::sqrt((m1 / M) * ss / (m1 * m1 * m1 * m1)));
            continue;
        }
        // Ratio estimators, linearized: u_i = v . r_i with sum_i u_i = 0.
        const Real T = dot(I, v.S);
        if (!(T > 0)) throw DegenerateStateError("standard_errors: non-positive trace");
        const Real nbar = T / M;
        for (int k = 0; k < 3; ++k) {
            const Real m = dot(spins[k], v.S) / T;
            Coords w;
            for (int a = 0; a < 9; ++a) w[a] = (spins[k][a] - m * I[a]) / nbar;
            out.J[t][k] = stderr_from(quadratic(v, w), M);
        }
        const Real theta = c / (T * T);
        Coords w;
        for (int a = 0; a < 9; ++a) w[a] = 2 * (v.S[a] / T - theta * I[a]) / nbar;
        out.purity[t] = stderr_from(quadratic(v, w), M);
    }
    return out;
}

ObservableSeries summarize(const EnsembleAccumulator& acc, bool trace_normalize) {
    if (acc.count() == 0) throw StateError("summarize: accumulator is empty");
    const auto& ops = spin1_operators();
    std::optional<StandardErrors> se;
    if (acc.count() >= 2) se = standard_errors(acc, trace_normalize);
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();

    ObservableSeries series;
    series.points.reserve(acc.size());
    for (std::size_t t = 0; t < acc.size(); ++t) {
        ObservablePoint p;
        p.t = acc.times()[t];
        p.rho = reduce_density(acc, t, trace_normalize);
        const Operator3& m = p.rho.matrix();
        p.J = {(ops.Jx * m).trace().real(), (ops.Jy * m).trace().real(), (ops.Jz * m).trace().real()};
        p.purity = purity(p.rho);
        if (se) {
            p.J_se = se->J[t];
            p.purity_se = se->purity[t];
        } else {
            p.J_se = {nan, nan, nan};
            p.purity_se = nan;
        }
        p.n_traj = acc.count();
        series.points.push_back(p);
    }
    return series;
}

std::vector<double> EnsemblePlan::output_times() const {
    std::vector<double> t;
    for (std::int64_t k = 0; k <= grid.n_steps(); k += output_stride) t.push_back(grid.time(k));
    return t;
}

EnsemblePlan make_plan(const ExperimentConfig& config) {
    validate(config);
    if (!is_stochastic(config.mode)) throw ConfigError("config field 'mode': not a trajectory mode");
    EnsemblePlan plan;
    plan.mode = config.mode;
    plan.grid = TimeGrid::from_horizon(config.dt, config.t_max);
    plan.gamma = config.gamma;
    plan.omega = config.omega;
    plan.psi0 = config.initial_state();
    plan.output_stride = config.output_stride;
    plan.master_seed = config.master_seed;
    if (config.mode == Mode::MarkovWhite) return plan;
    if (config.tabulated_kernel()) {
        const KernelSpec kernel = read_tabulated_kernel(config.kernel);
        validate_kernel_for_grid(kernel, plan.grid);
        plan.surface = std::make_shared<const KernelCoefficientSurface>(
            integrate_general_kernel(kernel, config.omega, half_step_grid(plan.grid)));
        plan.sampler = std::make_shared<const CholeskySampler>(kernel, plan.grid);
    } else {
        plan.coefficients =
            std::make_shared<const CoefficientSet>(integrate_ou_coefficients(config.gamma, config.omega, plan.grid));
    }
    return plan;
}

TrajectoryRecord run_indexed_trajectory(const EnsemblePlan& plan, std::uint64_t index) {
    RandomStream stream(plan.master_seed, index);
    TrajectoryOptions options;
    options.output_stride = plan.output_stride;
    if (plan.mode == Mode::MarkovWhite) return run_markov_trajectory(plan.omega, plan.psi0, plan.grid, stream, options);

    const bool linear = plan.mode == Mode::Linear;
    if (plan.surface) {
        const NoisePath noise = plan.sampler->sample(stream);
        return linear ? run_linear_trajectory(*plan.surface, noise, plan.psi0, options)
                      : run_nonlinear_trajectory(*plan.surface, noise, plan.psi0, options);
    }
    if (!plan.coefficients) throw StateError("ensemble plan has no coefficients");
    const NoisePath noise = sample_ou_path(plan.gamma, plan.grid, stream);
    return linear ? run_linear_trajectory(*plan.coefficients, noise, plan.psi0, options)
                  : run_nonlinear_trajectory(*plan.coefficients, noise, plan.psi0, options);
}

EnsembleAccumulator accumulate_trajectories(const EnsemblePlan& plan, std::uint64_t begin, std::uint64_t end,
                                            int workers) {
    if (end < begin) throw ParameterError("accumulate_trajectories: empty or inverted index range");
    const auto times = plan.output_times();
    const int n_workers = std::max(1, std::min<int>(workers, static_cast<int>(std::min<std::uint64_t>(end - begin, 1024))));

    std::atomic<std::uint64_t> next{begin};
    std::atomic<std::uint64_t> stop{end};
    std::mutex failure_mutex;
    std::uint64_t failed_index = std::numeric_limits<std::uint64_t>::max();
    std::exception_ptr failure;

    std::vector<EnsembleAccumulator> partial(n_workers, EnsembleAccumulator(times));
    auto work = [&](int w) {
        for (;;) {
            const std::uint64_t i = next.fetch_add(1);
            if (i >= stop.load()) return;
            try {
                partial[w].add(run_indexed_trajectory(plan, i));
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (i < failed_index) {
                    failed_index = i;
                    failure = std::current_exception();
                }
                // Indices are claimed in increasing order, so every smaller index is already in flight.
                std::uint64_t cur = stop.load();
                while (i < cur && !stop.compare_exchange_weak(cur, i)) {}
                return;
            }
        }
    };

    if (n_workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> threads;
        threads.reserve(n_workers);
        for (int w = 0; w < n_workers; ++w) threads.emplace_back(work, w);
        for (auto& th : threads) th.join();
    }

    if (failure) {
        try {
            std::rethrow_exception(failure);
        } catch (const Error& e) {
            throw DivergenceError("trajectory " + std::to_string(failed_index) + ": " + e.what());
        }
    }

    EnsembleAccumulator total(times);
    for (const auto& p : partial) total.merge(p);
    return total;
}

EnsembleResult run_ensemble(const ExperimentConfig& config) {
    if (!is_stochastic(config.mode)) throw ConfigError("config field 'mode': run_ensemble needs a trajectory mode");
    if (config.n_traj < 1) throw ConfigError("config field 'n_traj': must be >= 1");
    const EnsemblePlan plan = make_plan(config);
    EnsembleResult result;
    result.accumulator = accumulate_trajectories(plan, 0, static_cast<std::uint64_t>(config.n_traj),
                                                 resolve_workers(config.workers));
    result.series = summarize(result.accumulator, config.trace_normalize);
    result.normalized =
        config.trace_normalize ? result.series : summarize(result.accumulator, true);
    return result;
}

} // namespace nmqsd
