#pragma once

#include "nmqsd/algebra.hpp"
#include "nmqsd/coefficients.hpp"
#include "nmqsd/config.hpp"
#include "nmqsd/noise.hpp"
#include "nmqsd/trajectory.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

namespace nmqsd {

// Running sums over trajectories, one block per output time.
//
// Every projector is expanded in nine real Hermitian coordinates
//   r = (p00, p11, p22, sqrt2 Re p01, sqrt2 Im p01, sqrt2 Re p02, sqrt2 Im p02, sqrt2 Re p12, sqrt2 Im p12)
// so that Tr(A B) = r_A . r_B. The block keeps sum r, the upper triangle of sum r r^T, sum y r,
// sum y and sum y^2 with y = Tr(P^2). Sums are stored as 128-bit fixed-point integers
// (scale 2^64, round to nearest); integer addition makes merge exactly associative and
// commutative, so any sharding of the trajectory indices yields bit-identical results.
class EnsembleAccumulator {
public:
    EnsembleAccumulator() = default;
    explicit EnsembleAccumulator(std::vector<double> times);

    // Adds one trajectory; its record times must match the accumulator grid.
    void add(const TrajectoryRecord& record);
    // Adds one trajectory given its states at every output time.
    void add_states(const std::vector<StateVector>& states);

    void merge(const EnsembleAccumulator& other);

    std::int64_t count() const { return count_; }
    const std::vector<double>& times() const { return times_; }
    std::size_t size() const { return times_.size(); }

    // Moments in double precision, for the reductions below.
    std::array<double, 9> sum(std::size_t t_index) const;
    double second_moment(std::size_t t_index, int a, int b) const;
    std::array<double, 9> purity_weighted_sum(std::size_t t_index) const;
    double purity_sum(std::size_t t_index) const;
    double purity_square_sum(std::size_t t_index) const;

    bool operator==(const EnsembleAccumulator& other) const = default;

    __extension__ typedef __int128 Fixed;

private:
    struct Block {
        std::array<Fixed, 9> sum{};
        std::array<Fixed, 45> second{};
        std::array<Fixed, 9> purity_weighted{};
        Fixed purity_sum = 0;
        Fixed purity_square = 0;
        bool operator==(const Block&) const = default;
    };

    void add_state(Block& block, const StateVector& state);

    std::vector<double> times_;
    std::vector<Block> blocks_;
    std::int64_t count_ = 0;
};

EnsembleAccumulator merge_accumulators(const EnsembleAccumulator& a, const EnsembleAccumulator& b);

// Hermitian coordinates used by the accumulator.
std::array<double, 9> hermitian_coordinates(const Operator3& h);
Operator3 from_hermitian_coordinates(const std::array<double, 9>& r);

// Projector sum / count, Hermitized; divided by its trace when `trace_normalize`.
DensityMatrix reduce_density(const EnsembleAccumulator& acc, std::size_t t_index, bool trace_normalize = false);

// Per-time standard errors of <Jx>, <Jy>, <Jz> and purity.
struct StandardErrors {
    std::vector<std::array<double, 3>> J;
    std::vector<double> purity;
};

// Sample standard deviation / sqrt(count) for <J>; jackknife over trajectories for purity.
// Trace-normalized estimates are ratios, handled by first-order linearization.
StandardErrors standard_errors(const EnsembleAccumulator& acc, bool trace_normalize = false);

struct ObservablePoint {
    double t = 0.0;
    std::array<double, 3> J{};      // <Jx>, <Jy>, <Jz> of the reported rho
    std::array<double, 3> J_se{};
    double purity = 0.0;            // Tr rho^2
    double purity_se = 0.0;
    DensityMatrix rho;
    std::int64_t n_traj = 0;        // 0 for deterministic runs
};

struct ObservableSeries {
    std::vector<ObservablePoint> points;
};

// Summary of the accumulator. Standard errors are NaN when count < 2.
ObservableSeries summarize(const EnsembleAccumulator& acc, bool trace_normalize = false);

// Everything a trajectory run needs, built once and shared read-only across workers.
struct EnsemblePlan {
    Mode mode = Mode::Nonlinear;
    TimeGrid grid{0.005, 1};
    double gamma = 1.0;
    double omega = 1.0;
    StateVector psi0;
    std::int64_t output_stride = 1;
    std::uint64_t master_seed = 1;
    std::shared_ptr<const CoefficientSet> coefficients;          // OU kernel
    std::shared_ptr<const KernelCoefficientSurface> surface;     // tabulated kernel
    std::shared_ptr<const CholeskySampler> sampler;              // tabulated kernel

    std::vector<double> output_times() const;
};

EnsemblePlan make_plan(const ExperimentConfig& config);

// Runs trajectory `index` of the plan with its own seeded stream.
TrajectoryRecord run_indexed_trajectory(const EnsemblePlan& plan, std::uint64_t index);

// Runs trajectories [begin, end) on `workers` threads. A failing trajectory is reported as
// DivergenceError naming the smallest failing index.
EnsembleAccumulator accumulate_trajectories(const EnsemblePlan& plan, std::uint64_t begin, std::uint64_t end,
                                            int workers);

struct EnsembleResult {
    EnsembleAccumulator accumulator;
    ObservableSeries series;       // as requested by config.trace_normalize
    ObservableSeries normalized;   // always trace-normalized (identical to series in norm-preserving modes)
};

EnsembleResult run_ensemble(const ExperimentConfig& config);

} // namespace nmqsd
