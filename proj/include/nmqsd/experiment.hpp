#pragma once

#include "nmqsd/config.hpp"
#include "nmqsd/ensemble.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace nmqsd {

struct ExperimentOutcome {
    ObservableSeries series;
    // Linear mode only: the estimator not selected by trace_normalize.
    std::optional<ObservableSeries> alternate;
    // Pseudomode mode: Fock truncation check.
    std::optional<double> truncation_deviation;
};

// Observable series of a deterministic run; stderr columns and n_traj are 0.
ObservableSeries oracle_series(const std::vector<DensityMatrix>& states, const std::vector<double>& times);

ExperimentOutcome run_experiment(const ExperimentConfig& config);

// Deterministic reference for a stochastic config: Lindblad for markov_white, pseudomode otherwise.
// Throws ConfigError for tabulated kernels, which have no oracle.
ObservableSeries reference_series(const ExperimentConfig& config);

// Max over output times and matrix elements of |rho_a - rho_b|.
double max_density_deviation(const ObservableSeries& a, const ObservableSeries& b);

struct PresetOptions {
    std::uint64_t master_seed = 1;
    std::filesystem::path out_dir = ".";
    double t_max = 25.0;
    double dt = 0.005;
    std::int64_t output_stride = 20;
    std::int64_t n_traj = 1000;  // fig1 only; fig2 uses 5 and 1000
    int workers = 0;
};

// Nonlinear runs for gamma in {0.2, 0.8, 2.0} plus a markov_white panel, each with its oracle CSV.
std::vector<std::filesystem::path> preset_fig1(const PresetOptions& options);

// Purity runs for gamma in {0.2, 0.8, 2.0} at 5 and 1000 trajectories, plus pseudomode references.
std::vector<std::filesystem::path> preset_fig2(const PresetOptions& options);

inline const std::vector<double>& preset_gammas() {
    static const std::vector<double> g{0.2, 0.8, 2.0};
    return g;
}

std::string gamma_tag(double gamma);

// Stationary OU covariance check at lags {0, 1/gamma, 2/gamma}: `n_paths` exact-recursion paths on a
// half-step grid of spacing 1/(10 gamma) and horizon 60/gamma, averaged over all time origins.
struct NoiseCheckRow {
    double lag = 0.0;
    double expected = 0.0;   // (gamma / 2) exp(-gamma lag)
    CovarianceEstimate estimate;
};

std::vector<NoiseCheckRow> noise_check(double gamma, std::int64_t n_paths, std::uint64_t master_seed);
void write_noise_check_csv(const std::vector<NoiseCheckRow>& rows, const std::filesystem::path& path);

} // namespace nmqsd
