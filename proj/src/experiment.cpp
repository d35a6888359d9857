#include "nmqsd/experiment.hpp"

#include "nmqsd/csv.hpp"
#include "nmqsd/errors.hpp"
#include "nmqsd/oracles.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace nmqsd {

namespace {

std::vector<double> output_times(const TimeGrid& grid, std::int64_t stride) {
    std::vector<double> t;
    for (std::int64_t k = 0; k <= grid.n_steps(); k += stride) t.push_back(grid.time(k));
    return t;
}

DensityMatrix initial_density(const ExperimentConfig& config) {
    return projector(config.initial_state()).hermitized();
}

std::filesystem::path write(const ObservableSeries& s, const std::filesystem::path& dir, const std::string& name) {
    const auto path = dir / name;
    export_csv(s, path);
    return path;
}

} // namespace

std::string gamma_tag(double gamma) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", gamma);
    return buf;
}

ObservableSeries oracle_series(const std::vector<DensityMatrix>& states, const std::vector<double>& times) {
    if (states.size() != times.size()) throw ShapeError("oracle_series: states and times differ in length");
    const auto& ops = spin1_operators();
    ObservableSeries series;
    series.points.reserve(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) {
        ObservablePoint p;
        p.t = times[i];
        p.rho = states[i].hermitized();
        const Operator3& m = p.rho.matrix();
        p.J = {(ops.Jx * m).trace().real(), (ops.Jy * m).trace().real(), (ops.Jz * m).trace().real()};
        p.purity = purity(p.rho);
        series.points.push_back(p);
    }
    return series;
}

ObservableSeries reference_series(const ExperimentConfig& config) {
    validate(config);
    const TimeGrid grid = TimeGrid::from_horizon(config.dt, config.t_max);
    const auto times = output_times(grid, config.output_stride);
    const DensityMatrix rho0 = initial_density(config);
    if (config.mode == Mode::MarkovWhite || config.mode == Mode::Lindblad) {
        return oracle_series(lindblad_evolve(config.omega, rho0, grid, config.output_stride), times);
    }
    if (config.tabulated_kernel()) throw ConfigError("config field 'kernel': no oracle for tabulated kernels");
    const auto pm = pseudomode_evolve(config.gamma, config.omega, rho0, grid, config.output_stride,
                                      config.pseudomode_levels, false);
    return oracle_series(pm.states, times);
}

ExperimentOutcome run_experiment(const ExperimentConfig& config) {
    validate(config);
    ExperimentOutcome out;
    if (config.mode == Mode::Lindblad) {
        out.series = reference_series(config);
        return out;
    }
    if (config.mode == Mode::Pseudomode) {
        const TimeGrid grid = TimeGrid::from_horizon(config.dt, config.t_max);
        const auto pm = pseudomode_evolve(config.gamma, config.omega, initial_density(config), grid,
                                          config.output_stride, config.pseudomode_levels, true);
        out.series = oracle_series(pm.states, output_times(grid, config.output_stride));
        out.truncation_deviation = pm.truncation_deviation;
        return out;
    }
    EnsembleResult r = run_ensemble(config);
    out.series = std::move(r.series);
    if (config.mode == Mode::Linear) {
        out.alternate = config.trace_normalize ? summarize(r.accumulator, false) : std::move(r.normalized);
    }
    return out;
}

double max_density_deviation(const ObservableSeries& a, const ObservableSeries& b) {
    if (a.points.size() != b.points.size()) throw ShapeError("max_density_deviation: series lengths differ");
    double dev = 0.0;
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        if (std::abs(a.points[i].t - b.points[i].t) > 1e-9) {
            throw ShapeError("max_density_deviation: output times differ at index " + std::to_string(i));
        }
        dev = std::max(dev, (a.points[i].rho.matrix() - b.points[i].rho.matrix()).cwiseAbs().maxCoeff());
    }
    return dev;
}

namespace {

ExperimentConfig preset_config(const PresetOptions& o, Mode mode, double gamma, std::int64_t n_traj) {
    ExperimentConfig c;
    c.mode = mode;
    c.gamma = gamma;
    c.omega = 1.0;
    c.dt = o.dt;
    c.t_max = o.t_max;
    c.output_stride = o.output_stride;
    c.n_traj = n_traj;
    c.master_seed = o.master_seed;
    c.workers = o.workers;
    validate(c);
    return c;
}

} // namespace

std::vector<std::filesystem::path> preset_fig1(const PresetOptions& o) {
    std::filesystem::create_directories(o.out_dir);
    std::vector<std::filesystem::path> files;
    const char panel[] = {'a', 'b', 'c'};
    for (std::size_t i = 0; i < preset_gammas().size(); ++i) {
        const auto c = preset_config(o, Mode::Nonlinear, preset_gammas()[i], o.n_traj);
        const std::string stem = std::string("fig1_") + panel[i] + "_gamma" + gamma_tag(c.gamma);
        files.push_back(write(run_ensemble(c).series, o.out_dir, stem + ".csv"));
        files.push_back(write(reference_series(c), o.out_dir, stem + "_oracle.csv"));
    }
    const auto c = preset_config(o, Mode::MarkovWhite, 1.0, o.n_traj);
    files.push_back(write(run_ensemble(c).series, o.out_dir, "fig1_d_markov.csv"));
    files.push_back(write(reference_series(c), o.out_dir, "fig1_d_markov_oracle.csv"));
    return files;
}

std::vector<std::filesystem::path> preset_fig2(const PresetOptions& o) {
    std::filesystem::create_directories(o.out_dir);
    std::vector<std::filesystem::path> files;
    for (double gamma : preset_gammas()) {
        const std::string stem = "fig2_gamma" + gamma_tag(gamma);
        for (std::int64_t n : {std::int64_t{5}, std::int64_t{1000}}) {
            const auto c = preset_config(o, Mode::Nonlinear, gamma, n);
            files.push_back(write(run_ensemble(c).series, o.out_dir, stem + "_n" + std::to_string(n) + ".csv"));
        }
        files.push_back(write(reference_series(preset_config(o, Mode::Nonlinear, gamma, 1)), o.out_dir,
                              stem + "_oracle.csv"));
    }
    return files;
}

std::vector<NoiseCheckRow> noise_check(double gamma, std::int64_t n_paths, std::uint64_t master_seed) {
    if (!(gamma > 0.0)) throw ParameterError("noise_check: gamma must be positive");
    if (n_paths < 2) throw ParameterError("noise_check: need at least two paths");
    const TimeGrid grid(1.0 / (5.0 * gamma), 300);
    std::vector<NoisePath> paths;
    paths.reserve(static_cast<std::size_t>(n_paths));
    for (std::int64_t i = 0; i < n_paths; ++i) {
        RandomStream stream(master_seed, static_cast<std::uint64_t>(i));
        paths.push_back(sample_ou_path(gamma, grid, stream));
    }
    std::vector<NoiseCheckRow> rows;
    for (std::int64_t lag : {0, 10, 20}) {
        NoiseCheckRow r;
        r.lag = static_cast<double>(lag) * grid.half_dt();
        r.expected = ou_correlation(gamma, r.lag, 0.0);
        r.estimate = lagged_covariance(paths, lag);
        rows.push_back(r);
    }
    return rows;
}

void write_noise_check_csv(const std::vector<NoiseCheckRow>& rows, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw Error("cannot open " + path.string() + " for writing");
    f << "lag,expected,re_cross,im_cross,cross_se,re_pseudo,im_pseudo,pseudo_se\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.lag, r.expected,
                      r.estimate.cross.real(), r.estimate.cross.imag(), r.estimate.cross_se,
                      r.estimate.pseudo.real(), r.estimate.pseudo.imag(), r.estimate.pseudo_se);
        f << buf;
    }
}

} // namespace nmqsd
