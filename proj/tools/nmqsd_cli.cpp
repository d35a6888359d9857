#include "nmqsd/coefficients.hpp"
#include "nmqsd/config.hpp"
#include "nmqsd/csv.hpp"
#include "nmqsd/errors.hpp"
#include "nmqsd/experiment.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

struct Overrides {
    std::optional<std::string> config;
    std::optional<std::string> mode;
    std::optional<double> gamma, omega, dt, t_max;
    std::optional<std::int64_t> output_stride, n_traj;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> psi0, kernel, out;
    std::optional<int> workers, pseudomode_levels;
    std::optional<bool> trace_normalize;
};

void add_config_flags(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "JSON config file");
    cmd->add_option("--mode", o.mode, "linear | nonlinear | markov_white | lindblad | pseudomode");
    cmd->add_option("--gamma", o.gamma, "OU bath rate");
    cmd->add_option("--omega", o.omega, "level spacing");
    cmd->add_option("--dt", o.dt, "integration step");
    cmd->add_option("--t-max", o.t_max, "horizon");
    cmd->add_option("--output-stride", o.output_stride, "steps between output rows");
    cmd->add_option("--n-traj", o.n_traj, "number of trajectories");
    cmd->add_option("--seed", o.seed, "master seed");
    cmd->add_option("--psi0", o.psi0, "initial amplitudes of |2>,|1>,|0>: three reals or six (re,im) reals");
    cmd->add_option("--kernel", o.kernel, "'ou' or a tabulated kernel CSV (lag,re_alpha,im_alpha)");
    cmd->add_option("--workers", o.workers, "worker threads (0: NMQSD_WORKERS or hardware)");
    cmd->add_option("--out", o.out, "output CSV path");
    cmd->add_option("--trace-normalize", o.trace_normalize, "linear mode: report rho / Tr rho");
    cmd->add_option("--pseudomode-levels", o.pseudomode_levels, "Fock cutoff of the pseudomode oracle");
}

std::array<nmqsd::Complex, 3> parse_psi0(const std::string& text) {
    std::vector<double> v;
    std::stringstream ss(text);
    for (std::string cell; std::getline(ss, cell, ',');) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(cell, &used));
            if (used != cell.size()) throw std::invalid_argument(cell);
        } catch (const std::exception&) {
            throw nmqsd::ConfigError("--psi0: not a number: '" + cell + "'");
        }
    }
    if (v.size() == 3) return {nmqsd::Complex(v[0]), nmqsd::Complex(v[1]), nmqsd::Complex(v[2])};
    if (v.size() == 6) return {nmqsd::Complex(v[0], v[1]), nmqsd::Complex(v[2], v[3]), nmqsd::Complex(v[4], v[5])};
    throw nmqsd::ConfigError("--psi0: expected 3 or 6 comma-separated numbers");
}

nmqsd::ExperimentConfig resolve(const Overrides& o) {
    nmqsd::ExperimentConfig c = o.config ? nmqsd::load_config(*o.config) : nmqsd::ExperimentConfig{};
    if (o.mode) c.mode = nmqsd::parse_mode(*o.mode);
    if (o.gamma) c.gamma = *o.gamma;
    if (o.omega) c.omega = *o.omega;
    if (o.dt) c.dt = *o.dt;
    if (o.t_max) c.t_max = *o.t_max;
    if (o.output_stride) c.output_stride = *o.output_stride;
    if (o.n_traj) c.n_traj = *o.n_traj;
    if (o.seed) c.master_seed = *o.seed;
    if (o.psi0) c.psi0 = parse_psi0(*o.psi0);
    if (o.kernel) c.kernel = *o.kernel;
    if (o.workers) c.workers = *o.workers;
    if (o.out) c.output = *o.out;
    if (o.trace_normalize) c.trace_normalize = *o.trace_normalize;
    if (o.pseudomode_levels) c.pseudomode_levels = *o.pseudomode_levels;
    nmqsd::validate(c);
    return c;
}

std::string sibling(const std::string& path, const std::string& suffix) {
    std::filesystem::path p(path);
    return (p.parent_path() / (p.stem().string() + suffix + p.extension().string())).string();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

int cmd_run(const Overrides& o) {
    const auto start = std::chrono::steady_clock::now();
    const auto config = resolve(o);
    const auto outcome = nmqsd::run_experiment(config);
    if (!config.output.empty()) {
        nmqsd::export_csv(outcome.series, config.output);
        if (outcome.alternate) {
            const auto alt = sibling(config.output, config.trace_normalize ? "_raw" : "_normalized");
            nmqsd::export_csv(*outcome.alternate, alt);
        }
    }
    if (outcome.truncation_deviation && *outcome.truncation_deviation > 1e-10) {
        std::fprintf(stderr, "warning: pseudomode truncation changes the output by %.3g\n",
                     *outcome.truncation_deviation);
    }
    const auto& last = outcome.series.points.back();
    std::printf("mode=%s final_Jz=%.6f final_purity=%.6f wall=%.2fs\n", std::string(nmqsd::to_string(config.mode)).c_str(),
                last.J[2], last.purity, seconds_since(start));
    return kExitOk;
}

int cmd_oracle_compare(const Overrides& o) {
    const auto config = resolve(o);
    if (!nmqsd::is_stochastic(config.mode)) throw nmqsd::ConfigError("config field 'mode': oracle-compare needs a trajectory mode");
    const auto outcome = nmqsd::run_experiment(config);
    const auto reference = nmqsd::reference_series(config);
    std::printf("max |rho - rho_ref| = %.6g over %zu output times\n",
                nmqsd::max_density_deviation(outcome.series, reference),
                reference.points.size());
    if (!config.output.empty()) nmqsd::export_csv(reference, sibling(config.output, "_oracle"));
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Non-Markovian quantum state diffusion for a dissipative three-level system"};
    app.require_subcommand(1);

    Overrides run_opts;
    auto* run = app.add_subcommand("run", "run one experiment and write its observable CSV");
    add_config_flags(run, run_opts);

    Overrides cmp_opts;
    auto* cmp = app.add_subcommand("oracle-compare", "run a stochastic experiment and compare it with its oracle");
    add_config_flags(cmp, cmp_opts);

    nmqsd::PresetOptions fig1_opts, fig2_opts;
    auto* fig1 = app.add_subcommand("fig1", "relaxation panels for gamma = 0.2, 0.8, 2.0 and the Markov limit");
    auto* fig2 = app.add_subcommand("fig2", "purity runs at 5 and 1000 trajectories");
    for (auto [cmd, opts] : {std::pair{fig1, &fig1_opts}, std::pair{fig2, &fig2_opts}}) {
        cmd->add_option("--seed", opts->master_seed, "master seed");
        cmd->add_option("--out-dir", opts->out_dir, "output directory");
        cmd->add_option("--t-max", opts->t_max, "horizon");
        cmd->add_option("--dt", opts->dt, "integration step");
        cmd->add_option("--output-stride", opts->output_stride, "steps between output rows");
        cmd->add_option("--workers", opts->workers, "worker threads");
    }
    fig1->add_option("--n-traj", fig1_opts.n_traj, "trajectories per panel");

    double c_gamma = 1.0, c_omega = 1.0, c_tmax = 25.0, c_dt = 0.005;
    std::string c_out = "coefficients.csv";
    auto* coeffs = app.add_subcommand("coeffs", "dump the OU coefficients F, G, Pbar");
    coeffs->add_option("--gamma", c_gamma)->required();
    coeffs->add_option("--omega", c_omega);
    coeffs->add_option("--t-max", c_tmax);
    coeffs->add_option("--dt", c_dt);
    coeffs->add_option("--out", c_out);

    double n_gamma = 1.0;
    std::int64_t n_paths = 10000;
    std::uint64_t n_seed = 1;
    std::string n_out;
    auto* noise = app.add_subcommand("noise-check", "empirical OU covariance at lags 0, 1/gamma, 2/gamma");
    noise->add_option("--gamma", n_gamma)->required();
    noise->add_option("--paths", n_paths);
    noise->add_option("--seed", n_seed);
    noise->add_option("--out", n_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*run) return cmd_run(run_opts);
        if (*cmp) return cmd_oracle_compare(cmp_opts);
        if (*fig1 || *fig2) {
            const auto start = std::chrono::steady_clock::now();
            const auto files = *fig1 ? nmqsd::preset_fig1(fig1_opts) : nmqsd::preset_fig2(fig2_opts);
            for (const auto& f : files) std::printf("wrote %s\n", f.string().c_str());
            std::printf("wall=%.2fs\n", seconds_since(start));
            return kExitOk;
        }
        if (*coeffs) {
            const auto grid = nmqsd::TimeGrid::from_horizon(c_dt, c_tmax);
            nmqsd::write_coefficients_csv(nmqsd::integrate_ou_coefficients(c_gamma, c_omega, grid), c_out);
            std::printf("wrote %s\n", c_out.c_str());
            return kExitOk;
        }
        if (*noise) {
            const auto rows = nmqsd::noise_check(n_gamma, n_paths, n_seed);
            for (const auto& r : rows) {
                std::printf("lag=%.4g expected=%.6g cross=%.6g%+.6gi (se %.2g) pseudo=%.3g%+.3gi (se %.2g)\n", r.lag,
                            r.expected, r.estimate.cross.real(), r.estimate.cross.imag(), r.estimate.cross_se,
                            r.estimate.pseudo.real(), r.estimate.pseudo.imag(), r.estimate.pseudo_se);
            }
            if (!n_out.empty()) nmqsd::write_noise_check_csv(rows, n_out);
            return kExitOk;
        }
    } catch (const nmqsd::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const nmqsd::ParameterError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const nmqsd::DivergenceError& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return kExitDivergence;
    } catch (const nmqsd::DegenerateStateError& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFailure;
    }
    return kExitFailure;
}
