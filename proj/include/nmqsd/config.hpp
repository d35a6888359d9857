#pragma once

#include "nmqsd/algebra.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace nmqsd {

enum class Mode { Linear, Nonlinear, MarkovWhite, Lindblad, Pseudomode };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view name);
bool is_stochastic(Mode mode);

struct ExperimentConfig {
    Mode mode = Mode::Nonlinear;
    double gamma = 1.0;
    double omega = 1.0;
    double dt = 0.005;
    double t_max = 25.0;
    std::int64_t output_stride = 20;
    std::int64_t n_traj = 1000;
    std::uint64_t master_seed = 1;
    // Raw amplitudes in (|2>, |1>, |0>) order; normalized when a run starts.
    std::array<Complex, 3> psi0{StateVector::symmetric().amp2(), StateVector::symmetric().amp1(),
                                StateVector::symmetric().amp0()};
    // "ou" or the path of a tabulated kernel CSV.
    std::string kernel = "ou";
    int workers = 0;                 // 0: NMQSD_WORKERS or hardware concurrency
    std::string output;              // CSV path; empty means no file
    bool trace_normalize = false;    // linear mode: report rho / Tr rho instead of the raw average
    int pseudomode_levels = 2;       // Fock truncation n_max of the pseudomode oracle

    StateVector initial_state() const;   // normalized psi0
    bool tabulated_kernel() const { return kernel != "ou"; }
};

// Throws ConfigError naming the first invalid field.
void validate(const ExperimentConfig& config);

// JSON document with every field; unknown keys are errors.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const ExperimentConfig& config);

// Worker count resolution: explicit value, else NMQSD_WORKERS, else hardware concurrency.
int resolve_workers(int requested);

} // namespace nmqsd
