#pragma once

#include "nmqsd/algebra.hpp"
#include "nmqsd/noise.hpp"

#include <cstdint>
#include <vector>

namespace nmqsd {

// Markov master equation  d rho/dt = -i omega [Jz, rho] + J- rho J+ - {J+ J-, rho} / 2,
// integrated with RK4 on `grid`. Returns rho at every `output_stride`-th step, starting at t = 0.
std::vector<DensityMatrix> lindblad_evolve(double omega, const DensityMatrix& rho0, const TimeGrid& grid,
                                           std::int64_t output_stride = 1);

struct PseudomodeResult {
    std::vector<DensityMatrix> states;
    // Max elementwise change of the reduced states when the Fock cutoff is raised by one;
    // NaN when the check was skipped.
    double truncation_deviation;
    bool truncation_warning() const { return truncation_deviation > 1e-10; }
};

// OU bath replaced by one damped mode at zero frequency: coupling sqrt(gamma / 2), damping 2 gamma,
// initially in vacuum. The joint state lives on system (x) Fock{0..n_max}, system-major, and the
// returned states are partial traces over the mode.
PseudomodeResult pseudomode_evolve(double gamma, double omega, const DensityMatrix& rho0, const TimeGrid& grid,
                                   std::int64_t output_stride = 1, int n_max = 2,
                                   bool check_truncation = true);

} // namespace nmqsd
