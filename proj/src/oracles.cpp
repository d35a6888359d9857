#include "nmqsd/oracles.hpp"

#include "nmqsd/errors.hpp"

#include <cmath>
#include <limits>

namespace nmqsd {

namespace {

using Eigen::MatrixXcd;

// d W/dt = -i (Heff W - W Heff^dagger) + sum_k L_k W L_k^dagger, with Heff = H - (i/2) sum_k L_k^dagger L_k.
class MasterEquation {
public:
    MasterEquation(const MatrixXcd& H, std::vector<MatrixXcd> jumps) : jumps_(std::move(jumps)) {
        heff_ = H;
        for (const auto& L : jumps_) heff_ -= 0.5 * kI * (L.adjoint() * L);
    }

    MatrixXcd rhs(const MatrixXcd& W) const {
        MatrixXcd out = -kI * (heff_ * W - W * heff_.adjoint());
        for (const auto& L : jumps_) out.noalias() += L * W * L.adjoint();
        return out;
    }

    MatrixXcd step(const MatrixXcd& W, double dt) const {
        const MatrixXcd k1 = rhs(W);
        const MatrixXcd k2 = rhs(W + 0.5 * dt * k1);
        const MatrixXcd k3 = rhs(W + 0.5 * dt * k2);
        const MatrixXcd k4 = rhs(W + dt * k3);
        return W + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }

private:
    MatrixXcd heff_;
    std::vector<MatrixXcd> jumps_;
};

void check_initial(const DensityMatrix& rho0) {
    if (!rho0.matrix().allFinite()) throw ParameterError("oracle: initial state is not finite");
    if (rho0.hermiticity_error() > 1e-9) throw ParameterError("oracle: initial state is not Hermitian");
    if (std::abs(rho0.trace() - 1.0) > 1e-9) throw ParameterError("oracle: initial state must have unit trace");
    if (rho0.min_eigenvalue() < -1e-9) throw ParameterError("oracle: initial state is not positive");
}

void check_stride(std::int64_t stride) {
    if (stride < 1) throw ParameterError("oracle: output_stride must be >= 1");
}

void check_health(const MatrixXcd& W, double t) {
    if (!W.allFinite() || std::abs(W.trace() - 1.0) > 1e-6) {
        throw DivergenceError("oracle: integration diverged at t = " + std::to_string(t));
    }
}

// Fock-space annihilator on {0..n_max}.
MatrixXcd annihilator(int n_max) {
    MatrixXcd a = MatrixXcd::Zero(n_max + 1, n_max + 1);
    for (int n = 1; n <= n_max; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
    return a;
}

MatrixXcd kron(const MatrixXcd& a, const MatrixXcd& b) {
    MatrixXcd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
    return out;
}

Operator3 trace_out_mode(const MatrixXcd& W, int d) {
    Operator3 rho = Operator3::Zero();
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            for (int n = 0; n < d; ++n) rho(i, j) += W(i * d + n, j * d + n);
        }
    }
    return rho;
}

std::vector<DensityMatrix> run_pseudomode(double gamma, double omega, const DensityMatrix& rho0, const TimeGrid& grid,
                                          std::int64_t stride, int n_max) {
    const auto& ops = spin1_operators();
    const int d = n_max + 1;
    const MatrixXcd a = annihilator(n_max);
    const MatrixXcd id_mode = MatrixXcd::Identity(d, d);
    const double lambda = std::sqrt(gamma / 2.0);
    const MatrixXcd H = omega * kron(ops.Jz, id_mode) +
                        lambda * (kron(ops.Jminus, a.adjoint()) + kron(ops.Jplus, a));
    const MasterEquation eq(H, {std::sqrt(2.0 * gamma) * kron(Operator3::Identity(), a)});

    MatrixXcd vacuum = MatrixXcd::Zero(d, d);
    vacuum(0, 0) = 1.0;
    MatrixXcd W = kron(rho0.matrix(), vacuum);

    std::vector<DensityMatrix> out{DensityMatrix(trace_out_mode(W, d))};
    for (std::int64_t n = 0; n < grid.n_steps(); ++n) {
        W = eq.step(W, grid.dt());
        if ((n + 1) % stride == 0) {
            check_health(W, grid.time(n + 1));
            out.emplace_back(trace_out_mode(W, d));
        }
    }
    return out;
}

} // namespace

std::vector<DensityMatrix> lindblad_evolve(double omega, const DensityMatrix& rho0, const TimeGrid& grid,
                                           std::int64_t output_stride) {
    check_initial(rho0);
    check_stride(output_stride);
    const auto& ops = spin1_operators();
    const MasterEquation eq(omega * ops.Jz, {ops.Jminus});

    MatrixXcd rho = rho0.matrix();
    std::vector<DensityMatrix> out{rho0};
    for (std::int64_t n = 0; n < grid.n_steps(); ++n) {
        rho = eq.step(rho, grid.dt());
        if ((n + 1) % output_stride == 0) {
            check_health(rho, grid.time(n + 1));
            out.emplace_back(Operator3(rho));
        }
    }
    return out;
}

PseudomodeResult pseudomode_evolve(double gamma, double omega, const DensityMatrix& rho0, const TimeGrid& grid,
                                   std::int64_t output_stride, int n_max, bool check_truncation) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ParameterError("pseudomode: gamma must be positive");
    if (n_max < 1) throw ParameterError("pseudomode: n_max must be >= 1");
    check_initial(rho0);
    check_stride(output_stride);

    PseudomodeResult result{run_pseudomode(gamma, omega, rho0, grid, output_stride, n_max),
                            std::numeric_limits<double>::quiet_NaN()};
    if (check_truncation) {
        const auto finer = run_pseudomode(gamma, omega, rho0, grid, output_stride, n_max + 1);
        double dev = 0.0;
        for (std::size_t i = 0; i < finer.size(); ++i) {
            dev = std::max(dev, (finer[i].matrix() - result.states[i].matrix()).cwiseAbs().maxCoeff());
        }
        result.truncation_deviation = dev;
    }
    return result;
}

} // namespace nmqsd
