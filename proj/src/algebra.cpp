#include "nmqsd/algebra.hpp"

#include "nmqsd/errors.hpp"

#include <cmath>
#include <string>

namespace nmqsd {

namespace {

SpinOperators make_spin1_operators() {
    const double r2 = std::sqrt(2.0);
    SpinOperators ops;
    ops.Jz = Operator3::Zero();
    ops.Jz(0, 0) = 1.0;
    ops.Jz(2, 2) = -1.0;

    // J- = sqrt(2) (|0><1| + |1><2|); column = ket index being lowered.
    ops.Jminus = Operator3::Zero();
    ops.Jminus(1, 0) = r2;
    ops.Jminus(2, 1) = r2;
    ops.Jplus = ops.Jminus.adjoint();

    ops.Jx = (ops.Jplus + ops.Jminus) / 2.0;
    ops.Jy = (ops.Jplus - ops.Jminus) / (2.0 * kI);

    ops.JpJm = ops.Jplus * ops.Jminus;
    ops.JzJm = ops.Jz * ops.Jminus;
    ops.JpJzJm = ops.Jplus * ops.JzJm;
    ops.Jm2 = ops.Jminus * ops.Jminus;
    ops.JpJm2 = ops.Jplus * ops.Jm2;
    return ops;
}

} // namespace

StateVector StateVector::level(int level) {
    if (level < 0 || level > 2) {
        throw ParameterError("StateVector::level: level must be 0, 1 or 2, got " + std::to_string(level));
    }
    Eigen::Vector3cd v = Eigen::Vector3cd::Zero();
    v[2 - level] = 1.0;
    return StateVector(v);
}

StateVector StateVector::symmetric() {
    const double a = 1.0 / std::sqrt(3.0);
    return StateVector(a, a, a);
}

bool StateVector::is_normalized(double tol) const {
    return is_finite() && std::abs(norm() - 1.0) <= tol;
}

double DensityMatrix::hermiticity_error() const {
    return (m_ - m_.adjoint()).cwiseAbs().maxCoeff();
}

double DensityMatrix::min_eigenvalue() const {
    const Operator3 h = (m_ + m_.adjoint()) / 2.0;
    Eigen::SelfAdjointEigenSolver<Operator3> solver(h, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
}

DensityMatrix DensityMatrix::hermitized() const {
    return DensityMatrix((m_ + m_.adjoint()) / 2.0);
}

std::array<double, 9> DensityMatrix::serialize() const {
    return {m_(0, 0).real(), m_(0, 1).real(), m_(0, 1).imag(), m_(0, 2).real(), m_(0, 2).imag(),
            m_(1, 1).real(), m_(1, 2).real(), m_(1, 2).imag(), m_(2, 2).real()};
}

DensityMatrix DensityMatrix::deserialize(const std::array<double, 9>& v) {
    Operator3 m;
    m(0, 0) = v[0];
    m(0, 1) = Complex(v[1], v[2]);
    m(0, 2) = Complex(v[3], v[4]);
    m(1, 1) = v[5];
    m(1, 2) = Complex(v[6], v[7]);
    m(2, 2) = v[8];
    m(1, 0) = std::conj(m(0, 1));
    m(2, 0) = std::conj(m(0, 2));
    m(2, 1) = std::conj(m(1, 2));
    return DensityMatrix(m);
}

const SpinOperators& spin1_operators() {
    static const SpinOperators ops = make_spin1_operators();
    return ops;
}

Complex expectation(const StateVector& state, const Operator3& op, const AlgebraTolerances& tol) {
    const double n = state.norm();
    if (!state.is_finite() || std::abs(n - 1.0) > tol.expectation_norm) {
        throw ParameterError("expectation: state is not normalized (norm = " + std::to_string(n) + ")");
    }
    return state.amplitudes().dot(op * state.amplitudes());
}

Complex normalized_expectation(const StateVector& state, const Operator3& op) {
    const auto& a = state.amplitudes();
    return a.dot(op * a) / a.squaredNorm();
}

DensityMatrix projector(const StateVector& state) {
    const auto& a = state.amplitudes();
    return DensityMatrix(a * a.adjoint());
}

double purity(const DensityMatrix& rho, const AlgebraTolerances& tol) {
    const double herr = rho.hermiticity_error();
    if (!(herr <= tol.hermitian)) {
        throw ParameterError("purity: input is not Hermitian (deviation " + std::to_string(herr) + ")");
    }
    // Tr[rho^2] = sum_ij |rho_ij|^2 for Hermitian rho.
    return rho.matrix().cwiseAbs2().sum();
}

std::pair<StateVector, double> normalize(const StateVector& state) {
    const double n = state.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw DegenerateStateError("normalize: state has zero or non-finite norm");
    }
    return {StateVector(state.amplitudes() / n), n};
}

Operator3 commutator(const Operator3& a, const Operator3& b) {
    return a * b - b * a;
}

} // namespace nmqsd
