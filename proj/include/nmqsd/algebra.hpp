#pragma once

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <utility>

namespace nmqsd {

using Complex = std::complex<double>;
using Operator3 = Eigen::Matrix3cd;

inline constexpr Complex kI{0.0, 1.0};

// Tolerances used by the algebra checks. One record so callers can loosen them together.
struct AlgebraTolerances {
    double normalized = 1e-9;         // |norm - 1| accepted for "normalized" states
    double expectation_norm = 1e-6;   // expectation() rejects states further than this from unit norm
    double hermitian = 1e-9;          // purity() rejects inputs with larger max |rho - rho^dagger|
};

// Pure state of the three-level system. Index order is fixed: 0 -> |2>, 1 -> |1>, 2 -> |0>,
// so that Jz = diag(1, 0, -1) and the ground state is the last component.
class StateVector {
public:
    StateVector() : amps_(Eigen::Vector3cd::Zero()) {}
    StateVector(Complex amp2, Complex amp1, Complex amp0) : amps_(amp2, amp1, amp0) {}
    explicit StateVector(const Eigen::Vector3cd& amps) : amps_(amps) {}

    // Basis state |level> for level in {0, 1, 2}.
    static StateVector level(int level);
    // (|0> + |1> + |2>) / sqrt(3).
    static StateVector symmetric();

    const Eigen::Vector3cd& amplitudes() const { return amps_; }
    Eigen::Vector3cd& amplitudes() { return amps_; }

    Complex amp2() const { return amps_[0]; }
    Complex amp1() const { return amps_[1]; }
    Complex amp0() const { return amps_[2]; }

    double squared_norm() const { return amps_.squaredNorm(); }
    double norm() const { return amps_.norm(); }
    bool is_finite() const { return amps_.allFinite(); }
    bool is_normalized(double tol = AlgebraTolerances{}.normalized) const;

private:
    Eigen::Vector3cd amps_;
};

// 3x3 reduced state. Hermiticity and positivity are properties of how it was produced;
// the type itself only guarantees the fixed shape.
class DensityMatrix {
public:
    DensityMatrix() : m_(Operator3::Zero()) {}
    explicit DensityMatrix(const Operator3& m) : m_(m) {}

    const Operator3& matrix() const { return m_; }
    Complex operator()(int r, int c) const { return m_(r, c); }

    Complex trace() const { return m_.trace(); }
    double hermiticity_error() const;
    // Smallest eigenvalue of the Hermitian part.
    double min_eigenvalue() const;
    // (rho + rho^dagger) / 2.
    DensityMatrix hermitized() const;

    // Nine reals, row-major over the upper triangle: diagonals as real parts,
    // off-diagonals as (re, im) pairs: rho00, re01, im01, re02, im02, rho11, re12, im12, rho22.
    std::array<double, 9> serialize() const;
    static DensityMatrix deserialize(const std::array<double, 9>& v);

private:
    Operator3 m_;
};

// Fixed spin-1 operators and the products that appear in the time-local QSD generators.
struct SpinOperators {
    Operator3 Jz;
    Operator3 Jplus;
    Operator3 Jminus;
    Operator3 Jx;
    Operator3 Jy;
    Operator3 JpJm;     // J+ J-
    Operator3 JpJzJm;   // J+ Jz J-
    Operator3 JzJm;     // Jz J-
    Operator3 Jm2;      // J-^2
    Operator3 JpJm2;    // J+ J-^2
};

const SpinOperators& spin1_operators();

Complex expectation(const StateVector& state, const Operator3& op,
                    const AlgebraTolerances& tol = {});

// <psi|A|psi> / <psi|psi> without the normalization precondition.
Complex normalized_expectation(const StateVector& state, const Operator3& op);

DensityMatrix projector(const StateVector& state);

double purity(const DensityMatrix& rho, const AlgebraTolerances& tol = {});

// Returns the unit-norm state and the original norm. Throws DegenerateStateError on zero norm.
std::pair<StateVector, double> normalize(const StateVector& state);

Operator3 commutator(const Operator3& a, const Operator3& b);

} // namespace nmqsd
