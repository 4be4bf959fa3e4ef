#pragma once

#include <iosfwd>

#include "hybridyn/errors.hpp"
#include "hybridyn/phase_grid.hpp"

namespace hybridyn {

inline constexpr double kQuantumTol = 1e-10;
inline constexpr double kNormalizationTol = 1e-8;
inline constexpr double kConditioningThreshold = 1e-12;
inline constexpr double kBoundaryLeakRatio = 1e-10;
inline constexpr std::size_t kBoundaryBand = 2;

/// Density matrix of the quantum subsystem.
class QuantumDensity {
public:
    /// Validates trace 1 and positivity to within `tol`.
    explicit QuantumDensity(Matrix m, double tol = kQuantumTol);
    /// Skips validation; used for marginals of monitored (possibly drifting) states.
    static QuantumDensity unchecked(Matrix m);

    const Matrix& matrix() const { return m_; }
    Eigen::Index dim() const { return m_.rows(); }

    static QuantumDensity pure(const Eigen::VectorXcd& psi);

private:
    QuantumDensity() = default;
    Matrix m_;
};

/// Normalized non-negative Liouville density.
class ClassicalDensity {
public:
    explicit ClassicalDensity(ScalarField f, double tol = kNormalizationTol);
    static ClassicalDensity unchecked(ScalarField f);

    /// Normalized product of 1D Gaussians, one (mean, sd) per axis in axis order.
    static ClassicalDensity gaussian(const PhaseGrid& grid, std::span<const double> means,
                                     std::span<const double> sds);

    const ScalarField& field() const { return f_; }
    const PhaseGrid& grid() const { return f_.grid; }
    double operator[](std::size_t i) const { return f_.values[i]; }

private:
    ClassicalDensity() = default;
    ScalarField f_;
};

/// Hybrid observable A(q, p): Hermitian matrix at every grid point.
using HybridObservable = MatrixField;

/// Hybrid state rho(q, p).
class HybridDensity {
public:
    /// Validates per-point Hermiticity and total normalization within `tol`.
    explicit HybridDensity(MatrixField field, double tol = kNormalizationTol);
    /// Integrator outputs: normalization and positivity are monitored, not enforced.
    static HybridDensity unchecked(MatrixField field);

    const MatrixField& field() const { return field_; }
    MatrixField& mutable_field() { return field_; }
    const PhaseGrid& grid() const { return field_.grid(); }
    Eigen::Index dim() const { return field_.dim(); }

    /// sum_points trace(rho) * cell volume
    double total_trace() const;

private:
    HybridDensity() = default;
    MatrixField field_;
};

HybridDensity product_state(const QuantumDensity& rho_q, const ClassicalDensity& rho_c);

QuantumDensity quantum_marginal(const HybridDensity& rho);

ClassicalDensity classical_marginal(const HybridDensity& rho);

/// rho(q, p) / trace rho(q, p) at a grid point.
QuantumDensity conditional_quantum_state(const HybridDensity& rho, std::size_t point);

/// tr sum_points A(q, p) rho(q, p) * cell volume. Throws ShapeMismatch on grid or
/// dimension mismatch and InvalidArgument if the imaginary residue exceeds 1e-10.
double expectation(const HybridDensity& rho, const HybridObservable& a);

/// Minimum eigenvalue over all points' matrices.
double min_spectrum(const MatrixField& rho);
inline double min_spectrum(const HybridDensity& rho) { return min_spectrum(rho.field()); }

/// Largest |trace rho| within the boundary band, relative to the peak |trace rho|.
double boundary_mass_ratio(const MatrixField& rho, std::size_t band = kBoundaryBand);

/// Throws BoundaryLeak when boundary_mass_ratio exceeds kBoundaryLeakRatio.
void check_boundary(const MatrixField& rho, double t);

/// Observable s(q, p) * op at every point.
HybridObservable make_observable(const ScalarField& s, const Matrix& op);

/// One row per point: the coordinates, then the real diagonal and the
/// real/imaginary parts of the strict upper triangle (d^2 numbers).
void write_csv(std::ostream& out, const MatrixField& rho);

}  // namespace hybridyn
