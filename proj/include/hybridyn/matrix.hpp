#pragma once

#include <complex>
#include <string_view>

#include <Eigen/Dense>

namespace hybridyn {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

// Finite-dimensional operators (Hamiltonians, couplings, observables) are plain
// complex matrices; Hermiticity is checked where they enter the library.
using HermitianMatrix = Matrix;

inline constexpr double kHermitianRelTol = 1e-12;

/// max |A - A^H| / max(1, max |A|)
double hermiticity_residual(const Matrix& a);

bool is_hermitian(const Matrix& a, double rel_tol = kHermitianRelTol);

/// Throws InvalidArgument naming `what` when `a` is not square or not Hermitian.
void require_hermitian(const Matrix& a, std::string_view what, double rel_tol = kHermitianRelTol);

Matrix hermitian_part(const Matrix& a);

RealVector hermitian_eigenvalues(const Matrix& a);

double min_eigenvalue(const Matrix& a);

/// Largest singular value.
double operator_norm(const Matrix& a);

/// (1/2) * trace norm of (a - b), for Hermitian a, b.
double trace_distance(const Matrix& a, const Matrix& b);

Matrix commutator(const Matrix& a, const Matrix& b);

/// exp(-i * scale * h) for Hermitian h.
Matrix unitary_exp(const Matrix& h, double scale);

/// Symmetric PSD square root via eigendecomposition (negative eigenvalues clipped).
RealMatrix psd_sqrt(const RealMatrix& m);

namespace pauli {
Matrix identity(Eigen::Index d = 2);
Matrix x();
Matrix y();
Matrix z();
}  // namespace pauli

}  // namespace hybridyn
