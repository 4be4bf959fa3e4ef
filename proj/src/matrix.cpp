#include "hybridyn/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hybridyn/errors.hpp"

namespace hybridyn {

double hermiticity_residual(const Matrix& a) {
    if (a.rows() != a.cols()) return std::numeric_limits<double>::infinity();
    if (a.size() == 0) return 0.0;
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    return (a - a.adjoint()).cwiseAbs().maxCoeff() / scale;
}

bool is_hermitian(const Matrix& a, double rel_tol) { return hermiticity_residual(a) <= rel_tol; }

void require_hermitian(const Matrix& a, std::string_view what, double rel_tol) {
    if (a.rows() != a.cols()) {
        throw InvalidArgument(std::string(what) + " is not square");
    }
    if (!is_hermitian(a, rel_tol)) {
        throw InvalidArgument(std::string(what) + " is not Hermitian");
    }
}

Matrix hermitian_part(const Matrix& a) { return 0.5 * (a + a.adjoint()); }

RealVector hermitian_eigenvalues(const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(hermitian_part(a), Eigen::EigenvaluesOnly);
    return solver.eigenvalues();
}

double min_eigenvalue(const Matrix& a) { return hermitian_eigenvalues(a).minCoeff(); }

double operator_norm(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(a);
    return svd.singularValues()(0);
}

double trace_distance(const Matrix& a, const Matrix& b) {
    return 0.5 * hermitian_eigenvalues(a - b).cwiseAbs().sum();
}

Matrix commutator(const Matrix& a, const Matrix& b) { return a * b - b * a; }

Matrix unitary_exp(const Matrix& h, double scale) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(hermitian_part(h));
    const auto& vals = solver.eigenvalues();
    Eigen::VectorXcd phases(vals.size());
    for (Eigen::Index k = 0; k < vals.size(); ++k) {
        phases(k) = std::exp(cplx(0.0, -scale * vals(k)));
    }
    const Matrix& v = solver.eigenvectors();
    return v * phases.asDiagonal() * v.adjoint();
}

RealMatrix psd_sqrt(const RealMatrix& m) {
    Eigen::SelfAdjointEigenSolver<RealMatrix> solver(0.5 * (m + m.transpose()));
    RealVector vals = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return solver.eigenvectors() * vals.asDiagonal() * solver.eigenvectors().transpose();
}

namespace pauli {

Matrix identity(Eigen::Index d) { return Matrix::Identity(d, d); }

Matrix x() {
    Matrix m(2, 2);
    m << 0.0, 1.0, 1.0, 0.0;
    return m;
}

Matrix y() {
    Matrix m(2, 2);
    m << 0.0, cplx(0.0, -1.0), cplx(0.0, 1.0), 0.0;
    return m;
}

Matrix z() {
    Matrix m(2, 2);
    m << 1.0, 0.0, 0.0, -1.0;
    return m;
}

}  // namespace pauli

}  // namespace hybridyn
