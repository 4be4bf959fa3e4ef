#include "hybridyn/hybrid_state.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

namespace hybridyn {

namespace {

double block_trace(std::span<const cplx> b, Eigen::Index d) {
    double t = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) t += b[static_cast<std::size_t>(i * d + i)].real();
    return t;
}

double block_min_eigenvalue(std::span<const cplx> b, Eigen::Index d) {
    if (d == 1) return b[0].real();
    if (d == 2) {
        const double a = b[0].real();
        const double c = b[3].real();
        const cplx off = 0.5 * (b[2] + std::conj(b[1]));
        const double half = 0.5 * (a - c);
        return 0.5 * (a + c) - std::sqrt(half * half + std::norm(off));
    }
    return min_eigenvalue(Eigen::Map<const Matrix>(b.data(), d, d));
}

}  // namespace

QuantumDensity::QuantumDensity(Matrix m, double tol) : m_(std::move(m)) {
    require_hermitian(m_, "quantum density", std::max(tol, kHermitianRelTol));
    const double tr = m_.trace().real();
    if (std::abs(tr - 1.0) > tol) throw NotNormalized("quantum density trace is " + num(tr));
    if (min_eigenvalue(m_) < -tol) throw InvalidArgument("quantum density is not positive semidefinite");
}

QuantumDensity QuantumDensity::unchecked(Matrix m) {
    QuantumDensity q;
    q.m_ = std::move(m);
    return q;
}

QuantumDensity QuantumDensity::pure(const Eigen::VectorXcd& psi) {
    const Eigen::VectorXcd v = psi / psi.norm();
    return QuantumDensity(v * v.adjoint());
}

ClassicalDensity::ClassicalDensity(ScalarField f, double tol) : f_(std::move(f)) {
    for (double v : f_.values) {
        if (v < 0.0) throw InvalidArgument("classical density has negative values");
    }
    const double total = f_.integral();
    if (std::abs(total - 1.0) > tol) {
        throw NotNormalized("classical density integrates to " + num(total));
    }
}

ClassicalDensity ClassicalDensity::unchecked(ScalarField f) {
    ClassicalDensity c;
    c.f_ = std::move(f);
    return c;
}

ClassicalDensity ClassicalDensity::gaussian(const PhaseGrid& grid, std::span<const double> means,
                                            std::span<const double> sds) {
    if (means.size() != grid.axis_count() || sds.size() != grid.axis_count()) {
        throw ShapeMismatch("gaussian needs one mean and one width per axis");
    }
    ScalarField f = ScalarField::sample(grid, [&](std::span<const double> x) {
        double e = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            const double z = (x[k] - means[k]) / sds[k];
            e += 0.5 * z * z;
        }
        return std::exp(-e);
    });
    const double total = f.integral();
    for (double& v : f.values) v /= total;
    return ClassicalDensity(std::move(f));
}

HybridDensity::HybridDensity(MatrixField field, double tol) : field_(std::move(field)) {
    if (field_.hermiticity_residual() > tol) throw InvalidArgument("hybrid density is not Hermitian pointwise");
    const double total = total_trace();
    if (std::abs(total - 1.0) > tol) {
        throw NotNormalized("hybrid density normalization is " + num(total));
    }
}

HybridDensity HybridDensity::unchecked(MatrixField field) {
    HybridDensity h;
    h.field_ = std::move(field);
    return h;
}

double HybridDensity::total_trace() const {
    double s = 0.0;
    for (std::size_t pt = 0; pt < field_.points(); ++pt) s += block_trace(field_.block(pt), field_.dim());
    return s * grid().cell_volume();
}

HybridDensity product_state(const QuantumDensity& rho_q, const ClassicalDensity& rho_c) {
    MatrixField f(rho_c.grid(), rho_q.dim());
    for (std::size_t pt = 0; pt < f.points(); ++pt) f.at(pt) = rho_c[pt] * rho_q.matrix();
    return HybridDensity(std::move(f));
}

QuantumDensity quantum_marginal(const HybridDensity& rho) {
    const auto& f = rho.field();
    Matrix sum = Matrix::Zero(f.dim(), f.dim());
    for (std::size_t pt = 0; pt < f.points(); ++pt) sum += f.at(pt);
    return QuantumDensity::unchecked(sum * rho.grid().cell_volume());
}

ClassicalDensity classical_marginal(const HybridDensity& rho) {
    const auto& f = rho.field();
    ScalarField c(rho.grid());
    for (std::size_t pt = 0; pt < f.points(); ++pt) c.values[pt] = block_trace(f.block(pt), f.dim());
    return ClassicalDensity::unchecked(std::move(c));
}

QuantumDensity conditional_quantum_state(const HybridDensity& rho, std::size_t point) {
    const auto& f = rho.field();
    if (point >= f.points()) throw InvalidArgument("grid point index out of range");
    const double tr = block_trace(f.block(point), f.dim());
    if (!(tr > kConditioningThreshold)) {
        throw DegenerateConditioning("classical density " + num(tr) + " at point " +
                                     std::to_string(point));
    }
    return QuantumDensity::unchecked(f.at(point) / tr);
}

double expectation(const HybridDensity& rho, const HybridObservable& a) {
    const auto& f = rho.field();
    if (!f.same_shape(a)) throw ShapeMismatch("observable and state differ in grid or dimension");
    cplx sum{};
    const Eigen::Index d = f.dim();
    for (std::size_t pt = 0; pt < f.points(); ++pt) {
        const auto ab = a.block(pt);
        const auto rb = f.block(pt);
        // tr(A rho) = sum_ij A_ij rho_ji, column-major blocks
        for (Eigen::Index i = 0; i < d; ++i) {
            for (Eigen::Index j = 0; j < d; ++j) {
                sum += ab[static_cast<std::size_t>(j * d + i)] * rb[static_cast<std::size_t>(i * d + j)];
            }
        }
    }
    sum *= rho.grid().cell_volume();
    if (std::abs(sum.imag()) > 1e-10 * std::max(1.0, std::abs(sum.real()))) {
        throw InvalidArgument("expectation has imaginary residue " + num(sum.imag()));
    }
    return sum.real();
}

double min_spectrum(const MatrixField& rho) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t pt = 0; pt < rho.points(); ++pt) {
        best = std::min(best, block_min_eigenvalue(rho.block(pt), rho.dim()));
    }
    return best;
}

double boundary_mass_ratio(const MatrixField& rho, std::size_t band) {
    double peak = 0.0;
    double edge = 0.0;
    const auto& g = rho.grid();
    for (std::size_t pt = 0; pt < rho.points(); ++pt) {
        const double v = std::abs(block_trace(rho.block(pt), rho.dim()));
        peak = std::max(peak, v);
        if (g.distance_to_edge(pt) < band) edge = std::max(edge, v);
    }
    return peak > 0.0 ? edge / peak : 0.0;
}

void check_boundary(const MatrixField& rho, double t) {
    const double ratio = boundary_mass_ratio(rho);
    if (ratio > kBoundaryLeakRatio) {
        throw BoundaryLeak("boundary density ratio " + num(ratio) + " at t = " + num(t));
    }
}

HybridObservable make_observable(const ScalarField& s, const Matrix& op) {
    require_hermitian(op, "observable operator");
    MatrixField a(s.grid, op.rows());
    for (std::size_t pt = 0; pt < a.points(); ++pt) a.at(pt) = s.values[pt] * op;
    return a;
}

void write_csv(std::ostream& out, const MatrixField& rho) {
    const auto& g = rho.grid();
    const Eigen::Index d = rho.dim();
    static constexpr const char* kAxisNames[] = {"q1", "p1", "q2", "p2"};
    if (g.dofs() == 1) {
        out << "q,p";
    } else {
        for (std::size_t k = 0; k < g.axis_count(); ++k) out << (k ? "," : "") << kAxisNames[k];
    }
    for (Eigen::Index i = 0; i < d; ++i) out << ",re_" << i << i;
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = i + 1; j < d; ++j) out << ",re_" << i << j << ",im_" << i << j;
    }
    out << '\n';
    out << std::setprecision(17);
    for (std::size_t pt = 0; pt < rho.points(); ++pt) {
        for (std::size_t k = 0; k < g.axis_count(); ++k) out << (k ? "," : "") << g.coord(pt, k);
        const auto m = rho.at(pt);
        for (Eigen::Index i = 0; i < d; ++i) out << ',' << m(i, i).real();
        for (Eigen::Index i = 0; i < d; ++i) {
            for (Eigen::Index j = i + 1; j < d; ++j) out << ',' << m(i, j).real() << ',' << m(i, j).imag();
        }
        out << '\n';
    }
}

}  // namespace hybridyn
