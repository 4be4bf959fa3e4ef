#include "doctest.h"

#include <cmath>
#include <numbers>
#include <sstream>

#include "hybridyn/hybrid_state.hpp"
#include "hybridyn/units.hpp"

using namespace hybridyn;

namespace {

Eigen::VectorXcd plus_state() {
    Eigen::VectorXcd v(2);
    v << 1.0, 1.0;
    return v / std::sqrt(2.0);
}

ClassicalDensity centered_gaussian(const PhaseGrid& g, double q0 = 0.0, double sd = 1.0) {
    const double means[2] = {q0, 0.0};
    const double sds[2] = {sd, sd};
    return ClassicalDensity::gaussian(g, means, sds);
}

// Two separated Gaussians with equal weight, built by hand.
ClassicalDensity double_peak(const PhaseGrid& g) {
    auto f = ScalarField::sample(g, [](std::span<const double> x) {
        const double a = x[0] - 2.5, b = x[0] + 2.5;
        return std::exp(-0.5 * (a * a + x[1] * x[1])) + std::exp(-0.5 * (b * b + x[1] * x[1]));
    });
    const double norm = f.integral();
    for (double& v : f.values) v /= norm;
    return ClassicalDensity(f);
}

}  // namespace

TEST_CASE("grid geometry") {
    const auto g = PhaseGrid::square(4.0, 9);
    CHECK(g.size() == 81);
    CHECK(g.axis(0).spacing() == doctest::Approx(1.0));
    CHECK(g.cell_volume() == doctest::Approx(1.0));
    CHECK_THROWS_AS(PhaseGrid::square(4.0, 7), InvalidArgument);
    std::array<double, 2> x{};
    g.coords(g.size() - 1, x);
    CHECK(x[0] == doctest::Approx(4.0));
    CHECK(x[1] == doctest::Approx(4.0));
}

TEST_CASE("units must be positive") {
    UnitsConfig u;
    CHECK_NOTHROW(u.validate());
    u.G = 0.0;
    CHECK_THROWS_AS(u.validate(), InvalidArgument);
}

TEST_CASE("quantum and classical density validation") {
    CHECK_THROWS_AS(QuantumDensity(Matrix::Identity(2, 2)), NotNormalized);
    Matrix bad = Matrix::Zero(2, 2);
    bad(0, 0) = 1.2;
    bad(1, 1) = -0.2;
    CHECK_THROWS(QuantumDensity(bad));
    const auto g = PhaseGrid::square(6.0, 32);
    ScalarField f(g);
    CHECK_THROWS_AS(ClassicalDensity{f}, NotNormalized);
}

TEST_CASE("product state recovers both factors") {
    const auto g = PhaseGrid::square(6.0, 48);
    Matrix up = Matrix::Zero(2, 2);
    up(0, 0) = 1.0;
    const QuantumDensity rq(up);
    const auto rc = centered_gaussian(g);
    const auto rho = product_state(rq, rc);
    CHECK(rho.total_trace() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((quantum_marginal(rho).matrix() - up).norm() < 1e-12);
    const auto cm = classical_marginal(rho);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(cm[i] == rc[i]);
}

TEST_CASE("maximally mixed times uniform is flat") {
    const auto g = PhaseGrid::square(3.0, 10);
    ScalarField u(g);
    const double vol = g.cell_volume() * static_cast<double>(g.size());
    for (double& v : u.values) v = 1.0 / vol;
    const auto rho = product_state(QuantumDensity(0.5 * pauli::identity()), ClassicalDensity(u));
    for (std::size_t pt = 0; pt < g.size(); ++pt) {
        CHECK((rho.field().at(pt) - pauli::identity() / (2.0 * vol)).norm() < 1e-14);
    }
}

TEST_CASE("sigma_x expectation on a double-peaked product state") {
    const auto g = PhaseGrid::square(8.0, 64);
    const auto rho = product_state(QuantumDensity::pure(plus_state()), double_peak(g));
    ScalarField one(g);
    std::fill(one.values.begin(), one.values.end(), 1.0);
    CHECK(expectation(rho, make_observable(one, pauli::x())) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(expectation(rho, make_observable(one, pauli::identity())) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mixture of product states has the averaged quantum marginal") {
    const auto g = PhaseGrid::square(6.0, 32);
    Matrix a = Matrix::Zero(2, 2), b = Matrix::Zero(2, 2);
    a(0, 0) = 1.0;
    b(1, 1) = 1.0;
    auto f = product_state(QuantumDensity(a), centered_gaussian(g, -1.0)).field();
    f.axpy(1.0, product_state(QuantumDensity(b), centered_gaussian(g, 1.0)).field());
    for (auto& z : f.data()) z *= 0.5;
    const HybridDensity rho(f);
    CHECK((quantum_marginal(rho).matrix() - 0.5 * pauli::identity()).norm() < 1e-12);
}

TEST_CASE("conditional state") {
    const auto g = PhaseGrid::square(6.0, 32);
    const QuantumDensity rq = QuantumDensity::pure(plus_state());
    const auto rho = product_state(rq, centered_gaussian(g));
    const auto rc = classical_marginal(rho);
    for (std::size_t pt = 0; pt < g.size(); pt += 37) {
        if (rc[pt] <= kConditioningThreshold) continue;
        CHECK((conditional_quantum_state(rho, pt).matrix() - rq.matrix()).norm() < 1e-12);
    }

    // point with vanishing marginal
    auto f = rho.field();
    const std::size_t corner = 0;
    f.at(corner).setZero();
    CHECK_THROWS_AS(conditional_quantum_state(HybridDensity::unchecked(f), corner), DegenerateConditioning);

    // left peak carries |0>, right peak carries |1>
    Matrix up = Matrix::Zero(2, 2), down = Matrix::Zero(2, 2);
    up(0, 0) = 1.0;
    down(1, 1) = 1.0;
    auto e = product_state(QuantumDensity(up), centered_gaussian(g, -3.0, 0.7)).field();
    e.axpy(1.0, product_state(QuantumDensity(down), centered_gaussian(g, 3.0, 0.7)).field());
    for (auto& z : e.data()) z *= 0.5;
    const HybridDensity two(e);
    std::size_t left = 0;
    std::array<double, 2> x{};
    for (std::size_t pt = 0; pt < g.size(); ++pt) {
        g.coords(pt, x);
        if (std::abs(x[0] + 3.0) < 0.2 && std::abs(x[1]) < 0.2) left = pt;
    }
    CHECK(conditional_quantum_state(two, left).matrix()(0, 0).real() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("expectation values") {
    const auto g = PhaseGrid::square(8.0, 64);
    Matrix up = Matrix::Zero(2, 2);
    up(0, 0) = 1.0;
    const double q0 = 1.3;
    const auto rho = product_state(QuantumDensity(up), centered_gaussian(g, q0));
    const auto q = ScalarField::sample(g, [](std::span<const double> x) { return x[0]; });
    CHECK(expectation(rho, make_observable(q, pauli::z())) == doctest::Approx(q0).epsilon(1e-10));

    // q^2 against the Gaussian variance, with the grid quadrature as oracle
    const auto sd = 0.8;
    const auto r2 = product_state(QuantumDensity(0.5 * pauli::identity()), centered_gaussian(g, 0.0, sd));
    const auto q2 = ScalarField::sample(g, [](std::span<const double> x) { return x[0] * x[0]; });
    CHECK(expectation(r2, make_observable(q2, pauli::identity())) == doctest::Approx(sd * sd).epsilon(1e-6));

    // linearity in A
    const auto a = make_observable(q, pauli::z());
    auto twice = a;
    twice.axpy(1.0, a);
    CHECK(expectation(rho, twice) == doctest::Approx(2.0 * expectation(rho, a)));

    const auto other = PhaseGrid::square(8.0, 32);
    ScalarField one(other);
    CHECK_THROWS_AS(expectation(rho, make_observable(one, pauli::z())), ShapeMismatch);
}

TEST_CASE("min spectrum") {
    const auto g = PhaseGrid::square(6.0, 32);
    const auto rc = centered_gaussian(g);
    const auto rho = product_state(QuantumDensity(0.5 * pauli::identity()), rc);
    CHECK(min_spectrum(rho) >= 0.0);

    auto f = rho.field();
    const std::size_t pt = g.size() / 2 + 16;
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = rc[pt];
    m(1, 1) = -0.1 * rc[pt];
    f.at(pt) = m;
    CHECK(min_spectrum(f) == doctest::Approx(-0.1 * rc[pt]).epsilon(1e-12));
}

TEST_CASE("marginal consistency and positivity of marginals") {
    const auto g = PhaseGrid::square(6.0, 40);
    const auto rho = product_state(QuantumDensity::pure(plus_state()), centered_gaussian(g, 0.5, 1.1));
    const double tq = quantum_marginal(rho).matrix().trace().real();
    const double tc = classical_marginal(rho).field().integral();
    CHECK(tq == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(tc == doctest::Approx(1.0).epsilon(1e-8));
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(classical_marginal(rho)[i] >= 0.0);
    CHECK(min_eigenvalue(quantum_marginal(rho).matrix()) >= -1e-14);
}

TEST_CASE("boundary monitor") {
    const auto g = PhaseGrid::square(10.0, 64);
    const auto ok = product_state(QuantumDensity(0.5 * pauli::identity()), centered_gaussian(g));
    CHECK(boundary_mass_ratio(ok.field()) < 1e-10);
    CHECK_NOTHROW(check_boundary(ok.field(), 0.0));
    const auto wide = product_state(QuantumDensity(0.5 * pauli::identity()), centered_gaussian(g, 0.0, 3.0));
    CHECK_THROWS_AS(check_boundary(wide.field(), 0.0), BoundaryLeak);
}

TEST_CASE("csv layout") {
    const auto g = PhaseGrid::square(2.0, 8);
    const auto rho = product_state(QuantumDensity::pure(plus_state()), centered_gaussian(g));
    std::ostringstream os;
    write_csv(os, rho.field());
    std::istringstream is(os.str());
    std::string header;
    std::getline(is, header);
    CHECK(header == "q,p,re_00,re_11,re_01,im_01");
    std::size_t rows = 0;
    for (std::string line; std::getline(is, line);) ++rows;
    CHECK(rows == g.size());
}
