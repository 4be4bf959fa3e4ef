#include "hybridyn/reduced_lindblad.hpp"

#include <cmath>
#include <ostream>

namespace hybridyn {

namespace {

constexpr double kPositivityTol = 1e-8;

// vec(A X B) = (B^T kron A) vec(X)
Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

Matrix left(const Matrix& a) { return kron(Matrix::Identity(a.rows(), a.cols()), a); }
Matrix right(const Matrix& b) { return kron(b.transpose(), Matrix::Identity(b.rows(), b.cols())); }

Eigen::VectorXcd vec(const Matrix& m) { return Eigen::Map<const Eigen::VectorXcd>(m.data(), m.size()); }

Matrix unvec(const Eigen::VectorXcd& v, Eigen::Index d) { return Eigen::Map<const Matrix>(v.data(), d, d); }

}  // namespace

KernelPreset parse_kernel_preset(const std::string& name) {
    if (name == "derived_half") return KernelPreset::derived_half;
    if (name == "dio87") return KernelPreset::dio87;
    throw InvalidArgument("unknown kernel preset '" + name + "'");
}

std::string to_string(KernelPreset p) { return p == KernelPreset::derived_half ? "derived_half" : "dio87"; }

double preset_factor(KernelPreset p) { return p == KernelPreset::derived_half ? 1.0 : 2.0; }

void LindbladModel::validate() const {
    require_hermitian(hq, "H_Q");
    if (hg.size() == 0) throw ShapeMismatch("H_G is missing");
    require_hermitian(hg, "H_G");
    if (hg.rows() != hq.rows()) throw ShapeMismatch("H_G and H_Q differ in dimension");
    if (dc.rows() != dc.cols() || static_cast<std::size_t>(dc.rows()) != fs.size()) {
        throw ShapeMismatch("DC must be square with one row per coupling operator");
    }
    for (const auto& f : fs) {
        if (f.rows() != hq.rows()) throw ShapeMismatch("coupling operator dimension differs from H_Q");
        require_hermitian(f, "coupling operator");
    }
    NoiseModel{dc, dc}.validate();
    if (!(weight > 0.0)) throw InvalidArgument("quadrature weight must be positive");
}

Matrix liouvillian(const LindbladModel& model, const UnitsConfig& units) {
    model.validate();
    units.validate();
    const Eigen::Index d = model.dim();
    const Matrix h = model.hq + model.hg;
    const cplx mi(0.0, -1.0 / units.hbar);
    Matrix l = mi * (left(h) - right(h));

    // K = sum_rs DC_rs f_r f_s and S = sum_rs DC_rs f_r (.) f_s via g_s = sum_r DC_rs f_r.
    Matrix k = Matrix::Zero(d, d);
    Matrix sandwich = Matrix::Zero(d * d, d * d);
    const auto n = static_cast<Eigen::Index>(model.fs.size());
    for (Eigen::Index s = 0; s < n; ++s) {
        Matrix g = Matrix::Zero(d, d);
        for (Eigen::Index r = 0; r < n; ++r) {
            const double c = model.dc(r, s);
            if (c != 0.0) g += c * model.fs[static_cast<std::size_t>(r)];
        }
        const auto& fsm = model.fs[static_cast<std::size_t>(s)];
        k += g * fsm;
        sandwich += kron(fsm.transpose(), g);
    }
    const double scale = -0.5 * model.weight / (units.hbar * units.hbar);
    l += scale * (left(k) + right(k) - 2.0 * sandwich);
    return l;
}

Matrix lindblad_rhs(const LindbladModel& model, const QuantumDensity& rho, const UnitsConfig& units) {
    if (rho.dim() != model.dim()) throw ShapeMismatch("lindblad_rhs: dimension mismatch");
    return unvec(liouvillian(model, units) * vec(rho.matrix()), model.dim());
}

LindbladModel build_model_from_lattice(const MassOperatorField& fhat, const Lattice3& lattice,
                                       const UnitsConfig& units, KernelPreset preset) {
    fhat.validate();
    if (!(fhat.lattice == lattice)) throw ShapeMismatch("build_model_from_lattice: lattices differ");
    std::vector<std::size_t> support;
    for (std::size_t s = 0; s < fhat.ops.size(); ++s) {
        if (fhat.ops[s].cwiseAbs().maxCoeff() != 0.0) support.push_back(s);
    }
    LindbladModel m;
    const Eigen::Index d = fhat.dim();
    m.hq = Matrix::Zero(d, d);
    m.hg = newton_pair_potential(fhat, lattice, units);
    m.preset = preset;
    const double coef = 0.5 * units.G * units.hbar * preset_factor(preset);
    const auto ns = static_cast<Eigen::Index>(support.size());
    m.dc.resize(ns, ns);
    for (Eigen::Index i = 0; i < ns; ++i) {
        m.fs.push_back(fhat.ops[support[static_cast<std::size_t>(i)]]);
        const Vec3 ri = lattice.position(support[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double v = coef * regularized_coulomb(ri, lattice.position(support[static_cast<std::size_t>(j)]),
                                                        lattice.sigma);
            m.dc(i, j) = v;
            m.dc(j, i) = v;
        }
    }
    const double a3 = lattice.cell_volume();
    m.weight = a3 * a3;
    return m;
}

std::vector<double> QuantumTrajectory::coherence(Eigen::Index i, Eigen::Index j) const {
    std::vector<double> out;
    for (const auto& s : states) out.push_back(std::abs(s.matrix()(i, j)));
    return out;
}

std::vector<double> QuantumTrajectory::population(Eigen::Index i) const {
    std::vector<double> out;
    for (const auto& s : states) out.push_back(s.matrix()(i, i).real());
    return out;
}

std::vector<double> QuantumTrajectory::purity() const {
    std::vector<double> out;
    for (const auto& s : states) out.push_back((s.matrix() * s.matrix()).trace().real());
    return out;
}

QuantumTrajectory evolve_lindblad(const LindbladModel& model, const QuantumDensity& rho0,
                                  const IntegratorParams& params, const UnitsConfig& units) {
    params.validate();
    if (rho0.dim() != model.dim()) throw ShapeMismatch("evolve_lindblad: dimension mismatch");
    const Matrix l = liouvillian(model, units);
    const Eigen::Index d = model.dim();
    Eigen::VectorXcd x = vec(rho0.matrix());
    const double norm0 = x.norm();

    QuantumTrajectory traj;
    traj.times.push_back(0.0);
    traj.states.push_back(rho0);
    const double h = params.dt;
    const std::size_t steps = params.steps();
    for (std::size_t k = 1; k <= steps; ++k) {
        const Eigen::VectorXcd k1 = l * x;
        const Eigen::VectorXcd k2 = l * (x + 0.5 * h * k1);
        const Eigen::VectorXcd k3 = l * (x + 0.5 * h * k2);
        const Eigen::VectorXcd k4 = l * (x + h * k3);
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

        const double t = static_cast<double>(k) * h;
        const double growth = x.norm() / norm0;
        if (!std::isfinite(growth) || growth > kNormGrowthLimit) {
            throw StepUnstable("density matrix norm grew by " + num(growth) + " at t = " + num(t));
        }
        Matrix m = unvec(x, d);
        const double drift = std::abs(m.trace().real() - 1.0);
        if (params.monitors.trace && drift > kTraceDriftLimit) {
            throw TraceDrift("trace drift " + num(drift) + " at t = " + num(t));
        }
        if (params.monitors.positivity && min_eigenvalue(hermitian_part(m)) < -kPositivityTol) {
            throw StepUnstable("density matrix lost positivity at t = " + num(t));
        }
        if (k % params.record_every == 0 || k == steps) {
            traj.times.push_back(t);
            traj.states.push_back(QuantumDensity::unchecked(std::move(m)));
        }
    }
    return traj;
}

double offdiagonal_decay_rate(const QuantumTrajectory& traj, Eigen::Index i, Eigen::Index j) {
    if (traj.states.size() < 2) throw InvalidArgument("decay fit needs at least two recorded states");
    const auto c = traj.coherence(i, j);
    if (!(c.front() > 1e-6)) throw InvalidArgument("initial coherence too small to fit a decay");
    double lo = c.front(), hi = c.front();
    for (double v : c) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if ((hi - lo) < 1e-3 * hi) throw InsufficientDecay("coherence varies by less than 1e-3 over the window");
    if (!(lo > 0.0)) throw InsufficientDecay("coherence vanished inside the fit window");

    double st = 0, sy = 0, stt = 0, sty = 0;
    const auto n = static_cast<double>(c.size());
    for (std::size_t k = 0; k < c.size(); ++k) {
        const double t = traj.times[k];
        const double y = -std::log(c[k]);
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    return (n * sty - st * sy) / (n * stt - st * st);
}

void write_csv(std::ostream& os, const QuantumTrajectory& traj) {
    os.precision(17);
    os << 't';
    if (!traj.states.empty()) {
        const Eigen::Index d = traj.states.front().dim();
        for (Eigen::Index j = 0; j < d; ++j) {
            for (Eigen::Index i = 0; i < d; ++i) os << ",re_" << i << j << ",im_" << i << j;
        }
    }
    os << '\n';
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        os << traj.times[k];
        const Matrix& m = traj.states[k].matrix();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            for (Eigen::Index i = 0; i < m.rows(); ++i) os << ',' << m(i, j).real() << ',' << m(i, j).imag();
        }
        os << '\n';
    }
}

}  // namespace hybridyn
