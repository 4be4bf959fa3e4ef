#include "hybridyn/nonrel_limit.hpp"

#include <cmath>
#include <exception>
#include <numbers>
#include <ostream>
#include <thread>

namespace hybridyn {

namespace {
constexpr double kPi = std::numbers::pi;
}

double ModeModel::xi_stiffness() const { return 4.0 * kPi * units.G * c * c; }

double ModeModel::frequency() const { return std::sqrt(xi_stiffness() * kappa); }

ModeModel build_mode_model(double kappa, double c, const HermitianMatrix& fhat, const HermitianMatrix& hq,
                           const PhaseGrid& grid, const UnitsConfig& units, const NoiseModel& noise) {
    if (!(kappa > 0.0)) throw InvalidArgument("mode stiffness kappa must be positive");
    if (!(c > 0.0)) throw InvalidArgument("c must be positive");
    if (grid.dofs() != 1) throw InvalidArgument("the mode model lives on a one-dof (phi, xi) grid");
    units.validate();
    require_hermitian(fhat, "f");
    require_hermitian(hq, "H_Q");
    if (fhat.rows() != hq.rows()) throw ShapeMismatch("f and H_Q differ in dimension");

    ModeModel m;
    m.kappa = kappa;
    m.c = c;
    m.fhat = fhat;
    m.hq = hq;
    m.noise = noise;
    m.units = units;

    const auto& phi_axis = grid.axis(PhaseGrid::q_axis(0));
    const double band = static_cast<double>(kBoundaryBand) * phi_axis.spacing();
    for (double lam : hermitian_eigenvalues(fhat)) {
        const double eq = -lam / kappa;
        if (eq < phi_axis.lo + band || eq > phi_axis.hi - band) {
            throw BoundaryLeak("branch equilibrium phi = " + num(eq) + " lies outside the grid");
        }
    }

    const double half_a = 0.5 * m.xi_stiffness();
    m.hamiltonian.hq = hq;
    m.hamiltonian.hc = ScalarField::sample(grid, [&](std::span<const double> x) {
        return half_a * x[1] * x[1] + 0.5 * kappa * x[0] * x[0];
    });
    m.hamiltonian.couplings.push_back({fhat, ScalarField::sample(grid, [](std::span<const double> x) { return x[0]; })});
    noise.validate();
    if (noise.couplings() != 1) throw ShapeMismatch("the mode model has exactly one coupling");
    return m;
}

NoiseModel saturated_mode_noise(double kappa, const UnitsConfig& units) {
    if (!(kappa > 0.0)) throw InvalidArgument("mode stiffness kappa must be positive");
    return NoiseModel::scalar(units.hbar / (2.0 * kappa), units.hbar * kappa / 2.0);
}

LindbladModel analog_lindblad(const ModeModel& model, KernelPreset preset) {
    LindbladModel l;
    l.hq = model.hq;
    l.hg = -(model.fhat * model.fhat) / (2.0 * model.kappa);
    l.fs = {model.fhat};
    l.dc = model.noise.dc * preset_factor(preset);
    l.weight = 1.0;
    l.preset = preset;
    return l;
}

ModeMoments mode_moments(const MatrixField& rho, const HermitianMatrix& fhat) {
    const auto& g = rho.grid();
    const Eigen::Index d = rho.dim();
    ModeMoments m;
    m.m_phi = Matrix::Zero(d, d);
    m.m_xi = Matrix::Zero(d, d);
    m.rho_q = Matrix::Zero(d, d);
    std::array<double, 2> x{};
    for (std::size_t pt = 0; pt < rho.points(); ++pt) {
        g.coords(pt, x);
        const auto r = rho.at(pt);
        m.rho_q += r;
        m.m_phi += x[0] * r;
        m.m_xi += x[1] * r;
    }
    const double vol = g.cell_volume();
    m.rho_q *= vol;
    m.m_phi *= vol;
    m.m_xi *= vol;
    m.phi = m.m_phi.trace().real();
    m.xi = m.m_xi.trace().real();
    if (fhat.size() > 0) m.f = (fhat * m.rho_q).trace().real();
    return m;
}

namespace {
double post_mean_field(const ModeMoments& m, const HermitianMatrix& f, double kappa) {
    return operator_norm(kappa * m.m_phi + 0.5 * (f * m.rho_q + m.rho_q * f));
}
}  // namespace

double mean_field_residual(const HybridDensity& rho, const ModeModel& model) {
    const auto m = mode_moments(rho.field(), model.fhat);
    return std::abs(model.kappa * m.phi + m.f);
}

double post_mean_field_residual(const HybridDensity& rho, const ModeModel& model) {
    return post_mean_field(mode_moments(rho.field(), model.fhat), model.fhat, model.kappa);
}

double xi_moment_norm(const HybridDensity& rho) {
    return operator_norm(mode_moments(rho.field(), Matrix()).m_xi);
}

void MomentReport::add(double t, const ModeMoments& m, const HermitianMatrix& fhat, double kappa) {
    times.push_back(t);
    phi.push_back(m.phi);
    xi.push_back(m.xi);
    f.push_back(m.f);
    mean_field.push_back(std::abs(kappa * m.phi + m.f));
    post_mean_field.push_back(hybridyn::post_mean_field(m, fhat, kappa));
    xi_norm.push_back(operator_norm(m.m_xi));
}

EhrenfestResidual ehrenfest_check(const MomentReport& r, const ModeModel& model) {
    EhrenfestResidual res;
    if (r.times.size() < 3) return res;
    const double a = model.xi_stiffness();
    for (std::size_t k = 1; k + 1 < r.times.size(); ++k) {
        const double h = r.times[k + 1] - r.times[k - 1];
        const double dphi = (r.phi[k + 1] - r.phi[k - 1]) / h;
        const double dxi = (r.xi[k + 1] - r.xi[k - 1]) / h;
        res.phi = std::max(res.phi, std::abs(dphi - a * r.xi[k]));
        res.xi = std::max(res.xi, std::abs(dxi + model.kappa * r.phi[k] + r.f[k]));
    }
    return res;
}

namespace {

struct ScanGeometry {
    double phi_hw, xi_hw, sphi, sxi;
};

ScanGeometry scan_geometry(const ScanTemplate& tpl, double stiffness) {
    const double stretch = std::sqrt(stiffness / tpl.kappa);
    if (tpl.shrink_xi) {
        return {tpl.phi_extent, tpl.xi_half_width / stretch, tpl.sigma_xi, tpl.sigma_xi / stretch};
    }
    return {tpl.phi_extent * stretch, tpl.xi_half_width, tpl.sigma_xi * stretch, tpl.sigma_xi};
}

}  // namespace

ModeModel scan_model(const ScanTemplate& tpl, double c) {
    const auto geo = scan_geometry(tpl, 4.0 * kPi * tpl.units.G * c * c);
    const auto grid = PhaseGrid::single({-geo.phi_hw, geo.phi_hw, tpl.n_phi}, {-geo.xi_hw, geo.xi_hw, tpl.n_xi});
    const NoiseModel noise = tpl.noise ? *tpl.noise : saturated_mode_noise(tpl.kappa, tpl.units);
    return build_mode_model(tpl.kappa, c, tpl.fhat, tpl.hq, grid, tpl.units, noise);
}

HybridDensity scan_initial_state(const ScanTemplate& tpl, const ModeModel& model) {
    const QuantumDensity rq(tpl.rho_q0);
    const auto geo = scan_geometry(tpl, model.xi_stiffness());
    const double sphi = geo.sphi;
    const double sxi = geo.sxi;

    // rho(x) = D(x) rho_Q D(x), D = sum_k sqrt(G_k(x)) P_k with G_k centred on
    // the branch equilibrium -lambda_k / kappa.
    Eigen::SelfAdjointEigenSolver<Matrix> es(tpl.fhat);
    const Matrix& v = es.eigenvectors();
    const RealVector& lam = es.eigenvalues();
    const Matrix rq_eig = v.adjoint() * rq.matrix() * v;
    const auto& g = model.grid();
    const Eigen::Index d = rq.dim();
    MatrixField field(g, d);
    const double norm = 1.0 / (2.0 * kPi * sphi * sxi);
    std::array<double, 2> x{};
    Eigen::VectorXd root(d);
    for (std::size_t pt = 0; pt < g.size(); ++pt) {
        g.coords(pt, x);
        const double gxi = x[1] * x[1] / (2.0 * sxi * sxi);
        for (Eigen::Index k = 0; k < d; ++k) {
            const double u = (x[0] + lam(k) / tpl.kappa) / sphi;
            root(k) = std::sqrt(norm * std::exp(-0.5 * u * u - gxi));
        }
        field.at(pt) = v * (root.asDiagonal() * rq_eig * root.asDiagonal()) * v.adjoint();
    }
    // discrete normalization
    cplx tr = 0.0;
    for (std::size_t pt = 0; pt < g.size(); ++pt) tr += field.at(pt).trace();
    const double total = tr.real() * g.cell_volume();
    for (auto& z : field.data()) z /= total;
    return HybridDensity(std::move(field));
}

ScanEntry run_scan_point(const ScanTemplate& tpl, double c) {
    const ModeModel model = scan_model(tpl, c);
    const auto rho0 = scan_initial_state(tpl, model);

    const double period = 2.0 * kPi / model.frequency();
    const std::size_t samples = std::max<std::size_t>(1, tpl.samples);
    const double dt_target = period / static_cast<double>(tpl.steps_per_period);
    const auto per_sample = static_cast<std::size_t>(std::ceil(tpl.t_final / (dt_target * static_cast<double>(samples))));
    IntegratorParams params;
    params.record_every = std::max<std::size_t>(1, per_sample);
    const std::size_t steps = params.record_every * samples;
    params.dt = tpl.t_final / static_cast<double>(steps);
    params.t_final = tpl.t_final;
    params.scheme = tpl.scheme;

    ScanEntry e;
    e.c = c;
    e.dt = params.dt;
    e.steps = steps;
    auto observer = [&](double t, const MatrixField& x) {
        const auto m = mode_moments(x, model.fhat);
        e.moments.add(t, m, model.fhat, model.kappa);
    };
    const auto run = evolve(model.hamiltonian, rho0, model.noise, params, model.units, observer);
    e.worst_min_spectrum = run.worst_min_spectrum();

    IntegratorParams lparams = params;
    lparams.monitors = MonitorFlags{};
    const QuantumDensity rq0 = quantum_marginal(rho0);
    const auto half = evolve_lindblad(analog_lindblad(model, KernelPreset::derived_half), rq0, lparams, model.units);
    const auto dio = evolve_lindblad(analog_lindblad(model, KernelPreset::dio87), rq0, lparams, model.units);
    for (std::size_t k = 0; k < run.states.size(); ++k) {
        const Matrix q = quantum_marginal(run.states[k]).matrix();
        e.sample_times.push_back(run.times[k]);
        e.distance_half.push_back(trace_distance(q, half.states[k].matrix()));
        e.distance_dio87.push_back(trace_distance(q, dio.states[k].matrix()));
    }
    e.trace_distance = e.distance_half.back();
    e.trace_distance_dio87 = e.distance_dio87.back();
    e.mean_field_residual = e.moments.mean_field.back();
    e.post_mean_field_residual = e.moments.post_mean_field.back();
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < e.moments.times.size(); ++k) {
        if (e.moments.times[k] >= tpl.t_final - period - 0.5 * params.dt) {
            sum += e.moments.xi_norm[k];
            ++count;
        }
    }
    e.xi_norm_avg = count ? sum / static_cast<double>(count) : 0.0;
    e.ehrenfest = ehrenfest_check(e.moments, model).max();
    return e;
}

std::vector<ScanEntry> c_scan(const ScanTemplate& tpl, const std::vector<double>& c_values, std::size_t threads) {
    std::vector<ScanEntry> out(c_values.size());
    std::vector<std::exception_ptr> errors(c_values.size());
    auto work = [&](std::size_t i) {
        try {
            out[i] = run_scan_point(tpl, c_values[i]);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    const std::size_t nthreads = std::max<std::size_t>(1, std::min(threads, c_values.size()));
    if (nthreads == 1) {
        for (std::size_t i = 0; i < c_values.size(); ++i) work(i);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < nthreads; ++t) {
            pool.emplace_back([&, t] {
                for (std::size_t i = t; i < c_values.size(); i += nthreads) work(i);
            });
        }
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

void write_csv(std::ostream& os, const MomentReport& r) {
    os.precision(17);
    os << "t,phi,xi,f,mean_field,post_mean_field,xi_norm\n";
    for (std::size_t k = 0; k < r.times.size(); ++k) {
        os << r.times[k] << ',' << r.phi[k] << ',' << r.xi[k] << ',' << r.f[k] << ',' << r.mean_field[k] << ','
           << r.post_mean_field[k] << ',' << r.xi_norm[k] << '\n';
    }
}

}  // namespace hybridyn
