#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "hybridyn/run.hpp"

namespace hybridyn {

namespace {

struct Suite {
    std::vector<std::string> lines;
    bool ok = true;

    void report(const std::string& name, bool pass, const std::string& detail) {
        lines.push_back(std::string(pass ? "PASS " : "FAIL ") + name + "  " + detail);
        ok = ok && pass;
    }

    template <class F>
    void guarded(const std::string& name, F&& body) {
        try {
            body();
        } catch (const std::exception& e) {
            report(name, false, std::string("threw ") + e.what());
        }
    }
};

// small qubit-oscillator: (1/2) sigma_x, 0.5 sigma_z q, (q^2 + p^2)
HybridHamiltonian small_hamiltonian(const PhaseGrid& g) {
    HybridHamiltonian h;
    h.hq = 0.5 * pauli::x();
    h.hc = ScalarField::sample(g, [](std::span<const double> x) { return x[0] * x[0] + x[1] * x[1]; });
    h.couplings.push_back({0.5 * pauli::z(), ScalarField::sample(g, [](std::span<const double> x) { return x[0]; })});
    return h;
}

HybridDensity small_state(const PhaseGrid& g) {
    Eigen::VectorXcd plus(2);
    plus << 1.0, 1.0;
    plus /= std::sqrt(2.0);
    const double mean[2] = {0.0, 0.0}, sd[2] = {1.0, 1.0};
    return product_state(QuantumDensity::pure(plus), ClassicalDensity::gaussian(g, mean, sd));
}

NoiseModel saturated(double dc) {
    NoiseModel n;
    n.dc = RealMatrix::Constant(1, 1, dc);
    n.dq = RealMatrix::Constant(1, 1, 0.25 / dc);
    return n;
}

std::string fmt(const char* label, double v) {
    std::ostringstream os;
    os << label << '=' << v;
    return os.str();
}

}  // namespace

std::vector<std::string> check_suite(std::size_t threads, bool& all_passed) {
    Suite s;

    s.guarded("positivity_condition", [&] {
        const auto sat = positivity_condition_check(saturated(0.8));
        NoiseModel sub = saturated(0.8);
        sub.dq *= 0.25;
        const auto below = positivity_condition_check(sub);
        s.report("positivity_condition", sat.preserves_positivity && std::abs(sat.margin) < 1e-12 && !below.preserves_positivity,
                 fmt("saturated_margin", sat.margin) + " " + fmt("sub_margin", below.margin));
    });

    s.guarded("kernel_saturation", [&] {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> u(-3.0, 3.0);
        double worst = 0.0;
        for (int i = 0; i < 100; ++i) {
            Vec3 k{u(rng), u(rng), u(rng)};
            worst = std::max(worst, std::abs(fourier_mode_product(k) - 0.25));
        }
        s.report("kernel_saturation", worst < 1e-12, fmt("max_abs_error", worst));
    });

    s.guarded("dc_symmetric_psd", [&] {
        const Lattice3 lat{6, 1.0, 1.0};
        const auto dc = build_DC(lat);
        const double asym = (dc.values - dc.values.transpose()).cwiseAbs().maxCoeff();
        const double min_eig = Eigen::SelfAdjointEigenSolver<RealMatrix>(dc.values).eigenvalues().minCoeff();
        s.report("dc_symmetric_psd", asym < 1e-14 && min_eig > -1e-12, fmt("asymmetry", asym) + " " + fmt("min_eig", min_eig));
    });

    s.guarded("penrose_rate", [&] {
        const Lattice3 lat{8, 1.0, 0.5};
        const auto a = site_mass_field(1.0, lat.index(2, 4, 4), lat);
        const auto b = site_mass_field(1.0, lat.index(6, 4, 4), lat);
        const auto fhat = MassOperatorField::configuration_diagonal({a, b});
        const double pen = penrose_rate(a, b, lat);
        Eigen::VectorXcd plus(2);
        plus << 1.0, 1.0;
        plus /= std::sqrt(2.0);
        IntegratorParams p;
        p.dt = 0.002 / pen;
        p.t_final = 1.0 / pen;
        const auto half = evolve_lindblad(build_model_from_lattice(fhat, lat, {}, KernelPreset::derived_half),
                                          QuantumDensity::pure(plus), p);
        const auto dio = evolve_lindblad(build_model_from_lattice(fhat, lat, {}, KernelPreset::dio87),
                                         QuantumDensity::pure(plus), p);
        const double r_half = offdiagonal_decay_rate(half, 0, 1);
        const double r_dio = offdiagonal_decay_rate(dio, 0, 1);
        s.report("penrose_rate", std::abs(r_half / pen - 1.0) < 1e-2 && std::abs(r_dio / r_half - 2.0) < 1e-6,
                 fmt("fitted_over_penrose", r_half / pen) + " " + fmt("dio87_over_half", r_dio / r_half));
    });

    s.guarded("newton_cross_energy", [&] {
        const Lattice3 lat{12, 1.0, 1.0};
        const auto a = site_mass_field(1.0, lat.index(2, 6, 6), lat);
        const auto b = site_mass_field(1.0, lat.index(10, 6, 6), lat);
        const auto both = a + b;
        const auto fhat = MassOperatorField::configuration_diagonal({both, a, b});
        const Matrix hg = newton_pair_potential(fhat, lat);
        const double cross = hg(0, 0).real() - hg(1, 1).real() - hg(2, 2).real();
        const double d = 8.0;
        const double oracle = -std::erf(d / 2.0) / d;
        s.report("newton_cross_energy", std::abs(cross / oracle - 1.0) < 2e-2, fmt("ratio", cross / oracle));
    });

    s.guarded("hybrid_invariants", [&] {
        const auto g = PhaseGrid::square(10.0, 64);
        const auto h = small_hamiltonian(g);
        IntegratorParams p;
        p.dt = 0.005;
        p.t_final = 0.5;
        p.record_every = 20;
        const auto res = evolve(h, small_state(g), saturated(0.5), p);
        double herm = 0.0;
        for (const auto& st : res.states) herm = std::max(herm, st.field().hermiticity_residual());
        const double trace = res.worst_trace_error();
        const double min = res.worst_min_spectrum();
        s.report("hybrid_invariants", trace < 1e-6 && herm < 1e-10 && min >= -1e-8,
                 fmt("trace_drift", trace) + " " + fmt("hermiticity", herm) + " " + fmt("min_spectrum", min));
    });

    s.guarded("quiet_unraveling", [&] {
        const auto g = PhaseGrid::square(10.0, 56);
        const auto h = small_hamiltonian(g);
        IntegratorParams p;
        p.dt = 0.005;
        p.t_final = 0.1;
        p.record_every = 20;
        const auto det = evolve(h, small_state(g), NoiseModel::none(1), p);
        const auto ens = unravel_ensemble(h, small_state(g), NoiseModel::none(1), p, {3, 1, threads});
        MatrixField diff = ens.mean_states.back().field();
        diff.axpy(-1.0, det.states.back().field());
        s.report("quiet_unraveling", diff.norm() < 1e-12, fmt("difference", diff.norm()));
    });

    all_passed = s.ok;
    return s.lines;
}

}  // namespace hybridyn
