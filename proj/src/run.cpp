#include "hybridyn/run.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace hybridyn {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

class Writer {
public:
    Writer(fs::path dir, RunRecord& rec) : dir_(std::move(dir)), rec_(rec) {}

    void put(const std::string& name, const std::string& bytes) {
        const fs::path p = dir_ / name;
        fs::create_directories(p.parent_path());
        std::ofstream os(p, std::ios::binary);
        os << bytes;
        if (!os) throw Error("OutputError", "cannot write " + p.string());
        rec_.files.push_back({name, sha256_hex(bytes), bytes.size()});
    }

    template <class F>
    void csv(const std::string& name, F&& fill) {
        std::ostringstream os;
        fill(os);
        put(name, os.str());
    }

    void json_file(const std::string& name, const json& j) { put(name, j.dump(2) + "\n"); }

private:
    fs::path dir_;
    RunRecord& rec_;
};

QuantumTrajectory marginal_series(const std::vector<double>& times, const std::vector<HybridDensity>& states) {
    QuantumTrajectory q;
    q.times = times;
    for (const auto& s : states) q.states.push_back(QuantumDensity::unchecked(quantum_marginal(s).matrix()));
    return q;
}

json matrix_json(const Matrix& m) {
    json re = json::array(), im = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array(), c = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            r.push_back(m(i, j).real());
            c.push_back(m(i, j).imag());
        }
        re.push_back(r);
        im.push_back(c);
    }
    return {{"real", re}, {"imag", im}};
}

void run_simulate(const ScenarioConfig& cfg, Writer& w, RunRecord& rec) {
    const auto h = cfg.hybrid_hamiltonian();
    const auto rho0 = cfg.initial_hybrid_state();
    const auto res = evolve(h, rho0, cfg.noise, cfg.integrator, cfg.units);

    double worst_herm = 0.0, worst_boundary = 0.0;
    for (const auto& s : res.states) worst_herm = std::max(worst_herm, s.field().hermiticity_residual());
    for (const auto& m : res.log) worst_boundary = std::max(worst_boundary, m.boundary_mass);
    const auto verdict = positivity_condition_check(cfg.noise, cfg.units);

    rec.monitor_summary = {{"worst_min_spectrum", res.worst_min_spectrum()},
                           {"worst_trace_error", res.worst_trace_error()},
                           {"worst_hermiticity_residual", worst_herm},
                           {"worst_boundary_ratio", worst_boundary},
                           {"stiff_step_warning", res.stiff_step_warning ? 1.0 : 0.0}};

    w.csv("monitor.csv", [&](std::ostream& os) { write_csv(os, res.log); });
    w.csv("marginals.csv", [&](std::ostream& os) { write_csv(os, marginal_series(res.times, res.states)); });
    w.csv("state_initial.csv", [&](std::ostream& os) { write_csv(os, res.states.front().field()); });
    w.csv("state_final.csv", [&](std::ostream& os) { write_csv(os, res.states.back().field()); });
    json summary = {{"steps", cfg.integrator.steps()},
                    {"t_final", res.times.back()},
                    {"positivity_condition", {{"preserves", verdict.preserves_positivity}, {"margin", verdict.margin}}},
                    {"final_marginal", matrix_json(quantum_marginal(res.states.back()).matrix())}};
    for (const auto& [k, v] : rec.monitor_summary) summary["monitors"][k] = v;
    w.json_file("summary.json", summary);
}

void run_unravel(const ScenarioConfig& cfg, Writer& w, RunRecord& rec) {
    const auto h = cfg.hybrid_hamiltonian();
    const auto rho0 = cfg.initial_hybrid_state();
    const auto res = unravel_ensemble(h, rho0, cfg.noise, cfg.integrator, {cfg.n_traj, cfg.seed, cfg.threads}, cfg.units);

    // spread of the per-trajectory marginals at the last time
    double spread = 0.0;
    const Matrix mean = quantum_marginal(res.mean_states.back()).matrix();
    for (const auto& tr : res.trajectory_marginals) spread = std::max(spread, trace_distance(tr.back(), mean));

    rec.monitor_summary = {{"worst_min_spectrum", res.worst_min_spectrum},
                           {"final_trace_error", std::abs(res.mean_states.back().total_trace() - 1.0)},
                           {"max_trajectory_distance", spread}};
    w.csv("marginals.csv", [&](std::ostream& os) { write_csv(os, marginal_series(res.times, res.mean_states)); });
    w.csv("state_final.csv", [&](std::ostream& os) { write_csv(os, res.mean_states.back().field()); });
    json summary = {{"n_traj", cfg.n_traj}, {"final_marginal", matrix_json(mean)}};
    for (const auto& [k, v] : rec.monitor_summary) summary["monitors"][k] = v;
    w.json_file("summary.json", summary);
}

json pair_rates(const ScenarioConfig& cfg, const std::vector<MassDensityField>& fields, const KernelMatrix& dc) {
    json pairs = json::array();
    for (std::size_t i = 0; i < fields.size(); ++i) {
        for (std::size_t j = i + 1; j < fields.size(); ++j) {
            const double pen = penrose_rate(fields[i], fields[j], *cfg.lattice, cfg.units);
            const double ker = decoherence_rate_from_kernel(fields[i], fields[j], dc, cfg.units);
            pairs.push_back({{"pair", {i, j}},
                             {"penrose_rate", pen},
                             {"kernel_rate", ker},
                             {"preset", to_string(cfg.kernel_preset)},
                             {"preset_rate", preset_factor(cfg.kernel_preset) * pen}});
        }
    }
    return pairs;
}

void run_simulate_lindblad(const ScenarioConfig& cfg, Writer& w, RunRecord& rec) {
    const auto fields = cfg.branch_fields();
    const auto fhat = MassOperatorField::configuration_diagonal(fields);
    const auto model = build_model_from_lattice(fhat, *cfg.lattice, cfg.units, cfg.kernel_preset);
    LindbladModel full = model;
    if (!cfg.hamiltonian.empty()) full.hq = cfg.matrices.at(cfg.hamiltonian);
    const auto traj = evolve_lindblad(full, QuantumDensity(cfg.initial_quantum), cfg.integrator, cfg.units);

    const auto dc = build_DC(*cfg.lattice, cfg.units);
    json pairs = pair_rates(cfg, fields, dc);
    double worst_ratio = 0.0, worst_min = 0.0, worst_trace = 0.0;
    for (const auto& s : traj.states) {
        worst_min = std::min(worst_min, Eigen::SelfAdjointEigenSolver<Matrix>(s.matrix()).eigenvalues().minCoeff());
        worst_trace = std::max(worst_trace, std::abs(s.matrix().trace().real() - 1.0));
    }
    for (auto& p : pairs) {
        const auto i = static_cast<Eigen::Index>(p["pair"][0].get<std::size_t>());
        const auto j = static_cast<Eigen::Index>(p["pair"][1].get<std::size_t>());
        try {
            const double fitted = offdiagonal_decay_rate(traj, i, j);
            p["fitted_rate"] = fitted;
            p["ratio"] = fitted / p["preset_rate"].get<double>();
            worst_ratio = std::max(worst_ratio, std::abs(p["ratio"].get<double>() - 1.0));
        } catch (const InsufficientDecay& e) {
            p["fitted_rate"] = nullptr;
            p["fit_error"] = e.what();
        } catch (const InvalidArgument& e) {
            p["fitted_rate"] = nullptr;
            p["fit_error"] = e.what();
        }
    }
    rec.monitor_summary = {{"worst_min_spectrum", worst_min},
                           {"worst_trace_error", worst_trace},
                           {"worst_rate_mismatch", worst_ratio}};
    w.csv("trajectory.csv", [&](std::ostream& os) { write_csv(os, traj); });
    w.json_file("rates.json", {{"pairs", pairs}, {"hg", matrix_json(model.hg)}});
}

void run_rates(const ScenarioConfig& cfg, Writer& w, RunRecord& rec) {
    const auto fields = cfg.branch_fields();
    const auto dc = build_DC(*cfg.lattice, cfg.units);
    const auto fhat = MassOperatorField::configuration_diagonal(fields);
    const Matrix hg = newton_pair_potential(fhat, *cfg.lattice, cfg.units);
    json pairs = pair_rates(cfg, fields, dc);
    double worst = 0.0;
    for (const auto& p : pairs) {
        worst = std::max(worst, std::abs(p["kernel_rate"].get<double>() / p["penrose_rate"].get<double>() - 1.0));
    }
    json energies = json::array();
    for (Eigen::Index k = 0; k < hg.rows(); ++k) energies.push_back(hg(k, k).real());
    rec.monitor_summary = {{"kernel_vs_penrose_mismatch", worst}};
    w.json_file("rates.json", {{"pairs", pairs}, {"newton_energies", energies}});
}

void run_kernels(const ScenarioConfig& cfg, Writer& w, RunRecord& rec) {
    const auto dc = build_DC(*cfg.lattice, cfg.units);
    const auto dq = build_DQ_from_DC(dc, *cfg.lattice, cfg.units);
    const double target = cfg.units.hbar * cfg.units.hbar / 4.0;

    std::mt19937_64 rng(cfg.seed.value_or(0));
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    double worst = 0.0;
    json samples = json::array();
    for (int i = 0; i < 100; ++i) {
        Vec3 k{u(rng), u(rng), u(rng)};
        const double prod = fourier_mode_product(k, cfg.units);
        worst = std::max(worst, std::abs(prod - target) / target);
        samples.push_back({{"k", {k[0], k[1], k[2]}}, {"product", prod}});
    }
    const RealMatrix sym = 0.5 * (dc.values + dc.values.transpose());
    const double asym = (dc.values - dc.values.transpose()).cwiseAbs().maxCoeff();
    const double min_eig = Eigen::SelfAdjointEigenSolver<RealMatrix>(sym).eigenvalues().minCoeff();

    rec.monitor_summary = {{"saturation_rel_error", worst}, {"dc_asymmetry", asym}, {"dc_min_eigenvalue", min_eig}};
    w.csv("dc.csv", [&](std::ostream& os) { write_csv(os, dc); });
    w.csv("dq.csv", [&](std::ostream& os) { write_csv(os, dq); });
    w.json_file("saturation.json", {{"target", target},
                                    {"max_rel_error", worst},
                                    {"dc_asymmetry", asym},
                                    {"dc_min_eigenvalue", min_eig},
                                    {"samples", samples}});
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

void run_limit_scan(const ScenarioConfig& cfg, Writer& w, RunRecord& rec) {
    const auto entries = c_scan(cfg.scan, cfg.c_values, cfg.threads);
    json points = json::array();
    std::vector<double> cs, xis;
    double worst_min = 0.0;
    for (const auto& e : entries) {
        std::ostringstream tag;
        tag << "c_" << e.c;
        w.csv("moments_" + tag.str() + ".csv", [&](std::ostream& os) { write_csv(os, e.moments); });
        w.csv("distance_" + tag.str() + ".csv", [&](std::ostream& os) {
            os.precision(17);
            os << "t,distance_derived_half,distance_dio87\n";
            for (std::size_t k = 0; k < e.sample_times.size(); ++k) {
                os << e.sample_times[k] << ',' << e.distance_half[k] << ',' << e.distance_dio87[k] << '\n';
            }
        });
        points.push_back({{"c", e.c},
                          {"dt", e.dt},
                          {"steps", e.steps},
                          {"trace_distance_derived_half", e.trace_distance},
                          {"trace_distance_dio87", e.trace_distance_dio87},
                          {"mean_field_residual", e.mean_field_residual},
                          {"post_mean_field_residual", e.post_mean_field_residual},
                          {"xi_norm_avg", e.xi_norm_avg},
                          {"ehrenfest", e.ehrenfest},
                          {"worst_min_spectrum", e.worst_min_spectrum}});
        cs.push_back(e.c);
        xis.push_back(e.xi_norm_avg);
        worst_min = std::min(worst_min, e.worst_min_spectrum);
    }
    json report = {{"points", points}};
    if (cs.size() >= 2) {
        const double exponent = -loglog_slope(cs, xis);
        report["xi_norm_exponent"] = exponent;
        rec.monitor_summary["xi_norm_exponent"] = exponent;
        json ratios = json::array();
        for (std::size_t i = 0; i + 1 < entries.size(); ++i) {
            ratios.push_back({{"c_from", entries[i].c},
                              {"c_to", entries[i + 1].c},
                              {"post_mean_field_ratio",
                               entries[i].post_mean_field_residual / entries[i + 1].post_mean_field_residual}});
        }
        report["post_mean_field_ratios"] = ratios;
    }
    rec.monitor_summary["worst_min_spectrum"] = worst_min;
    w.json_file("scan.json", report);
}

}  // namespace

RunRecord run(const ScenarioConfig& cfg, const fs::path& out_dir) {
    RunRecord rec;
    rec.config_hash = config_hash(cfg);
    rec.seed = cfg.seed;
    rec.mode = to_string(cfg.mode);
    rec.start_time = utc_now();
    fs::create_directories(out_dir);
    Writer w(out_dir, rec);

    switch (cfg.mode) {
        case RunMode::simulate: run_simulate(cfg, w, rec); break;
        case RunMode::unravel: run_unravel(cfg, w, rec); break;
        case RunMode::simulate_lindblad: run_simulate_lindblad(cfg, w, rec); break;
        case RunMode::rates: run_rates(cfg, w, rec); break;
        case RunMode::kernels: run_kernels(cfg, w, rec); break;
        case RunMode::limit_scan: run_limit_scan(cfg, w, rec); break;
        case RunMode::check: {
            bool ok = true;
            rec.check_lines = check_suite(cfg.threads, ok);
            rec.passed = ok;
            std::string text;
            for (const auto& l : rec.check_lines) text += l + "\n";
            w.put("check.txt", text);
            rec.monitor_summary["failed_checks"] = 0.0;
            for (const auto& l : rec.check_lines) {
                if (l.rfind("FAIL", 0) == 0) rec.monitor_summary["failed_checks"] += 1.0;
            }
            break;
        }
    }

    rec.end_time = utc_now();
    json files = json::array();
    for (const auto& f : rec.files) files.push_back({{"name", f.name}, {"sha256", f.sha256}, {"bytes", f.bytes}});
    json manifest = {{"config_hash", rec.config_hash},
                     {"mode", rec.mode},
                     {"seed", rec.seed ? json(*rec.seed) : json(nullptr)},
                     {"start_time", rec.start_time},
                     {"end_time", rec.end_time},
                     {"monitor_summary", rec.monitor_summary},
                     {"passed", rec.passed},
                     {"files", files}};
    std::ofstream(out_dir / "manifest.json") << manifest.dump(2) << "\n";
    return rec;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const NumericalFailure*>(&e)) return 3;
    if (dynamic_cast<const InsufficientDecay*>(&e) || dynamic_cast<const DegenerateConditioning*>(&e) ||
        dynamic_cast<const ZeroMode*>(&e)) {
        return 3;
    }
    if (dynamic_cast<const Error*>(&e)) return 2;
    return 3;
}

}  // namespace hybridyn
