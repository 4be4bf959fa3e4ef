#include "hybridyn/scenario.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <set>

#include "json.hpp"

namespace hybridyn {

using json = nlohmann::json;

namespace {

// Walks one JSON object, remembering which keys were consumed so that unknown
// keys can be reported.
class Node {
public:
    Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw SchemaError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string child_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    std::optional<Node> object(const std::string& key) {
        if (!has(key)) return std::nullopt;
        return Node(raw(key), child_path(key));
    }

    double number(const std::string& key, double fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_number()) throw SchemaError(child_path(key), "expected a number");
        return v.get<double>();
    }

    double positive(const std::string& key, double fallback) {
        const double v = number(key, fallback);
        if (!(v > 0.0)) throw SchemaError(child_path(key), "must be positive");
        return v;
    }

    std::size_t count(const std::string& key, std::size_t fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_number_integer() || v.get<long long>() < 0) {
            throw SchemaError(child_path(key), "expected a non-negative integer");
        }
        return v.get<std::size_t>();
    }

    std::string string(const std::string& key, const std::string& fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_string()) throw SchemaError(child_path(key), "expected a string");
        return v.get<std::string>();
    }

    bool boolean(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_boolean()) throw SchemaError(child_path(key), "expected true or false");
        return v.get<bool>();
    }

    std::vector<double> numbers(const std::string& key) {
        if (!has(key)) return {};
        return number_list(raw(key), child_path(key));
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw SchemaError(child_path(it.key()), "unknown key");
        }
    }

    static std::vector<double> number_list(const json& v, const std::string& path) {
        if (!v.is_array()) throw SchemaError(path, "expected an array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) throw SchemaError(path + "[" + std::to_string(i) + "]", "expected a number");
            out.push_back(v[i].get<double>());
        }
        return out;
    }

    const std::string& path() const { return path_; }
    const json& value() const { return j_; }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

RealMatrix real_rows(const json& v, const std::string& path, Eigen::Index d) {
    if (!v.is_array() || static_cast<Eigen::Index>(v.size()) != d) {
        throw SchemaError(path, "expected " + std::to_string(d) + " rows");
    }
    RealMatrix m(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        const auto row = Node::number_list(v[static_cast<std::size_t>(i)], path + "[" + std::to_string(i) + "]");
        if (static_cast<Eigen::Index>(row.size()) != d) {
            throw SchemaError(path + "[" + std::to_string(i) + "]", "expected " + std::to_string(d) + " entries");
        }
        for (Eigen::Index j = 0; j < d; ++j) m(i, j) = row[static_cast<std::size_t>(j)];
    }
    return m;
}

Matrix read_matrix(const json& v, const std::string& path, Eigen::Index d) {
    Node n(v, path);
    Matrix m;
    if (n.has("pauli")) {
        const std::string which = n.string("pauli", "");
        if (d != 2) throw SchemaError(n.child_path("pauli"), "Pauli matrices need dimension 2");
        if (which == "x") m = pauli::x();
        else if (which == "y") m = pauli::y();
        else if (which == "z") m = pauli::z();
        else if (which == "I") m = Matrix::Identity(2, 2);
        else throw SchemaError(n.child_path("pauli"), "expected one of x, y, z, I");
    } else {
        if (!n.has("real")) throw SchemaError(path, "needs 'real' (and optionally 'imag') or 'pauli'");
        m = real_rows(n.raw("real"), n.child_path("real"), d).cast<cplx>();
        if (n.has("imag")) m += cplx(0.0, 1.0) * real_rows(n.raw("imag"), n.child_path("imag"), d).cast<cplx>();
    }
    m *= n.number("scale", 1.0);
    n.finish();
    return m;
}

Eigen::VectorXcd read_vector(const json& v, const std::string& path, Eigen::Index d) {
    Node n(v, path);
    const auto re = n.numbers("real");
    auto im = n.numbers("imag");
    n.finish();
    if (static_cast<Eigen::Index>(re.size()) != d) throw SchemaError(n.child_path("real"), "wrong length");
    if (im.empty()) im.assign(re.size(), 0.0);
    if (im.size() != re.size()) throw SchemaError(n.child_path("imag"), "wrong length");
    Eigen::VectorXcd out(d);
    for (Eigen::Index i = 0; i < d; ++i) out(i) = cplx(re[static_cast<std::size_t>(i)], im[static_cast<std::size_t>(i)]);
    return out;
}

void require_hermitian_config(const Matrix& m, const std::string& path) {
    if (!is_hermitian(m)) {
        throw NonHermitianMatrix(path, "matrix is not Hermitian");
    }
}

RealMatrix read_real_square(const json& v, const std::string& path, Eigen::Index d) {
    if (v.is_number()) {
        if (d != 1) throw SchemaError(path, "a scalar needs exactly one coupling");
        return RealMatrix::Constant(1, 1, v.get<double>());
    }
    return real_rows(v, path, d);
}

void set_path(json& root, const std::string& dotted, const json& value) {
    json* cur = &root;
    std::size_t start = 0;
    while (true) {
        const auto dot = dotted.find('.', start);
        const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw SchemaError(dotted, "malformed override path");
        if (!cur->is_object()) throw SchemaError(dotted, "override descends into a non-object");
        if (dot == std::string::npos) {
            (*cur)[key] = value;
            return;
        }
        cur = &(*cur)[key];
        if (cur->is_null()) *cur = json::object();
        start = dot + 1;
    }
}

void apply_override(json& root, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw SchemaError(kv, "override must look like key=value");
    const std::string key = kv.substr(0, eq);
    const std::string text = kv.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    set_path(root, key, value);
}

}  // namespace

RunMode parse_run_mode(const std::string& name) {
    if (name == "simulate") return RunMode::simulate;
    if (name == "unravel") return RunMode::unravel;
    if (name == "simulate-lindblad") return RunMode::simulate_lindblad;
    if (name == "kernels") return RunMode::kernels;
    if (name == "rates") return RunMode::rates;
    if (name == "limit-scan") return RunMode::limit_scan;
    if (name == "check") return RunMode::check;
    throw SchemaError("run.mode", "unknown mode '" + name + "'");
}

std::string to_string(RunMode m) {
    switch (m) {
        case RunMode::simulate: return "simulate";
        case RunMode::unravel: return "unravel";
        case RunMode::simulate_lindblad: return "simulate-lindblad";
        case RunMode::kernels: return "kernels";
        case RunMode::rates: return "rates";
        case RunMode::limit_scan: return "limit-scan";
        case RunMode::check: return "check";
    }
    return "?";
}

ScalarField sample_polynomial(const PhaseGrid& grid, const Polynomial& poly) {
    return ScalarField::sample(grid, [&](std::span<const double> x) {
        double s = 0.0;
        for (const auto& term : poly) {
            double v = term.coef;
            for (std::size_t a = 0; a < term.powers.size(); ++a) v *= std::pow(x[a], term.powers[a]);
            s += v;
        }
        return s;
    });
}

HybridHamiltonian ScenarioConfig::hybrid_hamiltonian() const {
    if (!grid) throw SchemaError("classical.grid", "this mode needs a phase-space grid");
    HybridHamiltonian h;
    h.hq = hamiltonian.empty() ? Matrix::Zero(dimension, dimension) : matrices.at(hamiltonian);
    h.hc = classical_hamiltonian.empty() ? ScalarField(*grid) : sample_polynomial(*grid, fields.at(classical_hamiltonian));
    for (const auto& c : couplings) h.couplings.push_back({matrices.at(c.op), sample_polynomial(*grid, fields.at(c.field))});
    return h;
}

HybridDensity ScenarioConfig::initial_hybrid_state() const {
    if (!grid) throw SchemaError("classical.grid", "this mode needs a phase-space grid");
    return product_state(QuantumDensity(initial_quantum), ClassicalDensity::gaussian(*grid, initial_mean, initial_sd));
}

std::vector<MassDensityField> ScenarioConfig::branch_fields() const {
    if (!lattice) throw SchemaError("classical.lattice", "this mode needs a lattice");
    std::vector<MassDensityField> out;
    for (const auto& b : branches) {
        MassDensityField f(*lattice);
        for (const auto& m : b) {
            if (m.site) {
                f += site_mass_field(m.m, lattice->index((*m.site)[0], (*m.site)[1], (*m.site)[2]), *lattice);
            } else {
                f += point_mass_field(m.m, *m.center, *lattice);
            }
        }
        out.push_back(std::move(f));
    }
    return out;
}

ScenarioConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
    json root = json::parse(text, nullptr, false);
    if (root.is_discarded()) throw SchemaError("<root>", "not valid JSON");
    if (!root.is_object()) throw SchemaError("<root>", "expected an object");
    for (const auto& kv : overrides) apply_override(root, kv);

    ScenarioConfig cfg;
    cfg.canonical = root.dump();
    Node top(root, "");

    if (auto u = top.object("units")) {
        cfg.units.hbar = u->positive("hbar", 1.0);
        cfg.units.G = u->positive("G", 1.0);
        cfg.units.c = u->positive("c", 1.0);
        u->finish();
    }

    // run first: it decides which blocks are required
    {
        auto r = top.object("run");
        if (!r) throw SchemaError("run", "missing block");
        cfg.mode = parse_run_mode(r->string("mode", ""));
        if (r->has("seed")) {
            const json& s = r->raw("seed");
            if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0)) {
                throw SchemaError(r->child_path("seed"), "expected a non-negative integer");
            }
            cfg.seed = s.get<std::uint64_t>();
        }
        cfg.n_traj = r->count("n_traj", cfg.n_traj);
        cfg.threads = std::max<std::size_t>(1, r->count("threads", 1));
        cfg.c_values = r->numbers("c_values");
        for (double c : cfg.c_values) {
            if (!(c > 0.0)) throw SchemaError(r->child_path("c_values"), "values must be positive");
        }
        r->finish();
    }

    if (auto q = top.object("quantum")) {
        cfg.dimension = static_cast<Eigen::Index>(q->count("dimension", 2));
        if (cfg.dimension < 1 || cfg.dimension > 8) throw SchemaError(q->child_path("dimension"), "must be 1 to 8");
        if (auto ms = q->object("matrices")) {
            for (auto it = ms->value().begin(); it != ms->value().end(); ++it) {
                const std::string path = ms->child_path(it.key());
                ms->raw(it.key());
                Matrix m = read_matrix(it.value(), path, cfg.dimension);
                cfg.matrices.emplace(it.key(), std::move(m));
            }
            ms->finish();
        }
        cfg.hamiltonian = q->string("hamiltonian", "");
        if (!cfg.hamiltonian.empty() && !cfg.matrices.count(cfg.hamiltonian)) {
            throw UnresolvedName(q->child_path("hamiltonian"), "no matrix named '" + cfg.hamiltonian + "'");
        }
        for (const auto& [name, m] : cfg.matrices) {
            if (name != "rho0") require_hermitian_config(m, q->child_path("matrices." + name));
        }
        if (auto init = q->object("initial")) {
            if (init->has("pure")) {
                cfg.initial_quantum = QuantumDensity::pure(read_vector(init->raw("pure"), init->child_path("pure"), cfg.dimension)).matrix();
            } else if (init->has("matrix")) {
                const std::string name = init->string("matrix", "");
                if (!cfg.matrices.count(name)) {
                    throw UnresolvedName(init->child_path("matrix"), "no matrix named '" + name + "'");
                }
                cfg.initial_quantum = cfg.matrices.at(name);
                require_hermitian_config(cfg.initial_quantum, init->child_path("matrix"));
            } else {
                throw SchemaError(init->path(), "needs 'pure' or 'matrix'");
            }
            init->finish();
        } else {
            cfg.initial_quantum = Matrix::Identity(cfg.dimension, cfg.dimension) / static_cast<double>(cfg.dimension);
        }
        try {
            (void)QuantumDensity(cfg.initial_quantum);
        } catch (const Error& e) {
            throw SchemaError(q->child_path("initial"), e.what());
        }
        q->finish();
    } else {
        cfg.dimension = 1;
        cfg.initial_quantum = Matrix::Ones(1, 1);
    }

    if (auto c = top.object("classical")) {
        if (auto g = c->object("grid")) {
            const std::string path = g->child_path("axes");
            if (!g->has("axes")) throw SchemaError(path, "missing");
            const json& axes = g->raw("axes");
            if (!axes.is_array() || (axes.size() != 2 && axes.size() != 4)) {
                throw SchemaError(path, "expected 2 or 4 axes (q1, p1[, q2, p2])");
            }
            std::vector<Axis> qs, ps;
            for (std::size_t i = 0; i < axes.size(); ++i) {
                Node a(axes[i], path + "[" + std::to_string(i) + "]");
                Axis ax{a.number("lo", -1.0), a.number("hi", 1.0), a.count("n", 0)};
                a.finish();
                if (!(ax.hi > ax.lo) || ax.n < PhaseGrid::kMinPoints) {
                    throw SchemaError(a.path(), "needs hi > lo and n >= " + std::to_string(PhaseGrid::kMinPoints));
                }
                (i % 2 == 0 ? qs : ps).push_back(ax);
            }
            g->finish();
            cfg.grid = PhaseGrid(qs, ps);
        }
        if (auto fs = c->object("fields")) {
            for (auto it = fs->value().begin(); it != fs->value().end(); ++it) {
                const std::string path = fs->child_path(it.key());
                const json& terms = fs->raw(it.key());
                if (!terms.is_array()) throw SchemaError(path, "expected a list of monomials");
                Polynomial poly;
                for (std::size_t i = 0; i < terms.size(); ++i) {
                    Node t(terms[i], path + "[" + std::to_string(i) + "]");
                    Monomial m;
                    m.coef = t.number("coef", 1.0);
                    for (double p : t.numbers("powers")) {
                        if (p < 0 || p != std::floor(p)) throw SchemaError(t.child_path("powers"), "non-negative integers only");
                        m.powers.push_back(static_cast<int>(p));
                    }
                    t.finish();
                    if (cfg.grid && m.powers.size() > cfg.grid->axis_count()) {
                        throw SchemaError(t.child_path("powers"), "more powers than grid axes");
                    }
                    poly.push_back(std::move(m));
                }
                cfg.fields.emplace(it.key(), std::move(poly));
            }
            fs->finish();
        }
        cfg.classical_hamiltonian = c->string("hamiltonian", "");
        if (!cfg.classical_hamiltonian.empty() && !cfg.fields.count(cfg.classical_hamiltonian)) {
            throw UnresolvedName(c->child_path("hamiltonian"), "no field named '" + cfg.classical_hamiltonian + "'");
        }
        if (auto init = c->object("initial")) {
            cfg.initial_mean = init->numbers("mean");
            cfg.initial_sd = init->numbers("sd");
            init->finish();
            if (cfg.grid && (cfg.initial_mean.size() != cfg.grid->axis_count() || cfg.initial_sd.size() != cfg.grid->axis_count())) {
                throw SchemaError(init->path(), "mean and sd need one entry per grid axis");
            }
            for (double s : cfg.initial_sd) {
                if (!(s > 0.0)) throw SchemaError(init->child_path("sd"), "widths must be positive");
            }
        }
        if (auto l = c->object("lattice")) {
            Lattice3 lat{l->count("n", 8), l->positive("a", 1.0), l->positive("sigma", 1.0)};
            l->finish();
            try {
                lat.validate();
            } catch (const Error& e) {
                throw SchemaError(l->path(), e.what());
            }
            cfg.lattice = lat;
        }
        if (c->has("branches")) {
            const std::string path = c->child_path("branches");
            const json& bs = c->raw("branches");
            if (!bs.is_array()) throw SchemaError(path, "expected a list of branches");
            for (std::size_t b = 0; b < bs.size(); ++b) {
                const std::string bpath = path + "[" + std::to_string(b) + "]";
                if (!bs[b].is_array()) throw SchemaError(bpath, "expected a list of masses");
                BranchSpec branch;
                for (std::size_t k = 0; k < bs[b].size(); ++k) {
                    Node m(bs[b][k], bpath + "[" + std::to_string(k) + "]");
                    MassSpec spec;
                    spec.m = m.positive("m", 1.0);
                    if (m.has("site")) {
                        const auto s = m.numbers("site");
                        if (s.size() != 3) throw SchemaError(m.child_path("site"), "expected three indices");
                        std::array<std::size_t, 3> idx{};
                        for (int i = 0; i < 3; ++i) {
                            if (s[i] < 0 || s[i] != std::floor(s[i]) || (cfg.lattice && s[i] >= static_cast<double>(cfg.lattice->n))) {
                                throw SchemaError(m.child_path("site"), "index outside the lattice");
                            }
                            idx[i] = static_cast<std::size_t>(s[i]);
                        }
                        spec.site = idx;
                    } else if (m.has("center")) {
                        const auto s = m.numbers("center");
                        if (s.size() != 3) throw SchemaError(m.child_path("center"), "expected three coordinates");
                        spec.center = Vec3{s[0], s[1], s[2]};
                    } else {
                        throw SchemaError(m.path(), "needs 'site' or 'center'");
                    }
                    m.finish();
                    branch.push_back(spec);
                }
                cfg.branches.push_back(std::move(branch));
            }
        }
        cfg.kappa = c->positive("kappa", 1.0);
        const std::string scheme = c->string("scheme", "spectral");
        if (scheme == "spectral") cfg.scheme = DerivativeScheme::spectral;
        else if (scheme == "central") cfg.scheme = DerivativeScheme::central;
        else throw SchemaError(c->child_path("scheme"), "expected 'spectral' or 'central'");
        c->finish();
    }

    if (auto cp = top.object("coupling")) {
        if (cp->has("pairs")) {
            const std::string path = cp->child_path("pairs");
            const json& pairs = cp->raw("pairs");
            if (!pairs.is_array()) throw SchemaError(path, "expected a list");
            for (std::size_t i = 0; i < pairs.size(); ++i) {
                Node p(pairs[i], path + "[" + std::to_string(i) + "]");
                CouplingPair pair{p.string("operator", ""), p.string("field", "")};
                p.finish();
                if (!cfg.matrices.count(pair.op)) {
                    throw UnresolvedName(p.child_path("operator"), "no matrix named '" + pair.op + "'");
                }
                if (cfg.mode != RunMode::limit_scan && !cfg.fields.count(pair.field)) {
                    throw UnresolvedName(p.child_path("field"), "no field named '" + pair.field + "'");
                }
                cfg.couplings.push_back(pair);
            }
        }
        const auto nc = static_cast<Eigen::Index>(cfg.couplings.size());
        const double hbar = cfg.units.hbar;
        if (cp->has("noise")) {
            const std::string path = cp->child_path("noise");
            const json& nz = cp->raw("noise");
            std::string preset;
            double dc_scale = hbar / (2.0 * cfg.kappa);
            if (nz.is_string()) {
                preset = nz.get<std::string>();
            } else {
                Node n(nz, path);
                if (n.has("preset")) {
                    preset = n.string("preset", "");
                    dc_scale = n.positive("dc", dc_scale);
                } else {
                    preset = "explicit";
                    if (!n.has("dc") || !n.has("dq")) throw SchemaError(path, "needs 'preset' or both 'dc' and 'dq'");
                    cfg.noise.dc = read_real_square(n.raw("dc"), n.child_path("dc"), nc);
                    cfg.noise.dq = read_real_square(n.raw("dq"), n.child_path("dq"), nc);
                }
                n.finish();
            }
            if (preset == "none") {
                cfg.noise_preset = NoisePreset::none;
                cfg.noise = NoiseModel::none(static_cast<std::size_t>(nc));
            } else if (preset == "saturated" || preset == "gravity") {
                cfg.noise_preset = preset == "saturated" ? NoisePreset::saturated : NoisePreset::gravity;
                if (cfg.noise_preset == NoisePreset::gravity) dc_scale = hbar / (2.0 * cfg.kappa);
                cfg.noise.dc = RealMatrix::Identity(nc, nc) * dc_scale;
                cfg.noise.dq = RealMatrix::Identity(nc, nc) * (hbar * hbar / (4.0 * dc_scale));
            } else if (preset == "explicit") {
                cfg.noise_preset = NoisePreset::explicit_matrices;
                try {
                    cfg.noise.validate();
                } catch (const Error& e) {
                    throw SchemaError(path, e.what());
                }
            } else {
                throw SchemaError(path, "unknown noise preset '" + preset + "'");
            }
        } else {
            cfg.noise = NoiseModel::none(static_cast<std::size_t>(nc));
        }
        const std::string kp = cp->string("kernel_preset", "derived_half");
        try {
            cfg.kernel_preset = parse_kernel_preset(kp);
        } catch (const Error&) {
            throw SchemaError(cp->child_path("kernel_preset"), "expected 'derived_half' or 'dio87'");
        }
        cp->finish();
    }

    if (auto in = top.object("integrator")) {
        cfg.integrator.dt = in->positive("dt", cfg.integrator.dt);
        cfg.integrator.t_final = in->positive("t_final", cfg.integrator.t_final);
        cfg.integrator.record_every = std::max<std::size_t>(1, in->count("record_every", 1));
        if (auto mon = in->object("monitors")) {
            cfg.integrator.monitors.trace = mon->boolean("trace", true);
            cfg.integrator.monitors.positivity = mon->boolean("positivity", true);
            cfg.integrator.monitors.boundary = mon->boolean("boundary", true);
            mon->finish();
        }
        in->finish();
        try {
            cfg.integrator.validate();
        } catch (const Error& e) {
            throw SchemaError(in->path(), e.what());
        }
    }
    cfg.integrator.scheme = cfg.scheme;

    if (auto lim = top.object("limit")) {
        auto& s = cfg.scan;
        s.n_phi = lim->count("n_phi", s.n_phi);
        s.n_xi = lim->count("n_xi", s.n_xi);
        s.xi_half_width = lim->positive("xi_half_width", s.xi_half_width);
        s.sigma_xi = lim->positive("sigma_xi", s.sigma_xi);
        s.phi_extent = lim->positive("phi_extent", s.phi_extent);
        s.t_final = lim->positive("t_final", s.t_final);
        s.steps_per_period = lim->count("steps_per_period", s.steps_per_period);
        s.samples = lim->count("samples", s.samples);
        lim->finish();
    }
    top.finish();

    // cross-block requirements
    switch (cfg.mode) {
        case RunMode::simulate:
        case RunMode::unravel:
            if (!cfg.grid) throw SchemaError("classical.grid", "required for mode " + to_string(cfg.mode));
            if (cfg.initial_mean.empty()) throw SchemaError("classical.initial", "required for mode " + to_string(cfg.mode));
            if (cfg.mode == RunMode::unravel && !cfg.seed) {
                throw SchemaError("run.seed", "unravel needs a seed (config or --seed)");
            }
            break;
        case RunMode::simulate_lindblad:
        case RunMode::rates:
            if (!cfg.lattice) throw SchemaError("classical.lattice", "required for mode " + to_string(cfg.mode));
            if (cfg.branches.size() < 2) throw SchemaError("classical.branches", "needs at least two branches");
            if (cfg.mode == RunMode::simulate_lindblad && static_cast<Eigen::Index>(cfg.branches.size()) != cfg.dimension) {
                throw SchemaError("classical.branches", "one branch per quantum basis state");
            }
            break;
        case RunMode::kernels:
            if (!cfg.lattice) throw SchemaError("classical.lattice", "required for mode kernels");
            break;
        case RunMode::limit_scan:
            if (cfg.couplings.size() != 1) throw SchemaError("coupling.pairs", "limit-scan needs exactly one coupling");
            if (cfg.c_values.empty()) throw SchemaError("run.c_values", "required for mode limit-scan");
            break;
        case RunMode::check:
            break;
    }

    if (cfg.mode == RunMode::limit_scan) {
        auto& s = cfg.scan;
        s.kappa = cfg.kappa;
        s.fhat = cfg.matrices.at(cfg.couplings.front().op);
        s.hq = cfg.hamiltonian.empty() ? Matrix::Zero(cfg.dimension, cfg.dimension) : cfg.matrices.at(cfg.hamiltonian);
        s.rho_q0 = cfg.initial_quantum;
        s.units = cfg.units;
        if (cfg.noise_preset == NoisePreset::gravity || cfg.noise_preset == NoisePreset::saturated ||
            cfg.noise_preset == NoisePreset::explicit_matrices || cfg.noise_preset == NoisePreset::none) {
            s.noise = cfg.noise;
        }
        s.scheme = cfg.scheme;
    }
    return cfg;
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("HashError", "SHA-256 failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

std::string config_hash(const ScenarioConfig& cfg) { return sha256_hex(cfg.canonical); }

}  // namespace hybridyn
