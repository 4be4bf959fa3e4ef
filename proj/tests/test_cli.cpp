#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "hybridyn/run.hpp"
#include "json.hpp"

using namespace hybridyn;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const char* kDephasing = R"({
  "quantum": {
    "dimension": 2,
    "matrices": {"F": {"real": [[0.5, 0], [0, -0.5]]}},
    "initial": {"pure": {"real": [0.7071067811865476, 0.7071067811865476]}}
  },
  "classical": {
    "grid": {"axes": [{"lo": -10, "hi": 10, "n": 48}, {"lo": -10, "hi": 10, "n": 48}]},
    "fields": {"osc": [{"coef": 1, "powers": [2, 0]}, {"coef": 1, "powers": [0, 2]}],
               "q": [{"coef": 1, "powers": [1, 0]}]},
    "hamiltonian": "osc",
    "initial": {"mean": [0, 0], "sd": [1.2, 1.2]}
  },
  "coupling": {"pairs": [{"operator": "F", "field": "q"}], "noise": "saturated"},
  "integrator": {"dt": 0.01, "t_final": 0.1, "record_every": 5},
  "run": {"mode": "simulate"}
})";

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("hybridyn_test_cli_" + name);
    fs::remove_all(p);
    return p;
}

template <class E>
std::string error_path(const std::string& text) {
    try {
        parse_config(text);
    } catch (const E& e) {
        return e.path();
    }
    return "<no error>";
}

json dephasing() { return json::parse(kDephasing); }

}  // namespace

TEST_CASE("minimal dephasing scenario parses with defaults") {
    const auto cfg = parse_config(kDephasing);
    CHECK(cfg.mode == RunMode::simulate);
    CHECK(cfg.units.hbar == 1.0);
    CHECK(cfg.kappa == 1.0);
    CHECK(cfg.scheme == DerivativeScheme::spectral);
    CHECK(cfg.kernel_preset == KernelPreset::derived_half);
    CHECK(cfg.threads == 1);
    CHECK_FALSE(cfg.seed.has_value());
    REQUIRE(cfg.grid.has_value());
    CHECK(cfg.grid->size() == 48u * 48u);
    CHECK(cfg.integrator.steps() == 10u);

    const auto h = cfg.hybrid_hamiltonian();
    CHECK(h.hq.norm() == 0.0);
    REQUIRE(h.couplings.size() == 1);
    CHECK((h.couplings[0].f - 0.5 * pauli::z()).norm() == 0.0);
    const auto rho = cfg.initial_hybrid_state();
    CHECK(rho.total_trace() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("polynomial fields sample exactly") {
    const auto g = PhaseGrid::square(2.0, 9);
    const Polynomial p{{2.0, {1, 0}}, {-1.0, {0, 3}}, {0.5, {}}};
    const auto f = sample_polynomial(g, p);
    std::array<double, 2> x{};
    for (std::size_t i = 0; i < g.size(); ++i) {
        g.coords(i, x);
        CHECK(f.values[i] == doctest::Approx(2.0 * x[0] - x[1] * x[1] * x[1] + 0.5).epsilon(1e-14));
    }
}

TEST_CASE("saturated preset materializes the threshold product") {
    for (double hbar : {1.0, 0.3}) {
        auto j = dephasing();
        j["units"]["hbar"] = hbar;
        const auto cfg = parse_config(j.dump());
        CHECK(cfg.noise_preset == NoisePreset::saturated);
        CHECK(cfg.noise.dc(0, 0) * cfg.noise.dq(0, 0) == doctest::Approx(hbar * hbar / 4.0).epsilon(1e-14));
        CHECK(positivity_condition_check(cfg.noise, cfg.units).margin == doctest::Approx(0.0).epsilon(1e-14));
    }
    auto j = dephasing();
    j["coupling"]["noise"] = {{"preset", "saturated"}, {"dc", 0.8}};
    const auto cfg = parse_config(j.dump());
    CHECK(cfg.noise.dc(0, 0) == 0.8);
    CHECK(cfg.noise.dq(0, 0) == doctest::Approx(0.3125).epsilon(1e-14));

    j["coupling"]["noise"] = {{"dc", 0.2}, {"dq", 0.3125}};
    const auto expl = parse_config(j.dump());
    CHECK(expl.noise_preset == NoisePreset::explicit_matrices);
    CHECK_FALSE(positivity_condition_check(expl.noise).preserves_positivity);
}

TEST_CASE("config errors name the offending key") {
    auto j = dephasing();
    j["quantum"]["matrices"]["F"] = {{"real", {{0, 1}, {0, 0}}}};
    CHECK(error_path<NonHermitianMatrix>(j.dump()) == "quantum.matrices.F");

    j = dephasing();
    j["quantum"]["matrices"]["F"] = {{"real", {{0, 0}, {0, 0}}}, {"imag", {{0, 1}, {1, 0}}}};
    CHECK(error_path<NonHermitianMatrix>(j.dump()) == "quantum.matrices.F");

    j = dephasing();
    j["coupling"]["pairs"][0]["operator"] = "G";
    CHECK(error_path<UnresolvedName>(j.dump()) == "coupling.pairs[0].operator");

    j = dephasing();
    j["classical"]["hamiltonian"] = "nope";
    CHECK(error_path<UnresolvedName>(j.dump()) == "classical.hamiltonian");

    j = dephasing();
    j["integrator"]["dtt"] = 0.1;
    CHECK(error_path<SchemaError>(j.dump()) == "integrator.dtt");

    j = dephasing();
    j["integrator"]["dt"] = -0.1;
    CHECK(error_path<SchemaError>(j.dump()) == "integrator.dt");

    j = dephasing();
    j["run"]["mode"] = "fly";
    CHECK(error_path<SchemaError>(j.dump()) == "run.mode");

    j = dephasing();
    j["classical"]["initial"]["sd"] = {1.0};
    CHECK(error_path<SchemaError>(j.dump()) == "classical.initial");

    j = dephasing();
    j["run"]["mode"] = "unravel";
    CHECK(error_path<SchemaError>(j.dump()) == "run.seed");

    CHECK(error_path<SchemaError>("{not json") == "<root>");
    CHECK(error_path<SchemaError>("[1, 2]") == "<root>");
    CHECK_THROWS_AS(parse_config(kDephasing, {"integrator.dt"}), SchemaError);
}

TEST_CASE("overrides and the config hash") {
    const auto cfg = parse_config(kDephasing, {"integrator.dt=0.005", "run.seed=42", "coupling.kernel_preset=dio87"});
    CHECK(cfg.integrator.dt == 0.005);
    REQUIRE(cfg.seed.has_value());
    CHECK(*cfg.seed == 42u);
    CHECK(cfg.kernel_preset == KernelPreset::dio87);

    // reordered keys and whitespace hash the same, a changed value does not
    const auto j = dephasing();
    std::vector<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
    std::string text = "{\n";
    for (std::size_t i = keys.size(); i-- > 0;) {
        text += "  \"" + keys[i] + "\" :  " + j[keys[i]].dump(4) + (i ? ",\n" : "\n");
    }
    text += "}";
    const auto a = parse_config(kDephasing);
    const auto b = parse_config(text);
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 64u);
    CHECK(config_hash(a) != config_hash(parse_config(kDephasing, {"integrator.t_final=0.2"})));
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("simulate writes a manifest with content hashes") {
    const auto out = scratch("simulate");
    const auto cfg = parse_config(kDephasing);
    const auto rec = run(cfg, out);
    CHECK(rec.files.size() == 5u);
    const auto manifest = json::parse(slurp(out / "manifest.json"));
    CHECK(manifest["config_hash"] == config_hash(cfg));
    CHECK(manifest["mode"] == "simulate");
    CHECK(manifest["seed"].is_null());
    CHECK(manifest["monitor_summary"]["worst_trace_error"].get<double>() < 1e-6);
    for (const auto& f : manifest["files"]) {
        const std::string bytes = slurp(out / f["name"].get<std::string>());
        CHECK(sha256_hex(bytes) == f["sha256"]);
        CHECK(bytes.size() == f["bytes"].get<std::size_t>());
    }
    std::istringstream marg(slurp(out / "marginals.csv"));
    std::string header;
    std::getline(marg, header);
    CHECK(header == "t,re_00,im_00,re_10,im_10,re_01,im_01,re_11,im_11");
    fs::remove_all(out);
}

TEST_CASE("reruns are byte identical") {
    auto j = dephasing();
    j["run"] = {{"mode", "unravel"}, {"seed", 9}, {"n_traj", 4}, {"threads", 1}};
    j["integrator"]["t_final"] = 0.05;
    const auto cfg1 = parse_config(j.dump());
    const auto cfg3 = parse_config(j.dump(), {"run.threads=3"});
    const auto a = run(cfg1, scratch("rerun_a"));
    const auto b = run(cfg1, scratch("rerun_b"));
    const auto c = run(cfg3, scratch("rerun_c"));
    REQUIRE(a.files.size() == b.files.size());
    for (std::size_t i = 0; i < a.files.size(); ++i) {
        CHECK(a.files[i].sha256 == b.files[i].sha256);
        CHECK(a.files[i].sha256 == c.files[i].sha256);
    }
    const auto other = run(parse_config(j.dump(), {"run.seed=10"}), scratch("rerun_d"));
    CHECK(other.files.front().sha256 != a.files.front().sha256);
    for (const char* s : {"rerun_a", "rerun_b", "rerun_c", "rerun_d"}) fs::remove_all(scratch(s));
}

TEST_CASE("kernels mode on an 8^3 lattice") {
    const auto out = scratch("kernels");
    const auto rec = run(parse_config(R"({"classical": {"lattice": {"n": 8}}, "run": {"mode": "kernels"}})"), out);
    CHECK(rec.monitor_summary.at("saturation_rel_error") < 1e-12);
    CHECK(rec.monitor_summary.at("dc_asymmetry") == 0.0);
    CHECK(rec.monitor_summary.at("dc_min_eigenvalue") > -1e-12);
    std::istringstream dc(slurp(out / "dc.csv"));
    std::string line;
    std::size_t rows = 0;
    while (std::getline(dc, line)) ++rows;
    CHECK(rows == 1u + 512u * 512u);
    fs::remove_all(out);
}

TEST_CASE("two-site lindblad run reproduces the penrose rate") {
    const char* text = R"({
      "quantum": {"dimension": 2, "initial": {"pure": {"real": [1, 1]}}},
      "classical": {"lattice": {"n": 8, "a": 1, "sigma": 0.5},
                    "branches": [[{"m": 1, "site": [2, 4, 4]}], [{"m": 1, "site": [6, 4, 4]}]]},
      "integrator": {"dt": 0.01, "t_final": 5},
      "run": {"mode": "simulate-lindblad"}
    })";
    const auto out = scratch("lindblad");
    const auto rec = run(parse_config(text), out);
    CHECK(rec.monitor_summary.at("worst_rate_mismatch") < 1e-6);
    const auto rates = json::parse(slurp(out / "rates.json"));
    CHECK(rates["pairs"][0]["ratio"].get<double>() == doctest::Approx(1.0).epsilon(1e-6));
    const auto dio = run(parse_config(text, {"coupling.kernel_preset=dio87"}), out);
    const auto rates2 = json::parse(slurp(out / "rates.json"));
    CHECK(rates2["pairs"][0]["fitted_rate"].get<double>() ==
          doctest::Approx(2.0 * rates["pairs"][0]["fitted_rate"].get<double>()).epsilon(1e-8));
    CHECK_THROWS_AS(parse_config(text, {"classical.branches=[]"}), SchemaError);
    fs::remove_all(out);
}

TEST_CASE("check suite passes") {
    bool ok = false;
    const auto lines = check_suite(1, ok);
    CHECK(ok);
    CHECK(lines.size() >= 7u);
    for (const auto& l : lines) CHECK_MESSAGE(l.rfind("PASS", 0) == 0, l);
}

TEST_CASE("exit codes") {
    CHECK(exit_code_for(SchemaError("a.b", "bad")) == 2);
    CHECK(exit_code_for(NonHermitianMatrix("a", "bad")) == 2);
    CHECK(exit_code_for(InvalidArgument("bad")) == 2);
    CHECK(exit_code_for(BoundaryLeak("x")) == 3);
    CHECK(exit_code_for(TraceDrift("x")) == 3);
    CHECK(exit_code_for(StepUnstable("x")) == 3);

    const fs::path bin = HYBRIDYN_BIN;
    const auto out = scratch("exit");
    fs::create_directories(out);
    const auto call = [&](const std::string& args, const std::string& env = "") {
        const std::string cmd = env + " \"" + bin.string() + "\" " + args + " > \"" + (out / "log.txt").string() + "\" 2>&1";
        const int status = std::system(cmd.c_str());
        return WEXITSTATUS(status);
    };
    std::ofstream(out / "ok.json") << kDephasing;
    auto bad = dephasing();
    bad["quantum"]["matrices"]["F"] = {{"real", {{0, 1}, {0, 0}}}};
    std::ofstream(out / "bad.json") << bad.dump();
    auto leak = dephasing();
    leak["classical"]["initial"]["mean"] = {8.0, 0.0};
    std::ofstream(out / "leak.json") << leak.dump();

    CHECK(call("simulate --config " + (out / "ok.json").string() + " --out " + (out / "a").string()) == 0);
    CHECK(fs::exists(out / "a" / "manifest.json"));
    CHECK(call("simulate --config " + (out / "bad.json").string() + " --out " + (out / "b").string()) == 2);
    CHECK(call("simulate --config " + (out / "missing.json").string()) == 2);
    CHECK(call("simulate --config " + (out / "ok.json").string() + " --override integrator.dt=oops --out " +
               (out / "c").string()) == 2);
    CHECK(call("simulate --config " + (out / "leak.json").string() + " --out " + (out / "d").string()) == 3);
    CHECK(call("unravel --config " + (out / "ok.json").string() + " --out " + (out / "e").string()) == 2);
    CHECK(call("simulate --config " + (out / "ok.json").string() + " --out " + (out / "ignored").string(),
               "HYBRIDYN_OUT=\"" + (out / "env").string() + "\"") == 0);
    CHECK(fs::exists(out / "env" / "manifest.json"));
    CHECK_FALSE(fs::exists(out / "ignored"));
    CHECK(call("check --out " + (out / "chk").string()) == 0);
    fs::remove_all(out);
}
