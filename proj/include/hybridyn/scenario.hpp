#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hybridyn/evolution.hpp"
#include "hybridyn/gravity_kernel.hpp"
#include "hybridyn/nonrel_limit.hpp"
#include "hybridyn/reduced_lindblad.hpp"

namespace hybridyn {

// Config errors carry the dotted path of the offending key.
class ConfigError : public Error {
public:
    ConfigError(std::string kind, const std::string& path, const std::string& reason)
        : Error(std::move(kind), path + ": " + reason), path_(path) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

#define HYBRIDYN_CONFIG_ERROR(Name)                                                       \
    class Name : public ConfigError {                                                     \
    public:                                                                               \
        Name(const std::string& path, const std::string& reason) : ConfigError(#Name, path, reason) {} \
    };

HYBRIDYN_CONFIG_ERROR(SchemaError)
HYBRIDYN_CONFIG_ERROR(NonHermitianMatrix)
HYBRIDYN_CONFIG_ERROR(UnresolvedName)

#undef HYBRIDYN_CONFIG_ERROR

enum class RunMode { simulate, unravel, simulate_lindblad, kernels, rates, limit_scan, check };

RunMode parse_run_mode(const std::string& name);
std::string to_string(RunMode m);

/// sum_k coef_k prod_a x_a^powers_k[a] over the grid axes (q1, p1, q2, p2).
struct Monomial {
    double coef = 0.0;
    std::vector<int> powers;
};
using Polynomial = std::vector<Monomial>;

ScalarField sample_polynomial(const PhaseGrid& grid, const Polynomial& poly);

/// One mass inside a branch: either on a lattice site or a smeared point at `center`.
struct MassSpec {
    double m = 1.0;
    std::optional<std::array<std::size_t, 3>> site;
    std::optional<Vec3> center;
};
using BranchSpec = std::vector<MassSpec>;

struct CouplingPair {
    std::string op;
    std::string field;
};

enum class NoisePreset { none, saturated, gravity, explicit_matrices };

struct ScenarioConfig {
    UnitsConfig units;

    // quantum block
    Eigen::Index dimension = 2;
    std::map<std::string, Matrix> matrices;
    std::string hamiltonian;  // empty: zero
    Matrix initial_quantum;

    // classical block
    std::optional<PhaseGrid> grid;
    std::map<std::string, Polynomial> fields;
    std::string classical_hamiltonian;  // empty: zero
    std::vector<double> initial_mean;
    std::vector<double> initial_sd;
    std::optional<Lattice3> lattice;
    std::vector<BranchSpec> branches;
    double kappa = 1.0;
    DerivativeScheme scheme = DerivativeScheme::spectral;

    // coupling block
    std::vector<CouplingPair> couplings;
    NoisePreset noise_preset = NoisePreset::none;
    NoiseModel noise;
    KernelPreset kernel_preset = KernelPreset::derived_half;

    IntegratorParams integrator;

    // run block
    RunMode mode = RunMode::simulate;
    std::optional<std::uint64_t> seed;
    std::size_t n_traj = 100;
    std::size_t threads = 1;
    std::vector<double> c_values;

    // limit-scan recipe (kappa, fhat, hq, rho_q0 and units come from the blocks above)
    ScanTemplate scan;

    /// Input JSON after overrides, re-serialized with sorted keys and no whitespace.
    std::string canonical;

    HybridHamiltonian hybrid_hamiltonian() const;
    HybridDensity initial_hybrid_state() const;
    std::vector<MassDensityField> branch_fields() const;
};

/// Parse and validate a JSON scenario, applying `key=value` overrides (dotted
/// paths; values parsed as JSON, falling back to plain strings) first.
ScenarioConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {});

/// SHA-256 of the canonical config text; independent of key order and whitespace.
std::string config_hash(const ScenarioConfig& cfg);

std::string sha256_hex(const std::string& bytes);

}  // namespace hybridyn
