#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "hybridyn/hybrid_state.hpp"
#include "hybridyn/units.hpp"

namespace hybridyn {

/// One term f^r phi^r(q, p) of the hybrid interaction.
struct Coupling {
    HermitianMatrix f;
    ScalarField phi;
};

/// H(q, p) = H_Q + H_C(q, p) + sum_r f^r phi^r(q, p)
struct HybridHamiltonian {
    HermitianMatrix hq;
    ScalarField hc;
    std::vector<Coupling> couplings;

    const PhaseGrid& grid() const { return hc.grid; }
    Eigen::Index dim() const { return hq.rows(); }
    void validate() const;
};

/// Correlations of the blurring noises: dc for delta-phi, dq for delta-f.
struct NoiseModel {
    RealMatrix dc;
    RealMatrix dq;

    static NoiseModel none(std::size_t couplings) {
        return {RealMatrix::Zero(static_cast<Eigen::Index>(couplings), static_cast<Eigen::Index>(couplings)),
                RealMatrix::Zero(static_cast<Eigen::Index>(couplings), static_cast<Eigen::Index>(couplings))};
    }
    static NoiseModel scalar(double dc, double dq) {
        return {RealMatrix::Constant(1, 1, dc), RealMatrix::Constant(1, 1, dq)};
    }
    std::size_t couplings() const { return static_cast<std::size_t>(dc.rows()); }
    /// Throws InvalidArgument unless both matrices are square, symmetric and PSD.
    void validate() const;
};

struct MonitorFlags {
    bool trace = true;
    bool positivity = true;
    bool boundary = true;
};

/// Phase-space derivatives inside the generator. `spectral` treats the grid as
/// one period, which the boundary monitor certifies harmless; `central` uses
/// second-order differences with zero values beyond the grid.
enum class DerivativeScheme { spectral, central };

struct IntegratorParams {
    double dt = 0.01;
    double t_final = 1.0;
    std::size_t record_every = 1;
    MonitorFlags monitors;
    DerivativeScheme scheme = DerivativeScheme::spectral;

    std::size_t steps() const;
    void validate() const;
};

inline constexpr double kTraceDriftLimit = 1e-6;
inline constexpr double kNormGrowthLimit = 10.0;

struct MonitorSample {
    double t = 0.0;
    double trace_error = 0.0;
    double min_spectrum = 0.0;
    double boundary_mass = 0.0;
    double step_norm = 0.0;
};

struct EvolutionResult {
    std::vector<double> times;
    std::vector<HybridDensity> states;
    std::vector<MonitorSample> log;
    /// Advisory: dt times the largest generator frequency exceeded 0.1.
    bool stiff_step_warning = false;

    double worst_min_spectrum() const;
    double worst_trace_error() const;
};

// ---------------------------------------------------------------------------
// Brackets

/// Pointwise -(i/hbar)[H(q,p), rho(q,p)].
MatrixField dirac_term(const HybridHamiltonian& h, const MatrixField& rho, const UnitsConfig& units = {});

/// {A, B} = sum_n dA/dq_n dB/dp_n - dB/dq_n dA/dp_n with second-order central
/// differences (one-sided second order at the edges).
ScalarField poisson_bracket(const ScalarField& a, const ScalarField& b);
MatrixField poisson_bracket(const ScalarField& a, const MatrixField& b);
MatrixField poisson_bracket(const MatrixField& a, const ScalarField& b);

/// First derivative of a scalar field along axis k.
ScalarField derivative(const ScalarField& f, std::size_t axis);

/// Dirac term plus the Hermitian part of the Poisson bracket {H, rho}.
MatrixField aleksandrov_rhs(const HybridHamiltonian& h, const MatrixField& rho, const UnitsConfig& units = {},
                           DerivativeScheme scheme = DerivativeScheme::spectral);

/// Aleksandrov flow plus the decoherence (double commutator) and diffusion
/// (double Poisson bracket) terms of the noise-averaged equation.
MatrixField hybrid_master_rhs(const HybridHamiltonian& h, const MatrixField& rho, const NoiseModel& noise,
                              const UnitsConfig& units = {}, DerivativeScheme scheme = DerivativeScheme::spectral);

struct PositivityVerdict {
    bool preserves_positivity = false;
    /// Smallest eigenvalue of DC^{1/2} DQ DC^{1/2} minus hbar^2/4.
    double margin = 0.0;
};

PositivityVerdict positivity_condition_check(const NoiseModel& noise, const UnitsConfig& units = {});

// ---------------------------------------------------------------------------
// Time stepping

/// Called with the state at t = 0 and after every accepted step.
using StepObserver = std::function<void(double t, const MatrixField& state)>;

/// Classical RK4 over hybrid_master_rhs with per-step monitors.
EvolutionResult evolve(const HybridHamiltonian& h, const HybridDensity& rho0, const NoiseModel& noise,
                       const IntegratorParams& params, const UnitsConfig& units = {},
                       const StepObserver& observer = {});

struct TrajectoryEnsemble {
    std::size_t n_traj = 1;
    std::optional<std::uint64_t> seed;
    std::size_t threads = 1;
};

struct EnsembleResult {
    std::vector<double> times;
    /// Ensemble-averaged hybrid state at each recorded time.
    std::vector<HybridDensity> mean_states;
    /// Quantum marginal of every trajectory at every recorded time: [traj][time].
    std::vector<std::vector<Matrix>> trajectory_marginals;
    double worst_min_spectrum = 0.0;
};

/// Monte-Carlo unraveling: each trajectory follows the Aleksandrov flow with a
/// stochastic Hamiltonian kick sum_r (f^r dW_phi^r + phi^r dW_f^r) after every
/// step, increments drawn with covariances DC dt and DQ dt. The boundary monitor
/// runs on the ensemble mean, the other monitors on every trajectory.
EnsembleResult unravel_ensemble(const HybridHamiltonian& h, const HybridDensity& rho0, const NoiseModel& noise,
                                const IntegratorParams& params, const TrajectoryEnsemble& ensemble,
                                const UnitsConfig& units = {});

/// Gaussian increments (dW_phi, dW_f) for one (seed, trajectory, step) key.
/// Independent of evaluation order; used by unravel_ensemble.
struct NoiseIncrements {
    RealVector dw_phi;
    RealVector dw_f;
};
NoiseIncrements draw_increments(std::uint64_t seed, std::uint64_t trajectory, std::uint64_t step,
                                const RealMatrix& sqrt_dc, const RealMatrix& sqrt_dq, double dt);

/// Rows t, trace_error, min_spectrum, boundary_mass, step_norm.
void write_csv(std::ostream& os, const std::vector<MonitorSample>& log);

}  // namespace hybridyn
