#pragma once

#include <iosfwd>
#include <vector>

#include "hybridyn/evolution.hpp"
#include "hybridyn/reduced_lindblad.hpp"

namespace hybridyn {

/// One classical field mode (phi, xi) coupled to a quantum system through f phi:
/// H_C = 2 pi G c^2 xi^2 + (kappa / 2) phi^2. phi is the grid's q axis, xi its p axis.
struct ModeModel {
    double kappa = 1.0;
    double c = 1.0;
    HermitianMatrix fhat;
    HermitianMatrix hq;
    NoiseModel noise;
    UnitsConfig units;
    HybridHamiltonian hamiltonian;

    const PhaseGrid& grid() const { return hamiltonian.grid(); }
    /// 4 pi G c^2, the inverse "mass" of the mode.
    double xi_stiffness() const;
    /// sqrt(4 pi G c^2 kappa)
    double frequency() const;
};

/// Throws BoundaryLeak when a branch equilibrium -lambda(f)/kappa falls outside
/// the phi axis minus the monitored boundary band.
ModeModel build_mode_model(double kappa, double c, const HermitianMatrix& fhat, const HermitianMatrix& hq,
                           const PhaseGrid& grid, const UnitsConfig& units, const NoiseModel& noise);

/// Mode analog of the field kernels: DC = hbar / (2 kappa), DQ = hbar kappa / 2 (product hbar^2 / 4).
NoiseModel saturated_mode_noise(double kappa, const UnitsConfig& units = {});

/// H_G = -f^2 / (2 kappa) and the model's DC scaled by the preset.
LindbladModel analog_lindblad(const ModeModel& model, KernelPreset preset);

/// Classical means and the matrix-valued partial moments of a mode state.
struct ModeMoments {
    double phi = 0.0;
    double xi = 0.0;
    double f = 0.0;
    Matrix m_phi;
    Matrix m_xi;
    Matrix rho_q;
};

ModeMoments mode_moments(const MatrixField& rho, const HermitianMatrix& fhat);

/// |kappa <phi> + <f>|
double mean_field_residual(const HybridDensity& rho, const ModeModel& model);
/// || kappa M_phi + (f rho_Q + rho_Q f) / 2 ||
double post_mean_field_residual(const HybridDensity& rho, const ModeModel& model);
/// || integral xi rho ||
double xi_moment_norm(const HybridDensity& rho);

struct MomentReport {
    std::vector<double> times;
    std::vector<double> phi, xi, f;
    std::vector<double> mean_field, post_mean_field, xi_norm;

    void add(double t, const ModeMoments& m, const HermitianMatrix& fhat, double kappa);
};

struct EhrenfestResidual {
    double phi = 0.0;
    double xi = 0.0;
    double max() const { return std::max(phi, xi); }
};

/// Largest deviation of central-difference time derivatives of <phi>, <xi> from
/// 4 pi G c^2 <xi> and -kappa <phi> - <f>. Needs uniformly spaced samples.
EhrenfestResidual ehrenfest_check(const MomentReport& report, const ModeModel& model);

/// Scan recipe: everything but c. dt follows the oscillator period; by default the
/// phi window and phi width stretch with c while the xi grid stays put.
struct ScanTemplate {
    double kappa = 1.0;
    HermitianMatrix fhat;
    HermitianMatrix hq;
    Matrix rho_q0;
    UnitsConfig units;
    /// Defaults to saturated_mode_noise(kappa) when empty.
    std::optional<NoiseModel> noise;
    std::size_t n_phi = 64;
    std::size_t n_xi = 64;
    double xi_half_width = 10.0;
    /// Initial xi width; phi width is sigma_xi sqrt(4 pi G c^2 / kappa).
    double sigma_xi = 1.0;
    /// phi half-width = phi_extent * sqrt(4 pi G c^2 / kappa).
    double phi_extent = 10.0;
    double t_final = 4.0;
    /// Integrator steps per classical period.
    std::size_t steps_per_period = 512;
    /// Number of evenly spaced comparison samples written to the time series.
    std::size_t samples = 40;
    DerivativeScheme scheme = DerivativeScheme::spectral;
    /// Keep the phi window and phi width fixed and shrink xi by sqrt(kappa / 4 pi G c^2)
    /// instead; the two xi/sigma fields are then read at stretch 1.
    bool shrink_xi = false;
};

struct ScanEntry {
    double c = 0.0;
    double dt = 0.0;
    std::size_t steps = 0;
    double trace_distance = 0.0;        // against the derived_half analog at t_final
    double trace_distance_dio87 = 0.0;  // against the dio87 analog at t_final
    double mean_field_residual = 0.0;
    double post_mean_field_residual = 0.0;
    /// xi_moment_norm averaged over the last classical period.
    double xi_norm_avg = 0.0;
    double ehrenfest = 0.0;
    double worst_min_spectrum = 0.0;
    std::vector<double> sample_times;
    std::vector<double> distance_half;
    std::vector<double> distance_dio87;
    MomentReport moments;
};

ModeModel scan_model(const ScanTemplate& tpl, double c);
/// Branch-wise equilibrium: every f eigenbranch sits at its own -lambda / kappa,
/// coherences midway, widths as set by the scan geometry.
HybridDensity scan_initial_state(const ScanTemplate& tpl, const ModeModel& model);

ScanEntry run_scan_point(const ScanTemplate& tpl, double c);
std::vector<ScanEntry> c_scan(const ScanTemplate& tpl, const std::vector<double>& c_values, std::size_t threads = 1);

/// Rows t, phi, xi, f, mean_field, post_mean_field, xi_norm.
void write_csv(std::ostream& os, const MomentReport& report);

}  // namespace hybridyn
