#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hybridyn/evolution.hpp"
#include "hybridyn/gravity_kernel.hpp"

namespace hybridyn {

/// derived_half: DC = (G hbar / 2) regularized_coulomb; dio87: twice that.
enum class KernelPreset { derived_half, dio87 };

KernelPreset parse_kernel_preset(const std::string& name);
std::string to_string(KernelPreset p);
/// 1 for derived_half, 2 for dio87.
double preset_factor(KernelPreset p);

/// d rho / dt = -(i/hbar)[H_Q + H_G, rho] - (weight / 2 hbar^2) sum_rs DC_rs [f_r, [f_s, rho]]
struct LindbladModel {
    HermitianMatrix hq;
    HermitianMatrix hg;
    std::vector<HermitianMatrix> fs;
    RealMatrix dc;
    /// Quadrature weight of the double sum (a^6 on a lattice, 1 for abstract couplings).
    double weight = 1.0;
    KernelPreset preset = KernelPreset::derived_half;

    Eigen::Index dim() const { return hq.rows(); }
    void validate() const;
};

/// Column-stacked superoperator of the generator: vec(drho/dt) = L vec(rho).
Matrix liouvillian(const LindbladModel& model, const UnitsConfig& units = {});

Matrix lindblad_rhs(const LindbladModel& model, const QuantumDensity& rho, const UnitsConfig& units = {});

/// H_G from newton_pair_potential, DC from build_DC scaled by the preset. Sites
/// where f vanishes are dropped from the double sum.
LindbladModel build_model_from_lattice(const MassOperatorField& fhat, const Lattice3& lattice,
                                       const UnitsConfig& units, KernelPreset preset);

struct QuantumTrajectory {
    std::vector<double> times;
    std::vector<QuantumDensity> states;

    std::vector<double> coherence(Eigen::Index i, Eigen::Index j) const;
    std::vector<double> population(Eigen::Index i) const;
    std::vector<double> purity() const;
};

/// RK4 on the superoperator. Throws TraceDrift (> 1e-6) or StepUnstable; the
/// positivity flag additionally rejects states with eigenvalues below -1e-8.
QuantumTrajectory evolve_lindblad(const LindbladModel& model, const QuantumDensity& rho0,
                                  const IntegratorParams& params, const UnitsConfig& units = {});

/// Least-squares slope of -log|rho_ij(t)| over the recorded window. Throws
/// InvalidArgument if |rho_ij(0)| <= 1e-6 and InsufficientDecay if |rho_ij|
/// changes by less than 1e-3 (relative) over the window.
double offdiagonal_decay_rate(const QuantumTrajectory& traj, Eigen::Index i, Eigen::Index j);

/// Rows t, then re/im of every entry in column-major order.
void write_csv(std::ostream& os, const QuantumTrajectory& traj);

}  // namespace hybridyn
