#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <vector>

#include "hybridyn/matrix.hpp"
#include "hybridyn/units.hpp"

namespace hybridyn {

using Vec3 = std::array<double, 3>;

/// Cubic lattice of n^3 sites with spacing a, centred on the origin, and the
/// Gaussian smearing width sigma of point masses.
struct Lattice3 {
    std::size_t n = 8;
    double a = 1.0;
    double sigma = 1.0;

    void validate() const;
    std::size_t sites() const { return n * n * n; }
    std::size_t index(std::size_t ix, std::size_t iy, std::size_t iz) const { return (ix * n + iy) * n + iz; }
    std::array<std::size_t, 3> triple(std::size_t site) const { return {site / (n * n), (site / n) % n, site % n}; }
    Vec3 position(std::size_t site) const;
    /// Coordinate of lattice index i along any axis.
    double coord(std::size_t i) const { return (static_cast<double>(i) - 0.5 * static_cast<double>(n - 1)) * a; }
    double half_extent() const { return 0.5 * static_cast<double>(n - 1) * a; }
    double cell_volume() const { return a * a * a; }

    bool operator==(const Lattice3& o) const { return n == o.n && a == o.a && sigma == o.sigma; }
};

/// Mass per volume at every site.
struct MassDensityField {
    Lattice3 lattice;
    std::vector<double> values;

    explicit MassDensityField(const Lattice3& l) : lattice(l), values(l.sites(), 0.0) {}
    double total_mass() const;
    MassDensityField& operator+=(const MassDensityField& o);
};

MassDensityField operator-(const MassDensityField& a, const MassDensityField& b);
MassDensityField operator+(const MassDensityField& a, const MassDensityField& b);

/// Mass-density operator f(r): one Hermitian d x d matrix per site.
struct MassOperatorField {
    Lattice3 lattice;
    std::vector<Matrix> ops;

    Eigen::Index dim() const { return ops.empty() ? 0 : ops.front().rows(); }
    void validate() const;
    /// diag(f_0(r), f_1(r), ...): branch k carries mass distribution fields[k].
    static MassOperatorField configuration_diagonal(const std::vector<MassDensityField>& fields);
};

enum class KernelLabel { DC, DQ };

struct KernelMatrix {
    Lattice3 lattice;
    KernelLabel label = KernelLabel::DC;
    RealMatrix values;
};

/// Gaussian of width sigma carrying mass m, normalized on the lattice.
/// Throws OutOfLattice unless the centre keeps a 3 sigma margin to the lattice edge.
MassDensityField point_mass_field(double m, const Vec3& center, const Lattice3& lattice);

/// Mass m concentrated on one site (density m / a^3). Its pair interaction
/// through regularized_coulomb already is that of two width-sigma Gaussians.
MassDensityField site_mass_field(double m, std::size_t site, const Lattice3& lattice);

/// erf(|r - s| / 2 sigma) / |r - s|, and 1 / (sigma sqrt(pi)) at coincidence.
double regularized_coulomb(const Vec3& r, const Vec3& s, double sigma);
double regularized_coulomb(double distance, double sigma);

/// DC(r, s) = (G hbar / 2) regularized_coulomb(r, s).
KernelMatrix build_DC(const Lattice3& lattice, const UnitsConfig& units = {});

/// DQ = (4 pi G)^-2 Lap Lap' DC with the 7-point Laplacian (zero beyond the lattice) on each index.
KernelMatrix build_DQ_from_DC(const KernelMatrix& dc, const Lattice3& lattice, const UnitsConfig& units = {});

/// Product of the continuum transforms 2 pi G hbar / k^2 and hbar k^2 / (8 pi G).
/// Throws ZeroMode for k = 0.
double fourier_mode_product(const Vec3& k, const UnitsConfig& units = {});

/// (G / 4 hbar) sum_rs df(r) df(s) regularized_coulomb(r, s) a^6, df = f - f'.
double penrose_rate(const MassDensityField& f, const MassDensityField& fprime, const Lattice3& lattice,
                    const UnitsConfig& units = {});

/// (1 / 2 hbar^2) df^T DC df a^6.
double decoherence_rate_from_kernel(const MassDensityField& f, const MassDensityField& fprime, const KernelMatrix& dc,
                                    const UnitsConfig& units = {});

/// -(G / 2) sum_rs f(r) f(s) regularized_coulomb(r, s) a^6.
HermitianMatrix newton_pair_potential(const MassOperatorField& fhat, const Lattice3& lattice,
                                      const UnitsConfig& units = {});

/// Rows ix,iy,iz,value.
void write_csv(std::ostream& os, const MassDensityField& f);
/// Rows ix,iy,iz,jx,jy,jz,value.
void write_csv(std::ostream& os, const KernelMatrix& k);

}  // namespace hybridyn
