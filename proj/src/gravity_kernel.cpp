#include "hybridyn/gravity_kernel.hpp"

#include <Eigen/Sparse>

#include <cmath>
#include <numbers>
#include <ostream>

namespace hybridyn {

namespace {

constexpr double kPi = std::numbers::pi;

void require_lattice(const Lattice3& a, const Lattice3& b, const char* what) {
    if (!(a == b)) throw ShapeMismatch(std::string(what) + ": lattices differ");
}

double distance(const Vec3& r, const Vec3& s) {
    const double dx = r[0] - s[0], dy = r[1] - s[1], dz = r[2] - s[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Kernel values only depend on the index offset, so tabulate them once.
std::vector<double> offset_table(const Lattice3& l) {
    const std::size_t n = l.n;
    std::vector<double> t(n * n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t k = 0; k < n; ++k) {
                const double d = l.a * std::sqrt(static_cast<double>(i * i + j * j + k * k));
                t[(i * n + j) * n + k] = regularized_coulomb(d, l.sigma);
            }
        }
    }
    return t;
}

double table_lookup(const Lattice3& l, const std::vector<double>& t, std::size_t r, std::size_t s) {
    const auto a = l.triple(r);
    const auto b = l.triple(s);
    auto diff = [](std::size_t x, std::size_t y) { return x > y ? x - y : y - x; };
    return t[(diff(a[0], b[0]) * l.n + diff(a[1], b[1])) * l.n + diff(a[2], b[2])];
}

RealMatrix coulomb_matrix(const Lattice3& l) {
    const auto t = offset_table(l);
    const auto n = static_cast<Eigen::Index>(l.sites());
    RealMatrix k(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index s = 0; s <= r; ++s) {
            const double v = table_lookup(l, t, static_cast<std::size_t>(r), static_cast<std::size_t>(s));
            k(r, s) = v;
            k(s, r) = v;
        }
    }
    return k;
}

Eigen::SparseMatrix<double> laplacian(const Lattice3& l) {
    const std::size_t n = l.n;
    const double w = 1.0 / (l.a * l.a);
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(7 * l.sites());
    for (std::size_t s = 0; s < l.sites(); ++s) {
        const auto t = l.triple(s);
        const auto row = static_cast<Eigen::Index>(s);
        entries.emplace_back(row, row, -6.0 * w);
        for (int axis = 0; axis < 3; ++axis) {
            for (int dir : {-1, 1}) {
                auto u = t;
                if (dir < 0 && u[axis] == 0) continue;
                if (dir > 0 && u[axis] + 1 == n) continue;
                u[axis] = dir < 0 ? u[axis] - 1 : u[axis] + 1;
                entries.emplace_back(row, static_cast<Eigen::Index>(l.index(u[0], u[1], u[2])), w);
            }
        }
    }
    Eigen::SparseMatrix<double> lap(static_cast<Eigen::Index>(l.sites()), static_cast<Eigen::Index>(l.sites()));
    lap.setFromTriplets(entries.begin(), entries.end());
    return lap;
}

}  // namespace

void Lattice3::validate() const {
    if (n < 4) throw InvalidArgument("lattice needs at least 4 sites per axis");
    if (!(a > 0.0)) throw InvalidArgument("lattice spacing must be positive");
    if (!(sigma >= 0.5 * a)) throw InvalidArgument("smearing width must be at least half the lattice spacing");
}

Vec3 Lattice3::position(std::size_t site) const {
    const auto t = triple(site);
    return {coord(t[0]), coord(t[1]), coord(t[2])};
}

double MassDensityField::total_mass() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s * lattice.cell_volume();
}

MassDensityField& MassDensityField::operator+=(const MassDensityField& o) {
    require_lattice(lattice, o.lattice, "mass density sum");
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += o.values[i];
    return *this;
}

MassDensityField operator+(const MassDensityField& a, const MassDensityField& b) {
    MassDensityField out = a;
    out += b;
    return out;
}

MassDensityField operator-(const MassDensityField& a, const MassDensityField& b) {
    require_lattice(a.lattice, b.lattice, "mass density difference");
    MassDensityField out = a;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] -= b.values[i];
    return out;
}

void MassOperatorField::validate() const {
    lattice.validate();
    if (ops.size() != lattice.sites()) throw ShapeMismatch("mass operator field needs one matrix per site");
    for (const auto& m : ops) {
        if (m.rows() != dim() || m.cols() != dim()) throw ShapeMismatch("mass operators differ in dimension");
        require_hermitian(m, "mass operator");
    }
}

MassOperatorField MassOperatorField::configuration_diagonal(const std::vector<MassDensityField>& fields) {
    if (fields.empty()) throw InvalidArgument("configuration_diagonal needs at least one branch");
    MassOperatorField out{fields.front().lattice, {}};
    const auto d = static_cast<Eigen::Index>(fields.size());
    out.ops.assign(out.lattice.sites(), Matrix::Zero(d, d));
    for (Eigen::Index k = 0; k < d; ++k) {
        const auto& f = fields[static_cast<std::size_t>(k)];
        require_lattice(out.lattice, f.lattice, "configuration_diagonal");
        for (std::size_t s = 0; s < out.ops.size(); ++s) out.ops[s](k, k) = f.values[s];
    }
    return out;
}

MassDensityField point_mass_field(double m, const Vec3& center, const Lattice3& lattice) {
    lattice.validate();
    const double margin = 3.0 * lattice.sigma;
    for (double c : center) {
        if (std::abs(c) + margin > lattice.half_extent()) {
            throw OutOfLattice("point mass centre lies within 3 sigma of the lattice edge");
        }
    }
    MassDensityField f(lattice);
    double sum = 0.0;
    for (std::size_t s = 0; s < lattice.sites(); ++s) {
        const double d = distance(lattice.position(s), center);
        f.values[s] = std::exp(-0.5 * d * d / (lattice.sigma * lattice.sigma));
        sum += f.values[s];
    }
    const double scale = m / (sum * lattice.cell_volume());
    for (double& v : f.values) v *= scale;
    return f;
}

MassDensityField site_mass_field(double m, std::size_t site, const Lattice3& lattice) {
    lattice.validate();
    if (site >= lattice.sites()) throw OutOfLattice("site index outside the lattice");
    MassDensityField f(lattice);
    f.values[site] = m / lattice.cell_volume();
    return f;
}

double regularized_coulomb(double d, double sigma) {
    if (d == 0.0) return 1.0 / (sigma * std::sqrt(kPi));
    return std::erf(d / (2.0 * sigma)) / d;
}

double regularized_coulomb(const Vec3& r, const Vec3& s, double sigma) {
    return regularized_coulomb(distance(r, s), sigma);
}

KernelMatrix build_DC(const Lattice3& lattice, const UnitsConfig& units) {
    lattice.validate();
    units.validate();
    KernelMatrix k{lattice, KernelLabel::DC, coulomb_matrix(lattice)};
    k.values *= 0.5 * units.G * units.hbar;
    return k;
}

KernelMatrix build_DQ_from_DC(const KernelMatrix& dc, const Lattice3& lattice, const UnitsConfig& units) {
    require_lattice(dc.lattice, lattice, "build_DQ_from_DC");
    if (dc.label != KernelLabel::DC) throw InvalidArgument("build_DQ_from_DC expects a DC kernel");
    units.validate();
    const auto lap = laplacian(lattice);
    const double norm = 1.0 / std::pow(4.0 * kPi * units.G, 2);
    RealMatrix half = lap * dc.values;
    RealMatrix dq = (lap * half.transpose()).transpose();
    dq *= norm;
    // Both index contractions are the same stencil, so symmetrize away rounding.
    RealMatrix sym = 0.5 * (dq + dq.transpose());
    return {lattice, KernelLabel::DQ, std::move(sym)};
}

double fourier_mode_product(const Vec3& k, const UnitsConfig& units) {
    units.validate();
    const double k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
    if (k2 == 0.0) throw ZeroMode("the k = 0 mode has no finite kernel transform");
    const double dc = 2.0 * kPi * units.G * units.hbar / k2;
    const double dq = units.hbar * k2 / (8.0 * kPi * units.G);
    return dc * dq;
}

double penrose_rate(const MassDensityField& f, const MassDensityField& fprime, const Lattice3& lattice,
                    const UnitsConfig& units) {
    require_lattice(f.lattice, lattice, "penrose_rate");
    require_lattice(fprime.lattice, lattice, "penrose_rate");
    units.validate();
    const auto t = offset_table(lattice);
    const auto df = f - fprime;
    std::vector<std::size_t> support;
    for (std::size_t s = 0; s < df.values.size(); ++s) {
        if (df.values[s] != 0.0) support.push_back(s);
    }
    double sum = 0.0;
    for (std::size_t r : support) {
        double row = 0.0;
        for (std::size_t s : support) row += table_lookup(lattice, t, r, s) * df.values[s];
        sum += df.values[r] * row;
    }
    const double a3 = lattice.cell_volume();
    return 0.25 * units.G / units.hbar * sum * a3 * a3;
}

double decoherence_rate_from_kernel(const MassDensityField& f, const MassDensityField& fprime, const KernelMatrix& dc,
                                    const UnitsConfig& units) {
    require_lattice(f.lattice, dc.lattice, "decoherence_rate_from_kernel");
    require_lattice(fprime.lattice, dc.lattice, "decoherence_rate_from_kernel");
    units.validate();
    const auto df = f - fprime;
    const Eigen::Map<const RealVector> v(df.values.data(), static_cast<Eigen::Index>(df.values.size()));
    const double a3 = dc.lattice.cell_volume();
    return 0.5 / (units.hbar * units.hbar) * v.dot(dc.values * v) * a3 * a3;
}

HermitianMatrix newton_pair_potential(const MassOperatorField& fhat, const Lattice3& lattice, const UnitsConfig& units) {
    require_lattice(fhat.lattice, lattice, "newton_pair_potential");
    fhat.validate();
    units.validate();
    const auto t = offset_table(lattice);
    const Eigen::Index d = fhat.dim();
    std::vector<std::size_t> support;
    for (std::size_t s = 0; s < fhat.ops.size(); ++s) {
        if (fhat.ops[s].cwiseAbs().maxCoeff() != 0.0) support.push_back(s);
    }
    Matrix sum = Matrix::Zero(d, d);
    for (std::size_t r : support) {
        Matrix field = Matrix::Zero(d, d);
        for (std::size_t s : support) field += table_lookup(lattice, t, r, s) * fhat.ops[s];
        sum += fhat.ops[r] * field;
    }
    const double a3 = lattice.cell_volume();
    Matrix hg = -0.5 * units.G * a3 * a3 * sum;
    return hermitian_part(hg);
}

void write_csv(std::ostream& os, const MassDensityField& f) {
    os.precision(17);
    os << "ix,iy,iz,value\n";
    for (std::size_t s = 0; s < f.values.size(); ++s) {
        const auto t = f.lattice.triple(s);
        os << t[0] << ',' << t[1] << ',' << t[2] << ',' << f.values[s] << '\n';
    }
}

void write_csv(std::ostream& os, const KernelMatrix& k) {
    os.precision(17);
    os << "ix,iy,iz,jx,jy,jz,value\n";
    for (Eigen::Index r = 0; r < k.values.rows(); ++r) {
        const auto a = k.lattice.triple(static_cast<std::size_t>(r));
        for (Eigen::Index s = 0; s < k.values.cols(); ++s) {
            const auto b = k.lattice.triple(static_cast<std::size_t>(s));
            os << a[0] << ',' << a[1] << ',' << a[2] << ',' << b[0] << ',' << b[1] << ',' << b[2] << ','
               << k.values(r, s) << '\n';
        }
    }
}

}  // namespace hybridyn
