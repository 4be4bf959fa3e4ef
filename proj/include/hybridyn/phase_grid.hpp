#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "hybridyn/matrix.hpp"

namespace hybridyn {

/// Uniform 1D axis with `n` nodes spanning [lo, hi] inclusive.
struct Axis {
    double lo = 0.0;
    double hi = 1.0;
    std::size_t n = 8;

    double spacing() const { return (hi - lo) / static_cast<double>(n - 1); }
    double coord(std::size_t i) const { return lo + spacing() * static_cast<double>(i); }
    bool operator==(const Axis&) const = default;
};

/// Discretized classical phase space of one or two canonical pairs.
///
/// Axes are ordered (q1, p1, q2, p2); storage is row-major with the last axis
/// fastest, so a flat point index enumerates the tensor grid.
class PhaseGrid {
public:
    static constexpr std::size_t kMinPoints = 8;
    static constexpr std::size_t kMaxDofs = 2;

    PhaseGrid() = default;
    /// One (q, p) axis pair per classical degree of freedom.
    PhaseGrid(std::vector<Axis> q_axes, std::vector<Axis> p_axes);

    static PhaseGrid single(Axis q, Axis p) { return PhaseGrid({q}, {p}); }
    /// Symmetric square grid [-half_width, half_width]^2 with n points per axis.
    static PhaseGrid square(double half_width, std::size_t n) {
        return single({-half_width, half_width, n}, {-half_width, half_width, n});
    }

    std::size_t dofs() const { return axes_.size() / 2; }
    std::size_t axis_count() const { return axes_.size(); }
    static std::size_t q_axis(std::size_t dof) { return 2 * dof; }
    static std::size_t p_axis(std::size_t dof) { return 2 * dof + 1; }

    const Axis& axis(std::size_t k) const { return axes_[k]; }
    std::size_t size() const { return size_; }
    std::size_t stride(std::size_t k) const { return strides_[k]; }
    std::size_t index_along(std::size_t point, std::size_t k) const {
        return (point / strides_[k]) % axes_[k].n;
    }
    double coord(std::size_t point, std::size_t k) const {
        return axes_[k].coord(index_along(point, k));
    }
    void coords(std::size_t point, std::span<double> out) const;
    double cell_volume() const;
    /// Number of nodes from `point` to the nearest grid edge, minimum over axes.
    std::size_t distance_to_edge(std::size_t point) const;

    bool operator==(const PhaseGrid& other) const { return axes_ == other.axes_; }

private:
    std::vector<Axis> axes_;
    std::vector<std::size_t> strides_;
    std::size_t size_ = 0;
};

/// Real function on the grid (classical Hamiltonians, coupling fields, Liouville densities).
struct ScalarField {
    PhaseGrid grid;
    std::vector<double> values;

    ScalarField() = default;
    explicit ScalarField(PhaseGrid g, double fill = 0.0)
        : grid(std::move(g)), values(grid.size(), fill) {}

    /// Samples `fn(x)` where x holds the point coordinates in axis order.
    static ScalarField sample(const PhaseGrid& g, const std::function<double(std::span<const double>)>& fn);

    double operator[](std::size_t i) const { return values[i]; }
    double& operator[](std::size_t i) { return values[i]; }
    /// Riemann sum of the values times the cell volume.
    double integral() const;
};

/// Matrix-valued function on the grid. Flat storage, one d x d block per point.
class MatrixField {
public:
    MatrixField() = default;
    MatrixField(PhaseGrid grid, Eigen::Index dim);

    const PhaseGrid& grid() const { return grid_; }
    Eigen::Index dim() const { return dim_; }
    std::size_t points() const { return grid_.size(); }
    std::size_t block_size() const { return static_cast<std::size_t>(dim_ * dim_); }

    Eigen::Map<Matrix> at(std::size_t point) {
        return Eigen::Map<Matrix>(data_.data() + point * block_size(), dim_, dim_);
    }
    Eigen::Map<const Matrix> at(std::size_t point) const {
        return Eigen::Map<const Matrix>(data_.data() + point * block_size(), dim_, dim_);
    }
    std::span<cplx> block(std::size_t point) { return {data_.data() + point * block_size(), block_size()}; }
    std::span<const cplx> block(std::size_t point) const {
        return {data_.data() + point * block_size(), block_size()};
    }

    std::vector<cplx>& data() { return data_; }
    const std::vector<cplx>& data() const { return data_; }

    bool same_shape(const MatrixField& other) const {
        return dim_ == other.dim_ && grid_ == other.grid_;
    }
    void set_zero();
    /// this += s * other
    void axpy(cplx s, const MatrixField& other);
    /// Frobenius norm over all points (no volume weight).
    double norm() const;
    /// Largest per-point Hermiticity residual.
    double hermiticity_residual() const;

private:
    PhaseGrid grid_;
    Eigen::Index dim_ = 0;
    std::vector<cplx> data_;
};

}  // namespace hybridyn
