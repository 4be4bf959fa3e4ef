#include "hybridyn/phase_grid.hpp"

#include <algorithm>
#include <cmath>

#include "hybridyn/errors.hpp"

namespace hybridyn {

PhaseGrid::PhaseGrid(std::vector<Axis> q_axes, std::vector<Axis> p_axes) {
    if (q_axes.size() != p_axes.size() || q_axes.empty() || q_axes.size() > kMaxDofs) {
        throw InvalidArgument("phase grid needs one (q, p) axis pair per degree of freedom, at most 2");
    }
    for (std::size_t n = 0; n < q_axes.size(); ++n) {
        axes_.push_back(q_axes[n]);
        axes_.push_back(p_axes[n]);
    }
    for (const auto& ax : axes_) {
        if (ax.n < kMinPoints) throw InvalidArgument("phase grid axes need at least 8 points");
        if (!(ax.hi > ax.lo)) throw InvalidArgument("phase grid axis must have hi > lo");
    }
    strides_.assign(axes_.size(), 1);
    for (std::size_t k = axes_.size(); k-- > 1;) strides_[k - 1] = strides_[k] * axes_[k].n;
    size_ = strides_[0] * axes_[0].n;
}

void PhaseGrid::coords(std::size_t point, std::span<double> out) const {
    for (std::size_t k = 0; k < axes_.size(); ++k) out[k] = coord(point, k);
}

double PhaseGrid::cell_volume() const {
    double v = 1.0;
    for (const auto& ax : axes_) v *= ax.spacing();
    return v;
}

std::size_t PhaseGrid::distance_to_edge(std::size_t point) const {
    std::size_t best = size_;
    for (std::size_t k = 0; k < axes_.size(); ++k) {
        const std::size_t i = index_along(point, k);
        best = std::min({best, i, axes_[k].n - 1 - i});
    }
    return best;
}

ScalarField ScalarField::sample(const PhaseGrid& g,
                                const std::function<double(std::span<const double>)>& fn) {
    ScalarField f(g);
    std::vector<double> x(g.axis_count());
    for (std::size_t i = 0; i < g.size(); ++i) {
        g.coords(i, x);
        f.values[i] = fn(x);
    }
    return f;
}

double ScalarField::integral() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s * grid.cell_volume();
}

MatrixField::MatrixField(PhaseGrid grid, Eigen::Index dim)
    : grid_(std::move(grid)), dim_(dim), data_(grid_.size() * static_cast<std::size_t>(dim * dim)) {
    if (dim < 1) throw InvalidArgument("matrix field dimension must be positive");
}

void MatrixField::set_zero() { std::fill(data_.begin(), data_.end(), cplx{}); }

void MatrixField::axpy(cplx s, const MatrixField& other) {
    if (!same_shape(other)) throw ShapeMismatch("axpy on differently shaped fields");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * other.data_[i];
}

double MatrixField::norm() const {
    double s = 0.0;
    for (const auto& z : data_) s += std::norm(z);
    return std::sqrt(s);
}

double MatrixField::hermiticity_residual() const {
    double worst = 0.0;
    for (std::size_t pt = 0; pt < points(); ++pt) {
        const auto m = at(pt);
        for (Eigen::Index i = 0; i < dim_; ++i) {
            for (Eigen::Index j = i; j < dim_; ++j) {
                worst = std::max(worst, std::abs(m(i, j) - std::conj(m(j, i))));
            }
        }
    }
    return worst;
}

}  // namespace hybridyn
