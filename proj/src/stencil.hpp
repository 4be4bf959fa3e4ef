#pragma once

// Finite-difference kernels on flat row-major grids whose points carry a
// contiguous block of `block` values.

#include <cstddef>
#include <span>

#include "hybridyn/phase_grid.hpp"

namespace hybridyn::detail {

/// d/dx along `axis`: central differences inside, one-sided second order at
/// the two edge nodes.
template <typename T>
void derivative(const PhaseGrid& g, std::size_t axis, std::size_t block, std::span<const T> in, std::span<T> out) {
    const std::size_t n = g.axis(axis).n;
    const std::size_t s = g.stride(axis) * block;
    const double inv2h = 0.5 / g.axis(axis).spacing();
    for (std::size_t pt = 0; pt < g.size(); ++pt) {
        const std::size_t i = g.index_along(pt, axis);
        const T* x = in.data() + pt * block;
        T* y = out.data() + pt * block;
        if (i == 0) {
            for (std::size_t b = 0; b < block; ++b) y[b] = (-3.0 * x[b] + 4.0 * x[b + s] - x[b + 2 * s]) * inv2h;
        } else if (i == n - 1) {
            for (std::size_t b = 0; b < block; ++b) y[b] = (3.0 * x[b] - 4.0 * x[b - s] + x[b - 2 * s]) * inv2h;
        } else {
            for (std::size_t b = 0; b < block; ++b) y[b] = (x[b + s] - x[b - s]) * inv2h;
        }
    }
}

/// d/dx along `axis` with central differences everywhere, values beyond the
/// grid taken as zero. Skew-symmetric for constant coefficients, so it keeps
/// RK4 time stepping stable where the one-sided closure does not.
template <typename T>
void derivative_zero_exterior(const PhaseGrid& g, std::size_t axis, std::size_t block, std::span<const T> in,
                              std::span<T> out) {
    const std::size_t n = g.axis(axis).n;
    const std::size_t s = g.stride(axis) * block;
    const double inv2h = 0.5 / g.axis(axis).spacing();
    for (std::size_t pt = 0; pt < g.size(); ++pt) {
        const std::size_t i = g.index_along(pt, axis);
        const T* x = in.data() + pt * block;
        T* y = out.data() + pt * block;
        for (std::size_t b = 0; b < block; ++b) {
            const T up = i + 1 < n ? x[b + s] : T{};
            const T dn = i > 0 ? x[b - s] : T{};
            y[b] = (up - dn) * inv2h;
        }
    }
}

/// Accumulates scale * d/dx (coef d/dx in) along one axis with the compact
/// three-point conservative stencil; values beyond the grid are taken as zero.
template <typename T>
void add_compact_diffusion(const PhaseGrid& g, std::size_t axis, std::size_t block, std::span<const double> coef,
                           double scale, std::span<const T> in, std::span<T> out) {
    const std::size_t n = g.axis(axis).n;
    const std::size_t stride = g.stride(axis);
    const std::size_t s = stride * block;
    const double h = g.axis(axis).spacing();
    const double w = scale / (h * h);
    for (std::size_t pt = 0; pt < g.size(); ++pt) {
        const std::size_t i = g.index_along(pt, axis);
        const T* x = in.data() + pt * block;
        T* y = out.data() + pt * block;
        const double c0 = coef[pt];
        const double cp = i + 1 < n ? 0.5 * (c0 + coef[pt + stride]) : c0;
        const double cm = i > 0 ? 0.5 * (c0 + coef[pt - stride]) : c0;
        for (std::size_t b = 0; b < block; ++b) {
            const T up = i + 1 < n ? x[b + s] : T{};
            const T dn = i > 0 ? x[b - s] : T{};
            y[b] += w * (cp * (up - x[b]) - cm * (x[b] - dn));
        }
    }
}

}  // namespace hybridyn::detail
