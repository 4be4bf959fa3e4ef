#include "spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

namespace hybridyn::detail {

namespace {
// The FFTW planner is not reentrant.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace

SpectralDerivative::SpectralDerivative(const PhaseGrid& g, std::size_t block)
    : grid_(g), block_(block), total_(g.size() * block) {
    const std::size_t naxes = g.axis_count();
    std::lock_guard lock(planner_mutex());
    buf_ = reinterpret_cast<std::complex<double>*>(fftw_malloc(sizeof(fftw_complex) * total_));
    auto* data = reinterpret_cast<fftw_complex*>(buf_);
    for (std::size_t a = 0; a < naxes; ++a) {
        const std::size_t n = g.axis(a).n;
        const std::size_t inner = g.stride(a) * block;
        const std::size_t outer = total_ / (n * inner);
        fftw_iodim dim{static_cast<int>(n), static_cast<int>(inner), static_cast<int>(inner)};
        fftw_iodim many[2] = {{static_cast<int>(outer), static_cast<int>(n * inner), static_cast<int>(n * inner)},
                              {static_cast<int>(inner), 1, 1}};
        forward_.push_back(fftw_plan_guru_dft(1, &dim, 2, many, data, data, FFTW_FORWARD, FFTW_ESTIMATE));
        backward_.push_back(fftw_plan_guru_dft(1, &dim, 2, many, data, data, FFTW_BACKWARD, FFTW_ESTIMATE));

        std::vector<double> k(n, 0.0);
        const double period = static_cast<double>(n) * g.axis(a).spacing();
        for (std::size_t j = 0; j < n; ++j) {
            const long m = j <= n / 2 ? static_cast<long>(j) : static_cast<long>(j) - static_cast<long>(n);
            if (n % 2 == 0 && j == n / 2) continue;
            k[j] = 2.0 * std::numbers::pi * static_cast<double>(m) / period / static_cast<double>(n);
        }
        wavenumbers_.push_back(std::move(k));
    }
}

SpectralDerivative::~SpectralDerivative() {
    std::lock_guard lock(planner_mutex());
    for (void* p : forward_) fftw_destroy_plan(static_cast<fftw_plan>(p));
    for (void* p : backward_) fftw_destroy_plan(static_cast<fftw_plan>(p));
    fftw_free(buf_);
}

void SpectralDerivative::apply(std::size_t axis, std::span<const std::complex<double>> in,
                               std::span<std::complex<double>> out) {
    std::copy(in.begin(), in.end(), buf_);
    fftw_execute(static_cast<fftw_plan>(forward_[axis]));
    const std::size_t n = grid_.axis(axis).n;
    const std::size_t inner = grid_.stride(axis) * block_;
    const auto& k = wavenumbers_[axis];
    for (std::size_t i = 0; i < total_; ++i) {
        const std::size_t j = (i / inner) % n;
        buf_[i] *= std::complex<double>(0.0, k[j]);
    }
    fftw_execute(static_cast<fftw_plan>(backward_[axis]));
    std::copy(buf_, buf_ + total_, out.begin());
}

}  // namespace hybridyn::detail
