#pragma once

// Fourier differentiation along one axis of a flat row-major grid whose
// points carry `block` complex values. The grid is treated as one period.

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "hybridyn/phase_grid.hpp"

namespace hybridyn::detail {

class SpectralDerivative {
public:
    SpectralDerivative(const PhaseGrid& g, std::size_t block);
    ~SpectralDerivative();
    SpectralDerivative(const SpectralDerivative&) = delete;
    SpectralDerivative& operator=(const SpectralDerivative&) = delete;

    void apply(std::size_t axis, std::span<const std::complex<double>> in, std::span<std::complex<double>> out);

private:
    PhaseGrid grid_;
    std::size_t block_;
    std::size_t total_;
    std::complex<double>* buf_ = nullptr;
    std::vector<void*> forward_;
    std::vector<void*> backward_;
    std::vector<std::vector<double>> wavenumbers_;
};

}  // namespace hybridyn::detail
