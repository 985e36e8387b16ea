#pragma once

#include <cstddef>
#include <vector>

#include "msdm/cube.hpp"

namespace msdm {

// 1D triangle taps t(k) = (p - |k|) / p for |k| < p, stored at index k + p - 1.
// Applied separably on a period-p sample lattice this is exact bilinear
// interpolation between the bracketing samples.
struct TriangleKernel {
    std::size_t period;
    std::vector<double> taps;

    explicit TriangleKernel(std::size_t p);

    std::size_t radius() const { return period - 1; }
    double weight(std::ptrdiff_t k) const;
};

// Per-band normalized-convolution bilinear interpolation. Each band's sparse
// plane and its 0/1 sample mask are convolved with the triangle kernel; the
// output is their pointwise ratio, so borders use only in-image samples.
// Throws DegeneratePatternError when a pixel has no sample in reach.
template <typename T>
Cube<T> bilinear_demosaic(const MosaicImage<T>& mosaic);

// Pseudo-panchromatic plane: separable [1,2,2,2,1]/8 smoothing of the raw
// mosaic, renormalized at the borders. Period-4 patterns only.
template <typename T>
Cube<T> ppi_estimate(const MosaicImage<T>& mosaic);

// Simplified PPI-difference demosaicker: bilinear interpolation of the
// per-band differences raw - PPI, added back onto the PPI.
template <typename T>
Cube<T> ppi_demosaic(const MosaicImage<T>& mosaic);

} // namespace msdm
