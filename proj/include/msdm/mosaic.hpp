#pragma once

#include <cstddef>
#include <vector>

#include "msdm/cube.hpp"

namespace msdm {

// Where one band is sampled by a filter array, row-major H x W flags.
struct BandMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<bool> flags;

    bool operator()(std::size_t y, std::size_t x) const { return flags[y * width + x]; }
    std::size_t count() const;
};

// Ideal point sampling: pixel (y, x) keeps only band pattern.band_at(y, x).
// The pattern tiles and truncates when H or W is not a multiple of the period.
template <typename T>
MosaicImage<T> apply_msfa(const Cube<T>& cube, const MsfaPattern& pattern);

BandMask band_mask(const MsfaPattern& pattern, std::size_t band, std::size_t height,
                   std::size_t width);

} // namespace msdm
