#include "msdm/mosaic.hpp"

#include <algorithm>
#include <string>

#include "msdm/error.hpp"

namespace msdm {

std::size_t BandMask::count() const {
    return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), true));
}

template <typename T>
MosaicImage<T> apply_msfa(const Cube<T>& cube, const MsfaPattern& pattern) {
    if (cube.bands() != pattern.band_count()) {
        throw ConfigError("cube has " + std::to_string(cube.bands()) + " bands but pattern expects " +
                          std::to_string(pattern.band_count()));
    }
    Cube<T> plane(1, cube.height(), cube.width());
    for (std::size_t y = 0; y < cube.height(); ++y) {
        for (std::size_t x = 0; x < cube.width(); ++x) {
            plane(0, y, x) = cube(pattern.band_at(y, x), y, x);
        }
    }
    return MosaicImage<T>(std::move(plane), pattern);
}

BandMask band_mask(const MsfaPattern& pattern, std::size_t band, std::size_t height,
                   std::size_t width) {
    if (band >= pattern.band_count()) {
        throw BoundsError("band " + std::to_string(band) + " outside [0," +
                          std::to_string(pattern.band_count()) + ")");
    }
    BandMask mask{height, width, std::vector<bool>(height * width, false)};
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            mask.flags[y * width + x] = pattern.band_at(y, x) == band;
        }
    }
    return mask;
}

template MosaicImage<float> apply_msfa(const Cube<float>&, const MsfaPattern&);
template MosaicImage<double> apply_msfa(const Cube<double>&, const MsfaPattern&);

} // namespace msdm
