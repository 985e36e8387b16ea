#include "msdm/cube.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "msdm/error.hpp"

namespace msdm {

namespace {

void require_dims(std::size_t bands, std::size_t height, std::size_t width) {
    if (bands == 0 || height == 0 || width == 0) {
        throw ShapeError("cube dimensions must be >= 1, got bands=" + std::to_string(bands) +
                         " height=" + std::to_string(height) + " width=" + std::to_string(width));
    }
}

} // namespace

template <typename T>
void require_finite(std::span<const T> values, const char* what) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw ShapeError(std::string(what) + ": non-finite value at flat index " +
                             std::to_string(i));
        }
    }
}

template <typename T>
Cube<T>::Cube(std::size_t bands, std::size_t height, std::size_t width, T fill)
    : bands_(bands), height_(height), width_(width) {
    require_dims(bands, height, width);
    require_finite<T>(std::span<const T>(&fill, 1), "cube fill");
    data_.assign(bands * height * width, fill);
}

template <typename T>
Cube<T>::Cube(std::size_t bands, std::size_t height, std::size_t width, std::vector<T> data)
    : bands_(bands), height_(height), width_(width), data_(std::move(data)) {
    require_dims(bands, height, width);
    if (data_.size() != bands * height * width) {
        throw ShapeError("cube data length " + std::to_string(data_.size()) + " != " +
                         std::to_string(bands) + "x" + std::to_string(height) + "x" +
                         std::to_string(width));
    }
    require_finite<T>(data_, "cube");
}

template <typename T>
FeatureCube<T>::FeatureCube(std::size_t channels, std::size_t bands, std::size_t height,
                            std::size_t width, T fill)
    : channels_(channels), bands_(bands), height_(height), width_(width) {
    if (channels == 0) throw ShapeError("feature cube needs at least one channel");
    require_dims(bands, height, width);
    data_.assign(channels * bands * height * width, fill);
}

MsfaPattern::MsfaPattern(std::size_t period, std::size_t band_count,
                         std::vector<std::uint32_t> cells)
    : period_(period), band_count_(band_count), cells_(std::move(cells)) {
    if (period_ == 0 || band_count_ == 0) {
        throw ConfigError("pattern period and band count must be >= 1");
    }
    if (cells_.size() != period_ * period_) {
        throw ConfigError("pattern of period " + std::to_string(period_) + " needs " +
                          std::to_string(period_ * period_) + " cells, got " +
                          std::to_string(cells_.size()));
    }
    for (std::size_t i = 0; i < cells_.size(); ++i) {
        if (cells_[i] >= band_count_) {
            throw ConfigError("pattern cell (" + std::to_string(i / period_) + "," +
                              std::to_string(i % period_) + ") holds band " +
                              std::to_string(cells_[i]) + ", outside [0," +
                              std::to_string(band_count_) + ")");
        }
    }
}

MsfaPattern MsfaPattern::default16() {
    std::vector<std::uint32_t> cells(16);
    for (std::uint32_t b = 0; b < 16; ++b) cells[b] = b;
    return MsfaPattern(4, 16, std::move(cells));
}

template <typename T>
MosaicImage<T>::MosaicImage(Cube<T> plane, MsfaPattern pat)
    : samples(std::move(plane)), pattern(std::move(pat)) {
    if (samples.bands() != 1) {
        throw ShapeError("mosaic plane must have exactly one band, got " +
                         std::to_string(samples.bands()));
    }
}

template <typename T>
Cube<T> crop(const Cube<T>& cube, std::size_t top, std::size_t left, std::size_t h,
             std::size_t w) {
    if (h == 0 || w == 0) throw BoundsError("crop size must be >= 1");
    if (top + h > cube.height()) {
        throw BoundsError("crop rows [" + std::to_string(top) + "," + std::to_string(top + h) +
                          ") exceed height " + std::to_string(cube.height()));
    }
    if (left + w > cube.width()) {
        throw BoundsError("crop cols [" + std::to_string(left) + "," + std::to_string(left + w) +
                          ") exceed width " + std::to_string(cube.width()));
    }
    Cube<T> out(cube.bands(), h, w);
    for (std::size_t b = 0; b < cube.bands(); ++b) {
        for (std::size_t y = 0; y < h; ++y) {
            const T* src = &cube(b, top + y, left);
            std::copy(src, src + w, &out(b, y, 0));
        }
    }
    return out;
}

template <typename T>
std::vector<Cube<T>> tile(const Cube<T>& cube, std::size_t grid_rows, std::size_t grid_cols) {
    if (grid_rows == 0 || grid_cols == 0 || cube.height() % grid_rows != 0 ||
        cube.width() % grid_cols != 0) {
        throw ShapeError("cannot tile " + std::to_string(cube.height()) + "x" +
                         std::to_string(cube.width()) + " into a " + std::to_string(grid_rows) +
                         "x" + std::to_string(grid_cols) + " grid");
    }
    const std::size_t th = cube.height() / grid_rows;
    const std::size_t tw = cube.width() / grid_cols;
    std::vector<Cube<T>> pieces;
    pieces.reserve(grid_rows * grid_cols);
    for (std::size_t r = 0; r < grid_rows; ++r) {
        for (std::size_t c = 0; c < grid_cols; ++c) {
            pieces.push_back(crop(cube, r * th, c * tw, th, tw));
        }
    }
    return pieces;
}

template <typename T>
Cube<T> untile(std::span<const Cube<T>> pieces, std::size_t grid_rows, std::size_t grid_cols) {
    if (grid_rows == 0 || grid_cols == 0 || pieces.size() != grid_rows * grid_cols) {
        throw ShapeError("untile expects " + std::to_string(grid_rows * grid_cols) +
                         " pieces, got " + std::to_string(pieces.size()));
    }
    const auto& first = pieces.front();
    for (const auto& p : pieces) {
        if (!p.same_shape(first)) throw ShapeError("untile pieces differ in shape");
    }
    const std::size_t th = first.height();
    const std::size_t tw = first.width();
    Cube<T> out(first.bands(), th * grid_rows, tw * grid_cols);
    for (std::size_t r = 0; r < grid_rows; ++r) {
        for (std::size_t c = 0; c < grid_cols; ++c) {
            const auto& p = pieces[r * grid_cols + c];
            for (std::size_t b = 0; b < p.bands(); ++b) {
                for (std::size_t y = 0; y < th; ++y) {
                    std::copy(&p(b, y, 0), &p(b, y, 0) + tw, &out(b, r * th + y, c * tw));
                }
            }
        }
    }
    return out;
}

template <typename T>
FeatureCube<T> cube_to_features(const Cube<T>& cube) {
    FeatureCube<T> f(1, cube.bands(), cube.height(), cube.width());
    std::copy(cube.data().begin(), cube.data().end(), f.data().begin());
    return f;
}

template <typename T>
Cube<T> features_to_cube(const FeatureCube<T>& features) {
    if (features.channels() != 1) {
        throw ShapeError("features_to_cube needs 1 channel, got " +
                         std::to_string(features.channels()));
    }
    auto d = features.data();
    return Cube<T>(features.bands(), features.height(), features.width(),
                   std::vector<T>(d.begin(), d.end()));
}

#define MSDM_INSTANTIATE(T)                                                                    \
    template class Cube<T>;                                                                    \
    template class FeatureCube<T>;                                                             \
    template struct MosaicImage<T>;                                                            \
    template void require_finite<T>(std::span<const T>, const char*);                          \
    template Cube<T> crop(const Cube<T>&, std::size_t, std::size_t, std::size_t, std::size_t); \
    template std::vector<Cube<T>> tile(const Cube<T>&, std::size_t, std::size_t);              \
    template Cube<T> untile(std::span<const Cube<T>>, std::size_t, std::size_t);               \
    template FeatureCube<T> cube_to_features(const Cube<T>&);                                  \
    template Cube<T> features_to_cube(const FeatureCube<T>&);

MSDM_INSTANTIATE(float)
MSDM_INSTANTIATE(double)

#undef MSDM_INSTANTIATE

} // namespace msdm
