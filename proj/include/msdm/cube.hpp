#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace msdm {

// Full-resolution multispectral image. Band-major storage:
//   data[(b * height + y) * width + x]
// Values are normalized intensities, nominally in [0, 1].
template <typename T>
class Cube {
public:
    Cube() = default;
    Cube(std::size_t bands, std::size_t height, std::size_t width, T fill = T(0));
    Cube(std::size_t bands, std::size_t height, std::size_t width, std::vector<T> data);

    std::size_t bands() const { return bands_; }
    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t plane_size() const { return height_ * width_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& operator()(std::size_t b, std::size_t y, std::size_t x) {
        return data_[(b * height_ + y) * width_ + x];
    }
    const T& operator()(std::size_t b, std::size_t y, std::size_t x) const {
        return data_[(b * height_ + y) * width_ + x];
    }

    std::span<T> band(std::size_t b) { return {data_.data() + b * plane_size(), plane_size()}; }
    std::span<const T> band(std::size_t b) const {
        return {data_.data() + b * plane_size(), plane_size()};
    }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }

    bool same_shape(const Cube& other) const {
        return bands_ == other.bands_ && height_ == other.height_ && width_ == other.width_;
    }

    friend bool operator==(const Cube&, const Cube&) = default;

private:
    std::size_t bands_ = 0;
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<T> data_;
};

using SpectralCube = Cube<float>;
using SpectralCubeD = Cube<double>;

// Network tensor addressed (channel, band, row, col), channel-major.
template <typename T>
class FeatureCube {
public:
    FeatureCube() = default;
    FeatureCube(std::size_t channels, std::size_t bands, std::size_t height, std::size_t width,
                T fill = T(0));

    std::size_t channels() const { return channels_; }
    std::size_t bands() const { return bands_; }
    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t volume() const { return bands_ * height_ * width_; }
    std::size_t size() const { return data_.size(); }

    T& operator()(std::size_t c, std::size_t b, std::size_t y, std::size_t x) {
        return data_[((c * bands_ + b) * height_ + y) * width_ + x];
    }
    const T& operator()(std::size_t c, std::size_t b, std::size_t y, std::size_t x) const {
        return data_[((c * bands_ + b) * height_ + y) * width_ + x];
    }

    std::span<T> channel(std::size_t c) { return {data_.data() + c * volume(), volume()}; }
    std::span<const T> channel(std::size_t c) const {
        return {data_.data() + c * volume(), volume()};
    }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }

    bool same_volume(const FeatureCube& other) const {
        return bands_ == other.bands_ && height_ == other.height_ && width_ == other.width_;
    }
    bool same_shape(const FeatureCube& other) const {
        return channels_ == other.channels_ && same_volume(other);
    }

    friend bool operator==(const FeatureCube&, const FeatureCube&) = default;

private:
    std::size_t channels_ = 0;
    std::size_t bands_ = 0;
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<T> data_;
};

// Period-P grid of band indices. cells[r * period + c] is the band sampled at
// every pixel (y, x) with y mod P == r and x mod P == c.
class MsfaPattern {
public:
    MsfaPattern(std::size_t period, std::size_t band_count, std::vector<std::uint32_t> cells);

    // 4x4 layout with band b at cell (b / 4, b % 4).
    static MsfaPattern default16();

    std::size_t period() const { return period_; }
    std::size_t band_count() const { return band_count_; }
    std::span<const std::uint32_t> cells() const { return cells_; }

    std::uint32_t cell(std::size_t r, std::size_t c) const { return cells_[r * period_ + c]; }
    std::uint32_t band_at(std::size_t y, std::size_t x) const {
        return cells_[(y % period_) * period_ + (x % period_)];
    }

    friend bool operator==(const MsfaPattern&, const MsfaPattern&) = default;

private:
    std::size_t period_;
    std::size_t band_count_;
    std::vector<std::uint32_t> cells_;
};

// Single raw plane; pixel (y, x) holds band pattern.band_at(y, x).
template <typename T>
struct MosaicImage {
    Cube<T> samples; // one band
    MsfaPattern pattern;

    MosaicImage(Cube<T> plane, MsfaPattern pat);

    std::size_t height() const { return samples.height(); }
    std::size_t width() const { return samples.width(); }
    T operator()(std::size_t y, std::size_t x) const { return samples(0, y, x); }
};

// Throws ShapeError if any value is NaN or infinite.
template <typename T>
void require_finite(std::span<const T> values, const char* what);

template <typename T>
Cube<T> crop(const Cube<T>& cube, std::size_t top, std::size_t left, std::size_t h, std::size_t w);

// Row-major grid_rows x grid_cols split into equally sized disjoint pieces.
template <typename T>
std::vector<Cube<T>> tile(const Cube<T>& cube, std::size_t grid_rows, std::size_t grid_cols);

// Inverse of tile().
template <typename T>
Cube<T> untile(std::span<const Cube<T>> pieces, std::size_t grid_rows, std::size_t grid_cols);

template <typename T>
FeatureCube<T> cube_to_features(const Cube<T>& cube);

// Requires a single-channel feature cube.
template <typename T>
Cube<T> features_to_cube(const FeatureCube<T>& features);

template <typename To, typename From>
Cube<To> cube_cast(const Cube<From>& cube) {
    std::vector<To> out(cube.size());
    auto src = cube.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<To>(src[i]);
    return Cube<To>(cube.bands(), cube.height(), cube.width(), std::move(out));
}

} // namespace msdm
