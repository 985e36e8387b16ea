#include "msdm/classic.hpp"

#include <optional>
#include <string>

#include "msdm/error.hpp"

namespace msdm {

TriangleKernel::TriangleKernel(std::size_t p) : period(p) {
    if (p == 0) throw ConfigError("triangle kernel period must be >= 1");
    taps.resize(2 * p - 1);
    for (std::size_t i = 0; i < taps.size(); ++i) {
        const auto k = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(p - 1);
        taps[i] = static_cast<double>(static_cast<std::ptrdiff_t>(p) - (k < 0 ? -k : k)) /
                  static_cast<double>(p);
    }
}

double TriangleKernel::weight(std::ptrdiff_t k) const {
    const auto r = static_cast<std::ptrdiff_t>(radius());
    if (k < -r || k > r) return 0.0;
    return taps[static_cast<std::size_t>(k + r)];
}

namespace {

// Zero-extended separable convolution of an H x W plane with symmetric taps.
template <typename T>
std::vector<T> convolve_separable(const std::vector<T>& plane, std::size_t h, std::size_t w,
                                  const std::vector<T>& taps) {
    const auto radius = static_cast<std::ptrdiff_t>(taps.size() / 2);
    const auto H = static_cast<std::ptrdiff_t>(h);
    const auto W = static_cast<std::ptrdiff_t>(w);
    std::vector<T> rows(plane.size(), T(0));
    for (std::ptrdiff_t y = 0; y < H; ++y) {
        for (std::ptrdiff_t x = 0; x < W; ++x) {
            T acc = 0;
            for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
                const auto xx = x + k;
                if (xx < 0 || xx >= W) continue;
                acc += taps[static_cast<std::size_t>(k + radius)] * plane[y * W + xx];
            }
            rows[y * W + x] = acc;
        }
    }
    std::vector<T> out(plane.size(), T(0));
    for (std::ptrdiff_t y = 0; y < H; ++y) {
        for (std::ptrdiff_t x = 0; x < W; ++x) {
            T acc = 0;
            for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
                const auto yy = y + k;
                if (yy < 0 || yy >= H) continue;
                acc += taps[static_cast<std::size_t>(k + radius)] * rows[yy * W + x];
            }
            out[y * W + x] = acc;
        }
    }
    return out;
}

// Interpolates band `band` from `values`, which only need to be meaningful
// where the band is sampled. Writes the result into out.band(band).
template <typename T>
void interpolate_band(const MsfaPattern& pattern, std::size_t band, std::size_t h, std::size_t w,
                      const std::vector<T>& values, const std::vector<T>& taps, Cube<T>& out) {
    // Deviations from the band's first sample are interpolated, so a constant
    // plane comes back bit-exact instead of through a rounded num / den.
    std::vector<T> sparse(h * w, T(0));
    std::vector<T> mask(h * w, T(0));
    std::optional<T> reference;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            if (pattern.band_at(y, x) == band) {
                if (!reference) reference = values[y * w + x];
                sparse[y * w + x] = values[y * w + x] - *reference;
                mask[y * w + x] = T(1);
            }
        }
    }
    const auto num = convolve_separable(sparse, h, w, taps);
    const auto den = convolve_separable(mask, h, w, taps);
    auto dst = out.band(band);
    for (std::size_t i = 0; i < h * w; ++i) {
        if (!(den[i] > T(0))) {
            throw DegeneratePatternError("no sample of band " + std::to_string(band) +
                                         " reaches pixel (" + std::to_string(i / w) + "," +
                                         std::to_string(i % w) + ")");
        }
        dst[i] = *reference + num[i] / den[i];
    }
}

template <typename T>
std::vector<T> triangle_taps(std::size_t period) {
    const TriangleKernel kernel(period);
    return std::vector<T>(kernel.taps.begin(), kernel.taps.end());
}

template <typename T>
std::vector<T> raw_plane(const MosaicImage<T>& mosaic) {
    auto d = mosaic.samples.data();
    return std::vector<T>(d.begin(), d.end());
}

} // namespace

template <typename T>
Cube<T> bilinear_demosaic(const MosaicImage<T>& mosaic) {
    const auto& pattern = mosaic.pattern;
    const std::size_t h = mosaic.height();
    const std::size_t w = mosaic.width();
    const auto taps = triangle_taps<T>(pattern.period());
    const auto raw = raw_plane(mosaic);
    Cube<T> out(pattern.band_count(), h, w);
    for (std::size_t b = 0; b < pattern.band_count(); ++b) {
        interpolate_band(pattern, b, h, w, raw, taps, out);
    }
    return out;
}

template <typename T>
Cube<T> ppi_estimate(const MosaicImage<T>& mosaic) {
    if (mosaic.pattern.period() != 4) {
        throw ConfigError("PPI estimate supports period-4 patterns only, got period " +
                          std::to_string(mosaic.pattern.period()));
    }
    const std::size_t h = mosaic.height();
    const std::size_t w = mosaic.width();
    const std::vector<T> taps{T(1) / 8, T(2) / 8, T(2) / 8, T(2) / 8, T(1) / 8};
    const auto raw = raw_plane(mosaic);
    const auto smoothed = convolve_separable(raw, h, w, taps);
    // The in-bounds weight sum of a product window factorizes into row and
    // column sums, so border renormalization is one convolution of ones.
    const auto weight = convolve_separable(std::vector<T>(h * w, T(1)), h, w, taps);
    Cube<T> out(1, h, w);
    auto dst = out.band(0);
    for (std::size_t i = 0; i < h * w; ++i) dst[i] = smoothed[i] / weight[i];
    return out;
}

template <typename T>
Cube<T> ppi_demosaic(const MosaicImage<T>& mosaic) {
    const auto ppi = ppi_estimate(mosaic);
    const auto& pattern = mosaic.pattern;
    const std::size_t h = mosaic.height();
    const std::size_t w = mosaic.width();
    const auto taps = triangle_taps<T>(pattern.period());
    const auto m = ppi.band(0);
    std::vector<T> diff(h * w);
    for (std::size_t i = 0; i < h * w; ++i) diff[i] = mosaic.samples.data()[i] - m[i];
    Cube<T> out(pattern.band_count(), h, w);
    for (std::size_t b = 0; b < pattern.band_count(); ++b) {
        interpolate_band(pattern, b, h, w, diff, taps, out);
        auto dst = out.band(b);
        for (std::size_t i = 0; i < h * w; ++i) dst[i] += m[i];
    }
    return out;
}

template Cube<float> bilinear_demosaic(const MosaicImage<float>&);
template Cube<double> bilinear_demosaic(const MosaicImage<double>&);
template Cube<float> ppi_estimate(const MosaicImage<float>&);
template Cube<double> ppi_estimate(const MosaicImage<double>&);
template Cube<float> ppi_demosaic(const MosaicImage<float>&);
template Cube<double> ppi_demosaic(const MosaicImage<double>&);

} // namespace msdm
