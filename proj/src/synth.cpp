#include "msdm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace msdm {

SpectralCube synthetic_cube(std::size_t bands, std::size_t height, std::size_t width,
                            std::uint64_t seed) {
    constexpr std::size_t kMaterials = 2;
    constexpr std::size_t kWaves = 4;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double two_pi = 2.0 * std::numbers::pi;

    // Reflectance of each material: a baseline plus one Gaussian bump.
    std::vector<std::vector<double>> spectra(kMaterials, std::vector<double>(bands));
    for (auto& s : spectra) {
        const double base = 0.1 + 0.3 * unit(rng);
        const double peak = 0.3 + 0.5 * unit(rng);
        const double center = unit(rng) * static_cast<double>(bands);
        const double spread = 4.5 + 12.0 * unit(rng);
        for (std::size_t b = 0; b < bands; ++b) {
            const double d = (static_cast<double>(b) - center) / spread;
            s[b] = base + peak * std::exp(-0.5 * d * d);
        }
    }

    struct Wave {
        double fy, fx, phase, amp;
    };
    std::vector<std::vector<Wave>> waves(kMaterials);
    for (std::size_t k = 0; k < kMaterials; ++k) {
        for (std::size_t i = 0; i < kWaves; ++i) {
            const double freq = 0.03 + 0.17 * unit(rng); // cycles per pixel
            const double angle = std::numbers::pi * unit(rng);
            waves[k].push_back({freq * std::sin(angle), freq * std::cos(angle), two_pi * unit(rng),
                                0.5 + 0.5 * unit(rng)});
        }
    }

    SpectralCube cube(bands, height, width);
    std::vector<double> abundance(kMaterials);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            const double fy = static_cast<double>(y);
            const double fx = static_cast<double>(x);
            double total = 0.0;
            for (std::size_t k = 0; k < kMaterials; ++k) {
                double a = 0.0;
                for (const auto& w : waves[k]) {
                    a += w.amp * std::sin(two_pi * (w.fy * fy + w.fx * fx) + w.phase);
                }
                a = 0.5 + 0.5 * std::tanh(a);
                abundance[k] = a;
                total += a;
            }
            for (std::size_t b = 0; b < bands; ++b) {
                double v = 0.0;
                for (std::size_t k = 0; k < kMaterials; ++k) v += abundance[k] * spectra[k][b];
                cube(b, y, x) = static_cast<float>(std::clamp(v / total, 0.0, 1.0));
            }
        }
    }
    return cube;
}

} // namespace msdm
