#pragma once

#include <cstddef>
#include <cstdint>

#include "msdm/cube.hpp"

namespace msdm {

// Textured test scene: a few materials with smooth reflectance spectra mixed
// by spatial abundance maps built from oriented sinusoids and soft discs.
// Values stay inside [0, 1]. Deterministic given the seed.
SpectralCube synthetic_cube(std::size_t bands, std::size_t height, std::size_t width,
                            std::uint64_t seed);

} // namespace msdm
