#pragma once

#include <string>
#include <vector>

#include "msdm/cube.hpp"

namespace msdm {

// Mean squared error over every (band, row, col) entry, accumulated in double.
template <typename T>
double mse(const Cube<T>& reference, const Cube<T>& test);

// 10 log10(1 / MSE) with peak 1. Identical cubes give +infinity.
template <typename T>
double psnr(const Cube<T>& reference, const Cube<T>& test);

// One PSNR per band plane.
template <typename T>
std::vector<double> psnr_per_band(const Cube<T>& reference, const Cube<T>& test);

// Four decimals, or "inf" for the infinite sentinel.
std::string format_db(double db);

} // namespace msdm
