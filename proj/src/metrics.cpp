#include "msdm/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "msdm/error.hpp"

namespace msdm {

namespace {

template <typename T>
double sum_sq_diff(std::span<const T> a, std::span<const T> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

double db_from_mse(double m) {
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / m);
}

template <typename T>
void require_same(const Cube<T>& a, const Cube<T>& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("cube shapes differ: " + std::to_string(a.bands()) + "x" +
                         std::to_string(a.height()) + "x" + std::to_string(a.width()) + " vs " +
                         std::to_string(b.bands()) + "x" + std::to_string(b.height()) + "x" +
                         std::to_string(b.width()));
    }
}

} // namespace

template <typename T>
double mse(const Cube<T>& reference, const Cube<T>& test) {
    require_same(reference, test);
    return sum_sq_diff(reference.data(), test.data()) / static_cast<double>(reference.size());
}

template <typename T>
double psnr(const Cube<T>& reference, const Cube<T>& test) {
    return db_from_mse(mse(reference, test));
}

template <typename T>
std::vector<double> psnr_per_band(const Cube<T>& reference, const Cube<T>& test) {
    require_same(reference, test);
    std::vector<double> out;
    for (std::size_t b = 0; b < reference.bands(); ++b) {
        out.push_back(db_from_mse(sum_sq_diff(reference.band(b), test.band(b)) /
                                  static_cast<double>(reference.plane_size())));
    }
    return out;
}

std::string format_db(double db) {
    if (std::isinf(db) && db > 0) return "inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", db);
    return buf;
}

template double mse(const Cube<float>&, const Cube<float>&);
template double mse(const Cube<double>&, const Cube<double>&);
template double psnr(const Cube<float>&, const Cube<float>&);
template double psnr(const Cube<double>&, const Cube<double>&);
template std::vector<double> psnr_per_band(const Cube<float>&, const Cube<float>&);
template std::vector<double> psnr_per_band(const Cube<double>&, const Cube<double>&);

} // namespace msdm
