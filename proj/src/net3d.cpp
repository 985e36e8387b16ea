#include "msdm/net3d.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "msdm/error.hpp"

namespace msdm {

namespace {

bool valid_edge(std::size_t k) { return k == 1 || k == 3; }

// Channels are convolved on a copy padded by one zero voxel on every side.
// In the flattened padded layout a kernel tap is a constant index offset, so
// every output voxel of the interior range [first, end) reads its taps at
// fixed displacements. Buffers carry kSlack trailing zeros so the blocked
// kernels below may run past end.
constexpr std::ptrdiff_t kLanes = 8;
constexpr std::size_t kSlack = kLanes;

struct PaddedGrid {
    std::size_t B, H, W;
    std::ptrdiff_t plane, row;
    std::size_t size;
    std::ptrdiff_t first, end;

    PaddedGrid(std::size_t b, std::size_t h, std::size_t w)
        : B(b), H(h), W(w), plane(static_cast<std::ptrdiff_t>((h + 2) * (w + 2))),
          row(static_cast<std::ptrdiff_t>(w + 2)), size((b + 2) * (h + 2) * (w + 2) + kSlack),
          first(plane + row + 1),
          end(static_cast<std::ptrdiff_t>(b) * plane + static_cast<std::ptrdiff_t>(h) * row +
              static_cast<std::ptrdiff_t>(w) + 1) {}

    std::ptrdiff_t count() const { return end - first; }

    std::ptrdiff_t offset(std::ptrdiff_t dz, std::ptrdiff_t dy, std::ptrdiff_t dx) const {
        return dz * plane + dy * row + dx;
    }

    std::ptrdiff_t at(std::size_t b, std::size_t r) const {
        return static_cast<std::ptrdiff_t>(b + 1) * plane + static_cast<std::ptrdiff_t>(r + 1) * row + 1;
    }

    template <typename T>
    std::vector<T> pad(const T* src) const {
        std::vector<T> out(size, T(0));
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t r = 0; r < H; ++r) {
                const T* s = src + (b * H + r) * W;
                std::copy(s, s + W, out.begin() + at(b, r));
            }
        }
        return out;
    }

    template <typename T>
    void unpad(const T* padded, T* dst) const {
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t r = 0; r < H; ++r) {
                const T* s = padded + at(b, r);
                std::copy(s, s + W, dst + (b * H + r) * W);
            }
        }
    }
};

// out[o][i] = bias[o] + sum_k weights[o * K + k] * src[k][i] for i in [0, n),
// computed in blocks of CB outputs by kLanes voxels. Writes up to n rounded
// up to kLanes.
template <typename T, std::size_t CB>
void gemm_block(const T* weights, std::size_t K, const T* const* src, std::ptrdiff_t n,
                const T* bias, T* const* out) {
    for (std::ptrdiff_t i0 = 0; i0 < n; i0 += kLanes) {
        T acc[CB][kLanes];
        for (std::size_t c = 0; c < CB; ++c) {
            for (std::ptrdiff_t j = 0; j < kLanes; ++j) acc[c][j] = bias[c];
        }
        for (std::size_t k = 0; k < K; ++k) {
            const T* s = src[k] + i0;
            for (std::size_t c = 0; c < CB; ++c) {
                const T w = weights[c * K + k];
                for (std::ptrdiff_t j = 0; j < kLanes; ++j) acc[c][j] += w * s[j];
            }
        }
        for (std::size_t c = 0; c < CB; ++c) {
            for (std::ptrdiff_t j = 0; j < kLanes; ++j) out[c][i0 + j] = acc[c][j];
        }
    }
}

template <typename T>
void gemm(const std::vector<T>& weights, std::size_t rows, std::size_t K,
          const std::vector<const T*>& src, std::ptrdiff_t n, const std::vector<T>& bias,
          const std::vector<T*>& out) {
    std::size_t r = 0;
    for (; r + 4 <= rows; r += 4) {
        gemm_block<T, 4>(weights.data() + r * K, K, src.data(), n, bias.data() + r, out.data() + r);
    }
    for (; r < rows; ++r) {
        gemm_block<T, 1>(weights.data() + r * K, K, src.data(), n, bias.data() + r, out.data() + r);
    }
}

// dw[o * K + k] = sum_i grad[o][i] * src[k][i] over i in [0, n rounded up);
// the rounded tail must hold zeros in grad.
template <typename T, std::size_t CB>
void weight_grad_block(const T* const* grad, const T* const* src, std::size_t K, std::ptrdiff_t n,
                       T* dw) {
    for (std::size_t k = 0; k < K; ++k) {
        T part[CB][kLanes] = {};
        const T* s = src[k];
        for (std::ptrdiff_t i0 = 0; i0 < n; i0 += kLanes) {
            for (std::size_t c = 0; c < CB; ++c) {
                const T* g = grad[c] + i0;
                for (std::ptrdiff_t j = 0; j < kLanes; ++j) part[c][j] += g[j] * s[i0 + j];
            }
        }
        for (std::size_t c = 0; c < CB; ++c) {
            T sum = 0;
            for (std::ptrdiff_t j = 0; j < kLanes; ++j) sum += part[c][j];
            dw[c * K + k] = sum;
        }
    }
}

template <typename T>
void require_input(const Conv3d<T>& layer, const FeatureCube<T>& x) {
    if (x.channels() != layer.in_channels) {
        throw ShapeError("conv expects " + std::to_string(layer.in_channels) +
                         " input channels, got " + std::to_string(x.channels()));
    }
}

template <typename T>
std::vector<std::vector<T>> pad_channels(const PaddedGrid& grid, const FeatureCube<T>& f) {
    std::vector<std::vector<T>> out;
    out.reserve(f.channels());
    for (std::size_t c = 0; c < f.channels(); ++c) out.push_back(grid.pad(f.channel(c).data()));
    return out;
}

// Index displacement of every kernel tap, in weight order (dz, dy, dx).
template <typename T>
std::vector<std::ptrdiff_t> tap_offsets(const PaddedGrid& grid, const Conv3d<T>& layer) {
    const auto hz = static_cast<std::ptrdiff_t>(layer.kz / 2);
    const auto hy = static_cast<std::ptrdiff_t>(layer.ky / 2);
    const auto hx = static_cast<std::ptrdiff_t>(layer.kx / 2);
    std::vector<std::ptrdiff_t> out;
    for (std::size_t dz = 0; dz < layer.kz; ++dz) {
        for (std::size_t dy = 0; dy < layer.ky; ++dy) {
            for (std::size_t dx = 0; dx < layer.kx; ++dx) {
                out.push_back(grid.offset(static_cast<std::ptrdiff_t>(dz) - hz,
                                          static_cast<std::ptrdiff_t>(dy) - hy,
                                          static_cast<std::ptrdiff_t>(dx) - hx));
            }
        }
    }
    return out;
}

} // namespace

template <typename T>
Conv3d<T>::Conv3d(std::size_t in, std::size_t out, std::size_t kz_, std::size_t ky_,
                  std::size_t kx_)
    : in_channels(in), out_channels(out), kz(kz_), ky(ky_), kx(kx_) {
    if (in == 0 || out == 0) throw ConfigError("conv channel counts must be >= 1");
    if (!valid_edge(kz) || !valid_edge(ky) || !valid_edge(kx)) {
        throw ConfigError("conv kernel extents must be 1 or 3, got " + std::to_string(kz) + "x" +
                          std::to_string(ky) + "x" + std::to_string(kx));
    }
    weights.assign(out * in * kz * ky * kx, T(0));
    bias.assign(out, T(0));
}

template <typename T>
FeatureCube<T> conv3d_forward(const Conv3d<T>& layer, const FeatureCube<T>& x) {
    require_input(layer, x);
    const PaddedGrid grid(x.bands(), x.height(), x.width());
    const auto xp = pad_channels(grid, x);
    const auto offsets = tap_offsets(grid, layer);
    const std::size_t taps = offsets.size();

    std::vector<const T*> src;
    for (std::size_t ci = 0; ci < layer.in_channels; ++ci) {
        for (std::size_t t = 0; t < taps; ++t) src.push_back(xp[ci].data() + grid.first + offsets[t]);
    }
    std::vector<std::vector<T>> acc(layer.out_channels, std::vector<T>(grid.size, T(0)));
    std::vector<T*> out;
    for (auto& a : acc) out.push_back(a.data() + grid.first);
    gemm(layer.weights, layer.out_channels, src.size(), src, grid.count(), layer.bias, out);

    FeatureCube<T> y(layer.out_channels, x.bands(), x.height(), x.width());
    for (std::size_t co = 0; co < layer.out_channels; ++co) {
        grid.unpad(acc[co].data(), y.channel(co).data());
    }
    return y;
}

template <typename T>
Conv3dGrads<T> conv3d_backward(const Conv3d<T>& layer, const FeatureCube<T>& x,
                               const FeatureCube<T>& grad_out, bool want_input_grad) {
    require_input(layer, x);
    if (grad_out.channels() != layer.out_channels || !grad_out.same_volume(x)) {
        throw ShapeError("conv backward: gradient shape does not match forward output");
    }
    const PaddedGrid grid(x.bands(), x.height(), x.width());
    const auto xp = pad_channels(grid, x);
    const auto gp = pad_channels(grid, grad_out);
    const auto offsets = tap_offsets(grid, layer);
    const std::size_t taps = offsets.size();
    const std::size_t K = layer.in_channels * taps;

    Conv3dGrads<T> g;
    g.bias.assign(layer.out_channels, T(0));
    for (std::size_t co = 0; co < layer.out_channels; ++co) {
        T bsum = 0;
        for (const T v : grad_out.channel(co)) bsum += v;
        g.bias[co] = bsum;
    }

    // Weight gradient: correlate each output gradient with shifted inputs.
    // Padding voxels of the gradient are zero, so the interior range is
    // summed unmasked.
    std::vector<const T*> src;
    for (std::size_t ci = 0; ci < layer.in_channels; ++ci) {
        for (std::size_t t = 0; t < taps; ++t) src.push_back(xp[ci].data() + grid.first + offsets[t]);
    }
    std::vector<const T*> grad;
    for (const auto& c : gp) grad.push_back(c.data() + grid.first);
    g.weights.assign(layer.weights.size(), T(0));
    std::size_t co = 0;
    for (; co + 4 <= layer.out_channels; co += 4) {
        weight_grad_block<T, 4>(grad.data() + co, src.data(), K, grid.count(), g.weights.data() + co * K);
    }
    for (; co < layer.out_channels; ++co) {
        weight_grad_block<T, 1>(grad.data() + co, src.data(), K, grid.count(), g.weights.data() + co * K);
    }

    if (want_input_grad) {
        // Input gradient: the same blocked product with transposed weights
        // and negated tap offsets over the output gradient.
        const std::size_t Kt = layer.out_channels * taps;
        std::vector<T> wt(layer.in_channels * Kt);
        for (std::size_t o = 0; o < layer.out_channels; ++o) {
            for (std::size_t ci = 0; ci < layer.in_channels; ++ci) {
                for (std::size_t t = 0; t < taps; ++t) {
                    wt[ci * Kt + o * taps + t] = layer.weights[(o * layer.in_channels + ci) * taps + t];
                }
            }
        }
        std::vector<const T*> gsrc;
        for (std::size_t o = 0; o < layer.out_channels; ++o) {
            for (std::size_t t = 0; t < taps; ++t) gsrc.push_back(gp[o].data() + grid.first - offsets[t]);
        }
        std::vector<std::vector<T>> gin(layer.in_channels, std::vector<T>(grid.size, T(0)));
        std::vector<T*> out;
        for (auto& a : gin) out.push_back(a.data() + grid.first);
        const std::vector<T> zero(layer.in_channels, T(0));
        gemm(wt, layer.in_channels, Kt, gsrc, grid.count(), zero, out);
        g.input = FeatureCube<T>(layer.in_channels, x.bands(), x.height(), x.width());
        for (std::size_t ci = 0; ci < layer.in_channels; ++ci) {
            grid.unpad(gin[ci].data(), g.input.channel(ci).data());
        }
    }
    return g;
}

template <typename T>
FeatureCube<T> relu(const FeatureCube<T>& x) {
    FeatureCube<T> y = x;
    for (T& v : y.data()) v = v > T(0) ? v : T(0);
    return y;
}

template <typename T>
FeatureCube<T> relu_backward(const FeatureCube<T>& x, const FeatureCube<T>& grad_out) {
    if (!x.same_shape(grad_out)) throw ShapeError("relu backward: shape mismatch");
    FeatureCube<T> g = grad_out;
    auto xs = x.data();
    auto gs = g.data();
    for (std::size_t i = 0; i < gs.size(); ++i) {
        if (!(xs[i] > T(0))) gs[i] = T(0);
    }
    return g;
}

void NetworkConfig::validate() const {
    for (std::size_t i = 0; i < kModules; ++i) {
        if (module_channels[i] == 0) {
            throw ConfigError("module " + std::to_string(i + 1) + " has zero channels");
        }
    }
    if (!valid_edge(final_kernel)) {
        throw ConfigError("final kernel edge must be 1 or 3, got " + std::to_string(final_kernel));
    }
}

template <typename T>
NetworkParams<T> NetworkParams<T>::zeros(const NetworkConfig& config) {
    config.validate();
    NetworkParams p;
    p.config = config;
    const std::size_t kz = config.depth(3);
    for (std::size_t m = 0; m < NetworkConfig::kModules; ++m) {
        const std::size_t cin = config.in_channels(m);
        const std::size_t cout = config.module_channels[m];
        p.main.emplace_back(cin, cout, kz, 3, 3);
        if (config.module_shortcuts) p.projection.emplace_back(cin, cout, 1, 1, 1);
    }
    const std::size_t e = config.final_kernel;
    p.combiner = Conv3d<T>(config.module_channels.back(), 1, config.depth(e), e, e);
    return p;
}

template <typename T>
std::vector<Conv3d<T>*> NetworkParams<T>::layers() {
    std::vector<Conv3d<T>*> out;
    for (std::size_t m = 0; m < main.size(); ++m) {
        out.push_back(&main[m]);
        if (m < projection.size()) out.push_back(&projection[m]);
    }
    out.push_back(&combiner);
    return out;
}

template <typename T>
std::vector<const Conv3d<T>*> NetworkParams<T>::layers() const {
    std::vector<const Conv3d<T>*> out;
    for (std::size_t m = 0; m < main.size(); ++m) {
        out.push_back(&main[m]);
        if (m < projection.size()) out.push_back(&projection[m]);
    }
    out.push_back(&combiner);
    return out;
}

template <typename T>
std::vector<std::span<T>> NetworkParams<T>::tensors() {
    std::vector<std::span<T>> out;
    for (auto* l : layers()) {
        out.emplace_back(l->weights);
        out.emplace_back(l->bias);
    }
    return out;
}

template <typename T>
std::vector<std::span<const T>> NetworkParams<T>::tensors() const {
    std::vector<std::span<const T>> out;
    for (const auto* l : layers()) {
        out.emplace_back(l->weights);
        out.emplace_back(l->bias);
    }
    return out;
}

template <typename T>
std::size_t NetworkParams<T>::count() const {
    std::size_t n = 0;
    for (const auto* l : layers()) n += l->param_count();
    return n;
}

std::size_t param_count(const NetworkConfig& config) {
    config.validate();
    const std::size_t main_taps = config.depth(3) * 3 * 3;
    std::size_t n = 0;
    for (std::size_t m = 0; m < NetworkConfig::kModules; ++m) {
        const std::size_t cin = config.in_channels(m);
        const std::size_t cout = config.module_channels[m];
        n += cin * cout * main_taps + cout;
        if (config.module_shortcuts) n += cin * cout + cout;
    }
    const std::size_t e = config.final_kernel;
    n += config.module_channels.back() * config.depth(e) * e * e + 1;
    return n;
}

template <typename T>
NetworkParams<T> init_params(const NetworkConfig& config, std::uint64_t seed) {
    auto p = NetworkParams<T>::zeros(config);
    std::mt19937_64 rng(seed);
    auto fill = [&rng](Conv3d<T>& layer) {
        const double fan_in = static_cast<double>(layer.in_channels * layer.taps());
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        for (T& w : layer.weights) w = static_cast<T>(dist(rng));
    };
    for (std::size_t m = 0; m < p.main.size(); ++m) {
        fill(p.main[m]);
        if (m < p.projection.size()) fill(p.projection[m]);
    }
    return p;
}

namespace {

template <typename T>
void add_inplace(FeatureCube<T>& acc, const FeatureCube<T>& v) {
    auto a = acc.data();
    auto b = v.data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

// One residual module; records the ReLU argument when relu_input is given.
template <typename T>
FeatureCube<T> run_module(const NetworkParams<T>& params, std::size_t m, const FeatureCube<T>& x,
                          FeatureCube<T>* relu_input) {
    const auto& cfg = params.config;
    FeatureCube<T> pre = conv3d_forward(params.main[m], x);
    if (!cfg.module_shortcuts) {
        auto y = relu(pre);
        if (relu_input) *relu_input = std::move(pre);
        return y;
    }
    FeatureCube<T> proj = conv3d_forward(params.projection[m], x);
    if (cfg.relu_placement == ReluPlacement::AfterAdd) {
        add_inplace(pre, proj);
        auto y = relu(pre);
        if (relu_input) *relu_input = std::move(pre);
        return y;
    }
    auto y = relu(pre);
    add_inplace(y, proj);
    if (relu_input) *relu_input = std::move(pre);
    return y;
}

template <typename T>
void require_layout(const NetworkParams<T>& params) {
    const std::size_t want_proj = params.config.module_shortcuts ? NetworkConfig::kModules : 0;
    if (params.main.size() != NetworkConfig::kModules || params.projection.size() != want_proj) {
        throw ConfigError("network parameters do not match their config");
    }
}

} // namespace

template <typename T>
FeatureCube<T> module_forward(const NetworkParams<T>& params, std::size_t module,
                              const FeatureCube<T>& x) {
    require_layout(params);
    if (module < 1 || module > NetworkConfig::kModules) {
        throw BoundsError("module index " + std::to_string(module) + " outside 1..5");
    }
    return run_module<T>(params, module - 1, x, nullptr);
}

template <typename T>
NetworkOutput<T> network_forward(const NetworkParams<T>& params, const Cube<T>& initial,
                                 ForwardTrace<T>* trace) {
    require_layout(params);
    if (trace) {
        trace->module_inputs.clear();
        trace->relu_inputs.assign(NetworkConfig::kModules, FeatureCube<T>{});
    }
    FeatureCube<T> x = cube_to_features(initial);
    for (std::size_t m = 0; m < NetworkConfig::kModules; ++m) {
        FeatureCube<T> next = run_module(params, m, x, trace ? &trace->relu_inputs[m] : nullptr);
        if (trace) trace->module_inputs.push_back(std::move(x));
        x = std::move(next);
    }
    Cube<T> residual = features_to_cube(conv3d_forward(params.combiner, x));
    if (trace) trace->module_inputs.push_back(std::move(x));
    Cube<T> refined = residual;
    if (params.config.longest_shortcut) {
        auto r = refined.data();
        auto init = initial.data();
        for (std::size_t i = 0; i < r.size(); ++i) r[i] = init[i] + r[i];
    }
    return {std::move(refined), std::move(residual)};
}

template <typename T>
NetworkGrads<T> network_backward(const NetworkParams<T>& params, const ForwardTrace<T>& trace,
                                 const Cube<T>& grad_refined, bool want_input_grad) {
    require_layout(params);
    if (trace.module_inputs.size() != NetworkConfig::kModules + 1 ||
        trace.relu_inputs.size() != NetworkConfig::kModules) {
        throw ShapeError("network backward: incomplete forward trace");
    }
    const auto& cfg = params.config;
    NetworkGrads<T> out{NetworkParams<T>::zeros(cfg), std::nullopt};

    auto comb = conv3d_backward(params.combiner, trace.module_inputs.back(),
                                cube_to_features(grad_refined), true);
    out.params.combiner.weights = std::move(comb.weights);
    out.params.combiner.bias = std::move(comb.bias);
    FeatureCube<T> g = std::move(comb.input);

    for (std::size_t mi = NetworkConfig::kModules; mi-- > 0;) {
        const auto& x = trace.module_inputs[mi];
        const auto& pre = trace.relu_inputs[mi];
        const bool need_gx = mi > 0 || want_input_grad;
        FeatureCube<T> g_main = relu_backward(pre, g);
        FeatureCube<T> g_proj;
        if (cfg.module_shortcuts) {
            g_proj = cfg.relu_placement == ReluPlacement::AfterAdd ? g_main : g;
        }
        auto mg = conv3d_backward(params.main[mi], x, g_main, need_gx);
        out.params.main[mi].weights = std::move(mg.weights);
        out.params.main[mi].bias = std::move(mg.bias);
        FeatureCube<T> gx = std::move(mg.input);
        if (cfg.module_shortcuts) {
            auto pg = conv3d_backward(params.projection[mi], x, g_proj, need_gx);
            out.params.projection[mi].weights = std::move(pg.weights);
            out.params.projection[mi].bias = std::move(pg.bias);
            if (need_gx) add_inplace(gx, pg.input);
        }
        g = std::move(gx);
    }
    if (want_input_grad) {
        Cube<T> gi = features_to_cube(g);
        if (cfg.longest_shortcut) {
            auto a = gi.data();
            auto b = grad_refined.data();
            for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
        }
        out.initial = std::move(gi);
    }
    return out;
}

template <typename To, typename From>
NetworkParams<To> params_cast(const NetworkParams<From>& params) {
    auto out = NetworkParams<To>::zeros(params.config);
    auto src = params.tensors();
    auto dst = out.tensors();
    if (src.size() != dst.size()) throw ConfigError("params_cast: layout mismatch");
    for (std::size_t t = 0; t < src.size(); ++t) {
        if (src[t].size() != dst[t].size()) throw ConfigError("params_cast: layout mismatch");
        for (std::size_t i = 0; i < src[t].size(); ++i) dst[t][i] = static_cast<To>(src[t][i]);
    }
    return out;
}

#define MSDM_INSTANTIATE(T)                                                                       \
    template struct Conv3d<T>;                                                                    \
    template struct NetworkParams<T>;                                                             \
    template FeatureCube<T> conv3d_forward(const Conv3d<T>&, const FeatureCube<T>&);              \
    template Conv3dGrads<T> conv3d_backward(const Conv3d<T>&, const FeatureCube<T>&,              \
                                            const FeatureCube<T>&, bool);                         \
    template FeatureCube<T> relu(const FeatureCube<T>&);                                          \
    template FeatureCube<T> relu_backward(const FeatureCube<T>&, const FeatureCube<T>&);          \
    template NetworkParams<T> init_params<T>(const NetworkConfig&, std::uint64_t);                \
    template FeatureCube<T> module_forward(const NetworkParams<T>&, std::size_t,                  \
                                           const FeatureCube<T>&);                                \
    template NetworkOutput<T> network_forward(const NetworkParams<T>&, const Cube<T>&,            \
                                              ForwardTrace<T>*);                                  \
    template NetworkGrads<T> network_backward(const NetworkParams<T>&, const ForwardTrace<T>&,    \
                                              const Cube<T>&, bool);

MSDM_INSTANTIATE(float)
MSDM_INSTANTIATE(double)

#undef MSDM_INSTANTIATE

template NetworkParams<double> params_cast(const NetworkParams<float>&);
template NetworkParams<float> params_cast(const NetworkParams<double>&);
template NetworkParams<float> params_cast(const NetworkParams<float>&);
template NetworkParams<double> params_cast(const NetworkParams<double>&);

} // namespace msdm
