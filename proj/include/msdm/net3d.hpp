#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "msdm/cube.hpp"

namespace msdm {

// Same-size 3D convolution (stride 1, zero padding (k-1)/2 on each axis).
// Weights are laid out [out][in][z][y][x]; z runs along the spectral axis.
template <typename T>
struct Conv3d {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kz = 1;
    std::size_t ky = 1;
    std::size_t kx = 1;
    std::vector<T> weights;
    std::vector<T> bias;

    Conv3d() = default;
    // Zero-initialized; kernel extents must each be 1 or 3.
    Conv3d(std::size_t in, std::size_t out, std::size_t kz, std::size_t ky, std::size_t kx);

    std::size_t taps() const { return kz * ky * kx; }
    std::size_t param_count() const { return weights.size() + bias.size(); }

    T& w(std::size_t co, std::size_t ci, std::size_t dz, std::size_t dy, std::size_t dx) {
        return weights[(((co * in_channels + ci) * kz + dz) * ky + dy) * kx + dx];
    }
    const T& w(std::size_t co, std::size_t ci, std::size_t dz, std::size_t dy,
               std::size_t dx) const {
        return weights[(((co * in_channels + ci) * kz + dz) * ky + dy) * kx + dx];
    }

    friend bool operator==(const Conv3d&, const Conv3d&) = default;
};

template <typename T>
struct Conv3dGrads {
    FeatureCube<T> input; // empty when not requested
    std::vector<T> weights;
    std::vector<T> bias;
};

template <typename T>
FeatureCube<T> conv3d_forward(const Conv3d<T>& layer, const FeatureCube<T>& x);

// Adjoint of conv3d_forward. grad_out must have the forward output's shape.
template <typename T>
Conv3dGrads<T> conv3d_backward(const Conv3d<T>& layer, const FeatureCube<T>& x,
                               const FeatureCube<T>& grad_out, bool want_input_grad = true);

template <typename T>
FeatureCube<T> relu(const FeatureCube<T>& x);

// grad_out where x > 0, zero elsewhere (including x == 0).
template <typename T>
FeatureCube<T> relu_backward(const FeatureCube<T>& x, const FeatureCube<T>& grad_out);

enum class ConvMode : std::uint8_t { Spatial3d = 0, Planar2d = 1 };
enum class ReluPlacement : std::uint8_t { BeforeAdd = 0, AfterAdd = 1 };

struct NetworkConfig {
    static constexpr std::size_t kModules = 5;

    std::array<std::size_t, kModules> module_channels{2, 4, 8, 16, 32};
    std::size_t final_kernel = 1; // cube edge of the combiner kernel, 1 or 3
    bool module_shortcuts = true;
    bool longest_shortcut = true;
    ConvMode conv_mode = ConvMode::Spatial3d;
    ReluPlacement relu_placement = ReluPlacement::BeforeAdd;

    // Throws ConfigError on zero channels or an unsupported kernel edge.
    void validate() const;

    std::size_t in_channels(std::size_t module) const {
        return module == 0 ? 1 : module_channels[module - 1];
    }
    // Spectral depth of what would be a 3x3x3 kernel in 3D mode.
    std::size_t depth(std::size_t edge) const {
        return conv_mode == ConvMode::Planar2d ? 1 : edge;
    }

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

// Parameters of the refinement network. main[i] and projection[i] belong to
// module i + 1; projection is empty when module shortcuts are disabled.
template <typename T>
struct NetworkParams {
    NetworkConfig config;
    std::vector<Conv3d<T>> main;
    std::vector<Conv3d<T>> projection;
    Conv3d<T> combiner;

    // All-zero parameters with shapes derived from the config.
    static NetworkParams zeros(const NetworkConfig& config);

    // Canonical order: main1, proj1, main2, proj2, ..., combiner.
    std::vector<Conv3d<T>*> layers();
    std::vector<const Conv3d<T>*> layers() const;

    // Weights then bias of each layer, in canonical order.
    std::vector<std::span<T>> tensors();
    std::vector<std::span<const T>> tensors() const;

    std::size_t count() const;

    friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

std::size_t param_count(const NetworkConfig& config);

// He-normal hidden kernels (variance 2 / fan_in), zero biases, zero combiner.
template <typename T>
NetworkParams<T> init_params(const NetworkConfig& config, std::uint64_t seed);

// module is 1-based (1..5).
template <typename T>
FeatureCube<T> module_forward(const NetworkParams<T>& params, std::size_t module,
                              const FeatureCube<T>& x);

template <typename T>
struct NetworkOutput {
    Cube<T> refined;
    Cube<T> residual;
};

// Intermediate values kept for the backward pass.
template <typename T>
struct ForwardTrace {
    std::vector<FeatureCube<T>> module_inputs; // x0 .. x5
    std::vector<FeatureCube<T>> relu_inputs;   // one per module
};

template <typename T>
NetworkOutput<T> network_forward(const NetworkParams<T>& params, const Cube<T>& initial,
                                 ForwardTrace<T>* trace = nullptr);

template <typename T>
struct NetworkGrads {
    NetworkParams<T> params;
    std::optional<Cube<T>> initial;
};

// Backpropagates dLoss/dRefined through a recorded forward pass.
template <typename T>
NetworkGrads<T> network_backward(const NetworkParams<T>& params, const ForwardTrace<T>& trace,
                                 const Cube<T>& grad_refined, bool want_input_grad = false);

template <typename To, typename From>
NetworkParams<To> params_cast(const NetworkParams<From>& params);

} // namespace msdm
