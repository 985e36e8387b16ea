#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "msdm/error.hpp"
#include "msdm/net3d.hpp"
#include "oracles.hpp"

using namespace msdm;

namespace {

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

NetworkConfig small_config() {
    NetworkConfig cfg;
    cfg.module_channels = {2, 2, 3, 2, 2};
    return cfg;
}

// Parameters from a fixed linear congruential sequence in [-0.5, 0.5), so the
// frozen values below do not depend on the standard library's distributions.
NetworkParams<double> lcg_params(const NetworkConfig& cfg, std::uint64_t state) {
    auto p = NetworkParams<double>::zeros(cfg);
    for (auto t : p.tensors()) {
        for (double& v : t) {
            state = state * 6364136223846793005ULL + 1442695040888963407ULL;
            v = static_cast<double>(state >> 11) / 9007199254740992.0 - 0.5;
        }
    }
    return p;
}

Cube<double> lcg_cube(std::size_t b, std::size_t h, std::size_t w, std::uint64_t state) {
    Cube<double> c(b, h, w);
    for (double& v : c.data()) {
        state = state * 6364136223846793005ULL + 1442695040888963407ULL;
        v = static_cast<double>(state >> 11) / 9007199254740992.0;
    }
    return c;
}

} // namespace

TEST(Conv3dTest, PointwiseLayer) {
    Conv3d<double> l(1, 1, 1, 1, 1);
    l.weights[0] = 2.5;
    l.bias[0] = -0.25;
    FeatureCube<double> x(1, 1, 1, 1, 0.4);
    EXPECT_DOUBLE_EQ(conv3d_forward(l, x)(0, 0, 0, 0), 2.5 * 0.4 - 0.25);
}

TEST(Conv3dTest, OnesKernelCountsTaps) {
    Conv3d<double> l(1, 1, 3, 3, 3);
    std::fill(l.weights.begin(), l.weights.end(), 1.0);
    const double c = 0.7;
    const auto y = conv3d_forward(l, FeatureCube<double>(1, 5, 5, 5, c));
    EXPECT_NEAR(y(0, 2, 2, 2), 27 * c, 1e-12);
    EXPECT_NEAR(y(0, 0, 0, 0), 8 * c, 1e-12);
    EXPECT_NEAR(y(0, 0, 2, 2), 18 * c, 1e-12);
}

TEST(Conv3dTest, MatchesDirectSummationOracle) {
    std::mt19937_64 rng(3);
    Conv3d<double> l(2, 3, 3, 3, 3);
    oracle::randomize(l, rng);
    const auto x = oracle::random_features(2, 4, 5, 6, 17);
    const auto got = conv3d_forward(l, x);
    const auto want = oracle::conv3d(l, x);
    EXPECT_LT(max_abs_diff(got.data(), want.data()), 1e-12);
}

TEST(Conv3dTest, MixedKernelExtents) {
    std::mt19937_64 rng(4);
    for (auto [kz, ky, kx] : {std::tuple{1, 3, 3}, {3, 1, 1}, {1, 1, 3}, {3, 3, 1}}) {
        Conv3d<double> l(2, 2, kz, ky, kx);
        oracle::randomize(l, rng);
        const auto x = oracle::random_features(2, 3, 4, 5, 9);
        EXPECT_LT(max_abs_diff(conv3d_forward(l, x).data(), oracle::conv3d(l, x).data()), 1e-12);
    }
}

TEST(Conv3dTest, ChannelMismatchAndBadKernel) {
    const Conv3d<double> l(2, 1, 3, 3, 3);
    EXPECT_THROW(conv3d_forward(l, FeatureCube<double>(3, 2, 2, 2)), ShapeError);
    EXPECT_THROW(Conv3d<double>(1, 1, 2, 3, 3), ConfigError);
    EXPECT_THROW(conv3d_backward(l, FeatureCube<double>(2, 2, 2, 2), FeatureCube<double>(2, 2, 2, 2)),
                 ShapeError);
}

TEST(Conv3dBackwardTest, ZeroGradientGivesZeros) {
    std::mt19937_64 rng(5);
    Conv3d<double> l(2, 3, 3, 3, 3);
    oracle::randomize(l, rng);
    const auto x = oracle::random_features(2, 3, 4, 4, 1);
    const auto g = conv3d_backward(l, x, FeatureCube<double>(3, 3, 4, 4));
    for (double v : g.input.data()) EXPECT_EQ(v, 0.0);
    for (double v : g.weights) EXPECT_EQ(v, 0.0);
    for (double v : g.bias) EXPECT_EQ(v, 0.0);
}

TEST(Conv3dBackwardTest, ScalarChainRule) {
    Conv3d<double> l(1, 1, 1, 1, 1);
    l.weights[0] = 1.5;
    const auto x = oracle::random_features(1, 2, 3, 3, 2);
    const auto go = oracle::random_features(1, 2, 3, 3, 3);
    const auto g = conv3d_backward(l, x, go);
    double dot = 0, sum = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        dot += x.data()[i] * go.data()[i];
        sum += go.data()[i];
        EXPECT_DOUBLE_EQ(g.input.data()[i], 1.5 * go.data()[i]);
    }
    EXPECT_NEAR(g.weights[0], dot, 1e-12);
    EXPECT_NEAR(g.bias[0], sum, 1e-12);
}

TEST(Conv3dBackwardTest, FiniteDifferences) {
    std::mt19937_64 rng(6);
    for (auto [kz, k] : {std::pair{3, 3}, {1, 3}, {1, 1}}) {
        Conv3d<double> l(2, 3, kz, k, k);
        oracle::randomize(l, rng);
        const auto res = gradcheck::conv_layer(l, oracle::random_features(2, 3, 4, 5, 8), 99);
        EXPECT_LT(res.max_rel, 1e-5);
        EXPECT_GT(res.checked, 0u);
    }
}

TEST(Conv3dBackwardTest, InputGradientOptional) {
    const Conv3d<double> l(1, 1, 3, 3, 3);
    const auto g = conv3d_backward(l, FeatureCube<double>(1, 2, 2, 2), FeatureCube<double>(1, 2, 2, 2),
                                   false);
    EXPECT_EQ(g.input.size(), 0u);
}

TEST(ReluTest, ForwardAndBackward) {
    FeatureCube<double> x(1, 1, 1, 3);
    x(0, 0, 0, 0) = -1;
    x(0, 0, 0, 1) = 0;
    x(0, 0, 0, 2) = 2;
    const auto y = relu(x);
    EXPECT_EQ(y(0, 0, 0, 0), 0.0);
    EXPECT_EQ(y(0, 0, 0, 1), 0.0);
    EXPECT_EQ(y(0, 0, 0, 2), 2.0);

    const FeatureCube<double> g(1, 1, 1, 3, 5.0);
    const auto gb = relu_backward(x, g);
    EXPECT_EQ(gb(0, 0, 0, 0), 0.0);
    EXPECT_EQ(gb(0, 0, 0, 1), 0.0);
    EXPECT_EQ(gb(0, 0, 0, 2), 5.0);
}

TEST(ReluTest, NonNegativeInputIsIdentity) {
    auto x = oracle::random_features(2, 2, 3, 3, 4);
    for (double& v : x.data()) v = std::abs(v);
    EXPECT_EQ(relu(x), x);
}

TEST(ReluTest, BackwardIsMaskedCopy) {
    const auto x = oracle::random_features(2, 3, 3, 3, 12);
    const auto g = oracle::random_features(2, 3, 3, 3, 13);
    const auto gb = relu_backward(x, g);
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_EQ(gb.data()[i], g.data()[i] * (x.data()[i] > 0 ? 1.0 : 0.0));
    }
}

TEST(ParamCountTest, DefaultFormula) {
    const NetworkConfig cfg;
    std::size_t want = 0;
    std::size_t prev = 1;
    for (std::size_t c : cfg.module_channels) {
        want += prev * c * 27 + c + prev * c + c;
        prev = c;
    }
    want += 32 + 1;
    EXPECT_EQ(param_count(cfg), want);
    EXPECT_EQ(NetworkParams<float>::zeros(cfg).count(), want);
}

TEST(ParamCountTest, ModuleOneAndCombiner) {
    const auto p = NetworkParams<double>::zeros(NetworkConfig{});
    EXPECT_EQ(p.main[0].param_count(), 56u);
    EXPECT_EQ(p.projection[0].param_count(), 4u);
    EXPECT_EQ(p.main[0].param_count() + p.projection[0].param_count(), 60u);
    EXPECT_EQ(p.combiner.param_count(), 33u);
}

TEST(ParamCountTest, PlanarAblation) {
    NetworkConfig cfg;
    cfg.conv_mode = ConvMode::Planar2d;
    const auto p = NetworkParams<double>::zeros(cfg);
    EXPECT_EQ(p.main[0].param_count(), 20u);
    for (const auto& m : p.main) EXPECT_EQ(m.kz, 1u);
    EXPECT_EQ(param_count(cfg), p.count());
    EXPECT_LT(param_count(cfg), param_count(NetworkConfig{}));
}

TEST(ParamCountTest, ShortcutAblationDropsProjections) {
    NetworkConfig off;
    off.module_shortcuts = false;
    const NetworkConfig on;
    std::size_t proj = 0;
    for (const auto& l : NetworkParams<double>::zeros(on).projection) proj += l.param_count();
    EXPECT_EQ(param_count(on) - param_count(off), proj);
    EXPECT_TRUE(NetworkParams<double>::zeros(off).projection.empty());
}

TEST(ParamCountTest, CubicCombinerFollowsMode) {
    NetworkConfig cfg;
    cfg.final_kernel = 3;
    EXPECT_EQ(NetworkParams<double>::zeros(cfg).combiner.param_count(), 32u * 27 + 1);
    cfg.conv_mode = ConvMode::Planar2d;
    EXPECT_EQ(NetworkParams<double>::zeros(cfg).combiner.param_count(), 32u * 9 + 1);
    EXPECT_EQ(param_count(cfg), NetworkParams<double>::zeros(cfg).count());
}

TEST(ConfigTest, Validation) {
    NetworkConfig cfg;
    cfg.final_kernel = 2;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.module_channels[2] = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(ModuleTest, ZeroParamsGiveZeros) {
    const auto p = NetworkParams<double>::zeros(NetworkConfig{});
    const auto y = module_forward(p, 1, oracle::random_features(1, 3, 4, 4, 1));
    EXPECT_EQ(y.channels(), 2u);
    for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(ModuleTest, ProjectionPathIsolation) {
    auto p = NetworkParams<double>::zeros(NetworkConfig{});
    // Module 2 maps 2 -> 4 channels; projection copies inputs into channels 0, 1.
    p.projection[1].w(0, 0, 0, 0, 0) = 1;
    p.projection[1].w(1, 1, 0, 0, 0) = 1;
    const auto x = oracle::random_features(2, 3, 4, 4, 2);
    const auto y = module_forward(p, 2, x);
    ASSERT_EQ(y.channels(), 4u);
    for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t i = 0; i < x.volume(); ++i) EXPECT_EQ(y.channel(c)[i], x.channel(c)[i]);
    }
    for (std::size_t c = 2; c < 4; ++c) {
        for (double v : y.channel(c)) EXPECT_EQ(v, 0.0);
    }
}

TEST(ModuleTest, MatchesMonolithicOracle) {
    for (auto placement : {ReluPlacement::BeforeAdd, ReluPlacement::AfterAdd}) {
        for (bool shortcuts : {true, false}) {
            auto cfg = small_config();
            cfg.relu_placement = placement;
            cfg.module_shortcuts = shortcuts;
            const auto p = oracle::random_params(cfg, 21);
            auto x = oracle::random_features(1, 3, 4, 5, 22);
            for (std::size_t m = 0; m < 5; ++m) {
                const auto got = module_forward(p, m + 1, x);
                const auto want = oracle::module(p, m, x);
                EXPECT_LT(max_abs_diff(got.data(), want.data()), 1e-12);
                x = want;
            }
        }
    }
}

TEST(ModuleTest, IndexOutOfRange) {
    const auto p = NetworkParams<double>::zeros(NetworkConfig{});
    EXPECT_THROW(module_forward(p, 0, FeatureCube<double>(1, 1, 1, 1)), BoundsError);
    EXPECT_THROW(module_forward(p, 6, FeatureCube<double>(1, 1, 1, 1)), BoundsError);
}

TEST(NetworkTest, ZeroCombinerIsIdentity) {
    auto p = params_cast<float>(oracle::random_params(NetworkConfig{}, 31));
    std::fill(p.combiner.weights.begin(), p.combiner.weights.end(), 0.0f);
    p.combiner.bias[0] = 0;
    const auto init = cube_cast<float>(oracle::random_cube(16, 8, 8, 1));
    const auto out = network_forward(p, init);
    EXPECT_EQ(out.refined, init);
    for (float v : out.residual.data()) EXPECT_EQ(v, 0.0f);
}

TEST(NetworkTest, NoLongestShortcutWithZeroCombinerGivesZero) {
    auto cfg = NetworkConfig{};
    cfg.longest_shortcut = false;
    auto p = oracle::random_params(cfg, 32);
    std::fill(p.combiner.weights.begin(), p.combiner.weights.end(), 0.0);
    p.combiner.bias[0] = 0;
    const auto out = network_forward(p, oracle::random_cube(4, 6, 6, 2));
    for (double v : out.refined.data()) EXPECT_EQ(v, 0.0);
}

TEST(NetworkTest, MatchesChainedOracle) {
    for (bool longest : {true, false}) {
        auto cfg = small_config();
        cfg.longest_shortcut = longest;
        const auto p = oracle::random_params(cfg, 33);
        const auto init = oracle::random_cube(4, 5, 6, 3);
        const auto out = network_forward(p, init);
        EXPECT_LT(max_abs_diff(out.refined.data(), oracle::network(p, init).data()), 1e-12);
    }
}

TEST(NetworkTest, GoldenValues) {
    // Frozen from a one-off run of the oracle chain (oracle::network)
    // on these LCG parameters and input.
    const auto p = lcg_params(NetworkConfig{}, 2024);
    const auto init = lcg_cube(4, 4, 5, 7);
    const auto want = oracle::network(p, init);
    const auto got = network_forward(p, init).refined;
    EXPECT_LT(max_abs_diff(got.data(), want.data()), 1e-9);
    EXPECT_NEAR(got(0, 0, 0), -4.9213377105585421, 1e-9);
    EXPECT_NEAR(got(3, 3, 4), 3.6895777285003186, 1e-9);
    double sum = 0;
    for (double v : got.data()) sum += v;
    EXPECT_NEAR(sum, 112.08331580096105, 1e-7);
}

TEST(NetworkTest, SameShapeThroughEveryModule) {
    const auto p = oracle::random_params(NetworkConfig{}, 34);
    auto x = cube_to_features(oracle::random_cube(3, 4, 5, 4));
    for (std::size_t m = 1; m <= 5; ++m) {
        x = module_forward(p, m, x);
        EXPECT_EQ(x.bands(), 3u);
        EXPECT_EQ(x.height(), 4u);
        EXPECT_EQ(x.width(), 5u);
    }
}

TEST(NetworkTest, ForwardIsDeterministic) {
    const auto p = params_cast<float>(oracle::random_params(NetworkConfig{}, 35));
    const auto init = cube_cast<float>(oracle::random_cube(16, 8, 8, 5));
    EXPECT_EQ(network_forward(p, init).refined, network_forward(p, init).refined);
}

TEST(NetworkTest, MismatchedLayoutRejected) {
    auto p = NetworkParams<double>::zeros(NetworkConfig{});
    p.config.module_shortcuts = false;
    EXPECT_THROW(network_forward(p, oracle::random_cube(2, 2, 2, 1)), ConfigError);
}

TEST(NetworkGradientTest, FiniteDifferencesAllVariants) {
    std::uint64_t seed = 40;
    for (auto placement : {ReluPlacement::BeforeAdd, ReluPlacement::AfterAdd}) {
        for (bool shortcuts : {true, false}) {
            for (bool longest : {true, false}) {
                auto cfg = small_config();
                cfg.relu_placement = placement;
                cfg.module_shortcuts = shortcuts;
                cfg.longest_shortcut = longest;
                const auto p = oracle::random_params(cfg, ++seed);
                const auto initial = oracle::random_cube(2, 4, 5, ++seed);
                const auto target = oracle::random_cube(2, 4, 5, ++seed);
                const auto res = gradcheck::network(p, initial, target);
                EXPECT_LT(res.max_rel, 1e-5);
                EXPECT_LT(res.skipped, res.checked / 20 + 1);
            }
        }
    }
}

TEST(NetworkGradientTest, DefaultChannelsSampled) {
    const auto p = oracle::random_params(NetworkConfig{}, 50, 0.3);
    const auto res = gradcheck::network(p, oracle::random_cube(2, 3, 3, 51),
                                        oracle::random_cube(2, 3, 3, 52), 6, 53);
    EXPECT_LT(res.max_rel, 1e-5);
    EXPECT_GT(res.checked, 50u);
}

TEST(InitTest, IdentityAtInitialization) {
    for (std::uint64_t seed : {0ULL, 1ULL, 12345ULL}) {
        const auto p = init_params<float>(NetworkConfig{}, seed);
        const auto init = cube_cast<float>(oracle::random_cube(16, 8, 8, seed));
        EXPECT_EQ(network_forward(p, init).refined, init);
    }
}

TEST(InitTest, DeterministicAndSeedSensitive) {
    const auto a = init_params<float>(NetworkConfig{}, 7);
    const auto b = init_params<float>(NetworkConfig{}, 7);
    const auto c = init_params<float>(NetworkConfig{}, 8);
    EXPECT_EQ(a, b);
    EXPECT_NE(a.main[0].weights, c.main[0].weights);
}

TEST(InitTest, HeScaleAndZeroBiases) {
    const auto p = init_params<double>(NetworkConfig{}, 11);
    // Module 5 main conv: fan_in = 16 * 27, 32 * 432 samples.
    const auto& w = p.main[4].weights;
    double mean = 0, var = 0;
    for (double v : w) mean += v;
    mean /= static_cast<double>(w.size());
    for (double v : w) var += (v - mean) * (v - mean);
    var /= static_cast<double>(w.size());
    EXPECT_NEAR(var, 2.0 / (16 * 27), 0.1 * 2.0 / (16 * 27));
    for (const auto* l : p.layers()) {
        for (double v : l->bias) EXPECT_EQ(v, 0.0);
    }
    for (double v : p.combiner.weights) EXPECT_EQ(v, 0.0);
}
