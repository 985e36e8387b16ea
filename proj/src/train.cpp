#include "msdm/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "msdm/classic.hpp"
#include "msdm/error.hpp"
#include "msdm/metrics.hpp"
#include "msdm/mosaic.hpp"

namespace msdm {

template <typename T>
LossResult<T> mse_loss(const Cube<T>& pred, const Cube<T>& target) {
    if (!pred.same_shape(target)) throw ShapeError("mse_loss: prediction and target shapes differ");
    const auto n = static_cast<double>(pred.size());
    Cube<T> grad(pred.bands(), pred.height(), pred.width());
    auto p = pred.data();
    auto t = target.data();
    auto g = grad.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
        acc += d * d;
        g[i] = static_cast<T>(2.0 * d / n);
    }
    return {acc / n, std::move(grad)};
}

template <typename T>
AdamState<T> AdamState<T>::like(std::span<const std::span<const T>> tensors, AdamHyper hyper) {
    AdamState s;
    s.hyper = hyper;
    for (const auto& t : tensors) {
        s.m.emplace_back(t.size(), T(0));
        s.v.emplace_back(t.size(), T(0));
    }
    return s;
}

template <typename T>
AdamState<T> AdamState<T>::like(const NetworkParams<T>& params, AdamHyper hyper) {
    const auto tensors = params.tensors();
    return like(std::span<const std::span<const T>>(tensors), hyper);
}

template <typename T>
void adam_step(AdamState<T>& state, std::span<const std::span<T>> params,
               std::span<const std::span<const T>> grads) {
    if (params.size() != grads.size() || params.size() != state.m.size() ||
        params.size() != state.v.size()) {
        throw ShapeError("adam_step: tensor count mismatch");
    }
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (params[t].size() != grads[t].size() || params[t].size() != state.m[t].size() ||
            params[t].size() != state.v[t].size()) {
            throw ShapeError("adam_step: tensor " + std::to_string(t) + " shape mismatch");
        }
    }
    const auto& h = state.hyper;
    ++state.step;
    const double step = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(h.beta1, step);
    const double c2 = 1.0 - std::pow(h.beta2, step);
    const T b1 = static_cast<T>(h.beta1);
    const T b2 = static_cast<T>(h.beta2);
    const T one_b1 = static_cast<T>(1.0 - h.beta1);
    const T one_b2 = static_cast<T>(1.0 - h.beta2);
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto theta = params[t];
        auto g = grads[t];
        auto& m = state.m[t];
        auto& v = state.v[t];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = b1 * m[i] + one_b1 * g[i];
            v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
            const double m_hat = static_cast<double>(m[i]) / c1;
            const double v_hat = static_cast<double>(v[i]) / c2;
            theta[i] -= static_cast<T>(h.alpha * m_hat / (std::sqrt(v_hat) + h.epsilon));
        }
    }
}

template <typename T>
void adam_step(AdamState<T>& state, NetworkParams<T>& params, const NetworkParams<T>& grads) {
    if (!(params.config == grads.config)) throw ShapeError("adam_step: config mismatch");
    const auto p = params.tensors();
    const auto g = grads.tensors();
    adam_step<T>(state, std::span<const std::span<T>>(p), std::span<const std::span<const T>>(g));
}

template <typename T>
BatchGradient<T> batch_gradient(const NetworkParams<T>& params,
                                 std::span<const TrainPair<T>> batch) {
    if (batch.empty()) throw ShapeError("batch_gradient: empty batch");
    auto total = NetworkParams<T>::zeros(params.config);
    auto acc = total.tensors();
    double loss = 0.0;
    for (const auto& item : batch) {
        if (!item.initial.same_shape(item.target)) {
            throw ShapeError("training pair: initial and target shapes differ");
        }
        ForwardTrace<T> trace;
        const auto out = network_forward(params, item.initial, &trace);
        const auto l = mse_loss(out.refined, item.target);
        loss += l.loss;
        const auto g = network_backward(params, trace, l.grad);
        const auto gt = g.params.tensors();
        for (std::size_t t = 0; t < acc.size(); ++t) {
            for (std::size_t i = 0; i < acc[t].size(); ++i) acc[t][i] += gt[t][i];
        }
    }
    const T inv = T(1) / static_cast<T>(batch.size());
    for (auto& t : acc) {
        for (T& v : t) v *= inv;
    }
    return {loss / static_cast<double>(batch.size()), std::move(total)};
}

template <typename T>
std::optional<double> train_epoch(NetworkParams<T>& params, AdamState<T>& state,
                                  std::span<const Batch<T>> batches) {
    if (batches.empty()) return std::nullopt;
    double sum = 0.0;
    for (const auto& batch : batches) {
        auto bg = batch_gradient<T>(params, batch);
        adam_step(state, params, bg.grads);
        sum += bg.loss;
    }
    return sum / static_cast<double>(batches.size());
}

template <typename T>
std::vector<Batch<T>> make_batches(std::span<const TrainPair<T>> pairs, std::size_t batch_size,
                                   std::mt19937_64& rng) {
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Batch<T>> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        Batch<T> b;
        for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) {
            b.push_back(pairs[order[i]]);
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace

TrainResult train_network(const NetworkConfig& config, std::span<const TrainPair<float>> pairs,
                          const TrainPlan& plan, std::uint64_t seed,
                          const std::function<void(std::size_t, double)>& on_epoch) {
    TrainResult r{init_params<float>(config, seed), {}, 0, {}};
    r.adam = AdamState<float>::like(r.params, plan.adam);
    std::mt19937_64 shuffle_rng(mix_seed(seed, 1));
    for (std::size_t epoch = 0; epoch < plan.epochs; ++epoch) {
        if (plan.max_steps && r.adam.step >= *plan.max_steps) break;
        auto batches = make_batches<float>(pairs, plan.batch_size, shuffle_rng);
        if (plan.max_steps) {
            const auto left = static_cast<std::size_t>(*plan.max_steps - r.adam.step);
            if (batches.size() > left) batches.resize(left);
        }
        const auto loss = train_epoch<float>(r.params, r.adam, batches);
        ++r.epochs_run;
        if (loss) {
            r.epoch_losses.push_back(*loss);
            if (on_epoch) on_epoch(epoch, *loss);
        }
    }
    return r;
}

std::vector<TrainPair<float>> make_training_pairs(const SpectralCube& truth,
                                                  const MsfaPattern& pattern, std::size_t grid) {
    const auto initial = bilinear_demosaic(apply_msfa(truth, pattern));
    auto init_tiles = tile(initial, grid, grid);
    auto truth_tiles = tile(truth, grid, grid);
    std::vector<TrainPair<float>> pairs;
    for (std::size_t i = 0; i < init_tiles.size(); ++i) {
        pairs.push_back({std::move(init_tiles[i]), std::move(truth_tiles[i])});
    }
    return pairs;
}

SpectralCube refine(const NetworkParams<float>& params, const SpectralCube& initial) {
    auto out = network_forward(params, initial).refined;
    for (float& v : out.data()) v = std::clamp(v, 0.0f, 1.0f);
    return out;
}

std::vector<std::vector<std::size_t>> make_fold_indices(std::size_t n, std::size_t k,
                                                        std::uint64_t seed) {
    if (k == 0 || n % k != 0) {
        throw ConfigError("cannot split " + std::to_string(n) + " images into " +
                          std::to_string(k) + " equal folds");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(mix_seed(seed, 0));
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t per = n / k;
    std::vector<std::vector<std::size_t>> folds(k);
    for (std::size_t f = 0; f < k; ++f) {
        folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(f * per),
                        order.begin() + static_cast<std::ptrdiff_t>((f + 1) * per));
    }
    return folds;
}

std::vector<std::vector<std::string>> make_folds(std::span<const std::string> ids, std::size_t k,
                                                 std::uint64_t seed) {
    std::vector<std::vector<std::string>> out;
    for (const auto& fold : make_fold_indices(ids.size(), k, seed)) {
        auto& group = out.emplace_back();
        for (std::size_t i : fold) group.push_back(ids[i]);
    }
    return out;
}

InMemoryDataset::InMemoryDataset(std::vector<std::string> ids, std::vector<SpectralCube> cubes)
    : ids_(std::move(ids)), cubes_(std::move(cubes)) {
    if (ids_.size() != cubes_.size()) throw ConfigError("dataset ids and cubes differ in count");
}

CrossvalReport crossval_run(const Dataset& dataset, const MsfaPattern& pattern,
                            const NetworkConfig& config, const TrainPlan& plan,
                            const std::function<void(const CrossvalEvent&)>& observer) {
    if (dataset.size() == 0) throw ConfigError("cross-validation needs a non-empty dataset");
    config.validate();
    const auto folds = make_fold_indices(dataset.size(), plan.folds, plan.seed);
    auto notify = [&observer](const CrossvalEvent& e) {
        if (observer) observer(e);
    };

    std::vector<std::optional<CrossvalRow>> rows(dataset.size());
    for (std::size_t f = 0; f < folds.size(); ++f) {
        notify({CrossvalEvent::Kind::FoldBegin, f});
        std::vector<TrainPair<float>> pairs;
        for (std::size_t g = 0; g < folds.size(); ++g) {
            if (g == f) continue;
            for (std::size_t idx : folds[g]) {
                auto p = make_training_pairs(dataset.load(idx), pattern, plan.grid);
                std::move(p.begin(), p.end(), std::back_inserter(pairs));
            }
        }
        const auto trained =
            train_network(config, pairs, plan, mix_seed(plan.seed, 100 + f),
                          [&](std::size_t epoch, double loss) {
                              notify({CrossvalEvent::Kind::EpochDone, f, epoch, loss});
                          });
        notify({CrossvalEvent::Kind::TrainingDone, f});
        for (std::size_t idx : folds[f]) {
            const auto truth = dataset.load(idx);
            const auto initial = bilinear_demosaic(apply_msfa(truth, pattern));
            const auto refined = refine(trained.params, initial);
            rows[idx] = CrossvalRow{dataset.id(idx), psnr(truth, initial), psnr(truth, refined)};
        }
        notify({CrossvalEvent::Kind::FoldEnd, f});
    }

    CrossvalReport report;
    for (auto& r : rows) {
        report.rows.push_back(std::move(*r));
        report.mean_bilinear_db += report.rows.back().bilinear_db;
        report.mean_refined_db += report.rows.back().refined_db;
    }
    report.mean_bilinear_db /= static_cast<double>(report.rows.size());
    report.mean_refined_db /= static_cast<double>(report.rows.size());
    return report;
}

#define MSDM_INSTANTIATE(T)                                                                     \
    template LossResult<T> mse_loss(const Cube<T>&, const Cube<T>&);                            \
    template struct AdamState<T>;                                                               \
    template void adam_step(AdamState<T>&, std::span<const std::span<T>>,                       \
                            std::span<const std::span<const T>>);                               \
    template void adam_step(AdamState<T>&, NetworkParams<T>&, const NetworkParams<T>&);         \
    template BatchGradient<T> batch_gradient(const NetworkParams<T>&,                           \
                                             std::span<const TrainPair<T>>);                    \
    template std::optional<double> train_epoch(NetworkParams<T>&, AdamState<T>&,                \
                                               std::span<const Batch<T>>);                      \
    template std::vector<Batch<T>> make_batches(std::span<const TrainPair<T>>, std::size_t,     \
                                                std::mt19937_64&);

MSDM_INSTANTIATE(float)
MSDM_INSTANTIATE(double)

#undef MSDM_INSTANTIATE

} // namespace msdm
