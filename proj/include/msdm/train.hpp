#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "msdm/cube.hpp"
#include "msdm/net3d.hpp"

namespace msdm {

template <typename T>
struct LossResult {
    double loss;
    Cube<T> grad; // dLoss/dPred
};

// Mean of (pred - target)^2 over all entries; grad = 2 (pred - target) / N.
template <typename T>
LossResult<T> mse_loss(const Cube<T>& pred, const Cube<T>& target);

struct AdamHyper {
    double alpha = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    friend bool operator==(const AdamHyper&, const AdamHyper&) = default;
};

template <typename T>
struct AdamState {
    AdamHyper hyper;
    std::uint64_t step = 0;
    std::vector<std::vector<T>> m; // one per parameter tensor
    std::vector<std::vector<T>> v;

    // Zero moments shaped like the given tensors.
    static AdamState like(std::span<const std::span<const T>> tensors, AdamHyper hyper = {});
    static AdamState like(const NetworkParams<T>& params, AdamHyper hyper = {});

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

// One bias-corrected Adam update over parallel lists of parameter and
// gradient tensors. Throws ShapeError if any tensor disagrees with the state.
template <typename T>
void adam_step(AdamState<T>& state, std::span<const std::span<T>> params,
               std::span<const std::span<const T>> grads);

template <typename T>
void adam_step(AdamState<T>& state, NetworkParams<T>& params, const NetworkParams<T>& grads);

template <typename T>
struct TrainPair {
    Cube<T> initial; // bilinear output
    Cube<T> target;  // ground truth
};

template <typename T>
using Batch = std::vector<TrainPair<T>>;

// Loss and parameter gradient averaged over the batch, items reduced in order.
template <typename T>
struct BatchGradient {
    double loss;
    NetworkParams<T> grads;
};

template <typename T>
BatchGradient<T> batch_gradient(const NetworkParams<T>& params, std::span<const TrainPair<T>> batch);

// One Adam step per batch, batches visited in the given order. Returns the
// mean batch loss, or nullopt when there are no batches.
template <typename T>
std::optional<double> train_epoch(NetworkParams<T>& params, AdamState<T>& state,
                                  std::span<const Batch<T>> batches);

// Shuffles with rng, then chunks into batches of batch_size (last may be short).
template <typename T>
std::vector<Batch<T>> make_batches(std::span<const TrainPair<T>> pairs, std::size_t batch_size,
                                   std::mt19937_64& rng);

struct TrainPlan {
    std::size_t epochs = 300;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
    std::size_t folds = 8;
    std::size_t grid = 4; // sub-image grid edge
    // Caps the total number of optimizer steps when set.
    std::optional<std::uint64_t> max_steps;
    AdamHyper adam;
};

struct TrainResult {
    NetworkParams<float> params;
    AdamState<float> adam;
    std::size_t epochs_run = 0;
    std::vector<double> epoch_losses;
};

// Fresh init_params(config, seed) followed by plan.epochs shuffled epochs.
TrainResult train_network(const NetworkConfig& config, std::span<const TrainPair<float>> pairs,
                          const TrainPlan& plan, std::uint64_t seed,
                          const std::function<void(std::size_t, double)>& on_epoch = {});

// Mosaic, bilinear-demosaic, then split (initial, truth) into grid x grid tiles.
std::vector<TrainPair<float>> make_training_pairs(const SpectralCube& truth,
                                                  const MsfaPattern& pattern, std::size_t grid);

// Network refinement of a bilinear cube, clamped to [0, 1].
SpectralCube refine(const NetworkParams<float>& params, const SpectralCube& initial);

// Seeded shuffle of 0..n-1, chunked into k equal groups.
std::vector<std::vector<std::size_t>> make_fold_indices(std::size_t n, std::size_t k,
                                                        std::uint64_t seed);

std::vector<std::vector<std::string>> make_folds(std::span<const std::string> ids, std::size_t k,
                                                 std::uint64_t seed);

// Source of ground-truth cubes for cross-validation.
class Dataset {
public:
    virtual ~Dataset() = default;
    virtual std::size_t size() const = 0;
    virtual std::string id(std::size_t index) const = 0;
    virtual SpectralCube load(std::size_t index) const = 0;
};

class InMemoryDataset : public Dataset {
public:
    InMemoryDataset(std::vector<std::string> ids, std::vector<SpectralCube> cubes);

    std::size_t size() const override { return cubes_.size(); }
    std::string id(std::size_t index) const override { return ids_.at(index); }
    SpectralCube load(std::size_t index) const override { return cubes_.at(index); }

private:
    std::vector<std::string> ids_;
    std::vector<SpectralCube> cubes_;
};

struct CrossvalRow {
    std::string id;
    double bilinear_db;
    double refined_db;
};

struct CrossvalReport {
    std::vector<CrossvalRow> rows; // dataset order
    double mean_bilinear_db = 0;
    double mean_refined_db = 0;
};

struct CrossvalEvent {
    enum class Kind { FoldBegin, EpochDone, TrainingDone, FoldEnd };
    Kind kind;
    std::size_t fold;
    std::size_t epoch = 0;
    double loss = 0;
};

// k-fold protocol: each fold trains fresh parameters on the other folds'
// tiles and scores its own images at full size.
CrossvalReport crossval_run(const Dataset& dataset, const MsfaPattern& pattern,
                            const NetworkConfig& config, const TrainPlan& plan,
                            const std::function<void(const CrossvalEvent&)>& observer = {});

} // namespace msdm
