#pragma once

// Fully-connected softmax classifier trained by weighted mini-batch SGD.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "cbnn/boost.hpp"
#include "cbnn/data.hpp"
#include "cbnn/matrix.hpp"

namespace cbnn {

/// Parameters of an MLP with rectified hidden layers and a softmax output.
///
/// `values` is a single flat vector so that checkpoints can be stored,
/// compared, and projected as points in parameter space. Layer l occupies
/// a row-major weight block (out x in) followed by its bias vector.
struct MlpParams {
    std::vector<std::size_t> layer_sizes;  ///< input width, hidden widths..., k
    std::vector<double> values;
    double l2 = 0.0;                       ///< penalty 0.5 * l2 * |W|^2 over weight blocks

    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t num_classes() const { return layer_sizes.back(); }
    std::size_t num_layers() const { return layer_sizes.size() - 1; }

    friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Number of scalars for a given architecture. Throws for fewer than two sizes
/// or a zero width.
std::size_t parameter_count(std::span<const std::size_t> layer_sizes);

/// All-zero parameters for `layer_sizes`.
MlpParams zero_params(std::vector<std::size_t> layer_sizes, double l2);

/// Weights uniform in +-sqrt(6 / fan_in), biases zero.
MlpParams init_params(std::vector<std::size_t> layer_sizes, double l2, std::uint64_t seed);

/// Throws std::invalid_argument unless the parameters are consistent with
/// their architecture and finite.
void validate(const MlpParams& params);

/// Softmax probabilities for one sample.
std::vector<double> forward(const MlpParams& params, std::span<const double> features);

/// Argmax of `forward` with the lowest index winning ties.
std::size_t predict_class(const MlpParams& params, std::span<const double> features);
OneHot predict_onehot(const MlpParams& params, std::span<const double> features);

/// Class predictions and probabilities for every row of a dataset.
std::vector<std::size_t> predict_classes(const MlpParams& params, const Dataset& data);
Matrix predict_proba(const MlpParams& params, const Dataset& data);

/// Mini-batch with per-sample weights taken from the current SampleWeights.
struct Batch {
    Matrix features;
    std::vector<std::size_t> labels;
    std::vector<double> weights;

    std::size_t size() const noexcept { return labels.size(); }
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices, const SampleWeights& weights);

/// (1/|B|) * sum_i (n_total * w_i) * CE_i + 0.5 * l2 * |W|^2.
/// Throws std::invalid_argument for an empty batch or any weight <= 0.
double weighted_batch_loss(const MlpParams& params, const Batch& batch, std::size_t n_total);

struct LossAndGradient {
    double loss;
    std::vector<double> gradient;  ///< same layout as MlpParams::values
};

LossAndGradient loss_and_gradient(const MlpParams& params, const Batch& batch, std::size_t n_total);

/// Unweighted mean cross-entropy over a dataset plus the L2 penalty.
double regularized_cross_entropy(const MlpParams& params, const Dataset& data);

struct LrSchedule {
    double base_rate = 0.05;
    double decay_factor = 0.96;
    std::size_t decay_every_epochs = 2;
    std::size_t warmup_epochs = 5;
    std::size_t steps_per_epoch = 1;

    void validate() const;
};

/// Linear warmup from base/warmup to base over the warmup epochs, then
/// base * decay^floor((epoch - warmup) / decay_every).
double lr_at(std::size_t step, const LrSchedule& schedule);

/// Mutable training state. The shuffling stream and the position inside the
/// current epoch persist across segments.
struct TrainState {
    MlpParams params;
    std::size_t step = 0;
    std::uint64_t seed = 0;
    std::mt19937_64 rng;
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
};

TrainState make_train_state(MlpParams params, std::uint64_t seed);

/// One gradient step at lr_at(state.step). Throws TrainingDiverged when the
/// loss or gradient is non-finite.
TrainState sgd_step(TrainState state, const Batch& batch, std::size_t n_total, const LrSchedule& schedule);

/// In-place variant used by the training loop.
void sgd_step_inplace(TrainState& state, const Batch& batch, std::size_t n_total, const LrSchedule& schedule);

/// Exactly `iterations` SGD steps over shuffled mini-batches; the order is
/// reshuffled at every epoch boundary. Throws std::invalid_argument for
/// iterations == 0 or a batch size of zero.
TrainState train_segment(TrainState state, const Dataset& data, const SampleWeights& weights,
                         std::size_t iterations, const LrSchedule& schedule, std::size_t batch_size);

void train_segment_inplace(TrainState& state, const Dataset& data, const SampleWeights& weights,
                           std::size_t iterations, const LrSchedule& schedule, std::size_t batch_size);

}  // namespace cbnn
