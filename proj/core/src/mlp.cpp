#include "cbnn/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "cbnn/error.hpp"

namespace cbnn {
namespace {

constexpr std::uint64_t kShuffleStream = 0x9E3779B97F4A7C15ULL;

struct LayerView {
    std::size_t in;
    std::size_t out;
    std::size_t weight_offset;
    std::size_t bias_offset;
};

std::vector<LayerView> layer_views(std::span<const std::size_t> sizes) {
    std::vector<LayerView> views;
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const std::size_t in = sizes[l];
        const std::size_t out = sizes[l + 1];
        views.push_back({in, out, offset, offset + in * out});
        offset += in * out + out;
    }
    return views;
}

void check_input(const MlpParams& params, std::span<const double> features) {
    if (params.layer_sizes.size() < 2) {
        throw std::invalid_argument("MLP: architecture needs an input and an output layer");
    }
    if (features.size() != params.input_dim()) {
        throw std::invalid_argument("MLP: feature length " + std::to_string(features.size()) +
                                    " does not match input width " + std::to_string(params.input_dim()));
    }
}

// Per-layer pre-activations; the last entry holds the logits.
struct Activations {
    std::vector<std::vector<double>> inputs;  // inputs[l] feeds layer l
    std::vector<double> logits;
};

Activations run_layers(const MlpParams& params, std::span<const double> features,
                       const std::vector<LayerView>& views) {
    Activations acts;
    acts.inputs.reserve(views.size());
    acts.inputs.emplace_back(features.begin(), features.end());
    const double* p = params.values.data();
    for (std::size_t l = 0; l < views.size(); ++l) {
        const auto& v = views[l];
        const auto& in = acts.inputs.back();
        std::vector<double> z(v.out);
        for (std::size_t o = 0; o < v.out; ++o) {
            const double* w = p + v.weight_offset + o * v.in;
            double s = p[v.bias_offset + o];
            for (std::size_t i = 0; i < v.in; ++i) {
                s += w[i] * in[i];
            }
            z[o] = s;
        }
        if (l + 1 == views.size()) {
            acts.logits = std::move(z);
        } else {
            for (double& x : z) {
                x = std::max(x, 0.0);
            }
            acts.inputs.push_back(std::move(z));
        }
    }
    return acts;
}

// Softmax in place; returns log-sum-exp of the logits.
double softmax_inplace(std::vector<double>& logits) {
    const double shift = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double& x : logits) {
        x = std::exp(x - shift);
        total += x;
    }
    for (double& x : logits) {
        x /= total;
    }
    return shift + std::log(total);
}

double l2_penalty(const MlpParams& params, const std::vector<LayerView>& views) {
    if (params.l2 == 0.0) {
        return 0.0;
    }
    double sq = 0.0;
    for (const auto& v : views) {
        for (std::size_t j = 0; j < v.in * v.out; ++j) {
            const double w = params.values[v.weight_offset + j];
            sq += w * w;
        }
    }
    return 0.5 * params.l2 * sq;
}

void check_batch(const MlpParams& params, const Batch& batch) {
    if (batch.size() == 0) {
        throw std::invalid_argument("weighted loss: empty batch");
    }
    if (batch.features.rows() != batch.size() || batch.weights.size() != batch.size()) {
        throw std::invalid_argument("weighted loss: batch fields have inconsistent lengths");
    }
    for (double w : batch.weights) {
        if (!(w > 0.0)) {
            throw std::invalid_argument("weighted loss: sample weights must be positive");
        }
    }
    for (std::size_t y : batch.labels) {
        if (y >= params.num_classes()) {
            throw std::invalid_argument("weighted loss: label out of range");
        }
    }
}

}  // namespace

std::size_t parameter_count(std::span<const std::size_t> layer_sizes) {
    if (layer_sizes.size() < 2) {
        throw std::invalid_argument("MLP: architecture needs an input and an output layer");
    }
    std::size_t count = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        if (layer_sizes[l] == 0 || layer_sizes[l + 1] == 0) {
            throw std::invalid_argument("MLP: layer widths must be positive");
        }
        count += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
    }
    return count;
}

MlpParams zero_params(std::vector<std::size_t> layer_sizes, double l2) {
    const std::size_t count = parameter_count(layer_sizes);
    return MlpParams{std::move(layer_sizes), std::vector<double>(count, 0.0), l2};
}

MlpParams init_params(std::vector<std::size_t> layer_sizes, double l2, std::uint64_t seed) {
    MlpParams params = zero_params(std::move(layer_sizes), l2);
    std::mt19937_64 rng(seed);
    for (const auto& v : layer_views(params.layer_sizes)) {
        const double limit = std::sqrt(6.0 / static_cast<double>(v.in));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (std::size_t j = 0; j < v.in * v.out; ++j) {
            params.values[v.weight_offset + j] = dist(rng);
        }
    }
    return params;
}

void validate(const MlpParams& params) {
    if (params.values.size() != parameter_count(params.layer_sizes)) {
        throw std::invalid_argument("MLP: parameter payload does not match the architecture");
    }
    if (!(params.l2 >= 0.0)) {
        throw std::invalid_argument("MLP: L2 coefficient must be non-negative");
    }
    for (double v : params.values) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("MLP: non-finite parameter");
        }
    }
}

std::vector<double> forward(const MlpParams& params, std::span<const double> features) {
    check_input(params, features);
    auto acts = run_layers(params, features, layer_views(params.layer_sizes));
    softmax_inplace(acts.logits);
    return std::move(acts.logits);
}

std::size_t predict_class(const MlpParams& params, std::span<const double> features) {
    return argmax(forward(params, features));
}

OneHot predict_onehot(const MlpParams& params, std::span<const double> features) {
    return make_onehot(predict_class(params, features), params.num_classes());
}

std::vector<std::size_t> predict_classes(const MlpParams& params, const Dataset& data) {
    std::vector<std::size_t> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        out[i] = predict_class(params, data.row(i));
    }
    return out;
}

Matrix predict_proba(const MlpParams& params, const Dataset& data) {
    Matrix out(data.size(), params.num_classes());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto p = forward(params, data.row(i));
        std::copy(p.begin(), p.end(), out.row(i).begin());
    }
    return out;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices, const SampleWeights& weights) {
    if (weights.size() != data.size()) {
        throw std::invalid_argument("make_batch: weight vector does not match dataset size");
    }
    Batch batch{Matrix(0, data.dim()), {}, {}};
    batch.labels.reserve(indices.size());
    batch.weights.reserve(indices.size());
    for (std::size_t i : indices) {
        batch.features.append_row(data.row(i));
        batch.labels.push_back(data.label(i));
        batch.weights.push_back(weights[i]);
    }
    return batch;
}

double weighted_batch_loss(const MlpParams& params, const Batch& batch, std::size_t n_total) {
    check_batch(params, batch);
    const auto views = layer_views(params.layer_sizes);
    const double scale = static_cast<double>(n_total) / static_cast<double>(batch.size());
    double loss = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        check_input(params, batch.features.row(b));
        auto acts = run_layers(params, batch.features.row(b), views);
        const double z_true = acts.logits[batch.labels[b]];
        const double lse = softmax_inplace(acts.logits);
        loss += scale * batch.weights[b] * (lse - z_true);
    }
    return loss + l2_penalty(params, views);
}

LossAndGradient loss_and_gradient(const MlpParams& params, const Batch& batch, std::size_t n_total) {
    check_batch(params, batch);
    const auto views = layer_views(params.layer_sizes);
    const double scale = static_cast<double>(n_total) / static_cast<double>(batch.size());
    const double* p = params.values.data();
    LossAndGradient out{0.0, std::vector<double>(params.values.size(), 0.0)};
    double* g = out.gradient.data();

    for (std::size_t b = 0; b < batch.size(); ++b) {
        check_input(params, batch.features.row(b));
        auto acts = run_layers(params, batch.features.row(b), views);
        const std::size_t y = batch.labels[b];
        const double z_true = acts.logits[y];
        const double lse = softmax_inplace(acts.logits);
        const double coeff = scale * batch.weights[b];
        out.loss += coeff * (lse - z_true);

        std::vector<double> delta = std::move(acts.logits);
        delta[y] -= 1.0;
        for (double& d : delta) {
            d *= coeff;
        }
        for (std::size_t l = views.size(); l-- > 0;) {
            const auto& v = views[l];
            const auto& in = acts.inputs[l];
            for (std::size_t o = 0; o < v.out; ++o) {
                double* gw = g + v.weight_offset + o * v.in;
                for (std::size_t i = 0; i < v.in; ++i) {
                    gw[i] += delta[o] * in[i];
                }
                g[v.bias_offset + o] += delta[o];
            }
            if (l == 0) {
                break;
            }
            // in[i] > 0 exactly where the previous pre-activation was positive.
            std::vector<double> prev(v.in, 0.0);
            for (std::size_t o = 0; o < v.out; ++o) {
                const double* w = p + v.weight_offset + o * v.in;
                for (std::size_t i = 0; i < v.in; ++i) {
                    prev[i] += w[i] * delta[o];
                }
            }
            for (std::size_t i = 0; i < v.in; ++i) {
                if (!(in[i] > 0.0)) {
                    prev[i] = 0.0;
                }
            }
            delta = std::move(prev);
        }
    }

    out.loss += l2_penalty(params, views);
    if (params.l2 != 0.0) {
        for (const auto& v : views) {
            for (std::size_t j = 0; j < v.in * v.out; ++j) {
                g[v.weight_offset + j] += params.l2 * p[v.weight_offset + j];
            }
        }
    }
    return out;
}

double regularized_cross_entropy(const MlpParams& params, const Dataset& data) {
    if (data.size() == 0) {
        throw std::invalid_argument("regularized_cross_entropy: empty dataset");
    }
    const auto views = layer_views(params.layer_sizes);
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        check_input(params, data.row(i));
        auto acts = run_layers(params, data.row(i), views);
        const double z_true = acts.logits[data.label(i)];
        total += softmax_inplace(acts.logits) - z_true;
    }
    return total / static_cast<double>(data.size()) + l2_penalty(params, views);
}

void LrSchedule::validate() const {
    if (!(base_rate >= 0.0)) {
        throw std::invalid_argument("LrSchedule: base rate must be non-negative");
    }
    if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
        throw std::invalid_argument("LrSchedule: decay factor must lie in (0, 1]");
    }
    if (decay_every_epochs == 0 || steps_per_epoch == 0) {
        throw std::invalid_argument("LrSchedule: decay interval and steps per epoch must be positive");
    }
}

double lr_at(std::size_t step, const LrSchedule& schedule) {
    const std::size_t warmup_steps = schedule.warmup_epochs * schedule.steps_per_epoch;
    if (step < warmup_steps) {
        const double start = schedule.base_rate / static_cast<double>(schedule.warmup_epochs);
        const double frac = static_cast<double>(step) / static_cast<double>(warmup_steps);
        return start + (schedule.base_rate - start) * frac;
    }
    const std::size_t epoch = step / schedule.steps_per_epoch;
    const std::size_t intervals = (epoch - schedule.warmup_epochs) / schedule.decay_every_epochs;
    return schedule.base_rate * std::pow(schedule.decay_factor, static_cast<double>(intervals));
}

TrainState make_train_state(MlpParams params, std::uint64_t seed) {
    validate(params);
    TrainState state;
    state.params = std::move(params);
    state.seed = seed;
    state.rng.seed(seed ^ kShuffleStream);
    return state;
}

void sgd_step_inplace(TrainState& state, const Batch& batch, std::size_t n_total, const LrSchedule& schedule) {
    const double lr = lr_at(state.step, schedule);
    auto lg = loss_and_gradient(state.params, batch, n_total);
    if (!std::isfinite(lg.loss)) {
        throw TrainingDiverged("non-finite loss", state.step);
    }
    for (std::size_t j = 0; j < lg.gradient.size(); ++j) {
        if (!std::isfinite(lg.gradient[j])) {
            throw TrainingDiverged("non-finite gradient", state.step);
        }
    }
    if (lr != 0.0) {
        for (std::size_t j = 0; j < lg.gradient.size(); ++j) {
            state.params.values[j] -= lr * lg.gradient[j];
        }
    }
    ++state.step;
}

TrainState sgd_step(TrainState state, const Batch& batch, std::size_t n_total, const LrSchedule& schedule) {
    sgd_step_inplace(state, batch, n_total, schedule);
    return state;
}

void train_segment_inplace(TrainState& state, const Dataset& data, const SampleWeights& weights,
                           std::size_t iterations, const LrSchedule& schedule, std::size_t batch_size) {
    if (iterations == 0) {
        throw std::invalid_argument("train_segment: iterations must be positive");
    }
    if (batch_size == 0) {
        throw std::invalid_argument("train_segment: batch size must be positive");
    }
    if (data.size() == 0 || weights.size() != data.size()) {
        throw std::invalid_argument("train_segment: weights do not match a non-empty dataset");
    }
    schedule.validate();
    const std::size_t n = data.size();
    if (state.order.size() != n) {
        state.order.resize(n);
        std::iota(state.order.begin(), state.order.end(), std::size_t{0});
        state.cursor = n;
    }
    for (std::size_t it = 0; it < iterations; ++it) {
        if (state.cursor >= n) {
            std::shuffle(state.order.begin(), state.order.end(), state.rng);
            state.cursor = 0;
        }
        const std::size_t end = std::min(n, state.cursor + batch_size);
        const std::span<const std::size_t> idx(state.order.data() + state.cursor, end - state.cursor);
        state.cursor = end;
        sgd_step_inplace(state, make_batch(data, idx, weights), n, schedule);
    }
}

TrainState train_segment(TrainState state, const Dataset& data, const SampleWeights& weights,
                         std::size_t iterations, const LrSchedule& schedule, std::size_t batch_size) {
    train_segment_inplace(state, data, weights, iterations, schedule, batch_size);
    return state;
}

}  // namespace cbnn
