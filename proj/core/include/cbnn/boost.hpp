#pragma once

// Sample-weight boosting over the checkpoints of one training run.
//
// A run keeps a probability vector over the training samples. After each
// training segment the current model is scored on the full training set:
//
//   e      = sum of weights on misclassified samples
//   lambda = log((1 - e) / e) + log(k - 1)
//   w_i   <- w_i * exp(-eta * lambda * [i correct]) / Z
//   Z      = (1 - e) * exp(-eta * lambda) + e
//
// The final classifier is the lambda-weighted vote of every saved model. As
// long as the lambdas sum to at most 1/eta, the training-set exponential loss
// of that vote is bounded by the product of the Z values, and each Z is below
// one whenever lambda is positive.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace cbnn {

/// Probability vector over the training samples. Every entry is positive and
/// the entries sum to one.
class SampleWeights {
public:
    /// Uniform weights 1/n. Throws std::invalid_argument for n == 0.
    static SampleWeights uniform(std::size_t n);

    /// Adopts `values` after checking positivity and unit sum (1e-9).
    static SampleWeights from_values(std::vector<double> values);

    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    std::span<const double> values() const noexcept { return values_; }

    friend bool operator==(const SampleWeights&, const SampleWeights&) = default;

private:
    SampleWeights() = default;
    explicit SampleWeights(std::vector<double> values) : values_(std::move(values)) {}

    std::vector<double> values_;
};

/// Settings for one boosted run. `error_floor` defaults to 1/(2n) when unset.
struct BoostConfig {
    double eta = 0.01;                            ///< deviation rate
    std::size_t iterations_per_checkpoint = 100;  ///< t
    std::size_t total_iterations = 1000;          ///< T
    std::size_t num_classes = 2;                  ///< k
    std::optional<double> lambda0;                ///< estimated final-model weight
    std::optional<double> error_floor;

    /// Throws std::invalid_argument when eta <= 0, t == 0, t > T, k < 2,
    /// lambda0 <= 0, or the floor lies outside (0, 0.5).
    void validate() const;

    double resolved_lambda0() const;
    double resolved_error_floor(std::size_t n) const;
};

/// Weight of a final model assumed to reach 5% error on a k-class task.
double default_lambda0(std::size_t k);

/// Sum of weights over samples with correct[i] == false.
double weighted_error(const std::vector<bool>& correct, const SampleWeights& weights);

/// log((1-e')/e') + log(k-1) with e' = max(error, error_floor), or
/// std::nullopt when the result is not positive (error >= (k-1)/k): such a
/// checkpoint must not be saved or used to update weights.
std::optional<double> checkpoint_weight(double error, std::size_t k, double error_floor);

struct WeightUpdate {
    SampleWeights weights;
    double z;
};

/// Multiplies correctly classified samples by exp(-eta*lambda) and
/// renormalizes. Throws std::invalid_argument for lambda <= 0 or eta <= 0.
WeightUpdate update_weights(const SampleWeights& weights, const std::vector<bool>& correct, double eta,
                            double lambda);

/// Closed form of the normalizer for a given weighted error.
double normalizer(double error, double eta, double lambda);

/// True iff the history (which should include lambda0) sums below 1/eta.
bool budget_allows(std::span<const double> lambda_history, double eta);

using OneHot = std::vector<double>;

/// Lambda-weighted average of one-hot votes. Throws on an empty list, size
/// mismatch, non-positive lambda, or a vector that is not one-hot.
std::vector<double> combine(std::span<const OneHot> onehot_outputs, std::span<const double> lambdas);

/// Same combination, with votes given as class indices.
std::vector<double> combine_votes(std::span<const std::size_t> predicted_classes,
                                  std::span<const double> lambdas, std::size_t k);

/// Mean of exp(-score). Throws on empty input.
double exp_loss(std::span<const double> true_class_scores);

/// Product of the normalizers; 1 for an empty history.
double loss_bound(std::span<const double> z_history);

/// Index of the largest entry; the lowest index wins ties.
std::size_t argmax(std::span<const double> values);

OneHot make_onehot(std::size_t cls, std::size_t k);

}  // namespace cbnn
