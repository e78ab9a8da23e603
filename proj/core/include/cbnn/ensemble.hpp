#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cbnn/boost.hpp"
#include "cbnn/data.hpp"
#include "cbnn/matrix.hpp"
#include "cbnn/mlp.hpp"

namespace cbnn {

/// A saved model together with its boosting statistics.
struct CheckpointRecord {
    MlpParams params;
    double lambda = 1.0;  ///< ensemble weight, always > 0
    double error = 0.0;   ///< weighted training error when it was saved
    double z = 1.0;       ///< normalizer (1 - error) * exp(-eta * lambda) + error
    std::size_t step = 0; ///< learner iteration at which it was taken
    std::uint64_t seed = 0;
    bool is_final = false;

    friend bool operator==(const CheckpointRecord&, const CheckpointRecord&) = default;
};

/// Lambda-weighted vote over an ordered set of checkpoints.
class EnsembleModel {
public:
    EnsembleModel() = default;

    /// Throws std::invalid_argument for an empty list, a non-positive lambda,
    /// or members with different architectures.
    explicit EnsembleModel(std::vector<CheckpointRecord> checkpoints);

    std::size_t size() const noexcept { return checkpoints_.size(); }
    std::size_t num_classes() const { return checkpoints_.front().params.num_classes(); }
    const std::vector<CheckpointRecord>& checkpoints() const noexcept { return checkpoints_; }
    const std::vector<double>& normalized_weights() const noexcept { return normalized_; }
    std::vector<double> lambdas() const;

    /// Vote distribution for one sample.
    std::vector<double> predict_distribution(std::span<const double> features) const;

    /// Vote distributions for every row (n x k).
    Matrix predict_distributions(const Dataset& data) const;

    /// Argmax of the vote distribution, lowest index on ties.
    std::vector<std::size_t> predict(const Dataset& data) const;

    /// Lambda-weighted mean of the members' softmax outputs (n x k).
    Matrix predict_soft(const Dataset& data) const;

private:
    std::vector<CheckpointRecord> checkpoints_;
    std::vector<double> normalized_;
};

/// Per-member predicted class for every row of `data`; built once and reused
/// to evaluate running ensembles.
std::vector<std::vector<std::size_t>> member_predictions(const EnsembleModel& model, const Dataset& data);

}  // namespace cbnn
