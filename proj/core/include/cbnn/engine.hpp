#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cbnn/boost.hpp"
#include "cbnn/data.hpp"
#include "cbnn/ensemble.hpp"
#include "cbnn/error.hpp"
#include "cbnn/mlp.hpp"

namespace cbnn {

enum class Method { Cbnn, Single, HorizontalVoting };

std::string to_string(Method method);
/// Accepts "cbnn", "single", "horizontal". Throws std::invalid_argument.
Method parse_method(const std::string& name);

/// Architecture and optimizer settings shared by every training mode.
struct LearnerSettings {
    std::vector<std::size_t> hidden = {64, 64};
    double l2 = 1e-4;
    std::size_t batch_size = 32;
    double base_rate = 0.05;
    double decay_factor = 0.96;
    std::size_t decay_every_epochs = 2;
    std::size_t warmup_epochs = 5;

    void validate() const;
    std::vector<std::size_t> layer_sizes(std::size_t input_dim, std::size_t k) const;
    LrSchedule schedule_for(std::size_t n_train) const;

    friend bool operator==(const LearnerSettings&, const LearnerSettings&) = default;
};

/// One row of the per-checkpoint table. Ensemble columns describe the vote
/// over every checkpoint saved so far, including this one.
struct CheckpointMetrics {
    std::size_t index = 0;  ///< 1-based position in the ensemble
    std::size_t step = 0;
    double error = 0.0;     ///< weighted training error
    double lambda = 0.0;
    double z = 1.0;
    double lambda_sum = 0.0;  ///< sum of lambdas of checkpoints 1..index
    double train_error = 0.0; ///< this member, unweighted
    std::optional<double> test_error;
    double ensemble_train_error = 0.0;
    std::optional<double> ensemble_test_error;
    double loss_bound = 1.0;  ///< product of z over checkpoints 1..index
    double exp_loss = 1.0;    ///< training-set exponential loss of the running vote
    bool is_final = false;

    friend bool operator==(const CheckpointMetrics&, const CheckpointMetrics&) = default;
};

/// A checkpoint boundary whose lambda was not positive; nothing was saved.
struct RejectedCheckpoint {
    std::size_t step = 0;
    double error = 0.0;

    friend bool operator==(const RejectedCheckpoint&, const RejectedCheckpoint&) = default;
};

struct RunRecord {
    Method method = Method::Cbnn;
    BoostConfig config;
    LearnerSettings learner;
    std::uint64_t seed = 0;
    double lambda0 = 0.0;       ///< resolved value
    double error_floor = 0.0;   ///< resolved value
    std::size_t n_train = 0;
    std::size_t input_dim = 0;
    std::vector<CheckpointMetrics> checkpoints;
    std::vector<RejectedCheckpoint> rejected;
    std::vector<double> z_history;  ///< one entry per weight update
    std::vector<double> final_weights;
    std::size_t total_iterations = 0;
    std::vector<double> segment_seconds;
    /// Opaque caller-supplied description of the data (the CLI stores JSON).
    std::string dataset_descriptor;
};

struct RunResult {
    EnsembleModel ensemble;
    RunRecord record;
};

/// Checkpoint boosting. `test` is optional and only used for reporting.
/// Throws RunAborted (a TrainingDiverged carrying the partial record) if
/// the learner diverges.
RunResult run_cbnn(const Dataset& train, const Dataset* test, const BoostConfig& config,
                   const LearnerSettings& learner, std::uint64_t seed);

/// Plain training for T iterations with uniform weights.
RunResult run_single(const Dataset& train, const Dataset* test, const BoostConfig& config,
                     const LearnerSettings& learner, std::uint64_t seed);

/// Plain training with a snapshot every t iterations, each weighted 1.
RunResult run_horizontal_voting(const Dataset& train, const Dataset* test, const BoostConfig& config,
                                const LearnerSettings& learner, std::uint64_t seed);

RunResult run(Method method, const Dataset& train, const Dataset* test, const BoostConfig& config,
              const LearnerSettings& learner, std::uint64_t seed);

/// Carries the record of a run that stopped because the learner diverged.
class RunAborted : public TrainingDiverged {
public:
    RunAborted(const std::string& reason, std::size_t step, RunRecord partial);
    const RunRecord& partial() const noexcept { return partial_; }

private:
    RunRecord partial_;
};

/// Indices (into the non-final checkpoints) kept by equal-interval selection
/// of `count` members: floor(j * saved / (count - 1)) for j < count - 1.
std::vector<std::size_t> equal_interval_indices(std::size_t saved, std::size_t count);

/// The final model plus count - 1 evenly spaced earlier checkpoints.
/// Throws std::invalid_argument for count == 0 or count > model.size().
EnsembleModel select_checkpoints(const EnsembleModel& model, std::size_t count);

}  // namespace cbnn
