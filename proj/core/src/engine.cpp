#include "cbnn/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cbnn {
namespace {

// Weight given to a final model whose own lambda is not positive. It keeps the
// final model in the vote without letting it outweigh any saved checkpoint.
constexpr double kMinFinalLambda = 1e-12;

class Runner {
public:
    Runner(Method method, const Dataset& train, const Dataset* test, const BoostConfig& config,
           const LearnerSettings& learner, std::uint64_t seed)
        : train_(train),
          test_(test),
          weights_(SampleWeights::uniform(train.size())),
          train_votes_(train.size(), train.num_classes()) {
        config.validate();
        learner.validate();
        if (config.num_classes != train.num_classes()) {
            throw std::invalid_argument("run: config class count " + std::to_string(config.num_classes) +
                                        " does not match the dataset's " +
                                        std::to_string(train.num_classes()));
        }
        if (test && (test->dim() != train.dim() || test->num_classes() != train.num_classes())) {
            throw std::invalid_argument("run: test set shape does not match the training set");
        }
        record_.method = method;
        record_.config = config;
        record_.learner = learner;
        record_.seed = seed;
        record_.lambda0 = config.resolved_lambda0();
        record_.error_floor = config.resolved_error_floor(train.size());
        record_.n_train = train.size();
        record_.input_dim = train.dim();
        schedule_ = learner.schedule_for(train.size());
        state_ = make_train_state(
            init_params(learner.layer_sizes(train.dim(), train.num_classes()), learner.l2, seed), seed);
        if (test_) {
            test_votes_ = Matrix(test_->size(), test_->num_classes());
        }
    }

    RunRecord& record() { return record_; }
    const SampleWeights& weights() const { return weights_; }
    void set_weights(SampleWeights w) { weights_ = std::move(w); }
    double eta() const { return record_.config.eta; }
    std::size_t k() const { return train_.num_classes(); }

    void train_for(std::size_t iterations) {
        const auto start = std::chrono::steady_clock::now();
        try {
            train_segment_inplace(state_, train_, weights_, iterations, schedule_, record_.learner.batch_size);
        } catch (const TrainingDiverged& e) {
            record_.total_iterations = state_.step;
            throw RunAborted(e.reason(), e.step(), record_);
        }
        record_.total_iterations += iterations;
        record_.segment_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }

    struct Evaluation {
        std::vector<std::size_t> train_pred;
        std::vector<bool> correct;
        double train_error = 0.0;
        std::vector<std::size_t> test_pred;
        std::optional<double> test_error;
    };

    Evaluation evaluate() const {
        Evaluation ev;
        ev.train_pred = predict_classes(state_.params, train_);
        ev.correct.resize(train_.size());
        std::size_t wrong = 0;
        for (std::size_t i = 0; i < train_.size(); ++i) {
            ev.correct[i] = ev.train_pred[i] == train_.label(i);
            wrong += ev.correct[i] ? 0 : 1;
        }
        ev.train_error = static_cast<double>(wrong) / static_cast<double>(train_.size());
        if (test_) {
            ev.test_pred = predict_classes(state_.params, *test_);
            std::size_t test_wrong = 0;
            for (std::size_t i = 0; i < test_->size(); ++i) {
                test_wrong += ev.test_pred[i] == test_->label(i) ? 0 : 1;
            }
            ev.test_error = static_cast<double>(test_wrong) / static_cast<double>(test_->size());
        }
        return ev;
    }

    void add_member(const Evaluation& ev, double lambda, double error, double z, bool is_final) {
        members_.push_back(CheckpointRecord{state_.params, lambda, error, z, state_.step, record_.seed, is_final});
        lambda_total_ += lambda;
        bound_ *= z;
        for (std::size_t i = 0; i < train_.size(); ++i) {
            train_votes_(i, ev.train_pred[i]) += lambda;
        }
        if (test_) {
            for (std::size_t i = 0; i < test_->size(); ++i) {
                test_votes_(i, ev.test_pred[i]) += lambda;
            }
        }

        CheckpointMetrics m;
        m.index = members_.size();
        m.step = state_.step;
        m.error = error;
        m.lambda = lambda;
        m.z = z;
        m.lambda_sum = lambda_total_;
        m.train_error = ev.train_error;
        m.test_error = ev.test_error;
        m.ensemble_train_error = vote_error(train_votes_, train_);
        if (test_) {
            m.ensemble_test_error = vote_error(test_votes_, *test_);
        }
        m.loss_bound = bound_;
        std::vector<double> scores(train_.size());
        for (std::size_t i = 0; i < train_.size(); ++i) {
            scores[i] = train_votes_(i, train_.label(i)) / lambda_total_;
        }
        m.exp_loss = exp_loss(scores);
        m.is_final = is_final;
        record_.checkpoints.push_back(m);
    }

    RunResult finish() {
        record_.final_weights.assign(weights_.values().begin(), weights_.values().end());
        return RunResult{EnsembleModel(std::move(members_)), std::move(record_)};
    }

private:
    static double vote_error(const Matrix& votes, const Dataset& data) {
        std::size_t wrong = 0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            wrong += argmax(votes.row(i)) == data.label(i) ? 0 : 1;
        }
        return static_cast<double>(wrong) / static_cast<double>(data.size());
    }

    const Dataset& train_;
    const Dataset* test_;
    RunRecord record_;
    LrSchedule schedule_;
    TrainState state_;
    SampleWeights weights_;
    std::vector<CheckpointRecord> members_;
    Matrix train_votes_;
    Matrix test_votes_;
    double lambda_total_ = 0.0;
    double bound_ = 1.0;
};

// Trains the closing segment and adds the final model with its own lambda.
void add_final_model(Runner& runner, std::size_t iterations) {
    runner.train_for(iterations);
    const auto ev = runner.evaluate();
    const double e = weighted_error(ev.correct, runner.weights());
    const double lambda =
        checkpoint_weight(e, runner.k(), runner.record().error_floor).value_or(kMinFinalLambda);
    runner.add_member(ev, lambda, e, normalizer(e, runner.eta(), lambda), true);
}

}  // namespace

std::string to_string(Method method) {
    switch (method) {
        case Method::Cbnn:
            return "cbnn";
        case Method::Single:
            return "single";
        case Method::HorizontalVoting:
            return "horizontal";
    }
    return "unknown";
}

Method parse_method(const std::string& name) {
    if (name == "cbnn") {
        return Method::Cbnn;
    }
    if (name == "single") {
        return Method::Single;
    }
    if (name == "horizontal") {
        return Method::HorizontalVoting;
    }
    throw std::invalid_argument("unknown method '" + name + "' (expected cbnn, single or horizontal)");
}

void LearnerSettings::validate() const {
    if (batch_size == 0) {
        throw std::invalid_argument("LearnerSettings: batch size must be positive");
    }
    if (!(l2 >= 0.0)) {
        throw std::invalid_argument("LearnerSettings: L2 coefficient must be non-negative");
    }
    for (std::size_t h : hidden) {
        if (h == 0) {
            throw std::invalid_argument("LearnerSettings: hidden widths must be positive");
        }
    }
    LrSchedule probe = schedule_for(1);
    probe.validate();
}

std::vector<std::size_t> LearnerSettings::layer_sizes(std::size_t input_dim, std::size_t k) const {
    std::vector<std::size_t> sizes;
    sizes.push_back(input_dim);
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(k);
    return sizes;
}

LrSchedule LearnerSettings::schedule_for(std::size_t n_train) const {
    LrSchedule s;
    s.base_rate = base_rate;
    s.decay_factor = decay_factor;
    s.decay_every_epochs = decay_every_epochs;
    s.warmup_epochs = warmup_epochs;
    s.steps_per_epoch = std::max<std::size_t>(1, (n_train + batch_size - 1) / std::max<std::size_t>(batch_size, 1));
    return s;
}

RunAborted::RunAborted(const std::string& reason, std::size_t step, RunRecord partial)
    : TrainingDiverged(reason, step), partial_(std::move(partial)) {}

RunResult run_cbnn(const Dataset& train, const Dataset* test, const BoostConfig& config,
                   const LearnerSettings& learner, std::uint64_t seed) {
    Runner runner(Method::Cbnn, train, test, config, learner, seed);
    const std::size_t t = config.iterations_per_checkpoint;
    const double eta = config.eta;
    std::vector<double> lambda_history{runner.record().lambda0};
    std::size_t remaining = config.total_iterations;

    // The final model always gets at least t iterations, so a segment never
    // eats into the last t of the total.
    while (remaining > t && budget_allows(lambda_history, eta)) {
        const std::size_t segment = std::min(t, remaining - t);
        runner.train_for(segment);
        remaining -= segment;

        const auto ev = runner.evaluate();
        const double e = weighted_error(ev.correct, runner.weights());
        const auto lambda = checkpoint_weight(e, runner.k(), runner.record().error_floor);
        if (!lambda) {
            runner.record().rejected.push_back({runner.record().total_iterations, e});
            continue;
        }
        auto update = update_weights(runner.weights(), ev.correct, eta, *lambda);
        runner.add_member(ev, *lambda, e, update.z, false);
        runner.record().z_history.push_back(update.z);
        runner.set_weights(std::move(update.weights));
        lambda_history.push_back(*lambda);
    }

    add_final_model(runner, remaining);
    return runner.finish();
}

RunResult run_single(const Dataset& train, const Dataset* test, const BoostConfig& config,
                     const LearnerSettings& learner, std::uint64_t seed) {
    Runner runner(Method::Single, train, test, config, learner, seed);
    add_final_model(runner, config.total_iterations);
    return runner.finish();
}

RunResult run_horizontal_voting(const Dataset& train, const Dataset* test, const BoostConfig& config,
                                const LearnerSettings& learner, std::uint64_t seed) {
    Runner runner(Method::HorizontalVoting, train, test, config, learner, seed);
    const std::size_t t = config.iterations_per_checkpoint;
    std::size_t remaining = config.total_iterations;
    while (remaining > t) {
        runner.train_for(t);
        remaining -= t;
        const auto ev = runner.evaluate();
        const double e = weighted_error(ev.correct, runner.weights());
        runner.add_member(ev, 1.0, e, normalizer(e, config.eta, 1.0), false);
    }
    runner.train_for(remaining);
    const auto ev = runner.evaluate();
    const double e = weighted_error(ev.correct, runner.weights());
    runner.add_member(ev, 1.0, e, normalizer(e, config.eta, 1.0), true);
    return runner.finish();
}

RunResult run(Method method, const Dataset& train, const Dataset* test, const BoostConfig& config,
              const LearnerSettings& learner, std::uint64_t seed) {
    switch (method) {
        case Method::Cbnn:
            return run_cbnn(train, test, config, learner, seed);
        case Method::Single:
            return run_single(train, test, config, learner, seed);
        case Method::HorizontalVoting:
            return run_horizontal_voting(train, test, config, learner, seed);
    }
    throw std::invalid_argument("run: unknown method");
}

std::vector<std::size_t> equal_interval_indices(std::size_t saved, std::size_t count) {
    if (count == 0) {
        throw std::invalid_argument("select_checkpoints: count must be at least 1");
    }
    if (count - 1 > saved) {
        throw std::invalid_argument("select_checkpoints: count exceeds the number of checkpoints");
    }
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j + 1 < count; ++j) {
        out.push_back(j * saved / (count - 1));
    }
    return out;
}

EnsembleModel select_checkpoints(const EnsembleModel& model, std::size_t count) {
    if (model.size() == 0) {
        throw std::invalid_argument("select_checkpoints: empty ensemble");
    }
    const auto& all = model.checkpoints();
    const std::size_t saved = all.size() - 1;
    std::vector<CheckpointRecord> chosen;
    for (std::size_t idx : equal_interval_indices(saved, count)) {
        chosen.push_back(all[idx]);
    }
    chosen.push_back(all.back());
    return EnsembleModel(std::move(chosen));
}

}  // namespace cbnn
