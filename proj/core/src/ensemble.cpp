#include "cbnn/ensemble.hpp"

#include <algorithm>
#include <stdexcept>

#include "summation.hpp"

namespace cbnn {

EnsembleModel::EnsembleModel(std::vector<CheckpointRecord> checkpoints) : checkpoints_(std::move(checkpoints)) {
    if (checkpoints_.empty()) {
        throw std::invalid_argument("EnsembleModel: at least one checkpoint is required");
    }
    const auto& sizes = checkpoints_.front().params.layer_sizes;
    detail::CompensatedSum total;
    for (const auto& c : checkpoints_) {
        if (!(c.lambda > 0.0)) {
            throw std::invalid_argument("EnsembleModel: checkpoint weights must be positive");
        }
        if (c.params.layer_sizes != sizes) {
            throw std::invalid_argument("EnsembleModel: members have different architectures");
        }
        total.add(c.lambda);
    }
    normalized_.reserve(checkpoints_.size());
    for (const auto& c : checkpoints_) {
        normalized_.push_back(c.lambda / total.value());
    }
}

std::vector<double> EnsembleModel::lambdas() const {
    std::vector<double> out;
    out.reserve(checkpoints_.size());
    for (const auto& c : checkpoints_) {
        out.push_back(c.lambda);
    }
    return out;
}

std::vector<double> EnsembleModel::predict_distribution(std::span<const double> features) const {
    std::vector<std::size_t> votes;
    votes.reserve(checkpoints_.size());
    for (const auto& c : checkpoints_) {
        votes.push_back(predict_class(c.params, features));
    }
    return combine_votes(votes, lambdas(), num_classes());
}

Matrix EnsembleModel::predict_distributions(const Dataset& data) const {
    const auto preds = member_predictions(*this, data);
    const auto lam = lambdas();
    Matrix out(data.size(), num_classes());
    std::vector<std::size_t> votes(checkpoints_.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t m = 0; m < checkpoints_.size(); ++m) {
            votes[m] = preds[m][i];
        }
        const auto dist = combine_votes(votes, lam, num_classes());
        std::copy(dist.begin(), dist.end(), out.row(i).begin());
    }
    return out;
}

std::vector<std::size_t> EnsembleModel::predict(const Dataset& data) const {
    const Matrix dist = predict_distributions(data);
    std::vector<std::size_t> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        out[i] = argmax(dist.row(i));
    }
    return out;
}

Matrix EnsembleModel::predict_soft(const Dataset& data) const {
    Matrix out(data.size(), num_classes());
    for (std::size_t m = 0; m < checkpoints_.size(); ++m) {
        const Matrix p = predict_proba(checkpoints_[m].params, data);
        for (std::size_t j = 0; j < out.flat().size(); ++j) {
            out.flat()[j] += normalized_[m] * p.flat()[j];
        }
    }
    return out;
}

std::vector<std::vector<std::size_t>> member_predictions(const EnsembleModel& model, const Dataset& data) {
    std::vector<std::vector<std::size_t>> out;
    out.reserve(model.size());
    for (const auto& c : model.checkpoints()) {
        out.push_back(predict_classes(c.params, data));
    }
    return out;
}

}  // namespace cbnn
