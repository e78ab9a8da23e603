#include "cbnn/boost.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "summation.hpp"

namespace cbnn {

SampleWeights SampleWeights::uniform(std::size_t n) {
    if (n == 0) {
        throw std::invalid_argument("SampleWeights::uniform: n must be positive");
    }
    return SampleWeights(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

SampleWeights SampleWeights::from_values(std::vector<double> values) {
    if (values.empty()) {
        throw std::invalid_argument("SampleWeights: empty weight vector");
    }
    for (double v : values) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument("SampleWeights: every weight must be positive and finite");
        }
    }
    if (std::abs(detail::compensated_sum(values) - 1.0) > 1e-9) {
        throw std::invalid_argument("SampleWeights: weights do not sum to one");
    }
    return SampleWeights(std::move(values));
}

void BoostConfig::validate() const {
    if (!(eta > 0.0) || !std::isfinite(eta)) {
        throw std::invalid_argument("BoostConfig: eta must be positive");
    }
    if (iterations_per_checkpoint == 0) {
        throw std::invalid_argument("BoostConfig: iterations per checkpoint must be positive");
    }
    if (iterations_per_checkpoint > total_iterations) {
        throw std::invalid_argument("BoostConfig: iterations per checkpoint exceeds total iterations");
    }
    if (num_classes < 2) {
        throw std::invalid_argument("BoostConfig: at least two classes are required");
    }
    if (lambda0 && !(*lambda0 > 0.0)) {
        throw std::invalid_argument("BoostConfig: lambda0 must be positive");
    }
    if (error_floor && !(*error_floor > 0.0 && *error_floor < 0.5)) {
        throw std::invalid_argument("BoostConfig: error floor must lie in (0, 0.5)");
    }
}

double BoostConfig::resolved_lambda0() const {
    return lambda0 ? *lambda0 : default_lambda0(num_classes);
}

double BoostConfig::resolved_error_floor(std::size_t n) const {
    if (error_floor) {
        return *error_floor;
    }
    if (n == 0) {
        throw std::invalid_argument("BoostConfig: cannot derive an error floor for n = 0");
    }
    return 1.0 / (2.0 * static_cast<double>(n));
}

double default_lambda0(std::size_t k) {
    constexpr double assumed_final_error = 0.05;
    const auto w = checkpoint_weight(assumed_final_error, k, assumed_final_error);
    return w.value_or(0.0);
}

double weighted_error(const std::vector<bool>& correct, const SampleWeights& weights) {
    if (correct.size() != weights.size()) {
        throw std::invalid_argument("weighted_error: correctness vector length " +
                                    std::to_string(correct.size()) + " does not match " +
                                    std::to_string(weights.size()) + " weights");
    }
    detail::CompensatedSum acc;
    for (std::size_t i = 0; i < correct.size(); ++i) {
        if (!correct[i]) {
            acc.add(weights[i]);
        }
    }
    return std::clamp(acc.value(), 0.0, 1.0);
}

std::optional<double> checkpoint_weight(double error, std::size_t k, double error_floor) {
    if (k < 2) {
        throw std::invalid_argument("checkpoint_weight: k must be at least 2");
    }
    const double e = std::max(error, error_floor);
    const double lambda = std::log((1.0 - e) / e) + std::log(static_cast<double>(k - 1));
    if (!(lambda > 0.0)) {
        return std::nullopt;
    }
    return lambda;
}

double normalizer(double error, double eta, double lambda) {
    return (1.0 - error) * std::exp(-eta * lambda) + error;
}

WeightUpdate update_weights(const SampleWeights& weights, const std::vector<bool>& correct, double eta,
                            double lambda) {
    if (!(lambda > 0.0)) {
        throw std::invalid_argument("update_weights: lambda must be positive");
    }
    if (!(eta > 0.0)) {
        throw std::invalid_argument("update_weights: eta must be positive");
    }
    if (correct.size() != weights.size()) {
        throw std::invalid_argument("update_weights: correctness vector length mismatch");
    }
    const double shrink = std::exp(-eta * lambda);
    std::vector<double> next(weights.size());
    detail::CompensatedSum z;
    for (std::size_t i = 0; i < next.size(); ++i) {
        next[i] = correct[i] ? weights[i] * shrink : weights[i];
        z.add(next[i]);
    }
    const double zm = z.value();
    for (double& w : next) {
        w /= zm;
    }
    return {SampleWeights::from_values(std::move(next)), zm};
}

bool budget_allows(std::span<const double> lambda_history, double eta) {
    return detail::compensated_sum(lambda_history) < 1.0 / eta;
}

std::size_t argmax(std::span<const double> values) {
    if (values.empty()) {
        throw std::invalid_argument("argmax: empty input");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) {
            best = i;
        }
    }
    return best;
}

OneHot make_onehot(std::size_t cls, std::size_t k) {
    if (cls >= k) {
        throw std::invalid_argument("make_onehot: class index out of range");
    }
    OneHot v(k, 0.0);
    v[cls] = 1.0;
    return v;
}

namespace {

void check_lambdas(std::span<const double> lambdas) {
    for (double l : lambdas) {
        if (!(l > 0.0) || !std::isfinite(l)) {
            throw std::invalid_argument("combine: every lambda must be positive and finite");
        }
    }
}

std::size_t onehot_class(const OneHot& v) {
    std::size_t ones = 0;
    std::size_t cls = 0;
    for (std::size_t c = 0; c < v.size(); ++c) {
        if (v[c] == 1.0) {
            ++ones;
            cls = c;
        } else if (v[c] != 0.0) {
            ones = 2;
            break;
        }
    }
    if (ones != 1) {
        throw std::invalid_argument("combine: model output is not one-hot");
    }
    return cls;
}

}  // namespace

std::vector<double> combine_votes(std::span<const std::size_t> predicted_classes,
                                  std::span<const double> lambdas, std::size_t k) {
    if (predicted_classes.empty()) {
        throw std::invalid_argument("combine: empty checkpoint list");
    }
    if (predicted_classes.size() != lambdas.size()) {
        throw std::invalid_argument("combine: one lambda is required per checkpoint");
    }
    check_lambdas(lambdas);
    std::vector<detail::CompensatedSum> acc(k);
    detail::CompensatedSum total;
    for (std::size_t m = 0; m < predicted_classes.size(); ++m) {
        if (predicted_classes[m] >= k) {
            throw std::invalid_argument("combine: predicted class out of range");
        }
        acc[predicted_classes[m]].add(lambdas[m]);
        total.add(lambdas[m]);
    }
    std::vector<double> out(k);
    const double denom = total.value();
    for (std::size_t c = 0; c < k; ++c) {
        out[c] = acc[c].value() / denom;
    }
    return out;
}

std::vector<double> combine(std::span<const OneHot> onehot_outputs, std::span<const double> lambdas) {
    if (onehot_outputs.empty()) {
        throw std::invalid_argument("combine: empty checkpoint list");
    }
    const std::size_t k = onehot_outputs.front().size();
    std::vector<std::size_t> classes;
    classes.reserve(onehot_outputs.size());
    for (const auto& v : onehot_outputs) {
        if (v.size() != k) {
            throw std::invalid_argument("combine: outputs have different lengths");
        }
        classes.push_back(onehot_class(v));
    }
    return combine_votes(classes, lambdas, k);
}

double exp_loss(std::span<const double> true_class_scores) {
    if (true_class_scores.empty()) {
        throw std::invalid_argument("exp_loss: empty input");
    }
    detail::CompensatedSum acc;
    for (double s : true_class_scores) {
        acc.add(std::exp(-s));
    }
    return acc.value() / static_cast<double>(true_class_scores.size());
}

double loss_bound(std::span<const double> z_history) {
    double product = 1.0;
    for (double z : z_history) {
        product *= z;
    }
    return product;
}

}  // namespace cbnn
