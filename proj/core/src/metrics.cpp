#include "cbnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "cbnn/error.hpp"
#include "summation.hpp"

namespace cbnn {

double pairwise_correlation(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument("pairwise_correlation: shapes differ");
    }
    const auto xa = a.flat();
    const auto xb = b.flat();
    if (xa.empty()) {
        throw UndefinedCorrelation("pairwise_correlation: empty input");
    }
    const double n = static_cast<double>(xa.size());
    const double mean_a = detail::compensated_sum(xa) / n;
    const double mean_b = detail::compensated_sum(xb) / n;
    detail::CompensatedSum cov;
    detail::CompensatedSum var_a;
    detail::CompensatedSum var_b;
    for (std::size_t i = 0; i < xa.size(); ++i) {
        const double da = xa[i] - mean_a;
        const double db = xb[i] - mean_b;
        cov.add(da * db);
        var_a.add(da * da);
        var_b.add(db * db);
    }
    if (!(var_a.value() > 0.0) || !(var_b.value() > 0.0)) {
        throw UndefinedCorrelation("pairwise_correlation: zero variance");
    }
    return std::clamp(cov.value() / std::sqrt(var_a.value() * var_b.value()), -1.0, 1.0);
}

CorrelationSummary correlation_matrix(std::span<const Matrix> outputs) {
    if (outputs.size() < 2) {
        throw std::invalid_argument("correlation_matrix: need at least two checkpoints");
    }
    const std::size_t m = outputs.size();
    CorrelationSummary out{Matrix(m, m, 1.0), 0.0};
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            const double r = pairwise_correlation(outputs[i], outputs[j]);
            out.matrix(i, j) = r;
            out.matrix(j, i) = r;
            total += 2.0 * r;
        }
    }
    out.off_diagonal_mean = total / static_cast<double>(m * (m - 1));
    return out;
}

std::vector<Matrix> member_softmax_outputs(const EnsembleModel& model, const Dataset& data) {
    std::vector<Matrix> out;
    out.reserve(model.size());
    for (const auto& c : model.checkpoints()) {
        out.push_back(predict_proba(c.params, data));
    }
    return out;
}

std::vector<std::optional<double>> per_class_avg_weights(const SampleWeights& weights,
                                                         std::span<const std::size_t> labels, std::size_t k) {
    if (labels.size() != weights.size()) {
        throw std::invalid_argument("per_class_avg_weights: label count does not match weights");
    }
    std::vector<detail::CompensatedSum> sums(k);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= k) {
            throw std::invalid_argument("per_class_avg_weights: label out of range");
        }
        sums[labels[i]].add(weights[i]);
        ++counts[labels[i]];
    }
    std::vector<std::optional<double>> out(k);
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] > 0) {
            out[c] = sums[c].value() / static_cast<double>(counts[c]);
        }
    }
    return out;
}

// ---------------------------------------------------------------- surface

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    detail::CompensatedSum acc;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc.add(a[i] * b[i]);
    }
    return acc.value();
}

}  // namespace

SurfaceBasis::SurfaceBasis(std::span<const double> p1, std::span<const double> p2, std::span<const double> p3)
    : origin_(p2.begin(), p2.end()) {
    if (p1.size() != p2.size() || p3.size() != p2.size()) {
        throw std::invalid_argument("SurfaceBasis: anchors have different dimensions");
    }
    const std::size_t dim = p2.size();
    u_.resize(dim);
    std::vector<double> w(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        u_[i] = p3[i] - p2[i];
        w[i] = p1[i] - p2[i];
    }
    const double uu = dot(u_, u_);
    u_norm_ = std::sqrt(uu);
    if (!(u_norm_ > 0.0)) {
        throw DegenerateBasis("surface anchors p2 and p3 coincide");
    }
    const double wu = dot(w, u_);
    v_.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        v_[i] = w[i] - wu / uu * u_[i];
    }
    v_norm_ = std::sqrt(dot(v_, v_));
    const double w_norm = std::sqrt(dot(w, w));
    if (!(w_norm > 0.0) || !(v_norm_ > 1e-9 * w_norm)) {
        throw DegenerateBasis("surface anchors are collinear");
    }
    p1_coords_ = {wu / u_norm_, v_norm_};
}

std::vector<double> SurfaceBasis::point(double x, double y) const {
    std::vector<double> p(origin_);
    const double a = x / u_norm_;
    const double b = y / v_norm_;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] += a * u_[i] + b * v_[i];
    }
    return p;
}

GridExtent default_extent(const SurfaceBasis& basis, std::size_t resolution, double margin) {
    const auto [p1x, p1y] = basis.coords_p1();
    const double x_lo = std::min({0.0, p1x, basis.u_norm()});
    const double x_hi = std::max({0.0, p1x, basis.u_norm()});
    const double y_lo = std::min(0.0, p1y);
    const double y_hi = std::max(0.0, p1y);
    const double mx = margin * (x_hi - x_lo);
    const double my = margin * (y_hi - y_lo);
    return GridExtent{x_lo - mx, x_hi + mx, y_lo - my, y_hi + my, resolution, resolution};
}

double surface_loss_at(const SurfaceBasis& basis, const MlpParams& template_params, const Dataset& data,
                       double x, double y) {
    MlpParams p{template_params.layer_sizes, basis.point(x, y), template_params.l2};
    return regularized_cross_entropy(p, data);
}

SurfaceGrid surface_grid(const MlpParams& p1, const MlpParams& p2, const MlpParams& p3, const Dataset& data,
                         const GridExtent& extent) {
    if (p1.layer_sizes != p2.layer_sizes || p3.layer_sizes != p2.layer_sizes) {
        throw std::invalid_argument("surface_grid: anchors have different architectures");
    }
    if (extent.x_steps == 0 || extent.y_steps == 0) {
        throw std::invalid_argument("surface_grid: resolution must be positive");
    }
    const SurfaceBasis basis(p1.values, p2.values, p3.values);
    auto axis = [](double lo, double hi, std::size_t steps) {
        std::vector<double> v(steps);
        for (std::size_t i = 0; i < steps; ++i) {
            v[i] = steps == 1 ? lo
                              : (i + 1 == steps ? hi
                                                : lo + (hi - lo) * static_cast<double>(i) /
                                                           static_cast<double>(steps - 1));
        }
        return v;
    };
    SurfaceGrid grid;
    grid.extent = extent;
    grid.xs = axis(extent.x_min, extent.x_max, extent.x_steps);
    grid.ys = axis(extent.y_min, extent.y_max, extent.y_steps);
    grid.loss = Matrix(grid.ys.size(), grid.xs.size());
    for (std::size_t iy = 0; iy < grid.ys.size(); ++iy) {
        for (std::size_t ix = 0; ix < grid.xs.size(); ++ix) {
            grid.loss(iy, ix) = surface_loss_at(basis, p2, data, grid.xs[ix], grid.ys[iy]);
        }
    }
    grid.p1 = basis.coords_p1();
    grid.p2 = {0.0, 0.0};
    grid.p3 = basis.coords_p3();
    return grid;
}

// ---------------------------------------------------------------- evaluation

std::vector<std::size_t> threshold_with_priors(const Matrix& probabilities, std::span<const double> priors) {
    if (priors.size() != probabilities.cols()) {
        throw std::invalid_argument("threshold_with_priors: prior count does not match class count");
    }
    for (double p : priors) {
        if (!(p > 0.0)) {
            throw std::invalid_argument("threshold_with_priors: priors must be positive");
        }
    }
    std::vector<std::size_t> out(probabilities.rows());
    std::vector<double> scaled(priors.size());
    for (std::size_t i = 0; i < probabilities.rows(); ++i) {
        const auto row = probabilities.row(i);
        for (std::size_t c = 0; c < priors.size(); ++c) {
            scaled[c] = row[c] / priors[c];
        }
        out[i] = argmax(scaled);
    }
    return out;
}

double error_rate(std::span<const std::size_t> predictions, std::span<const std::size_t> labels) {
    if (predictions.size() != labels.size()) {
        throw std::invalid_argument("error_rate: prediction and label counts differ");
    }
    if (labels.empty()) {
        throw std::invalid_argument("error_rate: empty input");
    }
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        wrong += predictions[i] == labels[i] ? 0 : 1;
    }
    return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

double error_rate(const Matrix& scores, std::span<const std::size_t> labels) {
    if (scores.rows() != labels.size()) {
        throw std::invalid_argument("error_rate: score rows and label counts differ");
    }
    std::vector<std::size_t> predictions(scores.rows());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        predictions[i] = argmax(scores.row(i));
    }
    return error_rate(predictions, labels);
}

std::vector<std::optional<double>> per_class_error(std::span<const std::size_t> predictions,
                                                   std::span<const std::size_t> labels, std::size_t k) {
    if (predictions.size() != labels.size()) {
        throw std::invalid_argument("per_class_error: prediction and label counts differ");
    }
    std::vector<std::size_t> wrong(k, 0);
    std::vector<std::size_t> total(k, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= k) {
            throw std::invalid_argument("per_class_error: label out of range");
        }
        ++total[labels[i]];
        wrong[labels[i]] += predictions[i] == labels[i] ? 0 : 1;
    }
    std::vector<std::optional<double>> out(k);
    for (std::size_t c = 0; c < k; ++c) {
        if (total[c] > 0) {
            out[c] = static_cast<double>(wrong[c]) / static_cast<double>(total[c]);
        }
    }
    return out;
}

}  // namespace cbnn
