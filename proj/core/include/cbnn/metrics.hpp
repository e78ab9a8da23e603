#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <span>
#include <vector>

#include "cbnn/boost.hpp"
#include "cbnn/data.hpp"
#include "cbnn/ensemble.hpp"
#include "cbnn/matrix.hpp"
#include "cbnn/mlp.hpp"

namespace cbnn {

/// Pearson correlation of the two matrices flattened to n*k entries.
/// Throws std::invalid_argument on a shape mismatch and UndefinedCorrelation
/// when either side has zero variance.
double pairwise_correlation(const Matrix& a, const Matrix& b);

struct CorrelationSummary {
    Matrix matrix;               ///< symmetric, unit diagonal
    double off_diagonal_mean = 0.0;
};

/// Correlations between every pair of softmax-output matrices. Needs at
/// least two inputs.
CorrelationSummary correlation_matrix(std::span<const Matrix> outputs);

/// Softmax outputs of each member of `model` on `data`, in member order.
std::vector<Matrix> member_softmax_outputs(const EnsembleModel& model, const Dataset& data);

/// Mean weight per class; std::nullopt for classes with no samples.
std::vector<std::optional<double>> per_class_avg_weights(const SampleWeights& weights,
                                                         std::span<const std::size_t> labels, std::size_t k);

/// Two-dimensional slice of parameter space through three anchors:
/// origin p2, first axis towards p3, second axis towards p1 after removing
/// its component along the first.
class SurfaceBasis {
public:
    /// Throws DegenerateBasis if p3 == p2 or p1 - p2 is parallel to p3 - p2.
    SurfaceBasis(std::span<const double> p1, std::span<const double> p2, std::span<const double> p3);

    /// p2 + x * u/|u| + y * v/|v|.
    std::vector<double> point(double x, double y) const;

    const std::vector<double>& u() const noexcept { return u_; }
    const std::vector<double>& v() const noexcept { return v_; }
    double u_norm() const noexcept { return u_norm_; }
    double v_norm() const noexcept { return v_norm_; }

    /// Plane coordinates of the anchors. p2 is the origin and p3 sits at (|u|, 0).
    std::pair<double, double> coords_p1() const noexcept { return p1_coords_; }
    std::pair<double, double> coords_p3() const noexcept { return {u_norm_, 0.0}; }

private:
    std::vector<double> origin_;
    std::vector<double> u_;
    std::vector<double> v_;
    double u_norm_ = 0.0;
    double v_norm_ = 0.0;
    std::pair<double, double> p1_coords_;
};

struct GridExtent {
    double x_min = 0.0;
    double x_max = 1.0;
    double y_min = 0.0;
    double y_max = 1.0;
    std::size_t x_steps = 11;  ///< points along x, including both ends
    std::size_t y_steps = 11;
};

/// Extent covering all three anchors with a relative margin on each side.
GridExtent default_extent(const SurfaceBasis& basis, std::size_t resolution, double margin = 0.25);

struct SurfaceGrid {
    GridExtent extent;
    std::vector<double> xs;
    std::vector<double> ys;
    Matrix loss;  ///< loss(iy, ix)
    std::pair<double, double> p1;
    std::pair<double, double> p2;
    std::pair<double, double> p3;
};

/// Regularized cross-entropy of `data` at every grid point. Grid points take
/// the architecture and L2 coefficient of p2.
SurfaceGrid surface_grid(const MlpParams& p1, const MlpParams& p2, const MlpParams& p3, const Dataset& data,
                         const GridExtent& extent);

/// Loss at a single plane coordinate.
double surface_loss_at(const SurfaceBasis& basis, const MlpParams& template_params, const Dataset& data,
                       double x, double y);

/// argmax over probabilities[i][y] / priors[y], lowest index on ties.
/// Throws std::invalid_argument for a non-positive prior or a width mismatch.
std::vector<std::size_t> threshold_with_priors(const Matrix& probabilities, std::span<const double> priors);

/// Fraction of rows whose argmax differs from the label.
double error_rate(const Matrix& scores, std::span<const std::size_t> labels);

/// Fraction of predictions that differ from the label.
double error_rate(std::span<const std::size_t> predictions, std::span<const std::size_t> labels);

/// Per-class error; std::nullopt for classes absent from `labels`.
std::vector<std::optional<double>> per_class_error(std::span<const std::size_t> predictions,
                                                   std::span<const std::size_t> labels, std::size_t k);

}  // namespace cbnn
