#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cbnn/matrix.hpp"

namespace cbnn {

/// Labelled samples: one feature row per label, labels in [0, k).
class Dataset {
public:
    Dataset() = default;

    /// Throws std::invalid_argument if the row count differs from the label
    /// count or a label is out of range.
    Dataset(Matrix features, std::vector<std::size_t> labels, std::size_t num_classes,
            std::string name = {});

    std::size_t size() const noexcept { return labels_.size(); }
    std::size_t dim() const noexcept { return features_.cols(); }
    std::size_t num_classes() const noexcept { return num_classes_; }
    const std::string& name() const noexcept { return name_; }

    const Matrix& features() const noexcept { return features_; }
    std::span<const double> row(std::size_t i) const { return features_.row(i); }
    const std::vector<std::size_t>& labels() const noexcept { return labels_; }
    std::size_t label(std::size_t i) const { return labels_[i]; }

    /// Samples per class; always `num_classes()` long.
    std::vector<std::size_t> class_counts() const;

    /// Empirical class frequencies (counts / n).
    std::vector<double> class_priors() const;

    /// Rows at `indices`, in that order.
    Dataset subset(std::span<const std::size_t> indices, std::string name = {}) const;

    friend bool operator==(const Dataset&, const Dataset&) = default;

private:
    Matrix features_;
    std::vector<std::size_t> labels_;
    std::size_t num_classes_ = 0;
    std::string name_;
};

struct CsvOptions {
    /// Column holding the label; negative values count from the end (-1 is last).
    int label_column = -1;
    enum class Header { Auto, Present, Absent } header = Header::Auto;
};

/// Comma-separated rows of numbers. k is inferred as max label + 1.
/// Throws FormatError (with the 1-based line number) on malformed rows,
/// non-integer or negative labels, ragged rows, or an empty file.
Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options = {});

/// Writes a header row (`f0,...,f{d-1},label`) and all samples, label last,
/// with enough digits to reproduce every double exactly.
void save_csv(const Dataset& dataset, const std::filesystem::path& path);

/// IDX image file (magic 0x00000803, unsigned bytes, dims N x rows x cols)
/// and IDX label file (magic 0x00000801). Pixels are scaled to [0, 1].
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// k isotropic Gaussian clusters with standard deviation `spread` around
/// centers drawn uniformly from [-5, 5]^d.
Dataset make_blobs(std::size_t n_per_class, std::size_t k, std::size_t d, double spread,
                   std::uint64_t seed);

/// Step imbalance: floor(mu * k) classes chosen at random are subsampled to
/// floor(n_max / rho) samples each.
struct ImbalanceSpec {
    double mu = 0.2;
    double rho = 10.0;
    std::uint64_t seed = 0;
};

/// Throws std::invalid_argument when floor(mu*k) == 0, rho < 1, or
/// floor(n_max / rho) == 0. Majority classes and the relative order of all
/// kept rows are preserved.
Dataset step_imbalance(const Dataset& dataset, const ImbalanceSpec& spec);

/// Random minority oversampling: every non-empty class is topped up to the
/// largest class count by sampling its own rows with replacement. Original
/// rows come first, duplicates are appended.
Dataset oversample_minority(const Dataset& dataset, std::uint64_t seed = 0);

struct Split {
    Dataset train;
    Dataset test;
};

/// Disjoint, exhaustive split. The stratified variant rounds each class's
/// test share separately. Throws std::invalid_argument if either side would
/// be empty or the fraction is outside (0, 1).
Split split(const Dataset& dataset, double test_fraction, std::uint64_t seed, bool stratified);

}  // namespace cbnn
