#include "cbnn/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "cbnn/error.hpp"

namespace cbnn {

Dataset::Dataset(Matrix features, std::vector<std::size_t> labels, std::size_t num_classes, std::string name)
    : features_(std::move(features)), labels_(std::move(labels)), num_classes_(num_classes), name_(std::move(name)) {
    if (features_.rows() != labels_.size()) {
        throw std::invalid_argument("Dataset: feature rows and labels differ in length");
    }
    for (std::size_t y : labels_) {
        if (y >= num_classes_) {
            throw std::invalid_argument("Dataset: label " + std::to_string(y) + " outside [0, " +
                                        std::to_string(num_classes_) + ")");
        }
    }
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(num_classes_, 0);
    for (std::size_t y : labels_) {
        ++counts[y];
    }
    return counts;
}

std::vector<double> Dataset::class_priors() const {
    const auto counts = class_counts();
    std::vector<double> priors(counts.size());
    for (std::size_t c = 0; c < counts.size(); ++c) {
        priors[c] = static_cast<double>(counts[c]) / static_cast<double>(size());
    }
    return priors;
}

Dataset Dataset::subset(std::span<const std::size_t> indices, std::string name) const {
    Matrix rows(0, dim());
    std::vector<std::size_t> labels;
    labels.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= size()) {
            throw std::out_of_range("Dataset::subset: index out of range");
        }
        rows.append_row(row(i));
        labels.push_back(labels_[i]);
    }
    return Dataset(std::move(rows), std::move(labels), num_classes_, name.empty() ? name_ : std::move(name));
}

// ---------------------------------------------------------------- CSV

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        fields.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        fields.emplace_back();
    }
    return fields;
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

bool parse_double(const std::string& text, double& out) {
    const std::string t = trim(text);
    if (t.empty()) {
        return false;
    }
    const char* begin = t.data();
    const char* end = begin + t.size();
    if (*begin == '+') {
        ++begin;
    }
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open CSV file " + path.string());
    }
    Matrix features;
    std::vector<std::size_t> labels;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    bool first_content = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        const auto fields = split_fields(line);
        if (first_content) {
            first_content = false;
            double probe = 0.0;
            const bool numeric = std::all_of(fields.begin(), fields.end(),
                                             [&](const std::string& f) { return parse_double(f, probe); });
            const bool is_header = options.header == CsvOptions::Header::Present ||
                                   (options.header == CsvOptions::Header::Auto && !numeric);
            width = fields.size();
            if (is_header) {
                continue;
            }
        }
        if (fields.size() != width) {
            throw FormatError("expected " + std::to_string(width) + " fields, found " +
                                  std::to_string(fields.size()),
                              line_no);
        }
        if (width < 2) {
            throw FormatError("rows need at least one feature and a label", line_no);
        }
        const long col = options.label_column < 0 ? static_cast<long>(width) + options.label_column
                                                  : options.label_column;
        if (col < 0 || col >= static_cast<long>(width)) {
            throw FormatError("label column out of range", line_no);
        }
        std::vector<double> row;
        row.reserve(width - 1);
        double label_value = 0.0;
        for (std::size_t j = 0; j < width; ++j) {
            double value = 0.0;
            if (!parse_double(fields[j], value)) {
                throw FormatError("non-numeric field '" + trim(fields[j]) + "'", line_no);
            }
            if (static_cast<long>(j) == col) {
                label_value = value;
            } else {
                row.push_back(value);
            }
        }
        if (label_value < 0.0 || std::floor(label_value) != label_value ||
            label_value > static_cast<double>(std::numeric_limits<std::uint32_t>::max())) {
            throw FormatError("label is not a non-negative integer", line_no);
        }
        features.append_row(row);
        labels.push_back(static_cast<std::size_t>(label_value));
    }
    if (labels.empty()) {
        throw FormatError("CSV file " + path.string() + " contains no data rows");
    }
    const std::size_t k = *std::max_element(labels.begin(), labels.end()) + 1;
    return Dataset(std::move(features), std::move(labels), std::max<std::size_t>(k, 2),
                   path.stem().string());
}

void save_csv(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw StorageError("cannot write CSV file", path);
    }
    out.precision(std::numeric_limits<double>::max_digits10);
    for (std::size_t j = 0; j < dataset.dim(); ++j) {
        out << 'f' << j << ',';
    }
    out << "label\n";
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        for (double v : dataset.row(i)) {
            out << v << ',';
        }
        out << dataset.label(i) << '\n';
    }
    if (!out) {
        throw StorageError("failed writing CSV file", path);
    }
}

// ---------------------------------------------------------------- IDX

namespace {

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
    std::array<unsigned char, 4> b{};
    if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
        throw FormatError("truncated IDX header in " + path.string());
    }
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
           std::uint32_t{b[3]};
}

std::vector<unsigned char> read_bytes(std::istream& in, std::size_t count, const std::filesystem::path& path) {
    std::vector<unsigned char> bytes(count);
    if (count && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count))) {
        throw FormatError("truncated IDX payload in " + path.string());
    }
    return bytes;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    constexpr std::uint32_t kImageMagic = 0x00000803;
    constexpr std::uint32_t kLabelMagic = 0x00000801;

    std::ifstream images(images_path, std::ios::binary);
    if (!images) {
        throw FormatError("cannot open IDX image file " + images_path.string());
    }
    std::ifstream labels(labels_path, std::ios::binary);
    if (!labels) {
        throw FormatError("cannot open IDX label file " + labels_path.string());
    }

    if (read_be32(images, images_path) != kImageMagic) {
        throw FormatError("bad IDX image magic in " + images_path.string());
    }
    const std::size_t n = read_be32(images, images_path);
    const std::size_t rows = read_be32(images, images_path);
    const std::size_t cols = read_be32(images, images_path);

    if (read_be32(labels, labels_path) != kLabelMagic) {
        throw FormatError("bad IDX label magic in " + labels_path.string());
    }
    const std::size_t n_labels = read_be32(labels, labels_path);
    if (n_labels != n) {
        throw FormatError("IDX image count " + std::to_string(n) + " does not match label count " +
                          std::to_string(n_labels));
    }
    if (n == 0 || rows * cols == 0) {
        throw FormatError("IDX files contain no samples");
    }

    const std::size_t d = rows * cols;
    const auto pixels = read_bytes(images, n * d, images_path);
    const auto raw_labels = read_bytes(labels, n, labels_path);

    std::vector<double> values(pixels.size());
    std::transform(pixels.begin(), pixels.end(), values.begin(),
                   [](unsigned char p) { return static_cast<double>(p) / 255.0; });
    std::vector<std::size_t> y(raw_labels.begin(), raw_labels.end());
    const std::size_t k = *std::max_element(y.begin(), y.end()) + 1;
    return Dataset(Matrix(n, d, std::move(values)), std::move(y), std::max<std::size_t>(k, 2),
                   images_path.stem().string());
}

// ---------------------------------------------------------------- synthetic

Dataset make_blobs(std::size_t n_per_class, std::size_t k, std::size_t d, double spread, std::uint64_t seed) {
    if (n_per_class == 0 || k == 0 || d == 0 || spread < 0.0) {
        throw std::invalid_argument("make_blobs: sizes must be positive and spread non-negative");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> center_dist(-5.0, 5.0);
    std::normal_distribution<double> noise(0.0, 1.0);

    Matrix centers(k, d);
    for (double& c : centers.flat()) {
        c = center_dist(rng);
    }
    Matrix features(k * n_per_class, d);
    std::vector<std::size_t> labels(k * n_per_class);
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t s = 0; s < n_per_class; ++s) {
            const std::size_t i = c * n_per_class + s;
            for (std::size_t j = 0; j < d; ++j) {
                features(i, j) = centers(c, j) + spread * noise(rng);
            }
            labels[i] = c;
        }
    }
    return Dataset(std::move(features), std::move(labels), std::max<std::size_t>(k, 2), "blobs");
}

// ---------------------------------------------------------------- imbalance

namespace {

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& data) {
    std::vector<std::vector<std::size_t>> by_class(data.num_classes());
    for (std::size_t i = 0; i < data.size(); ++i) {
        by_class[data.label(i)].push_back(i);
    }
    return by_class;
}

}  // namespace

Dataset step_imbalance(const Dataset& dataset, const ImbalanceSpec& spec) {
    const std::size_t k = dataset.num_classes();
    if (!(spec.mu > 0.0 && spec.mu < 1.0)) {
        throw std::invalid_argument("step_imbalance: mu must lie in (0, 1)");
    }
    const auto k_min = static_cast<std::size_t>(std::floor(spec.mu * static_cast<double>(k)));
    if (k_min == 0) {
        throw std::invalid_argument("step_imbalance: floor(mu * k) is zero, no minority class selected");
    }
    if (!(spec.rho >= 1.0)) {
        throw std::invalid_argument("step_imbalance: rho must be at least 1");
    }
    const auto counts = dataset.class_counts();
    const std::size_t n_max = *std::max_element(counts.begin(), counts.end());
    const auto n_min = static_cast<std::size_t>(std::floor(static_cast<double>(n_max) / spec.rho));
    if (n_min == 0) {
        throw std::invalid_argument("step_imbalance: rho exceeds the largest class size");
    }

    std::mt19937_64 rng(spec.seed);
    std::vector<std::size_t> classes(k);
    std::iota(classes.begin(), classes.end(), std::size_t{0});
    std::shuffle(classes.begin(), classes.end(), rng);

    auto by_class = indices_by_class(dataset);
    std::vector<bool> keep(dataset.size(), true);
    for (std::size_t m = 0; m < k_min; ++m) {
        auto& members = by_class[classes[m]];
        if (members.size() <= n_min) {
            continue;
        }
        std::shuffle(members.begin(), members.end(), rng);
        for (std::size_t j = n_min; j < members.size(); ++j) {
            keep[members[j]] = false;
        }
    }
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (keep[i]) {
            kept.push_back(i);
        }
    }
    return dataset.subset(kept);
}

Dataset oversample_minority(const Dataset& dataset, std::uint64_t seed) {
    const auto by_class = indices_by_class(dataset);
    std::size_t target = 0;
    for (const auto& members : by_class) {
        target = std::max(target, members.size());
    }
    if (target == 0) {
        throw std::invalid_argument("oversample_minority: dataset is empty");
    }
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (const auto& members : by_class) {
        if (members.empty()) {
            continue;
        }
        std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
        for (std::size_t j = members.size(); j < target; ++j) {
            order.push_back(members[pick(rng)]);
        }
    }
    return dataset.subset(order);
}

// ---------------------------------------------------------------- split

Split split(const Dataset& dataset, double test_fraction, std::uint64_t seed, bool stratified) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw std::invalid_argument("split: test fraction must lie in (0, 1)");
    }
    std::mt19937_64 rng(seed);
    std::vector<bool> in_test(dataset.size(), false);
    auto take = [&](std::vector<std::size_t> pool) {
        std::shuffle(pool.begin(), pool.end(), rng);
        const auto n_test =
            static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(pool.size())));
        for (std::size_t j = 0; j < n_test && j < pool.size(); ++j) {
            in_test[pool[j]] = true;
        }
    };
    if (stratified) {
        for (auto& members : indices_by_class(dataset)) {
            take(std::move(members));
        }
    } else {
        std::vector<std::size_t> all(dataset.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        take(std::move(all));
    }
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        (in_test[i] ? test_idx : train_idx).push_back(i);
    }
    if (train_idx.empty() || test_idx.empty()) {
        throw std::invalid_argument("split: test fraction leaves one side empty");
    }
    return {dataset.subset(train_idx, dataset.name() + "/train"), dataset.subset(test_idx, dataset.name() + "/test")};
}

}  // namespace cbnn
