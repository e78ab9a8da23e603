#pragma once

// Run configuration document shared by the train, eval and diagnose
// commands. The dataset section doubles as the descriptor stored in run
// manifests, so a run directory is enough to rebuild its train/test split.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "cbnn/boost.hpp"
#include "cbnn/data.hpp"
#include "cbnn/engine.hpp"

namespace cbnn::cli {

/// Bad configuration: unknown key, wrong type, or out-of-range value.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ImbalanceConfig {
    double mu = 0.2;
    double rho = 10.0;
    std::uint64_t seed = 0;
};

struct DatasetConfig {
    std::string source = "blobs";  ///< blobs, csv or idx
    std::string path;              ///< csv file or idx images
    std::string labels_path;       ///< idx labels
    int label_column = -1;
    std::size_t n_per_class = 200;
    std::size_t classes = 3;
    std::size_t dim = 2;
    double spread = 2.0;
    std::uint64_t seed = 1;
    double test_fraction = 0.3;  ///< 0 disables the test split
    std::uint64_t split_seed = 0;
    bool stratified = true;
    std::optional<ImbalanceConfig> imbalance;  ///< applied to the training split only
    bool oversample = false;
};

struct RunConfig {
    Method method = Method::Cbnn;
    std::uint64_t seed = 1;
    std::string output;  ///< empty: derived from the output root
    DatasetConfig dataset;
    BoostConfig boost;   ///< num_classes is taken from the data
    LearnerSettings learner;
};

/// Parses a JSON document over the defaults. Throws ConfigError.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

std::string to_json(const RunConfig& config, int indent = 2);

/// Canonical single-line JSON of the dataset section.
std::string dataset_descriptor(const DatasetConfig& dataset);
DatasetConfig parse_dataset_descriptor(const std::string& text);

/// Throws ConfigError for inconsistent settings that do not need the data.
void validate(const RunConfig& config);

struct PreparedData {
    Dataset train;
    std::optional<Dataset> test;
};

/// Loads or generates the data, splits it, then applies imbalance and
/// oversampling to the training side. Errors from the data module propagate.
PreparedData prepare_data(const DatasetConfig& dataset);

}  // namespace cbnn::cli
