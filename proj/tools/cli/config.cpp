#include "config.hpp"

#include <algorithm>
#include <concepts>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace cbnn::cli {
namespace {

using nlohmann::json;

// Reads known keys from one JSON object and rejects anything left over.
class Section {
public:
    Section(const json& object, std::string where) : object_(object), where_(std::move(where)) {
        if (!object_.is_object()) {
            throw ConfigError(where_ + ": expected an object");
        }
    }

    const json* find(const std::string& key) {
        seen_.insert(key);
        auto it = object_.find(key);
        return it == object_.end() ? nullptr : &*it;
    }

    template <std::unsigned_integral T>
    void read(const std::string& key, T& out) {
        if (const json* v = find(key)) {
            if (!v->is_number_unsigned()) {
                throw ConfigError(name(key) + ": expected a non-negative integer");
            }
            out = v->get<T>();
        }
    }

    void read(const std::string& key, int& out) {
        if (const json* v = find(key)) {
            if (!v->is_number_integer()) {
                throw ConfigError(name(key) + ": expected an integer");
            }
            out = v->get<int>();
        }
    }

    void read(const std::string& key, double& out) {
        if (const json* v = find(key)) {
            if (!v->is_number()) {
                throw ConfigError(name(key) + ": expected a number");
            }
            out = v->get<double>();
        }
    }

    void read(const std::string& key, std::optional<double>& out) {
        if (const json* v = find(key)) {
            if (v->is_null()) {
                out.reset();
            } else if (v->is_number()) {
                out = v->get<double>();
            } else {
                throw ConfigError(name(key) + ": expected a number or null");
            }
        }
    }

    void read(const std::string& key, bool& out) {
        if (const json* v = find(key)) {
            if (!v->is_boolean()) {
                throw ConfigError(name(key) + ": expected true or false");
            }
            out = v->get<bool>();
        }
    }

    void read(const std::string& key, std::string& out) {
        if (const json* v = find(key)) {
            if (!v->is_string()) {
                throw ConfigError(name(key) + ": expected a string");
            }
            out = v->get<std::string>();
        }
    }

    void read(const std::string& key, std::vector<std::size_t>& out) {
        if (const json* v = find(key)) {
            if (!v->is_array()) {
                throw ConfigError(name(key) + ": expected an array of widths");
            }
            std::vector<std::size_t> widths;
            for (const auto& item : *v) {
                if (!item.is_number_unsigned()) {
                    throw ConfigError(name(key) + ": widths must be non-negative integers");
                }
                widths.push_back(item.get<std::size_t>());
            }
            out = std::move(widths);
        }
    }

    void finish() const {
        for (const auto& [key, value] : object_.items()) {
            if (!seen_.count(key)) {
                throw ConfigError(where_ + ": unknown key '" + key + "'");
            }
        }
    }

    std::string name(const std::string& key) const { return where_ + "." + key; }

private:
    const json& object_;
    std::string where_;
    std::set<std::string> seen_;
};

void read_dataset(const json& j, DatasetConfig& d) {
    Section s(j, "dataset");
    s.read("source", d.source);
    s.read("path", d.path);
    s.read("labels_path", d.labels_path);
    s.read("label_column", d.label_column);
    s.read("n_per_class", d.n_per_class);
    s.read("classes", d.classes);
    s.read("dim", d.dim);
    s.read("spread", d.spread);
    s.read("seed", d.seed);
    s.read("test_fraction", d.test_fraction);
    s.read("split_seed", d.split_seed);
    s.read("stratified", d.stratified);
    if (const json* imb = s.find("imbalance")) {
        if (imb->is_null()) {
            d.imbalance.reset();
        } else {
            ImbalanceConfig ic = d.imbalance.value_or(ImbalanceConfig{});
            Section is(*imb, "dataset.imbalance");
            is.read("mu", ic.mu);
            is.read("rho", ic.rho);
            is.read("seed", ic.seed);
            is.finish();
            d.imbalance = ic;
        }
    }
    s.read("oversample", d.oversample);
    s.finish();
}

json dataset_json(const DatasetConfig& d) {
    json j;
    j["source"] = d.source;
    j["path"] = d.path;
    j["labels_path"] = d.labels_path;
    j["label_column"] = d.label_column;
    j["n_per_class"] = d.n_per_class;
    j["classes"] = d.classes;
    j["dim"] = d.dim;
    j["spread"] = d.spread;
    j["seed"] = d.seed;
    j["test_fraction"] = d.test_fraction;
    j["split_seed"] = d.split_seed;
    j["stratified"] = d.stratified;
    if (d.imbalance) {
        j["imbalance"] = {{"mu", d.imbalance->mu}, {"rho", d.imbalance->rho}, {"seed", d.imbalance->seed}};
    } else {
        j["imbalance"] = nullptr;
    }
    j["oversample"] = d.oversample;
    return j;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json parse_text(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

}  // namespace

RunConfig parse_config(const std::string& text, RunConfig base) {
    const json j = parse_text(text, "config");
    Section s(j, "config");
    RunConfig c = std::move(base);
    std::string method = to_string(c.method);
    s.read("method", method);
    try {
        c.method = parse_method(method);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config.method: ") + e.what());
    }
    s.read("seed", c.seed);
    s.read("output", c.output);
    if (const json* d = s.find("dataset")) {
        read_dataset(*d, c.dataset);
    }
    if (const json* b = s.find("boost")) {
        Section bs(*b, "boost");
        bs.read("eta", c.boost.eta);
        bs.read("iterations_per_checkpoint", c.boost.iterations_per_checkpoint);
        bs.read("total_iterations", c.boost.total_iterations);
        bs.read("lambda0", c.boost.lambda0);
        bs.read("error_floor", c.boost.error_floor);
        bs.finish();
    }
    if (const json* l = s.find("learner")) {
        Section ls(*l, "learner");
        ls.read("hidden", c.learner.hidden);
        ls.read("l2", c.learner.l2);
        ls.read("batch_size", c.learner.batch_size);
        ls.read("base_rate", c.learner.base_rate);
        ls.read("decay_factor", c.learner.decay_factor);
        ls.read("decay_every_epochs", c.learner.decay_every_epochs);
        ls.read("warmup_epochs", c.learner.warmup_epochs);
        ls.finish();
    }
    s.finish();
    return c;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config file " + path.string());
    }
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), std::move(base));
}

std::string to_json(const RunConfig& c, int indent) {
    json j;
    j["method"] = to_string(c.method);
    j["seed"] = c.seed;
    j["output"] = c.output;
    j["dataset"] = dataset_json(c.dataset);
    j["boost"] = {{"eta", c.boost.eta},
                  {"iterations_per_checkpoint", c.boost.iterations_per_checkpoint},
                  {"total_iterations", c.boost.total_iterations},
                  {"lambda0", optional_json(c.boost.lambda0)},
                  {"error_floor", optional_json(c.boost.error_floor)}};
    j["learner"] = {{"hidden", c.learner.hidden},
                    {"l2", c.learner.l2},
                    {"batch_size", c.learner.batch_size},
                    {"base_rate", c.learner.base_rate},
                    {"decay_factor", c.learner.decay_factor},
                    {"decay_every_epochs", c.learner.decay_every_epochs},
                    {"warmup_epochs", c.learner.warmup_epochs}};
    return j.dump(indent);
}

std::string dataset_descriptor(const DatasetConfig& dataset) { return dataset_json(dataset).dump(); }

DatasetConfig parse_dataset_descriptor(const std::string& text) {
    DatasetConfig d;
    read_dataset(parse_text(text, "dataset descriptor"), d);
    return d;
}

void validate(const RunConfig& c) {
    const auto& d = c.dataset;
    if (d.source != "blobs" && d.source != "csv" && d.source != "idx") {
        throw ConfigError("dataset.source must be blobs, csv or idx, got '" + d.source + "'");
    }
    if (d.source != "blobs" && d.path.empty()) {
        throw ConfigError("dataset.path is required for " + d.source + " data");
    }
    if (d.source == "idx" && d.labels_path.empty()) {
        throw ConfigError("dataset.labels_path is required for idx data");
    }
    if (d.source == "blobs" && (d.n_per_class == 0 || d.classes < 2 || d.dim == 0 || !(d.spread > 0.0))) {
        throw ConfigError("blobs need n_per_class >= 1, classes >= 2, dim >= 1 and spread > 0");
    }
    if (!(d.test_fraction >= 0.0 && d.test_fraction < 1.0)) {
        throw ConfigError("dataset.test_fraction must be in [0, 1)");
    }
    try {
        BoostConfig probe = c.boost;
        probe.num_classes = std::max<std::size_t>(probe.num_classes, 2);
        probe.validate();
        c.learner.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

PreparedData prepare_data(const DatasetConfig& d) {
    Dataset all;
    if (d.source == "blobs") {
        all = make_blobs(d.n_per_class, d.classes, d.dim, d.spread, d.seed);
    } else if (d.source == "csv") {
        CsvOptions options;
        options.label_column = d.label_column;
        all = load_csv(d.path, options);
    } else if (d.source == "idx") {
        all = load_idx(d.path, d.labels_path);
    } else {
        throw ConfigError("unknown dataset source '" + d.source + "'");
    }

    PreparedData out;
    if (d.test_fraction > 0.0) {
        auto parts = split(all, d.test_fraction, d.split_seed, d.stratified);
        out.train = std::move(parts.train);
        out.test = std::move(parts.test);
    } else {
        out.train = std::move(all);
    }
    if (d.imbalance) {
        out.train = step_imbalance(out.train, {d.imbalance->mu, d.imbalance->rho, d.imbalance->seed});
    }
    if (d.oversample) {
        out.train = oversample_minority(out.train, d.split_seed);
    }
    return out;
}

}  // namespace cbnn::cli
