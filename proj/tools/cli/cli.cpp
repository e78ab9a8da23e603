#include "cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <ostream>
#include <regex>
#include <sstream>

#include "CLI11.hpp"

#include "cbnn/error.hpp"
#include "cbnn/metrics.hpp"
#include "cbnn/persistence.hpp"
#include "config.hpp"

namespace cbnn::cli {
namespace {

namespace fs = std::filesystem;

// Failures that map to kDataError without a library exception type.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.8g", v);
    return buf;
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : std::string("-"); }

std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

struct TrainFlags {
    std::string config_path;
    std::optional<std::string> method;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output;
    std::optional<std::string> dataset;
    std::optional<std::string> labels;
    std::optional<int> label_column;
    std::optional<std::size_t> classes;
    std::optional<std::size_t> per_class;
    std::optional<std::size_t> dim;
    std::optional<double> spread;
    std::optional<std::uint64_t> data_seed;
    std::optional<std::uint64_t> split_seed;
    std::optional<double> test_fraction;
    std::optional<double> imbalance_mu;
    std::optional<double> imbalance_rho;
    std::optional<std::uint64_t> imbalance_seed;
    bool oversample = false;
    std::optional<double> eta;
    std::optional<std::size_t> checkpoint_every;
    std::optional<std::size_t> total_iterations;
    std::optional<double> lambda0;
    std::optional<double> error_floor;
    std::optional<std::string> hidden;
    std::optional<double> l2;
    std::optional<double> lr;
    std::optional<double> decay;
    std::optional<std::size_t> decay_every;
    std::optional<std::size_t> warmup;
    std::optional<std::size_t> batch_size;
    bool print_config = false;
};

struct EvalFlags {
    std::string run_dir;
    std::string select = "all";
    bool threshold_priors = false;
    bool per_class = false;
    bool soft = false;
    std::string on = "test";
    std::string dataset;
};

struct DiagnoseFlags {
    std::string run_dir;
    bool correlation = false;
    bool class_weights = false;
    std::vector<std::size_t> surface;
    std::size_t resolution = 21;
    double margin = 0.25;
    std::string on = "test";
    std::string out_dir;
};

template <typename T>
void set_if(const std::optional<T>& flag, T& target) {
    if (flag) {
        target = *flag;
    }
}

std::vector<std::size_t> parse_widths(const std::string& text) {
    std::vector<std::size_t> widths;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) {
            continue;
        }
        std::size_t used = 0;
        unsigned long w = 0;
        try {
            w = std::stoul(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size() || item.front() == '-') {
            throw ConfigError("--hidden expects comma-separated widths, got '" + text + "'");
        }
        widths.push_back(w);
    }
    return widths;
}

RunConfig resolve_train_config(const TrainFlags& f) {
    RunConfig c;
    if (!f.config_path.empty()) {
        c = load_config(f.config_path);
    }
    if (f.method) {
        try {
            c.method = parse_method(*f.method);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    set_if(f.seed, c.seed);
    set_if(f.output, c.output);

    auto& d = c.dataset;
    if (f.dataset) {
        if (*f.dataset == "blobs") {
            d.source = "blobs";
        } else {
            d.source = "csv";
            d.path = *f.dataset;
        }
    }
    if (f.labels) {
        d.source = "idx";
        d.labels_path = *f.labels;
    }
    set_if(f.label_column, d.label_column);
    set_if(f.classes, d.classes);
    set_if(f.per_class, d.n_per_class);
    set_if(f.dim, d.dim);
    set_if(f.spread, d.spread);
    set_if(f.data_seed, d.seed);
    set_if(f.split_seed, d.split_seed);
    set_if(f.test_fraction, d.test_fraction);
    if (f.imbalance_mu || f.imbalance_rho || f.imbalance_seed) {
        ImbalanceConfig ic = d.imbalance.value_or(ImbalanceConfig{});
        set_if(f.imbalance_mu, ic.mu);
        set_if(f.imbalance_rho, ic.rho);
        set_if(f.imbalance_seed, ic.seed);
        d.imbalance = ic;
    }
    if (f.oversample) {
        d.oversample = true;
    }

    set_if(f.eta, c.boost.eta);
    set_if(f.checkpoint_every, c.boost.iterations_per_checkpoint);
    set_if(f.total_iterations, c.boost.total_iterations);
    if (f.lambda0) {
        c.boost.lambda0 = *f.lambda0;
    }
    if (f.error_floor) {
        c.boost.error_floor = *f.error_floor;
    }
    if (f.hidden) {
        c.learner.hidden = parse_widths(*f.hidden);
    }
    set_if(f.l2, c.learner.l2);
    set_if(f.lr, c.learner.base_rate);
    set_if(f.decay, c.learner.decay_factor);
    set_if(f.decay_every, c.learner.decay_every_epochs);
    set_if(f.warmup, c.learner.warmup_epochs);
    set_if(f.batch_size, c.learner.batch_size);
    return c;
}

PreparedData load_data(const DatasetConfig& d) {
    try {
        return prepare_data(d);
    } catch (const std::invalid_argument& e) {
        throw DataError(e.what());
    }
}

fs::path output_dir(const RunConfig& c) {
    if (!c.output.empty()) {
        return c.output;
    }
    const char* root = std::getenv(kOutputRootEnv);
    const fs::path base = root && *root ? fs::path(root) : fs::path("runs");
    return base / (to_string(c.method) + "-seed" + std::to_string(c.seed));
}

// Checkpoint files from an earlier, longer run in the same directory would
// otherwise linger next to the new manifest.
void remove_stale_checkpoints(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        return;
    }
    static const std::regex pattern("ckpt_[0-9]+\\.bin");
    std::vector<fs::path> stale;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && std::regex_match(entry.path().filename().string(), pattern)) {
            stale.push_back(entry.path());
        }
    }
    for (const auto& p : stale) {
        fs::remove(p);
    }
}

void print_table(const RunRecord& rec, std::ostream& out) {
    const char* columns[] = {"ckpt",     "step",     "error",    "lambda",    "z",          "lambda_sum",
                             "train_err", "test_err", "ens_train", "ens_test", "bound_prodZ", "exp_loss"};
    char line[512];
    std::string header;
    for (const char* c : columns) {
        std::snprintf(line, sizeof line, "%-14s", c);
        header += line;
    }
    out << header << '\n';
    for (const auto& m : rec.checkpoints) {
        std::string row;
        const std::string ckpt = std::to_string(m.index) + (m.is_final ? "*" : "");
        for (const std::string& cell :
             {ckpt, std::to_string(m.step), num(m.error), num(m.lambda), num(m.z), num(m.lambda_sum),
              num(m.train_error), num(m.test_error), num(m.ensemble_train_error), num(m.ensemble_test_error),
              num(m.loss_bound), num(m.exp_loss)}) {
            std::snprintf(line, sizeof line, "%-14s", cell.c_str());
            row += line;
        }
        out << row << '\n';
    }
    for (const auto& r : rec.rejected) {
        out << "rejected checkpoint at step " << r.step << " (weighted error " << num(r.error) << ")\n";
    }
}

int cmd_train(const TrainFlags& f, std::ostream& out, std::ostream& err) {
    RunConfig c = resolve_train_config(f);
    validate(c);
    if (c.dataset.source != "blobs") {
        c.dataset.path = fs::absolute(c.dataset.path).lexically_normal().string();
        if (!c.dataset.labels_path.empty()) {
            c.dataset.labels_path = fs::absolute(c.dataset.labels_path).lexically_normal().string();
        }
    }
    if (f.print_config) {
        out << to_json(c) << '\n';
        return kOk;
    }
    out << "config " << to_json(c, -1) << '\n';

    PreparedData data = load_data(c.dataset);
    c.boost.num_classes = data.train.num_classes();
    try {
        c.boost.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    const fs::path dir = output_dir(c);
    const Dataset* test = data.test ? &*data.test : nullptr;

    RunResult result;
    try {
        result = run(c.method, data.train, test, c.boost, c.learner, c.seed);
    } catch (const RunAborted& e) {
        print_table(e.partial(), out);
        err << "error: training diverged: " << e.what() << '\n';
        return kDiverged;
    }
    result.record.dataset_descriptor = dataset_descriptor(c.dataset);
    print_table(result.record, out);

    remove_stale_checkpoints(dir);
    save_run(result, dir);
    {
        std::ofstream cfg(dir / "config.json", std::ios::trunc);
        cfg << to_json(c) << '\n';
        if (!cfg) {
            throw StorageError("cannot write config copy", dir / "config.json");
        }
    }
    const auto& last = result.record.checkpoints.back();
    out << "members " << result.ensemble.size() << "  train_error " << num(last.ensemble_train_error)
        << "  test_error " << num(last.ensemble_test_error) << '\n';
    out << "saved " << dir.string() << '\n';
    return kOk;
}

struct LoadedRun {
    RunResult run;
    PreparedData data;
};

LoadedRun load_for_reading(const fs::path& dir) {
    LoadedRun lr;
    lr.run = load_run(dir);
    DatasetConfig d;
    try {
        d = parse_dataset_descriptor(lr.run.record.dataset_descriptor);
    } catch (const ConfigError& e) {
        throw DataError(std::string("run manifest has an unusable dataset descriptor: ") + e.what());
    }
    lr.data = load_data(d);
    if (lr.data.train.size() != lr.run.record.n_train || lr.data.train.dim() != lr.run.record.input_dim) {
        throw DataError("rebuilt training split does not match the run (data changed since training?)");
    }
    return lr;
}

const Dataset& pick_split(const LoadedRun& lr, const std::string& on) {
    if (on == "train") {
        return lr.data.train;
    }
    if (!lr.data.test) {
        throw ConfigError("the run has no test split; use --on train or --dataset");
    }
    return *lr.data.test;
}

std::size_t parse_count(const std::string& text) {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
        v = std::stoul(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != text.size() || text.empty() || text.front() == '-') {
        throw ConfigError("--select expects a positive count or 'all', got '" + text + "'");
    }
    return v;
}

std::vector<std::size_t> row_argmax(const Matrix& scores) {
    std::vector<std::size_t> out(scores.rows());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        out[i] = argmax(scores.row(i));
    }
    return out;
}

int cmd_eval(const EvalFlags& f, std::ostream& out) {
    if (f.on != "test" && f.on != "train") {
        throw ConfigError("--on must be test or train");
    }
    const LoadedRun lr = load_for_reading(f.run_dir);
    Dataset external;
    const Dataset* data = nullptr;
    if (!f.dataset.empty()) {
        external = load_csv(f.dataset);
        if (external.dim() != lr.run.record.input_dim) {
            throw DataError("evaluation data has " + std::to_string(external.dim()) + " features, the run expects " +
                            std::to_string(lr.run.record.input_dim));
        }
        data = &external;
    } else {
        data = &pick_split(lr, f.on);
    }

    EnsembleModel model = lr.run.ensemble;
    if (f.select != "all") {
        try {
            model = select_checkpoints(lr.run.ensemble, parse_count(f.select));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    const Matrix scores = f.soft ? model.predict_soft(*data) : model.predict_distributions(*data);
    const auto plain = row_argmax(scores);
    out << "members " << model.size() << '\n';
    out << "samples " << data->size() << '\n';
    out << "error " << num(error_rate(plain, data->labels())) << '\n';

    std::optional<std::vector<std::size_t>> thresholded;
    if (f.threshold_priors) {
        try {
            thresholded = threshold_with_priors(scores, lr.data.train.class_priors());
        } catch (const std::invalid_argument& e) {
            throw DataError(e.what());
        }
        out << "thresholded_error " << num(error_rate(*thresholded, data->labels())) << '\n';
    }
    if (f.per_class) {
        const std::size_t k = model.num_classes();
        const auto pc = per_class_error(plain, data->labels(), k);
        std::optional<std::vector<std::optional<double>>> tpc;
        if (thresholded) {
            tpc = per_class_error(*thresholded, data->labels(), k);
        }
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t y : data->labels()) {
            if (y < k) {
                ++counts[y];
            }
        }
        out << "class,count,error" << (tpc ? ",thresholded_error" : "") << '\n';
        for (std::size_t c = 0; c < k; ++c) {
            out << c << ',' << counts[c] << ',' << (pc[c] ? num(*pc[c]) : "");
            if (tpc) {
                out << ',' << ((*tpc)[c] ? num(*(*tpc)[c]) : "");
            }
            out << '\n';
        }
    }
    return kOk;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream file(path, std::ios::trunc);
    file << text;
    if (!file) {
        throw StorageError("cannot write", path);
    }
}

int cmd_diagnose(const DiagnoseFlags& f, std::ostream& out, std::ostream& err) {
    if (!f.correlation && !f.class_weights && f.surface.empty()) {
        throw ConfigError("nothing to do: pass --correlation, --class-weights and/or --surface");
    }
    if (f.on != "test" && f.on != "train") {
        throw ConfigError("--on must be test or train");
    }
    const LoadedRun lr = load_for_reading(f.run_dir);
    const auto& model = lr.run.ensemble;
    const std::size_t members = model.size();

    if (f.correlation && members < 2) {
        err << "error: --correlation needs at least 2 checkpoints, the run has " << members << '\n';
        return kUsage;
    }
    std::optional<SurfaceBasis> basis;
    if (!f.surface.empty()) {
        if (members < 3) {
            err << "error: --surface needs at least 3 checkpoints, the run has " << members << '\n';
            return kUsage;
        }
        for (std::size_t idx : f.surface) {
            if (idx == 0 || idx > members) {
                err << "error: --surface indices must be in 1.." << members << '\n';
                return kUsage;
            }
        }
        const auto& cks = model.checkpoints();
        basis.emplace(cks[f.surface[0] - 1].params.values, cks[f.surface[1] - 1].params.values,
                      cks[f.surface[2] - 1].params.values);
    }

    // Everything that can fail on the inputs is computed before anything is written.
    std::vector<std::pair<std::string, std::string>> files;
    if (f.correlation) {
        const auto outputs = member_softmax_outputs(model, pick_split(lr, f.on));
        const auto summary = correlation_matrix(outputs);
        std::string text = "member";
        for (std::size_t j = 0; j < members; ++j) {
            text += "," + std::to_string(j + 1);
        }
        text += '\n';
        for (std::size_t i = 0; i < members; ++i) {
            text += std::to_string(i + 1);
            for (std::size_t j = 0; j < members; ++j) {
                text += "," + csv_num(summary.matrix(i, j));
            }
            text += '\n';
        }
        files.emplace_back("correlation.csv", std::move(text));
        out << "mean_offdiag_correlation " << num(summary.off_diagonal_mean) << '\n';
    }
    if (f.class_weights) {
        const auto& train = lr.data.train;
        const auto weights = SampleWeights::from_values(lr.run.record.final_weights);
        const auto avg = per_class_avg_weights(weights, train.labels(), train.num_classes());
        const auto counts = train.class_counts();
        std::string text = "class,count,avg_weight\n";
        for (std::size_t c = 0; c < avg.size(); ++c) {
            text += std::to_string(c) + "," + std::to_string(counts[c]) + "," + (avg[c] ? csv_num(*avg[c]) : "") + "\n";
            out << "class " << c << " count " << counts[c] << " avg_weight " << num(avg[c]) << '\n';
        }
        files.emplace_back("class_weights.csv", std::move(text));
    }
    if (basis) {
        const auto& cks = model.checkpoints();
        const auto extent = default_extent(*basis, f.resolution, f.margin);
        const auto grid = surface_grid(cks[f.surface[0] - 1].params, cks[f.surface[1] - 1].params,
                                       cks[f.surface[2] - 1].params, lr.data.train, extent);
        std::string text = "x,y,loss\n";
        for (std::size_t iy = 0; iy < grid.ys.size(); ++iy) {
            for (std::size_t ix = 0; ix < grid.xs.size(); ++ix) {
                text += csv_num(grid.xs[ix]) + "," + csv_num(grid.ys[iy]) + "," + csv_num(grid.loss(iy, ix)) + "\n";
            }
        }
        files.emplace_back("surface.csv", std::move(text));
        std::string anchors = "anchor,member,x,y\n";
        const std::pair<double, double> coords[] = {grid.p1, grid.p2, grid.p3};
        for (std::size_t a = 0; a < 3; ++a) {
            anchors += "p" + std::to_string(a + 1) + "," + std::to_string(f.surface[a]) + "," +
                       csv_num(coords[a].first) + "," + csv_num(coords[a].second) + "\n";
        }
        files.emplace_back("surface_anchors.csv", std::move(anchors));
        out << "surface " << grid.xs.size() << "x" << grid.ys.size() << " points\n";
    }

    const fs::path dir = f.out_dir.empty() ? fs::path(f.run_dir) / "diagnostics" : fs::path(f.out_dir);
    fs::create_directories(dir);
    for (const auto& [name, text] : files) {
        write_file(dir / name, text);
        out << "wrote " << (dir / name).string() << '\n';
    }
    return kOk;
}

void add_train_options(CLI::App& cmd, TrainFlags& f) {
    cmd.add_option("--config", f.config_path, "JSON run configuration; flags override its values");
    cmd.add_option("--method", f.method, "cbnn, single or horizontal");
    cmd.add_option("--seed", f.seed, "learner seed");
    cmd.add_option("--out", f.output, "run directory (default $CBNN_OUTPUT_ROOT/<method>-seed<seed>)");
    cmd.add_option("--dataset", f.dataset, "'blobs' or a CSV path (IDX images with --labels)");
    cmd.add_option("--labels", f.labels, "IDX label file; makes --dataset an IDX image file");
    cmd.add_option("--label-column", f.label_column, "CSV label column, negative counts from the end");
    cmd.add_option("--classes", f.classes, "blobs: number of classes");
    cmd.add_option("--per-class", f.per_class, "blobs: samples per class");
    cmd.add_option("--dim", f.dim, "blobs: feature dimension");
    cmd.add_option("--spread", f.spread, "blobs: cluster standard deviation");
    cmd.add_option("--data-seed", f.data_seed, "blobs: generator seed");
    cmd.add_option("--split-seed", f.split_seed, "train/test split seed");
    cmd.add_option("--test-fraction", f.test_fraction, "held-out fraction, 0 for none");
    cmd.add_option("--imbalance-mu", f.imbalance_mu, "fraction of classes made minority");
    cmd.add_option("--imbalance-rho", f.imbalance_rho, "majority/minority size ratio");
    cmd.add_option("--imbalance-seed", f.imbalance_seed, "seed choosing the minority classes");
    cmd.add_flag("--oversample", f.oversample, "random minority oversampling of the training split");
    cmd.add_option("--eta", f.eta, "deviation rate");
    cmd.add_option("-t,--checkpoint-every", f.checkpoint_every, "iterations per checkpoint");
    cmd.add_option("-T,--total-iterations", f.total_iterations, "total learner iterations");
    cmd.add_option("--lambda0", f.lambda0, "estimated final-model weight");
    cmd.add_option("--error-floor", f.error_floor, "lower clamp for the weighted error");
    cmd.add_option("--hidden", f.hidden, "hidden widths, comma separated (empty for none)");
    cmd.add_option("--l2", f.l2, "L2 coefficient");
    cmd.add_option("--lr", f.lr, "base learning rate");
    cmd.add_option("--decay", f.decay, "learning-rate decay factor");
    cmd.add_option("--decay-every", f.decay_every, "epochs between decays");
    cmd.add_option("--warmup", f.warmup, "warmup epochs");
    cmd.add_option("--batch-size", f.batch_size, "mini-batch size");
    cmd.add_flag("--print-config", f.print_config, "print the resolved configuration and exit");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Checkpoint-boosted neural network ensembles", "cbnn"};
    app.require_subcommand(1);

    TrainFlags train_flags;
    auto* train = app.add_subcommand("train", "train a run and save it");
    add_train_options(*train, train_flags);

    EvalFlags eval_flags;
    auto* eval = app.add_subcommand("eval", "error rate of a saved run");
    eval->add_option("run_dir", eval_flags.run_dir, "run directory")->required();
    eval->add_option("--select", eval_flags.select, "members to keep (final plus evenly spaced), or 'all'");
    eval->add_flag("--threshold-priors", eval_flags.threshold_priors, "divide scores by training class priors");
    eval->add_flag("--per-class", eval_flags.per_class, "per-class error table");
    eval->add_flag("--soft", eval_flags.soft, "use the lambda-weighted mean of softmax outputs as scores");
    eval->add_option("--on", eval_flags.on, "test or train split of the run's data");
    eval->add_option("--dataset", eval_flags.dataset, "evaluate on this CSV file instead");

    DiagnoseFlags diag_flags;
    auto* diagnose = app.add_subcommand("diagnose", "diversity, class-weight and loss-surface diagnostics");
    diagnose->add_option("run_dir", diag_flags.run_dir, "run directory")->required();
    diagnose->add_flag("--correlation", diag_flags.correlation, "pairwise softmax correlation matrix");
    diagnose->add_flag("--class-weights", diag_flags.class_weights, "mean final sample weight per class");
    diagnose->add_option("--surface", diag_flags.surface, "three 1-based member indices p1 p2 p3")->expected(3);
    diagnose->add_option("--resolution", diag_flags.resolution, "surface grid points per axis");
    diagnose->add_option("--margin", diag_flags.margin, "surface extent margin relative to the anchors");
    diagnose->add_option("--on", diag_flags.on, "split used for --correlation (test or train)");
    diagnose->add_option("--out", diag_flags.out_dir, "output directory (default <run_dir>/diagnostics)");

    std::vector<const char*> argv{"cbnn"};
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kOk : kUsage;
    }

    try {
        if (train->parsed()) {
            return cmd_train(train_flags, out, err);
        }
        if (eval->parsed()) {
            return cmd_eval(eval_flags, out);
        }
        return cmd_diagnose(diag_flags, out, err);
    } catch (const TrainingDiverged& e) {
        err << "error: training diverged: " << e.what() << '\n';
        return kDiverged;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    }
}

}  // namespace cbnn::cli
