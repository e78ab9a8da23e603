#include "cli.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cbnn/data.hpp"
#include "cbnn/metrics.hpp"
#include "cbnn/persistence.hpp"
#include "config.hpp"
#include "oracles.hpp"

namespace cbnn::cli {
namespace {

using testing::TempDir;
namespace fs = std::filesystem;

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome cli(std::vector<std::string> args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        out.push_back(line);
    }
    return out;
}

std::vector<std::string> fields(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::istringstream in(line);
    for (std::string f; std::getline(in, f, sep);) {
        out.push_back(f);
    }
    return out;
}

std::vector<std::string> words(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    for (std::string w; in >> w;) {
        out.push_back(w);
    }
    return out;
}

// Small, fast training arguments shared by most tests.
std::vector<std::string> quick_train(const std::string& method, const fs::path& out) {
    return {"train", "--method", method, "--dataset", "blobs", "--seed", "1", "--per-class", "60",
            "-T",    "300",      "-t",   "60",        "--hidden", "8",   "--out", out.string()};
}

// Table rows are the lines whose first word is a checkpoint index.
std::vector<std::vector<std::string>> table_rows(const std::string& out) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& line : lines_of(out)) {
        auto w = words(line);
        if (!w.empty() && std::isdigit(static_cast<unsigned char>(w[0][0]))) {
            rows.push_back(std::move(w));
        }
    }
    return rows;
}

double value_after(const std::string& out, const std::string& key) {
    for (const auto& line : lines_of(out)) {
        const auto w = words(line);
        if (w.size() >= 2 && w[0] == key) {
            return std::stod(w[1]);
        }
    }
    ADD_FAILURE() << "no '" << key << "' line in:\n" << out;
    return -1.0;
}

TEST(CliTrain, SingleRunIsDeterministic) {
    TempDir a("cli_a");
    TempDir b("cli_b");
    const auto ra = cli(quick_train("single", a / "run"));
    const auto rb = cli(quick_train("single", b / "run"));
    ASSERT_EQ(ra.code, kOk) << ra.err;
    ASSERT_EQ(rb.code, kOk) << rb.err;
    EXPECT_EQ(slurp(a / "run" / "manifest"), slurp(b / "run" / "manifest"));
    EXPECT_EQ(slurp(a / "run" / "ckpt_1.bin"), slurp(b / "run" / "ckpt_1.bin"));
}

TEST(CliTrain, LambdaSumStaysUnderBudget) {
    TempDir dir("cli_budget");
    auto args = quick_train("cbnn", dir / "run");
    args.insert(args.end(), {"--eta", "0.01"});
    const auto r = cli(args);
    ASSERT_EQ(r.code, kOk) << r.err;
    const auto rows = table_rows(r.out);
    ASSERT_GE(rows.size(), 2u);
    for (const auto& row : rows) {
        ASSERT_EQ(row.size(), 12u);
        EXPECT_LT(std::stod(row[5]), 100.0) << "checkpoint " << row[0];
    }
    // The printed values carry enough digits to match the stored record.
    const auto back = load_run(dir / "run").record;
    ASSERT_EQ(back.checkpoints.size(), rows.size());
    for (std::size_t m = 0; m < rows.size(); ++m) {
        EXPECT_NEAR(std::stod(rows[m][3]), back.checkpoints[m].lambda, 1e-6 * back.checkpoints[m].lambda);
        EXPECT_NEAR(std::stod(rows[m][10]), back.checkpoints[m].loss_bound, 1e-6);
    }
}

TEST(CliTrain, MissingDatasetCreatesNothing) {
    TempDir dir("cli_missing");
    const auto r = cli({"train", "--dataset", (dir / "absent.csv").string(), "--out", (dir / "run").string()});
    EXPECT_EQ(r.code, kDataError);
    EXPECT_NE(r.err.find("absent.csv"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir / "run"));
}

TEST(CliTrain, MalformedCsvIsDataError) {
    TempDir dir("cli_badcsv");
    {
        std::ofstream f(dir / "bad.csv");
        f << "1.0,2.0,0\n1.0,oops,1\n";
    }
    const auto r = cli({"train", "--dataset", (dir / "bad.csv").string(), "--out", (dir / "run").string()});
    EXPECT_EQ(r.code, kDataError);
    EXPECT_NE(r.err.find("row 2"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(dir / "run"));
}

TEST(CliTrain, CsvDatasetTrains) {
    TempDir dir("cli_csv");
    save_csv(make_blobs(30, 2, 3, 0.5, 4), dir / "data.csv");
    const auto r = cli({"train", "--dataset", (dir / "data.csv").string(), "-T", "100", "-t", "50", "--hidden", "4",
                        "--out", (dir / "run").string()});
    ASSERT_EQ(r.code, kOk) << r.err;
    const auto back = load_run(dir / "run");
    EXPECT_EQ(back.record.input_dim, 3u);
    EXPECT_EQ(parse_dataset_descriptor(back.record.dataset_descriptor).source, "csv");
}

TEST(CliTrain, UnknownConfigKeyRejected) {
    TempDir dir("cli_unknown");
    {
        std::ofstream f(dir / "cfg.json");
        f << R"({"boost": {"eta": 0.01, "etaa": 3}})";
    }
    const auto r = cli({"train", "--config", (dir / "cfg.json").string(), "--out", (dir / "run").string()});
    EXPECT_EQ(r.code, kUsage);
    EXPECT_NE(r.err.find("etaa"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir / "run"));
}

TEST(CliTrain, WrongTypeRejected) {
    TempDir dir("cli_type");
    {
        std::ofstream f(dir / "cfg.json");
        f << R"({"learner": {"batch_size": -4}})";
    }
    EXPECT_EQ(cli({"train", "--config", (dir / "cfg.json").string()}).code, kUsage);
}

TEST(CliTrain, PrintConfigEchoesDefaults) {
    const auto r = cli({"train", "--print-config"});
    ASSERT_EQ(r.code, kOk) << r.err;
    const RunConfig echoed = parse_config(r.out);
    const RunConfig defaults;
    EXPECT_EQ(echoed.method, defaults.method);
    EXPECT_EQ(echoed.boost.eta, defaults.boost.eta);
    EXPECT_EQ(echoed.boost.total_iterations, defaults.boost.total_iterations);
    EXPECT_EQ(echoed.learner, defaults.learner);
    EXPECT_EQ(dataset_descriptor(echoed.dataset), dataset_descriptor(defaults.dataset));
}

TEST(CliTrain, FlagsOverrideConfigFile) {
    TempDir dir("cli_override");
    {
        std::ofstream f(dir / "cfg.json");
        f << R"({"method": "horizontal", "seed": 9, "boost": {"eta": 0.02, "total_iterations": 500}})";
    }
    const auto r = cli({"train", "--config", (dir / "cfg.json").string(), "--eta", "0.05", "--print-config"});
    ASSERT_EQ(r.code, kOk) << r.err;
    const RunConfig c = parse_config(r.out);
    EXPECT_EQ(c.method, Method::HorizontalVoting);
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.boost.eta, 0.05);
    EXPECT_EQ(c.boost.total_iterations, 500u);
}

TEST(CliTrain, ConfigRoundTripsThroughJson) {
    RunConfig c;
    c.method = Method::Single;
    c.dataset.imbalance = ImbalanceConfig{0.3, 4.0, 2};
    c.boost.lambda0 = 5.5;
    c.learner.hidden = {7, 3};
    const RunConfig back = parse_config(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
}

TEST(CliTrain, OutputRootFromEnvironment) {
    TempDir dir("cli_env");
    ::setenv(kOutputRootEnv, dir.path().c_str(), 1);
    auto args = quick_train("single", "");
    args.resize(args.size() - 2);  // drop --out
    const auto r = cli(args);
    ::unsetenv(kOutputRootEnv);
    ASSERT_EQ(r.code, kOk) << r.err;
    EXPECT_TRUE(fs::exists(dir / "single-seed1" / "manifest"));
}

TEST(CliTrain, InvalidSettingsAreUsageErrors) {
    TempDir dir("cli_invalid");
    EXPECT_EQ(cli({"train", "-T", "10", "-t", "20", "--out", (dir / "r").string()}).code, kUsage);
    EXPECT_EQ(cli({"train", "--eta", "-1", "--out", (dir / "r").string()}).code, kUsage);
    EXPECT_EQ(cli({"train", "--method", "bagging"}).code, kUsage);
    EXPECT_EQ(cli({"train", "--no-such-flag"}).code, kUsage);
    EXPECT_EQ(cli({}).code, kUsage);
    EXPECT_FALSE(fs::exists(dir / "r"));
}

TEST(CliTrain, DivergenceHasItsOwnExitCode) {
    TempDir dir("cli_diverge");
    auto args = quick_train("cbnn", dir / "run");
    args.insert(args.end(), {"--lr", "1e300", "--warmup", "0"});
    const auto r = cli(args);
    EXPECT_EQ(r.code, kDiverged);
    EXPECT_NE(r.err.find("diverged"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir / "run"));
}

TEST(CliTrain, HelpExitsCleanly) { EXPECT_EQ(cli({"train", "--help"}).code, kOk); }

class CliSavedRun : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new TempDir("cli_saved");
        const auto r = cli(quick_train("cbnn", dir_->path() / "cbnn"));
        ASSERT_EQ(r.code, kOk) << r.err;
        const auto s = cli(quick_train("single", dir_->path() / "single"));
        ASSERT_EQ(s.code, kOk) << s.err;
    }
    static void TearDownTestSuite() {
        delete dir_;
        dir_ = nullptr;
    }
    static std::string run_dir(const std::string& name) { return (dir_->path() / name).string(); }
    static TempDir* dir_;
};

TempDir* CliSavedRun::dir_ = nullptr;

TEST_F(CliSavedRun, SelectAllMatchesEnsembleError) {
    const auto rec = load_run(run_dir("cbnn")).record;
    const auto r = cli({"eval", run_dir("cbnn"), "--select", "all"});
    ASSERT_EQ(r.code, kOk) << r.err;
    EXPECT_NEAR(value_after(r.out, "error"), *rec.checkpoints.back().ensemble_test_error, 1e-8);
    EXPECT_EQ(value_after(r.out, "members"), static_cast<double>(rec.checkpoints.size()));
}

TEST_F(CliSavedRun, SelectOneMatchesFinalModel) {
    const auto rec = load_run(run_dir("cbnn")).record;
    const auto r = cli({"eval", run_dir("cbnn"), "--select", "1"});
    ASSERT_EQ(r.code, kOk) << r.err;
    EXPECT_NEAR(value_after(r.out, "error"), *rec.checkpoints.back().test_error, 1e-8);
    EXPECT_EQ(value_after(r.out, "members"), 1.0);
}

TEST_F(CliSavedRun, SelectionErrors) {
    EXPECT_EQ(cli({"eval", run_dir("cbnn"), "--select", "0"}).code, kUsage);
    EXPECT_EQ(cli({"eval", run_dir("cbnn"), "--select", "99"}).code, kUsage);
    EXPECT_EQ(cli({"eval", run_dir("cbnn"), "--select", "two"}).code, kUsage);
}

TEST_F(CliSavedRun, UniformPriorsLeaveErrorUnchanged) {
    // Balanced blobs with a stratified split give exactly uniform training priors.
    for (const char* soft : {"", "--soft"}) {
        std::vector<std::string> args{"eval", run_dir("cbnn"), "--threshold-priors"};
        if (*soft) {
            args.push_back(soft);
        }
        const auto r = cli(args);
        ASSERT_EQ(r.code, kOk) << r.err;
        EXPECT_EQ(value_after(r.out, "thresholded_error"), value_after(r.out, "error"));
    }
}

TEST_F(CliSavedRun, PerClassTable) {
    const auto r = cli({"eval", run_dir("cbnn"), "--per-class", "--on", "train"});
    ASSERT_EQ(r.code, kOk) << r.err;
    const auto lines = lines_of(r.out);
    const auto header = std::find(lines.begin(), lines.end(), "class,count,error");
    ASSERT_NE(header, lines.end());
    ASSERT_GE(lines.end() - header, 4);
    std::size_t total = 0;
    for (auto it = header + 1; it != header + 4; ++it) {
        total += std::stoul(fields(*it, ',')[1]);
    }
    EXPECT_EQ(static_cast<double>(total), value_after(r.out, "samples"));
}

TEST_F(CliSavedRun, ReadCommandsDoNotModifyRun) {
    const auto before = slurp(fs::path(run_dir("cbnn")) / "manifest");
    cli({"eval", run_dir("cbnn")});
    cli({"eval", run_dir("cbnn"), "--threshold-priors", "--per-class"});
    EXPECT_EQ(slurp(fs::path(run_dir("cbnn")) / "manifest"), before);
    EXPECT_EQ(cli({"eval", run_dir("cbnn")}).out, cli({"eval", run_dir("cbnn")}).out);
}

TEST_F(CliSavedRun, CorrelationNeedsTwoCheckpoints) {
    const auto r = cli({"diagnose", run_dir("single"), "--correlation"});
    EXPECT_NE(r.code, kOk);
    EXPECT_NE(r.err.find("at least 2"), std::string::npos);
}

TEST_F(CliSavedRun, CorrelationCsvIsSymmetricWithUnitDiagonal) {
    TempDir out("cli_corr");
    const auto r = cli({"diagnose", run_dir("cbnn"), "--correlation", "--out", out.path().string()});
    ASSERT_EQ(r.code, kOk) << r.err;
    const auto lines = lines_of(slurp(out / "correlation.csv"));
    ASSERT_GE(lines.size(), 3u);
    const std::size_t m = lines.size() - 1;
    EXPECT_EQ(fields(lines[0], ',').size(), m + 1);
    EXPECT_EQ(fields(lines[0], ',')[0], "member");
    std::vector<std::vector<double>> c(m);
    for (std::size_t i = 0; i < m; ++i) {
        const auto f = fields(lines[i + 1], ',');
        ASSERT_EQ(f.size(), m + 1);
        for (std::size_t j = 0; j < m; ++j) {
            c[i].push_back(std::stod(f[j + 1]));
        }
    }
    for (std::size_t i = 0; i < m; ++i) {
        EXPECT_EQ(c[i][i], 1.0);
        for (std::size_t j = 0; j < m; ++j) {
            EXPECT_EQ(c[i][j], c[j][i]);
        }
    }
}

TEST_F(CliSavedRun, ClassWeightsCsv) {
    TempDir out("cli_cw");
    const auto r = cli({"diagnose", run_dir("cbnn"), "--class-weights", "--out", out.path().string()});
    ASSERT_EQ(r.code, kOk) << r.err;
    const auto lines = lines_of(slurp(out / "class_weights.csv"));
    ASSERT_EQ(lines.size(), 4u);
    EXPECT_EQ(lines[0], "class,count,avg_weight");
    const auto rec = load_run(run_dir("cbnn")).record;
    double total = 0.0;
    for (std::size_t c = 1; c < 4; ++c) {
        const auto f = fields(lines[c], ',');
        total += std::stod(f[1]) * std::stod(f[2]);
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST_F(CliSavedRun, SurfaceCsv) {
    TempDir out("cli_surface");
    const auto r = cli({"diagnose", run_dir("cbnn"), "--surface", "1", "2", "3", "--resolution", "5", "--out",
                        out.path().string()});
    ASSERT_EQ(r.code, kOk) << r.err;
    const auto lines = lines_of(slurp(out / "surface.csv"));
    ASSERT_EQ(lines.size(), 26u);
    EXPECT_EQ(lines[0], "x,y,loss");
    const auto anchors = lines_of(slurp(out / "surface_anchors.csv"));
    ASSERT_EQ(anchors.size(), 4u);
    EXPECT_EQ(anchors[2], "p2,2,0,0");
}

TEST_F(CliSavedRun, CollinearSurfaceAnchorsAreDataErrors) {
    TempDir out("cli_degenerate");
    const auto r = cli({"diagnose", run_dir("cbnn"), "--surface", "1", "2", "2", "--out", out.path().string()});
    EXPECT_EQ(r.code, kDataError);
    EXPECT_FALSE(fs::exists(out / "surface.csv"));
}

TEST_F(CliSavedRun, SurfacePreconditions) {
    EXPECT_EQ(cli({"diagnose", run_dir("single"), "--surface", "1", "1", "1"}).code, kUsage);
    EXPECT_EQ(cli({"diagnose", run_dir("cbnn"), "--surface", "1", "2", "50"}).code, kUsage);
    EXPECT_EQ(cli({"diagnose", run_dir("cbnn"), "--surface", "1", "2"}).code, kUsage);
    EXPECT_EQ(cli({"diagnose", run_dir("cbnn")}).code, kUsage);
}

TEST(CliEval, DanglingCheckpointIsDataError) {
    TempDir dir("cli_dangling");
    ASSERT_EQ(cli(quick_train("cbnn", dir / "run")).code, kOk);
    fs::remove(dir / "run" / checkpoint_filename(1));
    const auto r = cli({"eval", (dir / "run").string()});
    EXPECT_EQ(r.code, kDataError);
    EXPECT_NE(r.err.find(checkpoint_filename(1)), std::string::npos);
    EXPECT_EQ(cli({"eval", (dir / "nowhere").string()}).code, kDataError);
}

TEST(CliEval, ImbalancedRunRebuildsItsSplit) {
    TempDir dir("cli_imbalance");
    auto args = quick_train("cbnn", dir / "run");
    args.insert(args.end(), {"--classes", "10", "--imbalance-mu", "0.2", "--imbalance-rho", "10"});
    const auto r = cli(args);
    ASSERT_EQ(r.code, kOk) << r.err;
    const auto cw = cli({"diagnose", (dir / "run").string(), "--class-weights", "--out", (dir / "d").string()});
    ASSERT_EQ(cw.code, kOk) << cw.err;
    const auto lines = lines_of(slurp(dir / "d" / "class_weights.csv"));
    ASSERT_EQ(lines.size(), 11u);
    std::size_t minority = 0;
    for (std::size_t c = 1; c < lines.size(); ++c) {
        minority += std::stoul(fields(lines[c], ',')[1]) < 42 ? 1 : 0;
    }
    EXPECT_EQ(minority, 2u);
}

}  // namespace
}  // namespace cbnn::cli
