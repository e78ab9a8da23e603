// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cbnn/boost.hpp"
#include "cbnn/data.hpp"
#include "cbnn/engine.hpp"
#include "cbnn/metrics.hpp"
#include "cbnn/mlp.hpp"
#include "cbnn/persistence.hpp"
#include "oracles.hpp"

using namespace cbnn;

namespace {

constexpr double kBoundSlack = 1e-9;
constexpr double kNormalizerTol = 1e-12;
constexpr double kSimplexTol = 1e-12;
constexpr double kLambdaSpot = 7.54;
constexpr double kLambdaSpotTol = 0.005;
constexpr double kGradientTol = 1e-4;
constexpr double kReplayTol = 1e-10;
constexpr double kAnchorTol = 1e-9;
constexpr double kRuntimeLimitSeconds = 60.0;
constexpr int kSeeds = 5;

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& detail) {
    std::printf("%s %d %s: %s\n", pass ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) {
        ++failures;
    }
}

// Runs one criterion, turning an unexpected exception into a FAIL line.
void criterion(int id, const std::string& what, const std::function<std::pair<bool, std::string>()>& body) {
    try {
        auto [pass, detail] = body();
        report(id, pass, what, detail);
    } catch (const std::exception& e) {
        report(id, false, what, std::string("exception: ") + e.what());
    }
}

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

LearnerSettings small_learner() {
    LearnerSettings l;
    l.hidden = {32, 32};
    return l;
}

BoostConfig boost_config(std::size_t k, std::size_t T, std::size_t t, double eta) {
    BoostConfig c;
    c.eta = eta;
    c.total_iterations = T;
    c.iterations_per_checkpoint = t;
    c.num_classes = k;
    return c;
}

// Positive vector normalized to sum one.
std::vector<double> random_simplex(std::size_t n, std::mt19937_64& rng) {
    std::exponential_distribution<double> exp1(1.0);
    std::vector<double> v(n);
    long double total = 0.0L;
    for (auto& x : v) {
        x = exp1(rng) + 1e-3;
        total += x;
    }
    for (auto& x : v) {
        x = static_cast<double>(x / total);
    }
    return v;
}

std::vector<bool> random_correctness(std::size_t n, double p_correct, std::mt19937_64& rng) {
    std::bernoulli_distribution coin(p_correct);
    std::vector<bool> c(n);
    for (std::size_t i = 0; i < n; ++i) {
        c[i] = coin(rng);
    }
    return c;
}

// Checks on one record: positive lambdas, closed-form normalizer
// below one, strictly decreasing bound.
struct NormalizerAudit {
    std::size_t checked = 0;
    double worst_z_gap = 0.0;
    double max_z = 0.0;
    bool lambdas_positive = true;
    bool strictly_decreasing = true;

    void add(const RunRecord& record) {
        double prev_bound = 1.0;
        for (const auto& c : record.checkpoints) {
            ++checked;
            lambdas_positive = lambdas_positive && c.lambda > 0.0;
            const double expected = (1.0 - c.error) * std::exp(-record.config.eta * c.lambda) + c.error;
            worst_z_gap = std::max(worst_z_gap, std::abs(c.z - expected));
            max_z = std::max(max_z, c.z);
            strictly_decreasing = strictly_decreasing && c.loss_bound < prev_bound;
            prev_bound = c.loss_bound;
        }
    }

    bool pass() const {
        return checked > 0 && lambdas_positive && strictly_decreasing && worst_z_gap <= kNormalizerTol &&
               max_z < 1.0;
    }
};

struct SeedRuns {
    Dataset train;
    Dataset test;
    RunResult cbnn;
    RunResult single;
    RunResult voting;
};

// Balanced three-class blobs with a stratified 70/30 split; all three methods
// share T, t and the seed.
SeedRuns balanced_runs(std::uint64_t seed) {
    const auto all = make_blobs(200, 3, 2, 2.0, 1000 + seed);
    auto parts = split(all, 0.3, seed, true);
    const auto config = boost_config(3, 3000, 300, 0.01);
    const auto learner = small_learner();
    SeedRuns r{parts.train, parts.test, {}, {}, {}};
    r.cbnn = run_cbnn(r.train, &r.test, config, learner, seed);
    r.single = run_single(r.train, &r.test, config, learner, seed);
    r.voting = run_horizontal_voting(r.train, &r.test, config, learner, seed);
    return r;
}

}  // namespace

int main() {
    NormalizerAudit audit;

    criterion(1, "exponential loss bounded by product of Z", [&] {
        const auto train = make_blobs(200, 3, 2, 2.0, 1);
        const auto config = boost_config(3, 3000, 300, 0.01);
        const auto start = std::chrono::steady_clock::now();
        const auto result = run_cbnn(train, nullptr, config, small_learner(), 1);
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        audit.add(result.record);

        const auto& rows = result.record.checkpoints;
        double worst = -INFINITY;
        bool bounded = true;
        for (const auto& c : rows) {
            worst = std::max(worst, c.exp_loss - c.loss_bound);
            bounded = bounded && c.exp_loss <= c.loss_bound + kBoundSlack;
        }
        const double lambda_sum = rows.back().lambda_sum;
        const bool budget = lambda_sum <= 1.0 / config.eta;
        const bool pass = train.size() == 600 && rows.size() >= 5 && budget && bounded &&
                          seconds < kRuntimeLimitSeconds;
        return std::pair{pass, fmt("n=%zu checkpoints=%zu sum_lambda=%.4f (<= %.0f) "
                                   "max(L_exp - prodZ)=%.3e final L_exp=%.6f prodZ=%.6f runtime=%.2fs",
                                   train.size(), rows.size(), lambda_sum, 1.0 / config.eta, worst,
                                   rows.back().exp_loss, rows.back().loss_bound, seconds)};
    });

    std::vector<SeedRuns> runs;
    std::string run_error;
    try {
        for (int seed = 1; seed <= kSeeds; ++seed) {
            runs.push_back(balanced_runs(static_cast<std::uint64_t>(seed)));
            audit.add(runs.back().cbnn.record);
        }
    } catch (const std::exception& e) {
        run_error = e.what();
    }

    criterion(2, "saved checkpoints have lambda > 0 and Z < 1, bound strictly decreasing", [&] {
        return std::pair{audit.pass() && run_error.empty(),
                         fmt("checkpoints=%zu lambdas_positive=%d max|Z - closed form|=%.3e max Z=%.9f "
                             "strictly_decreasing=%d",
                             audit.checked, audit.lambdas_positive, audit.worst_z_gap, audit.max_z,
                             audit.strictly_decreasing)};
    });

    criterion(3, "weight updates stay on the simplex and move by correctness", [] {
        std::mt19937_64 rng(20240);
        std::uniform_int_distribution<std::size_t> size(2, 300);
        std::uniform_real_distribution<double> log_eta(std::log(1e-4), std::log(1.0));
        std::uniform_real_distribution<double> log_lambda(std::log(1e-6), std::log(20.0));
        std::uniform_real_distribution<double> p(0.05, 0.95);
        constexpr int kCalls = 10000;
        double worst_sum = 0.0;
        int violations = 0;
        for (int call = 0; call < kCalls; ++call) {
            const std::size_t n = size(rng);
            auto correct = random_correctness(n, p(rng), rng);
            correct[0] = true;
            correct[1] = false;
            std::shuffle(correct.begin(), correct.end(), rng);
            const auto before = SampleWeights::from_values(random_simplex(n, rng));
            const auto after = update_weights(before, correct, std::exp(log_eta(rng)), std::exp(log_lambda(rng)));
            long double total = 0.0L;
            bool ok = after.weights.size() == n;
            for (std::size_t i = 0; ok && i < n; ++i) {
                total += after.weights[i];
                ok = after.weights[i] > 0.0 &&
                     (correct[i] ? after.weights[i] < before[i] : after.weights[i] > before[i]);
            }
            const double gap = std::abs(static_cast<double>(total - 1.0L));
            worst_sum = std::max(worst_sum, gap);
            if (!ok || gap > kSimplexTol) {
                ++violations;
            }
        }
        return std::pair{violations == 0,
                         fmt("calls=%d violations=%d max|sum - 1|=%.3e", kCalls, violations, worst_sum)};
    });

    criterion(4, "checkpoint_weight(0.05, 100)", [] {
        const auto lambda = checkpoint_weight(0.05, 100, 1e-3);
        const bool pass = lambda && std::abs(*lambda - kLambdaSpot) <= kLambdaSpotTol;
        return std::pair{pass, fmt("lambda=%.6f expected %.2f +- %.3f", lambda.value_or(NAN), kLambdaSpot,
                                   kLambdaSpotTol)};
    });

    criterion(5, "weighted loss gradient matches central differences", [] {
        std::mt19937_64 rng(5150);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> positive(0.1, 2.0);
        constexpr std::size_t kBatch = 8;
        constexpr std::size_t kTotal = 80;
        constexpr int kVectors = 20;
        constexpr int kCoordinates = 10;
        double worst = 0.0;
        int violations = 0;
        for (int trial = 0; trial < kVectors; ++trial) {
            const auto params = init_params({5, 12, 4}, 1e-3, 900 + static_cast<std::uint64_t>(trial));
            Batch batch;
            batch.features = Matrix(kBatch, 5);
            for (std::size_t i = 0; i < kBatch; ++i) {
                for (std::size_t j = 0; j < 5; ++j) {
                    batch.features(i, j) = normal(rng);
                }
                batch.labels.push_back(rng() % 4);
                batch.weights.push_back(positive(rng) / kTotal);
            }
            const auto analytic = loss_and_gradient(params, batch, kTotal);
            auto f = [&](const std::vector<double>& v) {
                MlpParams p = params;
                p.values = v;
                return weighted_batch_loss(p, batch, kTotal);
            };
            for (int c = 0; c < kCoordinates; ++c) {
                const std::size_t j = rng() % params.values.size();
                const double fd = testing::central_difference(f, params.values, j);
                const double err = testing::relative_error(analytic.gradient[j], fd);
                worst = std::max(worst, err);
                if (!(err <= kGradientTol)) {
                    ++violations;
                }
            }
        }
        return std::pair{violations == 0, fmt("vectors=%d coordinates=%d violations=%d max relative error=%.3e",
                                              kVectors, kCoordinates, violations, worst)};
    });

    criterion(6, "median ensemble test error <= median single-model test error", [&] {
        if (!run_error.empty()) {
            return std::pair{false, "training failed: " + run_error};
        }
        std::vector<double> ens;
        std::vector<double> single;
        std::string per_seed;
        for (const auto& r : runs) {
            ens.push_back(*r.cbnn.record.checkpoints.back().ensemble_test_error);
            single.push_back(*r.single.record.checkpoints.back().ensemble_test_error);
            per_seed += fmt(" (%.4f vs %.4f)", ens.back(), single.back());
        }
        const double me = median(ens);
        const double ms = median(single);
        return std::pair{me <= ms, fmt("median cbnn=%.4f single=%.4f; per seed%s", me, ms, per_seed.c_str())};
    });

    criterion(7, "checkpoint correlation below horizontal voting in >= 3 of 5 seeds", [&] {
        if (!run_error.empty()) {
            return std::pair{false, "training failed: " + run_error};
        }
        int wins = 0;
        std::string per_seed;
        for (const auto& r : runs) {
            const double cb = correlation_matrix(member_softmax_outputs(r.cbnn.ensemble, r.test)).off_diagonal_mean;
            const double hv = correlation_matrix(member_softmax_outputs(r.voting.ensemble, r.test)).off_diagonal_mean;
            wins += cb < hv ? 1 : 0;
            per_seed += fmt(" (%.5f vs %.5f)", cb, hv);
        }
        return std::pair{wins >= 3, fmt("seeds where cbnn < voting: %d/%d;%s", wins, kSeeds, per_seed.c_str())};
    });

    criterion(8, "minority classes end with more weight than majority classes in >= 4 of 5 seeds", [] {
        int wins = 0;
        std::string per_seed;
        for (int seed = 1; seed <= kSeeds; ++seed) {
            const auto s = static_cast<std::uint64_t>(seed);
            const auto all = make_blobs(200, 10, 4, 1.5, 1000 + s);
            const auto parts = split(all, 0.3, s, true);
            const auto train = step_imbalance(parts.train, {0.2, 10.0, s});
            const auto result = run_cbnn(train, &parts.test, boost_config(10, 3000, 100, 0.01), small_learner(), s);
            const auto counts = train.class_counts();
            const std::size_t largest = *std::max_element(counts.begin(), counts.end());
            const auto weights = SampleWeights::from_values(result.record.final_weights);
            const auto avg = per_class_avg_weights(weights, train.labels(), train.num_classes());
            double minority = 0.0;
            double majority = 0.0;
            int n_min = 0;
            int n_maj = 0;
            for (std::size_t c = 0; c < counts.size(); ++c) {
                if (counts[c] < largest) {
                    minority += *avg[c];
                    ++n_min;
                } else {
                    majority += *avg[c];
                    ++n_maj;
                }
            }
            minority /= n_min;
            majority /= n_maj;
            wins += minority > majority ? 1 : 0;
            per_seed += fmt(" (%.3g vs %.3g)", minority, majority);
        }
        return std::pair{wins >= 4, fmt("seeds with minority > majority: %d/%d;%s", wins, kSeeds, per_seed.c_str())};
    });

    criterion(9, "step imbalance keeps 2 classes of 50 and 8 of 500", [] {
        int exact = 0;
        std::string counts_seen;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto data = make_blobs(500, 10, 2, 1.0, seed);
            auto counts = step_imbalance(data, {0.2, 10.0, seed}).class_counts();
            std::sort(counts.begin(), counts.end());
            const bool ok = counts.size() == 10 && counts[0] == 50 && counts[1] == 50 &&
                            std::all_of(counts.begin() + 2, counts.end(), [](std::size_t c) { return c == 500; });
            exact += ok ? 1 : 0;
            if (seed == 0) {
                for (auto c : counts) {
                    counts_seen += " " + std::to_string(c);
                }
            }
        }
        return std::pair{exact == 5, fmt("exact for %d/5 seeds; sorted counts:%s", exact, counts_seen.c_str())};
    });

    criterion(10, "incremental weights equal from-scratch replay", [] {
        std::mt19937_64 rng(777);
        std::uniform_int_distribution<std::size_t> size(1, 120);
        std::uniform_int_distribution<std::size_t> length(1, 40);
        std::uniform_real_distribution<double> eta_dist(1e-3, 0.2);
        std::uniform_real_distribution<double> lambda_dist(1e-3, 12.0);
        std::uniform_real_distribution<double> p(0.1, 0.95);
        constexpr int kHistories = 100;
        double worst = 0.0;
        for (int h = 0; h < kHistories; ++h) {
            const std::size_t n = size(rng);
            const std::size_t m = length(rng);
            const double eta = eta_dist(rng);
            std::vector<std::vector<bool>> history;
            std::vector<double> lambdas;
            auto weights = SampleWeights::uniform(n);
            for (std::size_t step = 0; step < m; ++step) {
                history.push_back(random_correctness(n, p(rng), rng));
                lambdas.push_back(lambda_dist(rng));
                weights = update_weights(weights, history.back(), eta, lambdas.back()).weights;
            }
            const auto expected = testing::replay_weights(n, history, lambdas, eta);
            for (std::size_t i = 0; i < n; ++i) {
                worst = std::max(worst, std::abs(weights[i] - expected[i]));
            }
        }
        return std::pair{worst <= kReplayTol, fmt("histories=%d max entry gap=%.3e", kHistories, worst)};
    });

    criterion(11, "saved run reproduces bit-identical predictions", [&] {
        if (runs.empty()) {
            return std::pair{false, "training failed: " + run_error};
        }
        const auto& source = runs.front();
        testing::TempDir dir("acceptance");
        save_run(source.cbnn, dir.path());
        const auto loaded = load_run(dir.path());
        const auto a = source.cbnn.ensemble.predict_distributions(source.test);
        const auto b = loaded.ensemble.predict_distributions(source.test);
        const auto sa = source.cbnn.ensemble.predict_soft(source.test);
        const auto sb = loaded.ensemble.predict_soft(source.test);
        const bool same_votes = a.flat().size() == b.flat().size() &&
                                std::memcmp(a.flat().data(), b.flat().data(), a.flat().size_bytes()) == 0;
        const bool same_soft = sa.flat().size() == sb.flat().size() &&
                               std::memcmp(sa.flat().data(), sb.flat().data(), sa.flat().size_bytes()) == 0;
        const bool same_classes = source.cbnn.ensemble.predict(source.test) == loaded.ensemble.predict(source.test);
        return std::pair{same_votes && same_soft && same_classes,
                         fmt("members=%zu held-out samples=%zu classes_equal=%d votes_bitwise=%d soft_bitwise=%d",
                             loaded.ensemble.size(), source.test.size(), same_classes, same_votes, same_soft)};
    });

    criterion(12, "surface grid anchors match direct loss", [&] {
        if (runs.empty() || runs.front().cbnn.ensemble.size() < 3) {
            return std::pair{false, std::string("need a run with at least three members")};
        }
        const auto& members = runs.front().cbnn.ensemble.checkpoints();
        const auto& data = runs.front().train;
        const auto& p1 = members[0].params;
        const auto& p2 = members[1].params;
        const auto& p3 = members[2].params;
        const SurfaceBasis basis(p1.values, p2.values, p3.values);
        GridExtent ext;
        ext.x_min = 0.0;
        ext.x_max = basis.u_norm();
        ext.y_min = 0.0;
        ext.y_max = std::max(1e-3, basis.coords_p1().second);
        ext.x_steps = 7;
        ext.y_steps = 5;
        const auto grid = surface_grid(p1, p2, p3, data, ext);
        const double gap2 = std::abs(grid.loss(0, 0) - regularized_cross_entropy(p2, data));
        const double gap3 = std::abs(grid.loss(0, ext.x_steps - 1) - regularized_cross_entropy(p3, data));
        const bool on_grid = grid.xs.front() == 0.0 && grid.ys.front() == 0.0 && grid.xs.back() == basis.u_norm();
        return std::pair{on_grid && gap2 <= kAnchorTol && gap3 <= kAnchorTol,
                         fmt("|grid - direct| at p2=%.3e at p3=%.3e (|u|=%.4f)", gap2, gap3, basis.u_norm())};
    });

    std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "SOME FAILED", failures);
    return failures == 0 ? 0 : 1;
}
