#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "forge/common.hpp"
#include "forge/mlp.hpp"

#include <cmath>
#include <filesystem>

using namespace forge;
using namespace forge::clf;
namespace fs = std::filesystem;

namespace {

MlpParams random_params(int in_dim, int h1, int h2, int labels, std::uint64_t seed,
                        double scale = 0.5) {
    Rng rng(seed);
    auto params = MlpParams::zeros(in_dim, h1, h2, labels);
    for (auto* tensor : {&params.w1, &params.b1, &params.w2, &params.b2, &params.w3, &params.b3}) {
        for (auto& value : *tensor) {
            value = rng.gaussian() * scale;
        }
    }
    return params;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (auto& value : m.data) {
        value = rng.gaussian();
    }
    return m;
}

Matrix random_multi_hot(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (auto& value : m.data) {
        value = rng.bounded(3) == 0 ? 1.0 : 0.0;
    }
    return m;
}

// Independent oracle: per-output dot products in a different loop order with
// long double accumulation. Deliberately shares no code with forward().
std::vector<double> naive_forward(const MlpParams& p, const std::vector<double>& x) {
    auto layer = [](const std::vector<double>& in, const std::vector<double>& w,
                    const std::vector<double>& b, bool relu) {
        std::vector<double> out(b.size());
        for (std::size_t o = 0; o < b.size(); ++o) {
            long double acc = 0.0L;
            for (std::size_t i = in.size(); i > 0; --i) {
                acc += static_cast<long double>(w[o * in.size() + (i - 1)]) * in[i - 1];
            }
            acc += b[o];
            double value = static_cast<double>(acc);
            out[o] = relu && value < 0.0 ? 0.0 : value;
        }
        return out;
    };
    auto h1 = layer(x, p.w1, p.b1, true);
    auto h2 = layer(h1, p.w2, p.b2, true);
    auto z3 = layer(h2, p.w3, p.b3, false);
    for (auto& value : z3) {
        value = 1.0 / (1.0 + std::exp(-value));
    }
    return z3;
}

// 3 well-separated clusters in `dim` dimensions over a 5-label universe.
std::vector<EmbeddingRecord> separable_clusters(int points, int dim, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<float>> centers(3);
    for (auto& center : centers) {
        center.resize(dim);
        for (auto& value : center) {
            value = static_cast<float>(rng.gaussian() * 4.0);
        }
    }
    const std::vector<std::vector<const char*>> cluster_labels = {
        {"CWE-79", "CWE-125"}, {"CWE-416", "CWE-787"}, {"CWE-20"}};
    std::vector<EmbeddingRecord> records;
    for (int i = 0; i < points; ++i) {
        int cluster = i % 3;
        EmbeddingRecord record;
        record.id = "p" + std::to_string(i);
        record.vec.resize(dim);
        for (int d = 0; d < dim; ++d) {
            record.vec[d] = centers[cluster][d] + static_cast<float>(rng.gaussian() * 0.1);
        }
        for (const char* label : cluster_labels[cluster]) {
            record.labels.insert(*CweLabel::parse(label));
        }
        records.push_back(std::move(record));
    }
    return records;
}

} // namespace

TEST_CASE("forward: all-zero parameters give 0.5 everywhere") {
    auto params = MlpParams::zeros(8, 4, 3, 5);
    auto probs = forward(params, std::vector<double>(8, 1.25));
    REQUIRE(probs.size() == 5);
    for (double p : probs) {
        CHECK(p == 0.5);
    }
}

TEST_CASE("forward: large positive output bias saturates toward 1") {
    auto params = MlpParams::zeros(4, 3, 3, 2);
    for (auto& b : params.b3) {
        b = 30.0;
    }
    auto probs = forward(params, std::vector<double>(4, 0.0));
    for (double p : probs) {
        CHECK(p > 0.999999);
    }
}

TEST_CASE("forward matches the naive oracle to 1e-6 on random instances") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto params = random_params(12, 9, 7, 5, seed);
        Rng rng(seed + 1000);
        std::vector<double> x(12);
        for (auto& value : x) {
            value = rng.gaussian();
        }
        auto expected = naive_forward(params, x);
        auto actual = forward(params, x);
        REQUIRE(actual.size() == expected.size());
        for (std::size_t i = 0; i < actual.size(); ++i) {
            CHECK(std::abs(actual[i] - expected[i]) < 1e-6);
        }
    }
}

TEST_CASE("forward: shape mismatches are fatal") {
    auto params = MlpParams::zeros(8, 4, 3, 5);
    CHECK_THROWS_AS(forward(params, std::vector<double>(7, 0.0)), ValidationError);
    params.w2.pop_back();
    CHECK_THROWS_AS(forward(params, std::vector<double>(8, 0.0)), ValidationError);
}

TEST_CASE("gradient check: analytic gradients match central differences") {
    auto params = random_params(10, 8, 6, 4, 42, 0.4);
    auto x = random_matrix(6, 10, 7);
    auto y = random_multi_hot(6, 4, 8);
    Rng rng(21);
    double max_rel = gradient_check(params, x, y, 150, 1e-4, rng);
    CHECK(max_rel < 1e-4);
}

TEST_CASE("gradient check: a corrupted W2 gradient is detected") {
    auto params = random_params(10, 8, 6, 4, 42, 0.4);
    auto x = random_matrix(6, 10, 7);
    auto y = random_multi_hot(6, 4, 8);
    Grads grads;
    bce_loss_and_grads(params, x, y, grads);
    for (auto& g : grads.w2) {
        g *= 1.5;
    }
    Rng rng(21);
    double max_rel = gradient_check(params, x, y, 150, 1e-4, rng, &grads);
    CHECK(max_rel > 1e-2);
}

TEST_CASE("gradient check: zero-weight operating point agrees too") {
    auto params = MlpParams::zeros(6, 4, 3, 2);
    auto x = random_matrix(4, 6, 3);
    auto y = random_multi_hot(4, 2, 4);
    Rng rng(9);
    // at sigma(0) the loss surface is smooth in the output layer; relu units
    // sit exactly on the kink, so only sample the output tensors
    Grads analytic;
    bce_loss_and_grads(params, x, y, analytic);
    MlpParams probe = params;
    double max_rel = 0.0;
    for (std::size_t coord = 0; coord < probe.b3.size(); ++coord) {
        probe.b3[coord] = 1e-4;
        double plus = bce_loss(probe, x, y);
        probe.b3[coord] = -1e-4;
        double minus = bce_loss(probe, x, y);
        probe.b3[coord] = 0.0;
        double numeric = (plus - minus) / 2e-4;
        double rel = std::abs(analytic.b3[coord] - numeric) /
                     std::max(std::abs(analytic.b3[coord]) + std::abs(numeric), 1e-8);
        max_rel = std::max(max_rel, rel);
    }
    CHECK(max_rel < 1e-4);
}

TEST_CASE("training separates linearly separable synthetic clusters") {
    auto records = separable_clusters(120, 16, 5);
    LabelSpace space = LabelSpace::from_records(records);
    auto data = DenseData::build(records, space);
    Hyperparams hypers;
    hypers.hidden1 = 16;
    hypers.hidden2 = 8;
    hypers.learning_rate = 0.01;
    hypers.batch_size = 16;
    hypers.epochs = 60;
    hypers.patience = 0; // no validation set here
    auto trained = train(data, {}, hypers, 1);
    auto probs = forward_batch(trained.params, data.x);
    auto score = score_thresholded(probs, data.y, 0.5);
    CHECK(score.f1 >= 0.95);
}

TEST_CASE("a single training point is memorized (loss -> ~0)") {
    auto records = separable_clusters(1, 8, 2);
    LabelSpace space = LabelSpace::from_records(records);
    auto data = DenseData::build(records, space);
    Hyperparams hypers;
    hypers.hidden1 = 8;
    hypers.hidden2 = 4;
    hypers.learning_rate = 0.05;
    hypers.epochs = 800;
    hypers.batch_size = 1;
    hypers.patience = 0;
    auto trained = train(data, {}, hypers, 3);
    CHECK(bce_loss(trained.params, data.x, data.y) < 0.01);
}

TEST_CASE("training is deterministic in the seed") {
    auto records = separable_clusters(60, 12, 8);
    LabelSpace space = LabelSpace::from_records(records);
    auto data = DenseData::build(records, space);
    Hyperparams hypers;
    hypers.hidden1 = 10;
    hypers.hidden2 = 6;
    hypers.epochs = 5;
    hypers.patience = 0;
    auto first = train(data, {}, hypers, 17);
    auto second = train(data, {}, hypers, 17);
    CHECK(first.params.w1 == second.params.w1);
    CHECK(first.params.w2 == second.params.w2);
    CHECK(first.params.w3 == second.params.w3);
    CHECK(first.params.b3 == second.params.b3);

    auto different = train(data, {}, hypers, 18);
    CHECK(first.params.w1 != different.params.w1);
}

TEST_CASE("threshold selection: singleton grid, brute-force argmax, tie rule") {
    auto records = separable_clusters(90, 12, 4);
    LabelSpace space = LabelSpace::from_records(records);
    auto data = DenseData::build(records, space);
    Hyperparams hypers;
    hypers.hidden1 = 10;
    hypers.hidden2 = 6;
    hypers.epochs = 10;
    hypers.patience = 0;
    auto trained = train(data, {}, hypers, 6);

    CHECK(select_threshold(trained.params, data.x, data.y, {0.5}) == 0.5);

    auto grid = default_threshold_grid();
    double chosen = select_threshold(trained.params, data.x, data.y, grid);
    // brute force over the same grid
    auto probs = forward_batch(trained.params, data.x);
    double best_f1 = -1.0;
    double best_threshold = grid.front();
    for (double threshold : grid) {
        double f1 = score_thresholded(probs, data.y, threshold).f1;
        if (f1 > best_f1) {
            best_f1 = f1;
            best_threshold = threshold;
        }
    }
    CHECK(chosen == best_threshold);

    // all-identical F1 (zero params: every prob 0.5) resolves to the grid minimum
    auto flat = MlpParams::zeros(12, 4, 3, static_cast<int>(space.labels.size()));
    CHECK(select_threshold(flat, data.x, data.y, {0.3, 0.4, 0.45}) == 0.3);
}

TEST_CASE("evaluate_runs: multi-run summary on separable data") {
    auto records = separable_clusters(150, 12, 10);
    DataSplits splits = make_splits({records.begin(), records.begin() + 120},
                                    {records.begin() + 120, records.end()}, 0.15, 4);
    CHECK(splits.val.size() >= 1);
    Hyperparams hypers;
    hypers.hidden1 = 12;
    hypers.hidden2 = 6;
    hypers.learning_rate = 0.01;
    hypers.batch_size = 16;
    hypers.epochs = 30;
    hypers.patience = 5;
    auto summary = evaluate_runs(splits, hypers, 4, 100, default_threshold_grid(), 2);
    REQUIRE(summary.per_run.size() == 4);
    CHECK(summary.mean_f1 > 0.9);
    CHECK_FALSE(summary.std_undefined);
    CHECK(summary.std_f1 >= 0.0);

    // mean and sample std recompute exactly from the per-run values
    double mean = 0.0;
    for (const auto& score : summary.per_run) {
        mean += score.f1;
    }
    mean /= static_cast<double>(summary.per_run.size());
    double ss = 0.0;
    for (const auto& score : summary.per_run) {
        ss += (score.f1 - mean) * (score.f1 - mean);
    }
    double std_dev = std::sqrt(ss / static_cast<double>(summary.per_run.size() - 1));
    CHECK(summary.mean_f1 == mean);
    CHECK(summary.std_f1 == std_dev);

    // runs=1: std undefined, reported as 0 with the flag set
    auto single = evaluate_runs(splits, hypers, 1, 100);
    CHECK(single.std_undefined);
    CHECK(single.std_f1 == 0.0);

    // determinism: the same base seed reproduces the same scores, so the
    // spread over forced-identical runs is exactly zero
    auto replay = evaluate_runs(splits, hypers, 1, 100);
    CHECK(replay.per_run[0].f1 == single.per_run[0].f1);
    CHECK(replay.per_run[0].precision == single.per_run[0].precision);
}

TEST_CASE("unseen gold labels at test time count as false negatives") {
    auto records = separable_clusters(90, 12, 11);
    // test record carries a label absent from the training universe
    EmbeddingRecord oddball = records.front();
    oddball.id = "oddball";
    oddball.labels.insert(*CweLabel::parse("CWE-9999"));
    DataSplits splits = make_splits({records.begin(), records.begin() + 80}, {oddball}, 0.1, 1);

    Hyperparams hypers;
    hypers.hidden1 = 12;
    hypers.hidden2 = 6;
    hypers.learning_rate = 0.01;
    hypers.batch_size = 16;
    hypers.epochs = 20;
    hypers.patience = 5;
    auto summary = evaluate_runs(splits, hypers, 1, 5);
    REQUIRE(summary.per_run.size() == 1);
    CHECK(summary.per_run[0].fn >= 1); // CWE-9999 can never be predicted
    CHECK(summary.per_run[0].recall < 1.0);
}

TEST_CASE("embedding jsonl and cfem round trips with validation") {
    std::vector<EmbeddingRecord> records;
    for (int i = 0; i < 5; ++i) {
        EmbeddingRecord record;
        record.id = "e" + std::to_string(i);
        record.vec = toy_embedding(record.id, 32);
        if (i % 2 == 0) {
            record.labels.insert(*CweLabel::parse("CWE-79"));
        }
        records.push_back(std::move(record));
    }

    auto jsonl_path = fs::temp_directory_path() / "forge-emb.jsonl";
    write_embeddings_jsonl(jsonl_path, records);
    auto parsed = read_embeddings_jsonl(jsonl_path, 32);
    REQUIRE(parsed.size() == records.size());
    CHECK(parsed[0].vec == records[0].vec);
    CHECK(parsed[0].labels == records[0].labels);
    CHECK_THROWS_AS(read_embeddings_jsonl(jsonl_path, 64), ValidationError);

    auto cfem_path = fs::temp_directory_path() / "forge-emb.cfem";
    write_embeddings_cfem(cfem_path, records, 32);
    auto binary = read_embeddings_cfem(cfem_path, 32);
    REQUIRE(binary.size() == records.size());
    CHECK(binary[2].vec == records[2].vec);
    CHECK(binary[2].id == records[2].id);
    CHECK(binary[2].labels == records[2].labels);
    CHECK_THROWS_AS(read_embeddings_cfem(cfem_path, 16), ValidationError);
    CHECK_THROWS_AS(read_embeddings_cfem(jsonl_path, 32), ValidationError); // wrong magic

    fs::remove(jsonl_path);
    fs::remove(cfem_path);
}

TEST_CASE("toy embeddings are deterministic per key") {
    CHECK(toy_embedding("sample-1", 64) == toy_embedding("sample-1", 64));
    CHECK(toy_embedding("sample-1", 64) != toy_embedding("sample-2", 64));
}

TEST_CASE("run summary table formats percent with spread") {
    RunSummary summary;
    summary.per_run = {vd::VdScore{}, vd::VdScore{}};
    summary.thresholds = {0.5, 0.5};
    summary.mean_f1 = 0.1707;
    summary.std_f1 = 0.0154;
    auto table = summary.to_table();
    CHECK(table.find("17.07") != std::string::npos);
    CHECK(table.find("1.54") != std::string::npos);
    CHECK(table.find("±") != std::string::npos);
}
