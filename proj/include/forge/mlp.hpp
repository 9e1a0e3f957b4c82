#pragma once

#include "forge/common.hpp"
#include "forge/cwe.hpp"
#include "forge/vd_eval.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace forge::clf {

/// Dimensionality of the ingested assembly embeddings.
constexpr int kEmbeddingDim = 4096;

struct EmbeddingRecord {
    std::string id;
    std::vector<float> vec;
    CweSet labels;
};

// --- embedding files -------------------------------------------------------

/// JSONL rows {"id", "labels", "vec"}. Vector length and finiteness are
/// validated against expect_dim.
std::vector<EmbeddingRecord> read_embeddings_jsonl(const std::filesystem::path& path,
                                                   int expect_dim = kEmbeddingDim);
void write_embeddings_jsonl(const std::filesystem::path& path,
                            const std::vector<EmbeddingRecord>& records);

/// Compact binary form: magic "CFEM", u32 dim, u32 count, count*dim
/// little-endian f32 row-major, then u32 footer length + JSON footer
/// [{"id","labels"}...].
void write_embeddings_cfem(const std::filesystem::path& path,
                           const std::vector<EmbeddingRecord>& records, int dim = kEmbeddingDim);
std::vector<EmbeddingRecord> read_embeddings_cfem(const std::filesystem::path& path,
                                                  int expect_dim = kEmbeddingDim);

/// Deterministic pseudo-embedding of a text key (unit-variance gaussian
/// entries seeded from the key hash). Stands in for real LLM features in
/// tests and dry runs.
std::vector<float> toy_embedding(std::string_view key, int dim = kEmbeddingDim);

// --- model ------------------------------------------------------------------

/// Two-hidden-layer MLP over embeddings: sigmoid(W3 relu(W2 relu(W1 x + b1)
/// + b2) + b3), one output per label.
struct MlpParams {
    int in_dim = 0;
    int hidden1 = 0;
    int hidden2 = 0;
    int label_count = 0;
    // row-major [out][in]
    std::vector<double> w1, b1, w2, b2, w3, b3;
    double threshold = 0.5;

    static MlpParams zeros(int in_dim, int hidden1, int hidden2, int label_count);
    std::size_t parameter_count() const;
};

struct Hyperparams {
    int hidden1 = 1024;
    int hidden2 = 256;
    double learning_rate = 1e-3;
    int batch_size = 64;
    int epochs = 50;
    int patience = 5; // early stop on validation F1; <=0 disables
};

/// Dense row-major matrix of doubles; rows are samples.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }
};

/// Label universe fixed by the training data: sorted distinct CWE ids.
struct LabelSpace {
    std::vector<CweLabel> labels;
    int index_of(const CweLabel& label) const; // -1 when absent

    static LabelSpace from_records(const std::vector<EmbeddingRecord>& records);
};

/// Dense training view of a record list under a label space. Labels outside
/// the space are dropped from Y (they still count as false negatives at
/// scoring time).
struct DenseData {
    Matrix x;
    Matrix y; // multi-hot
    static DenseData build(const std::vector<EmbeddingRecord>& records, const LabelSpace& space);
};

std::vector<double> forward(const MlpParams& params, const std::vector<double>& input);
Matrix forward_batch(const MlpParams& params, const Matrix& inputs);

struct Grads {
    std::vector<double> w1, b1, w2, b2, w3, b3;
    static Grads zeros_like(const MlpParams& params);
};

/// Mean binary cross-entropy over (batch x labels) plus analytic gradients.
double bce_loss_and_grads(const MlpParams& params, const Matrix& x, const Matrix& y, Grads& grads);
double bce_loss(const MlpParams& params, const Matrix& x, const Matrix& y);

/// Max relative error between analytic gradients and central finite
/// differences (step h) on >= min_coords sampled coordinates spread over all
/// tensors. Pass `analytic_override` to check someone else's gradients.
double gradient_check(const MlpParams& params, const Matrix& x, const Matrix& y,
                      std::size_t min_coords, double step, Rng& rng,
                      const Grads* analytic_override = nullptr);

struct TrainResult {
    MlpParams params;
    std::vector<double> epoch_losses;
    int best_epoch = -1; // epoch whose snapshot was kept (early stopping)
};

/// Adam on mean BCE, deterministic in `seed` (init + batch order). When a
/// validation set is given, keeps the snapshot with the best validation
/// micro F1 at threshold 0.5 and stops after `patience` stale epochs.
TrainResult train(const DenseData& train_data, const DenseData& val_data,
                  const Hyperparams& hypers, std::uint64_t seed);

/// Grid value maximizing validation micro F1; ties resolve to the smallest
/// threshold.
double select_threshold(const MlpParams& params, const Matrix& val_x, const Matrix& val_y,
                        const std::vector<double>& grid);

/// Micro F1/P/R of thresholded probabilities against multi-hot truth.
vd::VdScore score_thresholded(const Matrix& probs, const Matrix& y, double threshold);

std::vector<double> default_threshold_grid(); // 0.05 .. 0.95 step 0.05

struct DataSplits {
    std::vector<EmbeddingRecord> train;
    std::vector<EmbeddingRecord> val;
    std::vector<EmbeddingRecord> test;
};

/// Carves a seeded, label-stratified-where-possible validation split off the
/// front split (fraction of train, at least 1 record when train nonempty).
DataSplits make_splits(std::vector<EmbeddingRecord> train, std::vector<EmbeddingRecord> test,
                       double val_fraction, std::uint64_t seed);

struct RunSummary {
    std::vector<vd::VdScore> per_run;
    std::vector<double> thresholds;
    double mean_f1 = 0, std_f1 = 0;
    double mean_precision = 0, std_precision = 0;
    double mean_recall = 0, std_recall = 0;
    bool std_undefined = false; // single run: std reported as 0 with this flag

    std::string to_table() const; // "F1 17.07 ± 1.54" style rows
    std::string to_json() const;
};

/// Trains `runs` models with seeds base_seed..base_seed+runs-1, selects a
/// threshold per run on the validation set, scores the test set through
/// vd::micro_scores, and reports mean ± sample std. Runs execute in
/// parallel; results are merged by run index.
RunSummary evaluate_runs(const DataSplits& splits, const Hyperparams& hypers, int runs,
                         std::uint64_t base_seed,
                         const std::vector<double>& grid = default_threshold_grid(),
                         int parallelism = 0);

} // namespace forge::clf
