#include "forge/mlp.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace forge::clf {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Embedding IO

namespace {

void validate_vector(const std::vector<float>& vec, int expect_dim, const std::string& id) {
    if (static_cast<int>(vec.size()) != expect_dim) {
        throw ValidationError("embedding '" + id + "' has dimension " +
                              std::to_string(vec.size()) + ", expected " +
                              std::to_string(expect_dim));
    }
    for (float value : vec) {
        if (!std::isfinite(value)) {
            throw ValidationError("embedding '" + id + "' contains a non-finite entry");
        }
    }
}

CweSet labels_from_json(const json& array) {
    CweSet labels;
    for (const auto& item : array) {
        auto label = CweLabel::parse(item.get<std::string>());
        if (!label) {
            throw ValidationError("bad CWE label in embedding record: " +
                                  item.get<std::string>());
        }
        labels.insert(*label);
    }
    return labels;
}

} // namespace

std::vector<EmbeddingRecord> read_embeddings_jsonl(const std::filesystem::path& path,
                                                   int expect_dim) {
    std::vector<EmbeddingRecord> records;
    for_each_line(path, [&](std::size_t lineno, std::string_view line) {
        auto row = json::parse(line, nullptr, false);
        if (row.is_discarded() || !row.contains("id") || !row.contains("vec")) {
            throw ValidationError("bad embedding row at line " + std::to_string(lineno) + " of " +
                                  path.string());
        }
        EmbeddingRecord record;
        record.id = row["id"].get<std::string>();
        record.vec = row["vec"].get<std::vector<float>>();
        record.labels = labels_from_json(row.value("labels", json::array()));
        validate_vector(record.vec, expect_dim, record.id);
        records.push_back(std::move(record));
    });
    return records;
}

void write_embeddings_jsonl(const std::filesystem::path& path,
                            const std::vector<EmbeddingRecord>& records) {
    std::string out;
    for (const auto& record : records) {
        json row;
        row["id"] = record.id;
        json labels = json::array();
        for (const auto& label : record.labels) {
            labels.push_back(label.id());
        }
        row["labels"] = labels;
        row["vec"] = record.vec;
        out += row.dump();
        out += '\n';
    }
    write_text_file(path, out);
}

namespace {

constexpr char kCfemMagic[4] = {'C', 'F', 'E', 'M'};

void put_u32(std::string& out, std::uint32_t value) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
    }
}

std::uint32_t get_u32(const std::string& data, std::size_t offset) {
    std::uint32_t value = 0;
    for (int i = 0; i < 4; ++i) {
        value |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[offset + i]))
                 << (8 * i);
    }
    return value;
}

} // namespace

void write_embeddings_cfem(const std::filesystem::path& path,
                           const std::vector<EmbeddingRecord>& records, int dim) {
    std::string out;
    out.append(kCfemMagic, 4);
    put_u32(out, static_cast<std::uint32_t>(dim));
    put_u32(out, static_cast<std::uint32_t>(records.size()));
    for (const auto& record : records) {
        validate_vector(record.vec, dim, record.id);
        static_assert(sizeof(float) == 4);
        out.append(reinterpret_cast<const char*>(record.vec.data()), record.vec.size() * 4);
    }
    json footer = json::array();
    for (const auto& record : records) {
        json labels = json::array();
        for (const auto& label : record.labels) {
            labels.push_back(label.id());
        }
        footer.push_back({{"id", record.id}, {"labels", labels}});
    }
    std::string footer_text = footer.dump();
    put_u32(out, static_cast<std::uint32_t>(footer_text.size()));
    out += footer_text;
    write_text_file(path, out);
}

std::vector<EmbeddingRecord> read_embeddings_cfem(const std::filesystem::path& path,
                                                  int expect_dim) {
    std::string data = read_text_file(path);
    if (data.size() < 12 || std::memcmp(data.data(), kCfemMagic, 4) != 0) {
        throw ValidationError("not a CFEM embedding file: " + path.string());
    }
    std::uint32_t dim = get_u32(data, 4);
    std::uint32_t count = get_u32(data, 8);
    if (static_cast<int>(dim) != expect_dim) {
        throw ValidationError("CFEM file " + path.string() + " has dimension " +
                              std::to_string(dim) + ", expected " + std::to_string(expect_dim));
    }
    std::size_t matrix_bytes = static_cast<std::size_t>(dim) * count * 4;
    if (data.size() < 12 + matrix_bytes + 4) {
        throw ValidationError("truncated CFEM file: " + path.string());
    }
    std::uint32_t footer_len = get_u32(data, 12 + matrix_bytes);
    if (data.size() < 16 + matrix_bytes + footer_len) {
        throw ValidationError("truncated CFEM footer: " + path.string());
    }
    auto footer = json::parse(data.substr(16 + matrix_bytes, footer_len));
    if (footer.size() != count) {
        throw ValidationError("CFEM footer row count mismatch in " + path.string());
    }
    std::vector<EmbeddingRecord> records(count);
    for (std::uint32_t r = 0; r < count; ++r) {
        records[r].id = footer[r].at("id").get<std::string>();
        records[r].labels = labels_from_json(footer[r].value("labels", json::array()));
        records[r].vec.resize(dim);
        std::memcpy(records[r].vec.data(), data.data() + 12 + static_cast<std::size_t>(r) * dim * 4,
                    static_cast<std::size_t>(dim) * 4);
        validate_vector(records[r].vec, expect_dim, records[r].id);
    }
    return records;
}

std::vector<float> toy_embedding(std::string_view key, int dim) {
    Rng rng(fnv1a64(key));
    std::vector<float> vec(static_cast<std::size_t>(dim));
    for (auto& value : vec) {
        value = static_cast<float>(rng.gaussian());
    }
    return vec;
}

// ---------------------------------------------------------------------------
// Model

MlpParams MlpParams::zeros(int in_dim, int hidden1, int hidden2, int label_count) {
    MlpParams params;
    params.in_dim = in_dim;
    params.hidden1 = hidden1;
    params.hidden2 = hidden2;
    params.label_count = label_count;
    params.w1.assign(static_cast<std::size_t>(hidden1) * in_dim, 0.0);
    params.b1.assign(hidden1, 0.0);
    params.w2.assign(static_cast<std::size_t>(hidden2) * hidden1, 0.0);
    params.b2.assign(hidden2, 0.0);
    params.w3.assign(static_cast<std::size_t>(label_count) * hidden2, 0.0);
    params.b3.assign(label_count, 0.0);
    return params;
}

std::size_t MlpParams::parameter_count() const {
    return w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + b3.size();
}

Grads Grads::zeros_like(const MlpParams& params) {
    Grads grads;
    grads.w1.assign(params.w1.size(), 0.0);
    grads.b1.assign(params.b1.size(), 0.0);
    grads.w2.assign(params.w2.size(), 0.0);
    grads.b2.assign(params.b2.size(), 0.0);
    grads.w3.assign(params.w3.size(), 0.0);
    grads.b3.assign(params.b3.size(), 0.0);
    return grads;
}

int LabelSpace::index_of(const CweLabel& label) const {
    auto it = std::lower_bound(labels.begin(), labels.end(), label);
    if (it != labels.end() && *it == label) {
        return static_cast<int>(it - labels.begin());
    }
    return -1;
}

LabelSpace LabelSpace::from_records(const std::vector<EmbeddingRecord>& records) {
    CweSet all;
    for (const auto& record : records) {
        all.insert(record.labels.begin(), record.labels.end());
    }
    LabelSpace space;
    space.labels.assign(all.begin(), all.end());
    return space;
}

DenseData DenseData::build(const std::vector<EmbeddingRecord>& records, const LabelSpace& space) {
    DenseData data;
    std::size_t dim = records.empty() ? 0 : records.front().vec.size();
    data.x = Matrix(records.size(), dim);
    data.y = Matrix(records.size(), space.labels.size());
    for (std::size_t r = 0; r < records.size(); ++r) {
        if (records[r].vec.size() != dim) {
            throw ValidationError("embedding dimension mismatch inside one dataset");
        }
        for (std::size_t c = 0; c < dim; ++c) {
            data.x.row(r)[c] = records[r].vec[c];
        }
        for (const auto& label : records[r].labels) {
            int idx = space.index_of(label);
            if (idx >= 0) {
                data.y.row(r)[idx] = 1.0;
            }
            // labels outside the training universe are not representable;
            // they surface as false negatives at scoring time
        }
    }
    return data;
}

namespace {

void check_shapes(const MlpParams& params) {
    if (params.w1.size() != static_cast<std::size_t>(params.hidden1) * params.in_dim ||
        params.b1.size() != static_cast<std::size_t>(params.hidden1) ||
        params.w2.size() != static_cast<std::size_t>(params.hidden2) * params.hidden1 ||
        params.b2.size() != static_cast<std::size_t>(params.hidden2) ||
        params.w3.size() != static_cast<std::size_t>(params.label_count) * params.hidden2 ||
        params.b3.size() != static_cast<std::size_t>(params.label_count)) {
        throw ValidationError("MlpParams shapes are inconsistent");
    }
}

inline double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// out[b][o] = dot(in.row(b), w.row(o)) + bias[o], then optional relu
void linear_forward(const Matrix& in, const std::vector<double>& w, const std::vector<double>& b,
                    Matrix& out, bool relu) {
    std::size_t out_dim = b.size();
    for (std::size_t row = 0; row < in.rows; ++row) {
        const double* x = in.row(row);
        double* y = out.row(row);
        for (std::size_t o = 0; o < out_dim; ++o) {
            const double* wr = w.data() + o * in.cols;
            double acc = b[o];
            for (std::size_t c = 0; c < in.cols; ++c) {
                acc += wr[c] * x[c];
            }
            y[o] = relu && acc < 0.0 ? 0.0 : acc;
        }
    }
}

struct ForwardCache {
    Matrix h1; // post-relu
    Matrix h2; // post-relu
    Matrix z3; // logits
};

ForwardCache forward_cached(const MlpParams& params, const Matrix& x) {
    ForwardCache cache;
    cache.h1 = Matrix(x.rows, static_cast<std::size_t>(params.hidden1));
    cache.h2 = Matrix(x.rows, static_cast<std::size_t>(params.hidden2));
    cache.z3 = Matrix(x.rows, static_cast<std::size_t>(params.label_count));
    linear_forward(x, params.w1, params.b1, cache.h1, true);
    linear_forward(cache.h1, params.w2, params.b2, cache.h2, true);
    linear_forward(cache.h2, params.w3, params.b3, cache.z3, false);
    return cache;
}

} // namespace

std::vector<double> forward(const MlpParams& params, const std::vector<double>& input) {
    check_shapes(params);
    if (input.size() != static_cast<std::size_t>(params.in_dim)) {
        throw ValidationError("forward: input has dimension " + std::to_string(input.size()) +
                              ", expected " + std::to_string(params.in_dim));
    }
    Matrix x(1, input.size());
    std::copy(input.begin(), input.end(), x.row(0));
    Matrix probs = forward_batch(params, x);
    return {probs.data.begin(), probs.data.end()};
}

Matrix forward_batch(const MlpParams& params, const Matrix& inputs) {
    check_shapes(params);
    if (inputs.cols != static_cast<std::size_t>(params.in_dim)) {
        throw ValidationError("forward_batch: input dimension mismatch");
    }
    ForwardCache cache = forward_cached(params, inputs);
    Matrix probs(inputs.rows, static_cast<std::size_t>(params.label_count));
    for (std::size_t i = 0; i < probs.data.size(); ++i) {
        probs.data[i] = sigmoid(cache.z3.data[i]);
    }
    return probs;
}

double bce_loss(const MlpParams& params, const Matrix& x, const Matrix& y) {
    ForwardCache cache = forward_cached(params, x);
    double loss = 0.0;
    for (std::size_t i = 0; i < cache.z3.data.size(); ++i) {
        double z = cache.z3.data[i];
        double target = y.data[i];
        // stable: max(z,0) - z*y + log(1 + exp(-|z|))
        loss += std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
    }
    return loss / static_cast<double>(cache.z3.data.size());
}

double bce_loss_and_grads(const MlpParams& params, const Matrix& x, const Matrix& y,
                          Grads& grads) {
    check_shapes(params);
    if (y.rows != x.rows || y.cols != static_cast<std::size_t>(params.label_count)) {
        throw ValidationError("bce_loss_and_grads: label matrix shape mismatch");
    }
    ForwardCache cache = forward_cached(params, x);
    std::size_t batch = x.rows;
    std::size_t total = cache.z3.data.size();

    double loss = 0.0;
    Matrix dz3(batch, static_cast<std::size_t>(params.label_count));
    for (std::size_t i = 0; i < total; ++i) {
        double z = cache.z3.data[i];
        double target = y.data[i];
        loss += std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
        dz3.data[i] = (sigmoid(z) - target) / static_cast<double>(total);
    }
    loss /= static_cast<double>(total);

    grads = Grads::zeros_like(params);

    // layer 3
    for (std::size_t b = 0; b < batch; ++b) {
        const double* h2 = cache.h2.row(b);
        const double* dz = dz3.row(b);
        for (int o = 0; o < params.label_count; ++o) {
            double g = dz[o];
            if (g == 0.0) continue;
            grads.b3[static_cast<std::size_t>(o)] += g;
            double* wrow = grads.w3.data() + static_cast<std::size_t>(o) * params.hidden2;
            for (int i = 0; i < params.hidden2; ++i) {
                wrow[i] += g * h2[i];
            }
        }
    }

    // dh2 = dz3 * W3, masked by relu'
    Matrix dz2(batch, static_cast<std::size_t>(params.hidden2));
    for (std::size_t b = 0; b < batch; ++b) {
        const double* dz = dz3.row(b);
        const double* h2 = cache.h2.row(b);
        double* out = dz2.row(b);
        for (int o = 0; o < params.label_count; ++o) {
            double g = dz[o];
            if (g == 0.0) continue;
            const double* wrow = params.w3.data() + static_cast<std::size_t>(o) * params.hidden2;
            for (int i = 0; i < params.hidden2; ++i) {
                out[i] += g * wrow[i];
            }
        }
        for (int i = 0; i < params.hidden2; ++i) {
            if (h2[i] <= 0.0) {
                out[i] = 0.0;
            }
        }
    }

    // layer 2
    for (std::size_t b = 0; b < batch; ++b) {
        const double* h1 = cache.h1.row(b);
        const double* dz = dz2.row(b);
        for (int o = 0; o < params.hidden2; ++o) {
            double g = dz[o];
            if (g == 0.0) continue;
            grads.b2[static_cast<std::size_t>(o)] += g;
            double* wrow = grads.w2.data() + static_cast<std::size_t>(o) * params.hidden1;
            for (int i = 0; i < params.hidden1; ++i) {
                wrow[i] += g * h1[i];
            }
        }
    }

    // dh1 = dz2 * W2, masked
    Matrix dz1(batch, static_cast<std::size_t>(params.hidden1));
    for (std::size_t b = 0; b < batch; ++b) {
        const double* dz = dz2.row(b);
        const double* h1 = cache.h1.row(b);
        double* out = dz1.row(b);
        for (int o = 0; o < params.hidden2; ++o) {
            double g = dz[o];
            if (g == 0.0) continue;
            const double* wrow = params.w2.data() + static_cast<std::size_t>(o) * params.hidden1;
            for (int i = 0; i < params.hidden1; ++i) {
                out[i] += g * wrow[i];
            }
        }
        for (int i = 0; i < params.hidden1; ++i) {
            if (h1[i] <= 0.0) {
                out[i] = 0.0;
            }
        }
    }

    // layer 1
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xrow = x.row(b);
        const double* dz = dz1.row(b);
        for (int o = 0; o < params.hidden1; ++o) {
            double g = dz[o];
            if (g == 0.0) continue;
            grads.b1[static_cast<std::size_t>(o)] += g;
            double* wrow = grads.w1.data() + static_cast<std::size_t>(o) * params.in_dim;
            for (int i = 0; i < params.in_dim; ++i) {
                wrow[i] += g * xrow[i];
            }
        }
    }
    return loss;
}

namespace {

std::vector<std::vector<double>*> tensor_list(MlpParams& params) {
    return {&params.w1, &params.b1, &params.w2, &params.b2, &params.w3, &params.b3};
}

std::vector<const std::vector<double>*> tensor_list(const Grads& grads) {
    return {&grads.w1, &grads.b1, &grads.w2, &grads.b2, &grads.w3, &grads.b3};
}

} // namespace

double gradient_check(const MlpParams& params, const Matrix& x, const Matrix& y,
                      std::size_t min_coords, double step, Rng& rng,
                      const Grads* analytic_override) {
    Grads analytic;
    bce_loss_and_grads(params, x, y, analytic);
    if (analytic_override != nullptr) {
        analytic = *analytic_override;
    }

    MlpParams probe = params;
    auto probe_tensors = tensor_list(probe);
    auto grad_tensors = tensor_list(analytic);

    double max_rel = 0.0;
    std::size_t checked = 0;
    // round-robin over tensors so every layer gets sampled
    while (checked < min_coords) {
        for (std::size_t t = 0; t < probe_tensors.size() && checked < min_coords; ++t) {
            auto& tensor = *probe_tensors[t];
            if (tensor.empty()) continue;
            std::size_t coord = static_cast<std::size_t>(rng.bounded(tensor.size()));
            double original = tensor[coord];
            tensor[coord] = original + step;
            double loss_plus = bce_loss(probe, x, y);
            tensor[coord] = original - step;
            double loss_minus = bce_loss(probe, x, y);
            tensor[coord] = original;

            double numeric = (loss_plus - loss_minus) / (2.0 * step);
            double a = (*grad_tensors[t])[coord];
            double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-8);
            max_rel = std::max(max_rel, rel);
            ++checked;
        }
    }
    return max_rel;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct AdamState {
    std::vector<double> m, v;
    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

void adam_update(std::vector<double>& param, const std::vector<double>& grad, AdamState& state,
                 double lr, std::uint64_t t) {
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < param.size(); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        param[i] -= lr * (state.m[i] / bc1) / (std::sqrt(state.v[i] / bc2) + eps);
    }
}

Matrix take_rows(const Matrix& source, const std::vector<std::size_t>& order, std::size_t begin,
                 std::size_t end) {
    Matrix out(end - begin, source.cols);
    for (std::size_t i = begin; i < end; ++i) {
        std::copy(source.row(order[i]), source.row(order[i]) + source.cols, out.row(i - begin));
    }
    return out;
}

} // namespace

vd::VdScore score_thresholded(const Matrix& probs, const Matrix& y, double threshold) {
    if (probs.rows != y.rows || probs.cols != y.cols) {
        throw ValidationError("score_thresholded: shape mismatch");
    }
    vd::VdScore score;
    for (std::size_t i = 0; i < probs.data.size(); ++i) {
        bool predicted = probs.data[i] >= threshold;
        bool truth = y.data[i] > 0.5;
        if (predicted && truth) {
            ++score.tp;
        } else if (predicted) {
            ++score.fp;
        } else if (truth) {
            ++score.fn;
        }
    }
    std::uint64_t pred_total = score.tp + score.fp;
    std::uint64_t gold_total = score.tp + score.fn;
    score.precision =
        pred_total == 0 ? 0.0 : static_cast<double>(score.tp) / static_cast<double>(pred_total);
    score.recall =
        gold_total == 0 ? 0.0 : static_cast<double>(score.tp) / static_cast<double>(gold_total);
    score.f1 = (score.precision + score.recall) == 0.0
                   ? 0.0
                   : 2.0 * score.precision * score.recall / (score.precision + score.recall);
    return score;
}

TrainResult train(const DenseData& train_data, const DenseData& val_data,
                  const Hyperparams& hypers, std::uint64_t seed) {
    if (train_data.x.rows == 0) {
        throw ValidationError("train: empty training set");
    }
    int in_dim = static_cast<int>(train_data.x.cols);
    int labels = static_cast<int>(train_data.y.cols);

    Rng rng(seed);
    MlpParams params = MlpParams::zeros(in_dim, hypers.hidden1, hypers.hidden2, labels);
    auto he_init = [&](std::vector<double>& w, int fan_in) {
        double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (auto& value : w) {
            value = rng.gaussian() * scale;
        }
    };
    he_init(params.w1, in_dim);
    he_init(params.w2, hypers.hidden1);
    he_init(params.w3, hypers.hidden2);

    AdamState s_w1(params.w1.size()), s_b1(params.b1.size());
    AdamState s_w2(params.w2.size()), s_b2(params.b2.size());
    AdamState s_w3(params.w3.size()), s_b3(params.b3.size());
    std::uint64_t step_count = 0;

    TrainResult result;
    bool use_val = val_data.x.rows > 0 && hypers.patience > 0;
    double best_val_f1 = -1.0;
    int stale_epochs = 0;
    MlpParams best = params;
    int best_epoch = -1;

    std::vector<std::size_t> order(train_data.x.rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t batch_size = std::max(1, hypers.batch_size);

    for (int epoch = 0; epoch < hypers.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
            std::size_t end = std::min(order.size(), begin + batch_size);
            Matrix bx = take_rows(train_data.x, order, begin, end);
            Matrix by = take_rows(train_data.y, order, begin, end);
            Grads grads;
            double loss = bce_loss_and_grads(params, bx, by, grads);
            if (!std::isfinite(loss)) {
                throw Error("train: loss became non-finite at epoch " + std::to_string(epoch) +
                            " (lr " + std::to_string(hypers.learning_rate) + ")");
            }
            epoch_loss += loss;
            ++batches;
            ++step_count;
            adam_update(params.w1, grads.w1, s_w1, hypers.learning_rate, step_count);
            adam_update(params.b1, grads.b1, s_b1, hypers.learning_rate, step_count);
            adam_update(params.w2, grads.w2, s_w2, hypers.learning_rate, step_count);
            adam_update(params.b2, grads.b2, s_b2, hypers.learning_rate, step_count);
            adam_update(params.w3, grads.w3, s_w3, hypers.learning_rate, step_count);
            adam_update(params.b3, grads.b3, s_b3, hypers.learning_rate, step_count);
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(1, batches)));

        if (use_val) {
            Matrix val_probs = forward_batch(params, val_data.x);
            double val_f1 = score_thresholded(val_probs, val_data.y, 0.5).f1;
            if (val_f1 > best_val_f1) {
                best_val_f1 = val_f1;
                best = params;
                best_epoch = epoch;
                stale_epochs = 0;
            } else {
                ++stale_epochs;
                if (stale_epochs >= hypers.patience) {
                    break;
                }
            }
        }
    }

    if (use_val && best_epoch >= 0) {
        result.params = std::move(best);
        result.best_epoch = best_epoch;
    } else {
        result.params = std::move(params);
        result.best_epoch = hypers.epochs - 1;
    }
    return result;
}

double select_threshold(const MlpParams& params, const Matrix& val_x, const Matrix& val_y,
                        const std::vector<double>& grid) {
    if (grid.empty() || val_x.rows == 0) {
        throw ValidationError("select_threshold: nonempty grid and validation set required");
    }
    std::vector<double> sorted_grid = grid;
    std::sort(sorted_grid.begin(), sorted_grid.end());
    Matrix probs = forward_batch(params, val_x);
    double best_threshold = sorted_grid.front();
    double best_f1 = -1.0;
    for (double threshold : sorted_grid) {
        double f1 = score_thresholded(probs, val_y, threshold).f1;
        if (f1 > best_f1) { // strict: ties keep the smallest threshold
            best_f1 = f1;
            best_threshold = threshold;
        }
    }
    return best_threshold;
}

std::vector<double> default_threshold_grid() {
    std::vector<double> grid;
    for (int i = 1; i <= 19; ++i) {
        grid.push_back(static_cast<double>(i) * 0.05);
    }
    return grid;
}

DataSplits make_splits(std::vector<EmbeddingRecord> train, std::vector<EmbeddingRecord> test,
                       double val_fraction, std::uint64_t seed) {
    DataSplits splits;
    splits.test = std::move(test);
    if (train.empty()) {
        return splits;
    }
    std::size_t val_count = std::max<std::size_t>(
        1, static_cast<std::size_t>(static_cast<double>(train.size()) * val_fraction));
    val_count = std::min(val_count, train.size() - 1);

    // group by smallest label (or benign) for a stratified-where-possible pick
    std::map<std::string, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < train.size(); ++i) {
        std::string key =
            train[i].labels.empty() ? "benign" : train[i].labels.begin()->id();
        strata[key].push_back(i);
    }
    Rng rng(seed);
    std::vector<bool> to_val(train.size(), false);
    std::size_t assigned = 0;
    for (auto& [key, indices] : strata) {
        rng.shuffle(indices);
        auto quota = static_cast<std::size_t>(
            static_cast<double>(val_count) * static_cast<double>(indices.size()) /
            static_cast<double>(train.size()));
        for (std::size_t i = 0; i < quota && assigned < val_count; ++i) {
            to_val[indices[i]] = true;
            ++assigned;
        }
    }
    // fill any shortfall round-robin over strata remainders
    for (auto& [key, indices] : strata) {
        for (std::size_t index : indices) {
            if (assigned >= val_count) break;
            if (!to_val[index]) {
                to_val[index] = true;
                ++assigned;
            }
        }
    }
    for (std::size_t i = 0; i < train.size(); ++i) {
        (to_val[i] ? splits.val : splits.train).push_back(std::move(train[i]));
    }
    return splits;
}

// ---------------------------------------------------------------------------
// Multi-run evaluation

namespace {

std::pair<double, double> mean_and_std(const std::vector<double>& values) {
    if (values.empty()) {
        return {0.0, 0.0};
    }
    double mean = std::accumulate(values.begin(), values.end(), 0.0) /
                  static_cast<double>(values.size());
    if (values.size() < 2) {
        return {mean, 0.0};
    }
    double ss = 0.0;
    for (double value : values) {
        ss += (value - mean) * (value - mean);
    }
    return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

} // namespace

RunSummary evaluate_runs(const DataSplits& splits, const Hyperparams& hypers, int runs,
                         std::uint64_t base_seed, const std::vector<double>& grid,
                         int parallelism) {
    if (runs < 1) {
        throw ValidationError("evaluate_runs: runs must be >= 1");
    }
    if (splits.train.empty() || splits.test.empty()) {
        throw ValidationError("evaluate_runs: train and test splits must be nonempty");
    }
    LabelSpace space = LabelSpace::from_records(splits.train);
    DenseData train_data = DenseData::build(splits.train, space);
    DenseData val_data = DenseData::build(splits.val, space);
    DenseData test_data = DenseData::build(splits.test, space);

    // gold carries the full label sets, so labels unseen in training count
    // as false negatives
    std::map<std::string, CweSet> gold;
    std::vector<std::string> row_keys(splits.test.size());
    for (std::size_t i = 0; i < splits.test.size(); ++i) {
        row_keys[i] = "row" + std::to_string(i) + ":" + splits.test[i].id;
        gold[row_keys[i]] = splits.test[i].labels;
    }

    RunSummary summary;
    summary.per_run.resize(static_cast<std::size_t>(runs));
    summary.thresholds.resize(static_cast<std::size_t>(runs));

    parallel_for(static_cast<std::size_t>(runs), parallelism, [&](std::size_t run) {
        std::uint64_t seed = base_seed + run;
        TrainResult trained = train(train_data, val_data, hypers, seed);
        double threshold = val_data.x.rows > 0
                               ? select_threshold(trained.params, val_data.x, val_data.y, grid)
                               : 0.5;
        trained.params.threshold = threshold;

        Matrix probs = forward_batch(trained.params, test_data.x);
        std::vector<vd::VdPrediction> predictions(splits.test.size());
        for (std::size_t r = 0; r < probs.rows; ++r) {
            predictions[r].sample_id = row_keys[r];
            for (std::size_t c = 0; c < probs.cols; ++c) {
                if (probs.row(r)[c] >= threshold) {
                    predictions[r].predicted.insert(space.labels[c]);
                }
            }
        }
        summary.per_run[run] = vd::micro_scores(predictions, gold);
        summary.thresholds[run] = threshold;
    });

    std::vector<double> f1s, ps, rs;
    for (const auto& score : summary.per_run) {
        f1s.push_back(score.f1);
        ps.push_back(score.precision);
        rs.push_back(score.recall);
    }
    std::tie(summary.mean_f1, summary.std_f1) = mean_and_std(f1s);
    std::tie(summary.mean_precision, summary.std_precision) = mean_and_std(ps);
    std::tie(summary.mean_recall, summary.std_recall) = mean_and_std(rs);
    summary.std_undefined = runs < 2;
    return summary;
}

std::string RunSummary::to_table() const {
    auto cell = [](double mean, double std) {
        return format_fixed(mean * 100.0, 2) + " ± " + format_fixed(std * 100.0, 2);
    };
    std::string out;
    out += "runs: " + std::to_string(per_run.size());
    if (std_undefined) {
        out += " (std undefined for a single run, reported as 0)";
    }
    out += "\n";
    out += "F1  " + cell(mean_f1, std_f1) + "\n";
    out += "P   " + cell(mean_precision, std_precision) + "\n";
    out += "R   " + cell(mean_recall, std_recall) + "\n";
    return out;
}

std::string RunSummary::to_json() const {
    json doc;
    json runs_json = json::array();
    for (std::size_t i = 0; i < per_run.size(); ++i) {
        runs_json.push_back({{"f1", per_run[i].f1},
                             {"precision", per_run[i].precision},
                             {"recall", per_run[i].recall},
                             {"threshold", thresholds[i]}});
    }
    doc["per_run"] = runs_json;
    doc["mean_f1"] = mean_f1;
    doc["std_f1"] = std_f1;
    doc["mean_precision"] = mean_precision;
    doc["std_precision"] = std_precision;
    doc["mean_recall"] = mean_recall;
    doc["std_recall"] = std_recall;
    doc["std_undefined"] = std_undefined;
    return doc.dump(2);
}

} // namespace forge::clf
