#include "forge/vd_eval.hpp"

#include "forge/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>

namespace forge::vd {

CweSet extract_cwes(std::string_view completion) { return extract_cwe_mentions(completion); }

std::vector<VdPrediction> predictions_from_completions(
    const std::vector<std::pair<std::string, std::string>>& id_and_completion) {
    std::vector<VdPrediction> predictions;
    predictions.reserve(id_and_completion.size());
    for (const auto& [id, completion] : id_and_completion) {
        predictions.push_back({id, extract_cwes(completion), completion});
    }
    return predictions;
}

VdScore micro_scores(const std::vector<VdPrediction>& predictions,
                     const std::map<std::string, CweSet>& gold) {
    VdScore score;
    for (const auto& prediction : predictions) {
        auto it = gold.find(prediction.sample_id);
        if (it == gold.end()) {
            throw ValidationError("micro_scores: sample '" + prediction.sample_id +
                                  "' has no gold labels");
        }
        const CweSet& truth = it->second;
        for (const auto& label : prediction.predicted) {
            if (truth.count(label) > 0) {
                ++score.tp;
            } else {
                ++score.fp;
            }
        }
        for (const auto& label : truth) {
            if (prediction.predicted.count(label) == 0) {
                ++score.fn;
            }
        }
    }
    std::uint64_t pred_total = score.tp + score.fp;
    std::uint64_t gold_total = score.tp + score.fn;
    score.precision = pred_total == 0 ? 0.0
                                      : static_cast<double>(score.tp) /
                                            static_cast<double>(pred_total);
    score.recall = gold_total == 0 ? 0.0
                                   : static_cast<double>(score.tp) /
                                         static_cast<double>(gold_total);
    score.f1 = (score.precision + score.recall) == 0.0
                   ? 0.0
                   : 2.0 * score.precision * score.recall / (score.precision + score.recall);
    return score;
}

std::string score_report(const std::vector<std::pair<std::string, VdScore>>& rows) {
    std::size_t name_width = 5;
    for (const auto& [name, score] : rows) {
        name_width = std::max(name_width, name.size());
    }
    auto pad = [](std::string text, std::size_t width) {
        while (text.size() < width) {
            text += ' ';
        }
        return text;
    };
    auto cell = [](double value) {
        std::string text = format_fixed(value * 100.0, 2);
        while (text.size() < 6) {
            text.insert(text.begin(), ' ');
        }
        return text;
    };
    std::string out = pad("Model", name_width) + "      F1       P       R\n";
    for (const auto& [name, score] : rows) {
        out += pad(name, name_width) + "  " + cell(score.f1) + "  " + cell(score.precision) +
               "  " + cell(score.recall) + "\n";
    }
    return out;
}

std::map<std::string, LabelCounts> per_label_counts(const std::vector<VdPrediction>& predictions,
                                                    const std::map<std::string, CweSet>& gold) {
    std::map<std::string, LabelCounts> counts;
    for (const auto& prediction : predictions) {
        auto it = gold.find(prediction.sample_id);
        if (it == gold.end()) {
            throw ValidationError("per_label_counts: sample '" + prediction.sample_id +
                                  "' has no gold labels");
        }
        for (const auto& label : prediction.predicted) {
            if (it->second.count(label) > 0) {
                ++counts[label.id()].tp;
            } else {
                ++counts[label.id()].fp;
            }
        }
        for (const auto& label : it->second) {
            if (prediction.predicted.count(label) == 0) {
                ++counts[label.id()].fn;
            }
        }
    }
    return counts;
}

std::string score_to_json(const VdScore& score) {
    nlohmann::json row;
    row["f1"] = score.f1;
    row["precision"] = score.precision;
    row["recall"] = score.recall;
    row["tp"] = score.tp;
    row["fp"] = score.fp;
    row["fn"] = score.fn;
    return row.dump();
}

} // namespace forge::vd
