#pragma once

#include "forge/cwe.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace forge::vd {

struct VdPrediction {
    std::string sample_id;
    CweSet predicted;
    std::string raw_completion;
};

struct VdScore {
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
};

/// All CWE labels mentioned in a completion, canonicalized and deduplicated.
CweSet extract_cwes(std::string_view completion);

/// Prediction rows straight from generation completions.
std::vector<VdPrediction> predictions_from_completions(
    const std::vector<std::pair<std::string, std::string>>& id_and_completion);

/// Micro-averaged scores: tp/fp/fn pooled across all samples and labels.
/// Every prediction's sample_id must appear in gold.
VdScore micro_scores(const std::vector<VdPrediction>& predictions,
                     const std::map<std::string, CweSet>& gold);

/// Per-model score table, values x100 at two decimals (round-half-up).
std::string score_report(const std::vector<std::pair<std::string, VdScore>>& rows);

std::string score_to_json(const VdScore& score);

struct LabelCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
};

/// Debug breakdown of the pooled counts by CWE label.
std::map<std::string, LabelCounts> per_label_counts(const std::vector<VdPrediction>& predictions,
                                                    const std::map<std::string, CweSet>& gold);

} // namespace forge::vd
