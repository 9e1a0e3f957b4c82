#pragma once

#include "forge/gateway.hpp"
#include "forge/tokenizer.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace forge::bcs {

enum class Verdict { first, second, tie, unparsed };

std::string verdict_name(Verdict verdict);

struct JudgeComparison {
    std::string sample_id;
    std::string model_first;  // shown as Report 1
    std::string model_second; // shown as Report 2
    int output_index = 0;     // which of the k outputs per model
    int duplicate = 0;        // order-randomized repetition index
    Verdict verdict = Verdict::unparsed;
    std::string rationale; // full judge text
};

/// One scheduled judge call before any reports are attached.
struct ComparisonTask {
    std::string model_a; // pair order as listed, not presentation order
    std::string model_b;
    std::string sample_id;
    int output_index = 0;
    int duplicate = 0;
    bool a_shown_first = true;
};

/// Pairwise tournament schedule: for every unordered model pair, every test
/// id and every output index k, two comparisons with independently
/// seed-randomized presentation order — |ids| * k * 2 per pair.
/// With pair_outputs_all, the k x k output pairings are scheduled once each
/// instead (|ids| * k^2 per pair).
std::vector<ComparisonTask> schedule_tournament(const std::vector<std::string>& models,
                                                const std::vector<std::string>& test_ids,
                                                int outputs_per_model, std::uint64_t seed,
                                                bool pair_outputs_all = false);

/// Extracts the last parseable "The better report is {1|2|none}" statement,
/// case-insensitive, tolerant of trailing punctuation and markdown. Total:
/// anything else is Verdict::unparsed.
Verdict parse_verdict(std::string_view judge_text);

struct WinRateMatrix {
    std::vector<std::string> models;
    // all matrices indexed [i][j] over `models`
    std::vector<std::vector<std::uint64_t>> wins;     // wins[i][j]: i beat j
    std::vector<std::vector<std::uint64_t>> ties;     // symmetric pair ties
    std::vector<std::vector<std::uint64_t>> unparsed; // symmetric
    std::vector<std::vector<std::uint64_t>> totals;   // symmetric pair totals
    std::vector<std::vector<double>> winrate;         // percent
    std::vector<double> avg_winrate;                  // percent, mean over j != i
};

/// Aggregates verdicts into the win-rate matrix. Ties and unparsed verdicts
/// stay in the denominator, which is what makes published rows sum below
/// 100.
WinRateMatrix aggregate(const std::vector<JudgeComparison>& comparisons,
                        const std::vector<std::string>& models);

std::string matrix_to_text(const WinRateMatrix& matrix);
std::string matrix_to_csv(const WinRateMatrix& matrix);

struct LengthStats {
    double mean_tokens = 0.0;
    double mean_sections = 0.0;
};

/// Average token and section counts over reports. A section is a heading
/// line "Section <n>" with optional leading '#' or '**' markup (heuristic;
/// matches the numbered-section output format the prompts request).
LengthStats length_stats(const std::vector<std::string>& reports, const TokenCounter& tokenizer);

/// Counts section headings in one report.
std::size_t count_sections(std::string_view report);

extern const std::vector<std::string> kDefaultPhrases;

struct PhraseShare {
    std::map<std::string, std::uint64_t> wins_by_model;
    std::uint64_t total = 0;
    /// wins_by_model[model] / total; empty when the phrase never occurs.
    std::map<std::string, double> share_by_model() const;
};

/// For each phrase, how often the rationale mentions it grouped by the
/// winning model, normalized by the phrase's total occurrences among decided
/// comparisons. Ties and unparsed verdicts are excluded.
std::map<std::string, PhraseShare> phrase_analysis(
    const std::vector<JudgeComparison>& comparisons,
    const std::vector<std::string>& phrases = kDefaultPhrases);

std::string phrase_analysis_to_csv(const std::map<std::string, PhraseShare>& analysis);

// ---------------------------------------------------------------------------
// Tournament execution

/// Reports indexed by (model, sample_id, output_index).
class ReportStore {
public:
    void add(const std::string& model, const std::string& sample_id, int output_index,
             std::string report);
    /// Loads a generation JSONL produced by the gateway under `model`.
    void load_jsonl(const std::string& model, const std::filesystem::path& path);
    const std::string* find(const std::string& model, const std::string& sample_id,
                            int output_index) const;
    /// Throws listing every (model, id, k) gap in the schedule.
    void require_all(const std::vector<ComparisonTask>& tasks) const;

private:
    std::map<std::string, std::string> reports_;
    static std::string key(const std::string& model, const std::string& sample_id,
                           int output_index);
};

struct TournamentInputs {
    std::map<std::string, std::string> asm_by_id;
    std::map<std::string, std::string> c_by_id;
};

/// Runs every scheduled comparison through the judge backend and parses the
/// verdicts. Judge calls run concurrently; the result order is the schedule
/// order.
std::vector<JudgeComparison> run_tournament(const std::vector<ComparisonTask>& tasks,
                                            const ReportStore& reports,
                                            const TournamentInputs& inputs,
                                            const prompts::TemplateStore& templates,
                                            gateway::Gateway& judge,
                                            const gateway::GenParams& params, int concurrency,
                                            std::uint64_t seed);

std::string comparison_to_json_line(const JudgeComparison& comparison);
JudgeComparison comparison_from_json_line(std::string_view line);
void write_comparisons(const std::filesystem::path& path,
                       const std::vector<JudgeComparison>& comparisons);
std::vector<JudgeComparison> read_comparisons(const std::filesystem::path& path);

} // namespace forge::bcs
