#pragma once

#include "forge/cwe.hpp"
#include "forge/gateway.hpp"
#include "forge/tokenizer.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace forge::sft {

using gateway::GenerationRecord;
using prompts::TaskKind;

/// Maximum combined instruction+completion tokens a record may carry.
constexpr std::size_t kMaxSequenceTokens = 16'384;

struct SftRecord {
    std::string sample_id;
    TaskKind task = TaskKind::bcs;
    std::string instruction; // task prefix + "\n" + assembly
    std::string completion;  // the final report
    std::size_t instr_tokens = 0;
    std::size_t compl_tokens = 0;

    std::size_t total_tokens() const { return instr_tokens + compl_tokens; }
};

/// Default task prefixes. The exact wording used by the original experiments
/// is not recoverable, so both are configurable knobs.
extern const char* const kDefaultBcsPrefix;
extern const char* const kDefaultVdPrefix;

struct BuildResult {
    std::vector<SftRecord> records;
    std::size_t dropped_overlength = 0;
    std::size_t skipped_empty_report = 0;
    std::size_t skipped_missing_asm = 0;
};

/// Builds SFT records from generation outputs. instruction = prefix + "\n" +
/// assembly of the sample; completion = final report (for multi-turn
/// generations that is the third-turn completion by construction). Records
/// whose combined token count exceeds kMaxSequenceTokens are dropped and
/// counted.
BuildResult build_records(const std::vector<GenerationRecord>& generations, TaskKind task,
                          const std::string& prefix, const TokenCounter& tokenizer,
                          const std::map<std::string, std::string>& asm_by_id);

struct RejectionStats {
    std::size_t total = 0; // vulnerable records seen
    std::size_t kept = 0;  // vulnerable records with a full CWE match
    double match_rate = 0.0;
};

struct RejectionResult {
    std::vector<SftRecord> records; // survivors, original order
    RejectionStats stats;
};

/// CWE rejection sampling: a vulnerable record survives iff every gold CWE id
/// is mentioned (after normalization) somewhere in its completion;
/// non-vulnerable records always survive. Stats cover vulnerable records
/// only. Vulnerable ids missing from `gold` are an error.
RejectionResult reject_sample(const std::vector<SftRecord>& records,
                              const std::map<std::string, CweSet>& gold);

struct BudgetReport {
    std::uint64_t budget_tokens = 0;
    std::uint64_t dataset_tokens = 0;
    double passes_over_data = 0.0;
    std::size_t records_used = 0;
    bool overshoot = false; // budget smaller than every record
};

struct BudgetPlan {
    std::uint64_t full_passes = 0;
    std::vector<std::size_t> partial_indices; // indices into the input records
    std::uint64_t planned_tokens = 0;
};

struct BudgetResult {
    BudgetReport report;
    BudgetPlan plan;
};

/// Token-budget plan: whole passes over the dataset plus a seeded partial
/// pass that lands within one record of the budget. A budget below the
/// smallest record degenerates to a single record with the overshoot flag
/// set.
BudgetResult budget_plan(const std::vector<SftRecord>& records, std::uint64_t budget_tokens,
                         std::uint64_t seed);

struct TrainingConfig {
    int max_seq_len = 16'384;
    int global_batch_size = 160;
    std::string optimizer = "AdamW";
    std::string base_learning_rate = "3e-4";
    std::string schedule = "linear warmup + cosine annealing";
    std::string initial_learning_rate = "1e-5";
    std::string warmup_ratio = "4%";
    std::string budget_tokens = "1e9";
};

/// Writes the key=value training-config artifact. `overrides` replace
/// defaults and are marked with a provenance note.
void emit_training_config(const std::filesystem::path& out_path,
                          const TrainingConfig& config = {},
                          const std::map<std::string, std::string>& overrides = {});

/// Seeded in-place shuffle used to interleave records from different corpora.
void shuffle_records(std::vector<SftRecord>& records, std::uint64_t seed);

// --- chat-style SFT JSONL: {"messages":[{user...},{assistant...}]} ---

std::string record_to_json_line(const SftRecord& record);
void write_sft_jsonl(const std::filesystem::path& path, const std::vector<SftRecord>& records);
std::vector<SftRecord> read_sft_jsonl(const std::filesystem::path& path,
                                      const TokenCounter& tokenizer);

} // namespace forge::sft
