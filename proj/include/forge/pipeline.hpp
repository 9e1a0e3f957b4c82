#pragma once

#include "forge/common.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace forge::pipeline {

/// Flat key=value configuration with CLI-flag overrides. Secrets (the API
/// key) stay in the environment; everything else lands in the manifest.
struct PipelineConfig {
    // corpus
    std::string input;
    std::string format = "jsonl";
    std::string origin = "custom";
    bool strict_ingest = true;
    std::string compiler = "gcc";
    std::uint64_t compiler_timeout_ms = 30'000;
    std::string tokenizer = "approx";
    std::uint64_t max_tokens = 16'384;
    // rendering / generation
    std::string strategy = "cing";
    std::string task = "vd";
    std::string templates_dir; // resolved via default when empty
    std::string backend = "mock:echo";
    std::string model = "generator";
    double temperature = 0.4;
    double top_p = 0.95;
    int max_new_tokens = 4096;
    std::string mode = "greedy"; // training-data default; eval overrides to sampling
    int num_outputs = 1;
    std::string system_message;
    std::string cache_dir;
    // sft
    std::string bcs_prefix;
    std::string vd_prefix;
    bool sft_reject = false;
    std::uint64_t sft_budget = 0; // 0: skip the budget plan
    // eval
    bool eval_vd = false;
    // plumbing
    std::uint64_t seed = 0;
    int concurrency = 4;
    std::string out_dir;

    /// Keys explicitly present in the file/flags (for presence checks).
    std::map<std::string, std::string> raw;

    static PipelineConfig from_map(const std::map<std::string, std::string>& values);
    /// Full resolved key=value echo, written into the manifest.
    std::map<std::string, std::string> resolved() const;

    /// Template directory after applying the default chain: explicit config,
    /// FORGE_TEMPLATES env var, compiled-in source path.
    std::filesystem::path effective_templates_dir() const;

    /// Per-stage seed derivation: splitmix64(seed ^ fnv1a64(stage_name)).
    /// One root seed reproduces every stage.
    std::uint64_t stage_seed(std::string_view stage_name) const;
};

/// key = value lines, '#' comments, blank lines ignored.
std::map<std::string, std::string> parse_config_file(const std::filesystem::path& path);
std::map<std::string, std::string> parse_config_text(std::string_view text);

struct Finding {
    bool fatal = false;
    std::string message;
};

/// Static checks: paths exist, template assets match their integrity
/// manifest, seeds present, bounds sane. Never throws for content issues.
std::vector<Finding> validate_config(const PipelineConfig& config);

bool has_fatal(const std::vector<Finding>& findings);

/// Verifies every template under `dir` against MANIFEST.sha256. Returns
/// findings (fatal on mismatch or missing manifest).
std::vector<Finding> verify_template_integrity(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Pipeline driver

struct StageOutcome {
    std::string name;
    bool skipped = false; // up-to-date from a previous run
    std::map<std::string, std::string> counts;
};

struct PipelineResult {
    std::vector<StageOutcome> stages;
    std::filesystem::path out_dir;
};

extern const std::vector<std::string> kStageOrder; // corpus, render, generate, sft, eval_vd

/// Runs corpus -> render -> generate -> sft (-> eval_vd) end to end, writing
/// artifacts and a manifest under config.out_dir. Stages whose recorded
/// input/output hashes still match are skipped, which makes an interrupted
/// run resumable. `stop_after` (a stage name) ends the run early.
PipelineResult run_pipeline(const PipelineConfig& config, const std::string& stop_after = "");

} // namespace forge::pipeline
