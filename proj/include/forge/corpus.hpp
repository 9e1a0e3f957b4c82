#pragma once

#include "forge/cwe.hpp"
#include "forge/tokenizer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace forge::corpus {

enum class Origin { diversevul_like, vdisc_like, custom };

std::string origin_name(Origin origin);
Origin parse_origin(std::string_view name);

/// One C function with its vulnerability annotation.
/// Invariant: is_vulnerable() <=> cwe_labels nonempty.
struct SourceSample {
    std::string id;
    std::string c_code;
    CweSet cwe_labels;
    Origin origin = Origin::custom;

    bool is_vulnerable() const { return !cwe_labels.empty(); }
};

/// Result of running one sample through the compiler.
struct CompiledSample {
    std::string source_id;
    std::string asm_code;
    std::string compiler_id; // name + version
    std::vector<std::string> flags;
    bool compile_ok = false;
    std::string diagnostics;
};

/// Source sample joined with its compile result; the unit the rest of the
/// pipeline consumes.
struct CorpusRecord {
    SourceSample source;
    CompiledSample compiled;
};

struct CorpusSplit {
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
    std::uint64_t seed = 0;
};

enum class InputFormat { jsonl, csv };
InputFormat parse_input_format(std::string_view name);

struct IngestOptions {
    Origin origin = Origin::custom;
    /// strict: duplicate id is an error. lenient: last record wins.
    bool strict_duplicates = true;
};

struct IngestResult {
    std::vector<SourceSample> samples;
    std::size_t skipped = 0;
    std::vector<std::string> warnings;
};

/// Reads samples from a JSONL or CSV file. Expected fields/columns: `id`
/// (optional; a positional one is assigned when absent), `func` (required),
/// `cwe` (list of CWE ids; empty or absent means non-vulnerable), `cwe_desc`
/// (optional map id -> description, or list parallel to `cwe`).
/// Malformed records are skipped and counted, never fatal; an unreadable
/// file is.
IngestResult ingest(const std::filesystem::path& path, InputFormat format,
                    const IngestOptions& options);

/// Keeps exactly the samples whose counted assembly tokens are <= max_tokens.
/// Order preserved; the boundary is inclusive.
std::vector<CompiledSample> token_filter(const std::vector<CompiledSample>& samples,
                                         const TokenCounter& tokenizer, std::size_t max_tokens);

/// Deterministic seeded split: ids are sorted, shuffled with the project Rng,
/// and the first test_size become the test set. Pure in (id set, seed,
/// test_size).
CorpusSplit split(const std::vector<SourceSample>& samples, std::size_t test_size,
                  std::uint64_t seed);

/// Same contract but sampling proportionally per stratum (non-vulnerable vs.
/// smallest CWE id), largest-remainder allocation.
CorpusSplit split_stratified(const std::vector<SourceSample>& samples, std::size_t test_size,
                             std::uint64_t seed);

// --- corpus JSONL (fields: id, c_code, asm_code, cwe_labels, is_vulnerable,
//     compile_ok; plus cwe_desc and diagnostics when present) ---

std::string to_jsonl_line(const CorpusRecord& record);
CorpusRecord record_from_json_line(std::string_view line);
void write_corpus(const std::filesystem::path& path, const std::vector<CorpusRecord>& records);
std::vector<CorpusRecord> read_corpus(const std::filesystem::path& path);

} // namespace forge::corpus
