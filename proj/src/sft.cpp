#include "forge/sft.hpp"

#include "forge/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <numeric>

namespace forge::sft {

using nlohmann::json;

const char* const kDefaultBcsPrefix =
    "Provide a detailed general analysis of the following assembly code.";
const char* const kDefaultVdPrefix =
    "Provide a detailed general analysis of the following assembly code, followed by a "
    "vulnerability-specific analysis with CWE references.";

BuildResult build_records(const std::vector<GenerationRecord>& generations, TaskKind task,
                          const std::string& prefix, const TokenCounter& tokenizer,
                          const std::map<std::string, std::string>& asm_by_id) {
    BuildResult result;
    for (const auto& generation : generations) {
        if (trim(generation.final_report).empty()) {
            ++result.skipped_empty_report;
            continue;
        }
        auto asm_it = asm_by_id.find(generation.sample_id);
        if (asm_it == asm_by_id.end() || asm_it->second.empty()) {
            ++result.skipped_missing_asm;
            continue;
        }
        SftRecord record;
        record.sample_id = generation.sample_id;
        record.task = task;
        record.instruction = prefix + "\n" + asm_it->second;
        record.completion = generation.final_report;
        record.instr_tokens = tokenizer.count(record.instruction);
        record.compl_tokens = tokenizer.count(record.completion);
        if (record.total_tokens() > kMaxSequenceTokens) {
            ++result.dropped_overlength;
            continue;
        }
        result.records.push_back(std::move(record));
    }
    return result;
}

RejectionResult reject_sample(const std::vector<SftRecord>& records,
                              const std::map<std::string, CweSet>& gold) {
    RejectionResult result;
    for (const auto& record : records) {
        auto gold_it = gold.find(record.sample_id);
        bool vulnerable = gold_it != gold.end() && !gold_it->second.empty();
        if (!vulnerable) {
            result.records.push_back(record);
            continue;
        }
        ++result.stats.total;
        CweSet mentioned = extract_cwe_mentions(record.completion);
        bool full_match = std::all_of(
            gold_it->second.begin(), gold_it->second.end(),
            [&](const CweLabel& label) { return mentioned.count(label) > 0; });
        if (full_match) {
            ++result.stats.kept;
            result.records.push_back(record);
        }
    }
    result.stats.match_rate =
        result.stats.total == 0
            ? 0.0
            : static_cast<double>(result.stats.kept) / static_cast<double>(result.stats.total);
    return result;
}

BudgetResult budget_plan(const std::vector<SftRecord>& records, std::uint64_t budget_tokens,
                         std::uint64_t seed) {
    if (records.empty()) {
        throw ValidationError("budget_plan: no records to plan over");
    }
    if (budget_tokens == 0) {
        throw ValidationError("budget_plan: budget_tokens must be > 0");
    }
    BudgetResult result;
    result.report.budget_tokens = budget_tokens;
    result.report.dataset_tokens = std::accumulate(
        records.begin(), records.end(), std::uint64_t{0},
        [](std::uint64_t sum, const SftRecord& r) { return sum + r.total_tokens(); });
    result.report.passes_over_data = static_cast<double>(budget_tokens) /
                                     static_cast<double>(result.report.dataset_tokens);

    result.plan.full_passes = budget_tokens / result.report.dataset_tokens;
    std::uint64_t remainder =
        budget_tokens - result.plan.full_passes * result.report.dataset_tokens;
    result.plan.planned_tokens = result.plan.full_passes * result.report.dataset_tokens;

    // Seeded partial pass filled greedily; stays at or below the remainder,
    // which keeps the total within one record of the budget.
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);
    std::uint64_t partial = 0;
    for (std::size_t index : order) {
        std::uint64_t tokens = records[index].total_tokens();
        if (partial + tokens > remainder) {
            continue;
        }
        partial += tokens;
        result.plan.partial_indices.push_back(index);
    }
    result.plan.planned_tokens += partial;

    if (result.plan.full_passes == 0 && result.plan.partial_indices.empty()) {
        // budget below the smallest record: emit the smallest one and flag it
        std::size_t smallest = 0;
        for (std::size_t i = 1; i < records.size(); ++i) {
            if (records[i].total_tokens() < records[smallest].total_tokens()) {
                smallest = i;
            }
        }
        result.plan.partial_indices.push_back(smallest);
        result.plan.planned_tokens += records[smallest].total_tokens();
        result.report.overshoot = true;
    }

    result.report.records_used =
        static_cast<std::size_t>(result.plan.full_passes) * records.size() +
        result.plan.partial_indices.size();
    return result;
}

void emit_training_config(const std::filesystem::path& out_path, const TrainingConfig& config,
                          const std::map<std::string, std::string>& overrides) {
    std::vector<std::pair<std::string, std::string>> entries = {
        {"max_seq_len", std::to_string(config.max_seq_len)},
        {"global_batch_size", std::to_string(config.global_batch_size)},
        {"optimizer", config.optimizer},
        {"base_learning_rate", config.base_learning_rate},
        {"schedule", config.schedule},
        {"initial_learning_rate", config.initial_learning_rate},
        {"warmup_ratio", config.warmup_ratio},
        {"budget_tokens", config.budget_tokens},
    };
    std::string out = "# fine-tuning configuration\n";
    for (auto& [key, value] : entries) {
        auto it = overrides.find(key);
        if (it != overrides.end()) {
            out += key + " = " + it->second + "\n";
            out += "# override: " + key + " (default " + value + ")\n";
        } else {
            out += key + " = " + value + "\n";
        }
    }
    for (const auto& [key, value] : overrides) {
        bool known = std::any_of(entries.begin(), entries.end(),
                                 [&](const auto& entry) { return entry.first == key; });
        if (!known) {
            out += key + " = " + value + "\n";
            out += "# override: " + key + " (no default)\n";
        }
    }
    write_text_file(out_path, out);
}

void shuffle_records(std::vector<SftRecord>& records, std::uint64_t seed) {
    Rng rng(seed);
    rng.shuffle(records);
}

std::string record_to_json_line(const SftRecord& record) {
    json row;
    row["messages"] = json::array({{{"role", "user"}, {"content", record.instruction}},
                                   {{"role", "assistant"}, {"content", record.completion}}});
    row["sample_id"] = record.sample_id;
    row["task"] = prompts::task_name(record.task);
    row["instr_tokens"] = record.instr_tokens;
    row["compl_tokens"] = record.compl_tokens;
    return row.dump();
}

void write_sft_jsonl(const std::filesystem::path& path, const std::vector<SftRecord>& records) {
    std::string out;
    for (const auto& record : records) {
        out += record_to_json_line(record);
        out += '\n';
    }
    write_text_file(path, out);
}

std::vector<SftRecord> read_sft_jsonl(const std::filesystem::path& path,
                                      const TokenCounter& tokenizer) {
    std::vector<SftRecord> records;
    for_each_line(path, [&](std::size_t lineno, std::string_view line) {
        auto row = json::parse(line, nullptr, false);
        if (row.is_discarded() || !row.contains("messages") || row["messages"].size() != 2) {
            throw ValidationError("bad SFT row at line " + std::to_string(lineno) + " of " +
                                  path.string());
        }
        SftRecord record;
        record.sample_id = row.value("sample_id", "");
        record.task = prompts::parse_task(row.value("task", "bcs"));
        record.instruction = row["messages"][0].at("content").get<std::string>();
        record.completion = row["messages"][1].at("content").get<std::string>();
        record.instr_tokens = row.contains("instr_tokens")
                                  ? row["instr_tokens"].get<std::size_t>()
                                  : tokenizer.count(record.instruction);
        record.compl_tokens = row.contains("compl_tokens")
                                  ? row["compl_tokens"].get<std::size_t>()
                                  : tokenizer.count(record.completion);
        records.push_back(std::move(record));
    });
    return records;
}

} // namespace forge::sft
