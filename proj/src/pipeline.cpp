#include "forge/pipeline.hpp"

#include "forge/bcs_eval.hpp"
#include "forge/compiler.hpp"
#include "forge/corpus.hpp"
#include "forge/gateway.hpp"
#include "forge/prompts.hpp"
#include "forge/sft.hpp"
#include "forge/vd_eval.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdlib>

#ifndef FORGE_SOURCE_TEMPLATE_DIR
#define FORGE_SOURCE_TEMPLATE_DIR "templates"
#endif

namespace forge::pipeline {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config parsing

std::map<std::string, std::string> parse_config_text(std::string_view text) {
    std::map<std::string, std::string> values;
    std::size_t lineno = 0;
    for (const auto& line : split_lines(text)) {
        ++lineno;
        std::string_view body = trim(line);
        if (body.empty() || body.front() == '#') {
            continue;
        }
        std::size_t eq = body.find('=');
        if (eq == std::string_view::npos) {
            throw ValidationError("config line " + std::to_string(lineno) +
                                  " is not key=value: " + std::string(body));
        }
        std::string key(trim(body.substr(0, eq)));
        std::string value(trim(body.substr(eq + 1)));
        if (key.empty()) {
            throw ValidationError("config line " + std::to_string(lineno) + " has an empty key");
        }
        values[key] = value;
    }
    return values;
}

std::map<std::string, std::string> parse_config_file(const std::filesystem::path& path) {
    return parse_config_text(read_text_file(path));
}

namespace {

bool parse_bool(const std::string& value, const std::string& key) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ValidationError("config key '" + key + "' expects a boolean, got '" + value + "'");
}

template <typename T>
T parse_number(const std::string& value, const std::string& key) {
    try {
        if constexpr (std::is_floating_point_v<T>) {
            return static_cast<T>(std::stod(value));
        } else if constexpr (std::is_signed_v<T>) {
            return static_cast<T>(std::stoll(value));
        } else {
            return static_cast<T>(std::stoull(value));
        }
    } catch (const std::exception&) {
        throw ValidationError("config key '" + key + "' expects a number, got '" + value + "'");
    }
}

} // namespace

PipelineConfig PipelineConfig::from_map(const std::map<std::string, std::string>& values) {
    PipelineConfig config;
    config.raw = values;
    for (const auto& [key, value] : values) {
        if (key == "input") config.input = value;
        else if (key == "format") config.format = value;
        else if (key == "origin") config.origin = value;
        else if (key == "strict_ingest") config.strict_ingest = parse_bool(value, key);
        else if (key == "compiler") config.compiler = value;
        else if (key == "compiler_timeout_ms")
            config.compiler_timeout_ms = parse_number<std::uint64_t>(value, key);
        else if (key == "tokenizer") config.tokenizer = value;
        else if (key == "max_tokens") config.max_tokens = parse_number<std::uint64_t>(value, key);
        else if (key == "strategy") config.strategy = value;
        else if (key == "task") config.task = value;
        else if (key == "templates_dir") config.templates_dir = value;
        else if (key == "backend") config.backend = value;
        else if (key == "model") config.model = value;
        else if (key == "temperature") config.temperature = parse_number<double>(value, key);
        else if (key == "top_p") config.top_p = parse_number<double>(value, key);
        else if (key == "max_new_tokens") config.max_new_tokens = parse_number<int>(value, key);
        else if (key == "mode") config.mode = value;
        else if (key == "num_outputs") config.num_outputs = parse_number<int>(value, key);
        else if (key == "system_message") config.system_message = value;
        else if (key == "cache_dir") config.cache_dir = value;
        else if (key == "bcs_prefix") config.bcs_prefix = value;
        else if (key == "vd_prefix") config.vd_prefix = value;
        else if (key == "sft_reject") config.sft_reject = parse_bool(value, key);
        else if (key == "sft_budget") config.sft_budget = parse_number<std::uint64_t>(value, key);
        else if (key == "eval_vd") config.eval_vd = parse_bool(value, key);
        else if (key == "seed") config.seed = parse_number<std::uint64_t>(value, key);
        else if (key == "concurrency") config.concurrency = parse_number<int>(value, key);
        else if (key == "out_dir") config.out_dir = value;
        else {
            throw ValidationError("unknown config key '" + key + "'");
        }
    }
    return config;
}

std::map<std::string, std::string> PipelineConfig::resolved() const {
    std::map<std::string, std::string> map;
    map["input"] = input;
    map["format"] = format;
    map["origin"] = origin;
    map["strict_ingest"] = strict_ingest ? "true" : "false";
    map["compiler"] = compiler;
    map["compiler_timeout_ms"] = std::to_string(compiler_timeout_ms);
    map["tokenizer"] = tokenizer;
    map["max_tokens"] = std::to_string(max_tokens);
    map["strategy"] = strategy;
    map["task"] = task;
    map["templates_dir"] = effective_templates_dir().string();
    map["backend"] = backend;
    map["model"] = model;
    map["temperature"] = format_fixed(temperature, 4);
    map["top_p"] = format_fixed(top_p, 4);
    map["max_new_tokens"] = std::to_string(max_new_tokens);
    map["mode"] = mode;
    map["num_outputs"] = std::to_string(num_outputs);
    map["system_message"] = system_message;
    map["cache_dir"] = cache_dir;
    map["bcs_prefix"] = bcs_prefix.empty() ? sft::kDefaultBcsPrefix : bcs_prefix;
    map["vd_prefix"] = vd_prefix.empty() ? sft::kDefaultVdPrefix : vd_prefix;
    map["sft_reject"] = sft_reject ? "true" : "false";
    map["sft_budget"] = std::to_string(sft_budget);
    map["eval_vd"] = eval_vd ? "true" : "false";
    map["seed"] = std::to_string(seed);
    map["concurrency"] = std::to_string(concurrency);
    map["out_dir"] = out_dir;
    return map;
}

std::filesystem::path PipelineConfig::effective_templates_dir() const {
    if (!templates_dir.empty()) {
        return templates_dir;
    }
    if (const char* env = std::getenv("FORGE_TEMPLATES")) {
        if (*env != '\0') {
            return env;
        }
    }
    return FORGE_SOURCE_TEMPLATE_DIR;
}

std::uint64_t PipelineConfig::stage_seed(std::string_view stage_name) const {
    return splitmix64(seed ^ fnv1a64(stage_name));
}

// ---------------------------------------------------------------------------
// Validation

bool has_fatal(const std::vector<Finding>& findings) {
    return std::any_of(findings.begin(), findings.end(),
                       [](const Finding& finding) { return finding.fatal; });
}

std::vector<Finding> verify_template_integrity(const std::filesystem::path& dir) {
    std::vector<Finding> findings;
    if (!std::filesystem::is_directory(dir)) {
        findings.push_back({true, "template directory missing: " + dir.string()});
        return findings;
    }
    auto manifest_path = dir / "MANIFEST.sha256";
    if (!std::filesystem::exists(manifest_path)) {
        findings.push_back({true, "template integrity manifest missing: " +
                                      manifest_path.string()});
        return findings;
    }
    for_each_line(manifest_path, [&](std::size_t lineno, std::string_view line) {
        std::string_view body = trim(line);
        std::size_t space = body.find(' ');
        if (space == std::string_view::npos) {
            findings.push_back({true, "bad integrity manifest line " + std::to_string(lineno)});
            return;
        }
        std::string expected(body.substr(0, space));
        std::string rel(trim(body.substr(space)));
        auto file = dir / rel;
        if (!std::filesystem::exists(file)) {
            findings.push_back({true, "template listed in manifest is missing: " + rel});
            return;
        }
        std::string actual = sha256_file(file);
        if (actual != expected) {
            findings.push_back({true, "template hash mismatch for " + rel +
                                          " (template was modified or corrupted)"});
        }
    });
    return findings;
}

std::vector<Finding> validate_config(const PipelineConfig& config) {
    std::vector<Finding> findings;

    if (config.input.empty()) {
        findings.push_back({true, "no corpus input configured (key 'input')"});
    } else if (!std::filesystem::exists(config.input)) {
        findings.push_back({true, "corpus input does not exist: " + config.input});
    }
    try {
        corpus::parse_input_format(config.format);
        corpus::parse_origin(config.origin);
        prompts::parse_strategy(config.strategy);
        prompts::parse_task(config.task);
        gateway::parse_mode(config.mode);
    } catch (const Error& e) {
        findings.push_back({true, e.what()});
    }
    if (config.concurrency <= 0) {
        findings.push_back({true, "concurrency must be >= 1"});
    }
    if (config.num_outputs < 1) {
        findings.push_back({true, "num_outputs must be >= 1"});
    }
    if (config.max_tokens == 0) {
        findings.push_back({true, "max_tokens must be > 0"});
    }
    if (config.backend.empty()) {
        findings.push_back({true, "generation requested but no backend configured"});
    } else if (config.backend.rfind("mock:", 0) != 0 &&
               config.backend.rfind("http://", 0) != 0 &&
               config.backend.rfind("https://", 0) != 0) {
        findings.push_back({true, "backend must be mock:echo, mock:script=<path>, or an "
                                  "http(s) URL: " + config.backend});
    }
    if (config.tokenizer != "approx" && config.tokenizer.rfind("sidecar:", 0) != 0) {
        findings.push_back({true, "tokenizer must be 'approx' or 'sidecar:<path>'"});
    } else if (config.tokenizer.rfind("sidecar:", 0) == 0 &&
               !std::filesystem::exists(config.tokenizer.substr(8))) {
        findings.push_back({true, "tokenizer sidecar file missing: " +
                                      config.tokenizer.substr(8)});
    }
    if (config.raw.find("seed") == config.raw.end()) {
        findings.push_back({false, "no seed configured; defaulting to 0"});
    }
    if (config.out_dir.empty()) {
        findings.push_back({true, "no output directory configured (key 'out_dir')"});
    }
    for (const auto& finding : verify_template_integrity(config.effective_templates_dir())) {
        findings.push_back(finding);
    }
    return findings;
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

class Manifest {
public:
    explicit Manifest(std::filesystem::path path) : path_(std::move(path)) {
        if (std::filesystem::exists(path_)) {
            doc_ = json::parse(read_text_file(path_));
        } else {
            doc_ = json::object();
        }
    }

    void set_header(const std::map<std::string, std::string>& config,
                    const std::map<std::string, std::string>& template_hashes) {
        json config_json = json::object();
        for (const auto& [key, value] : config) {
            config_json[key] = value;
        }
        json templates_json = json::object();
        for (const auto& [rel, hash] : template_hashes) {
            templates_json[rel] = hash;
        }
        // a config change invalidates recorded stages
        std::string config_hash = sha256_hex(config_json.dump());
        if (doc_.value("config_hash", "") != config_hash) {
            doc_["stages"] = json::object();
        }
        doc_["config"] = config_json;
        doc_["config_hash"] = config_hash;
        doc_["templates"] = templates_json;
    }

    /// True when the recorded stage entry still matches the filesystem.
    bool stage_is_current(const std::string& name,
                          const std::map<std::string, std::string>& input_hashes,
                          const std::vector<std::filesystem::path>& outputs) const {
        if (!doc_.contains("stages") || !doc_["stages"].contains(name)) {
            return false;
        }
        const json& stage = doc_["stages"][name];
        json expected_inputs = json::object();
        for (const auto& [key, value] : input_hashes) {
            expected_inputs[key] = value;
        }
        if (stage.value("inputs", json::object()) != expected_inputs) {
            return false;
        }
        const json& recorded = stage.value("outputs", json::object());
        for (const auto& path : outputs) {
            std::string key = path.filename().string();
            if (!recorded.contains(key) || !std::filesystem::exists(path) ||
                sha256_file(path) != recorded[key].get<std::string>()) {
                return false;
            }
        }
        return true;
    }

    void record_stage(const std::string& name,
                      const std::map<std::string, std::string>& input_hashes,
                      const std::vector<std::filesystem::path>& outputs,
                      const std::map<std::string, std::string>& counts) {
        json stage;
        json inputs = json::object();
        for (const auto& [key, value] : input_hashes) {
            inputs[key] = value;
        }
        stage["inputs"] = inputs;
        json outs = json::object();
        for (const auto& path : outputs) {
            outs[path.filename().string()] = sha256_file(path);
        }
        stage["outputs"] = outs;
        json counts_json = json::object();
        for (const auto& [key, value] : counts) {
            counts_json[key] = value;
        }
        stage["counts"] = counts_json;
        doc_["stages"][name] = stage;
        write_text_file(path_, doc_.dump(2) + "\n");
    }

    std::map<std::string, std::string> stage_counts(const std::string& name) const {
        std::map<std::string, std::string> counts;
        if (doc_.contains("stages") && doc_["stages"].contains(name)) {
            json counts_json = doc_["stages"][name].value("counts", json::object());
            for (const auto& [key, value] : counts_json.items()) {
                counts[key] = value.get<std::string>();
            }
        }
        return counts;
    }

private:
    std::filesystem::path path_;
    json doc_;
};

std::string file_hash_or_empty(const std::filesystem::path& path) {
    return std::filesystem::exists(path) ? sha256_file(path) : "";
}

} // namespace

const std::vector<std::string> kStageOrder = {"corpus", "render", "generate", "sft", "eval_vd"};

PipelineResult run_pipeline(const PipelineConfig& config, const std::string& stop_after) {
    auto findings = validate_config(config);
    if (has_fatal(findings)) {
        std::string message = "configuration invalid:";
        for (const auto& finding : findings) {
            if (finding.fatal) {
                message += "\n  - " + finding.message;
            }
        }
        throw ValidationError(message);
    }

    namespace fs = std::filesystem;
    fs::path out_dir = config.out_dir;
    fs::create_directories(out_dir);

    prompts::TemplateStore templates(config.effective_templates_dir());
    Manifest manifest(out_dir / "manifest.json");
    manifest.set_header(config.resolved(), templates.integrity_hashes());

    auto tokenizer = make_token_counter(config.tokenizer);
    auto strategy = prompts::parse_strategy(config.strategy);
    auto task = prompts::parse_task(config.task);

    PipelineResult result;
    result.out_dir = out_dir;

    fs::path corpus_path = out_dir / "corpus.jsonl";
    fs::path conversations_path = out_dir / "conversations.jsonl";
    fs::path generations_path = out_dir / "generations.jsonl";
    fs::path sft_path = out_dir / "sft.jsonl";
    fs::path stats_path = out_dir / "sft_stats.json";
    fs::path train_config_path = out_dir / "training_config.txt";
    fs::path vd_scores_path = out_dir / "vd_scores.json";

    auto run_stage = [&](const std::string& name,
                         const std::map<std::string, std::string>& input_hashes,
                         const std::vector<fs::path>& outputs,
                         const std::function<std::map<std::string, std::string>()>& body) {
        StageOutcome outcome;
        outcome.name = name;
        if (manifest.stage_is_current(name, input_hashes, outputs)) {
            outcome.skipped = true;
            outcome.counts = manifest.stage_counts(name);
            result.stages.push_back(outcome);
            return;
        }
        try {
            outcome.counts = body();
        } catch (const Error& e) {
            throw Error("stage '" + name + "' failed: " + e.what());
        }
        manifest.record_stage(name, input_hashes, outputs, outcome.counts);
        result.stages.push_back(outcome);
    };

    // --- corpus ---
    run_stage(
        "corpus", {{"input", file_hash_or_empty(config.input)}}, {corpus_path},
        [&]() -> std::map<std::string, std::string> {
            corpus::IngestOptions options;
            options.origin = corpus::parse_origin(config.origin);
            options.strict_duplicates = config.strict_ingest;
            auto ingested =
                corpus::ingest(config.input, corpus::parse_input_format(config.format), options);

            corpus::CompilerConfig compiler_config;
            compiler_config.command = config.compiler;
            compiler_config.timeout = std::chrono::milliseconds(config.compiler_timeout_ms);
            auto compiled =
                corpus::compile_all(ingested.samples, compiler_config, config.concurrency);

            // token filter applies to the compiled assembly
            std::size_t over_limit = 0;
            std::vector<corpus::CorpusRecord> records;
            for (std::size_t i = 0; i < ingested.samples.size(); ++i) {
                if (compiled[i].compile_ok &&
                    tokenizer->count(compiled[i].asm_code) > config.max_tokens) {
                    ++over_limit;
                    continue;
                }
                records.push_back({ingested.samples[i], compiled[i]});
            }
            corpus::write_corpus(corpus_path, records);

            std::size_t ok = 0;
            for (const auto& record : records) {
                if (record.compiled.compile_ok) {
                    ++ok;
                }
            }
            return {{"ingested", std::to_string(ingested.samples.size())},
                    {"skipped_malformed", std::to_string(ingested.skipped)},
                    {"compile_ok", std::to_string(ok)},
                    {"dropped_over_token_limit", std::to_string(over_limit)},
                    {"written", std::to_string(records.size())}};
        });
    if (stop_after == "corpus") return result;

    // --- render ---
    run_stage(
        "render", {{"corpus.jsonl", file_hash_or_empty(corpus_path)}}, {conversations_path},
        [&]() -> std::map<std::string, std::string> {
            auto records = corpus::read_corpus(corpus_path);
            std::string out;
            std::size_t rendered = 0;
            std::size_t skipped = 0;
            for (const auto& record : records) {
                if (!record.compiled.compile_ok) {
                    ++skipped;
                    continue;
                }
                auto conversation = prompts::render(record.source, record.compiled.asm_code,
                                                    strategy, task, templates);
                out += prompts::conversation_to_json(conversation);
                out += '\n';
                ++rendered;
            }
            write_text_file(conversations_path, out);
            return {{"rendered", std::to_string(rendered)},
                    {"skipped_uncompiled", std::to_string(skipped)}};
        });
    if (stop_after == "render") return result;

    // --- generate ---
    run_stage(
        "generate", {{"conversations.jsonl", file_hash_or_empty(conversations_path)}},
        {generations_path}, [&]() -> std::map<std::string, std::string> {
            std::vector<prompts::RenderedConversation> conversations;
            for_each_line(conversations_path, [&](std::size_t, std::string_view line) {
                conversations.push_back(prompts::conversation_from_json(line));
            });
            auto backend = gateway::make_backend(config.backend, config.model);
            gateway::GatewayOptions options;
            options.cache_dir = config.cache_dir;
            options.system_message = config.system_message;
            gateway::Gateway gw(backend, options);
            gateway::GenParams params;
            params.temperature = config.temperature;
            params.top_p = config.top_p;
            params.max_new_tokens = config.max_new_tokens;
            params.mode = gateway::parse_mode(config.mode);
            auto records =
                gateway::generate_all(conversations, gw, params, config.concurrency,
                                      config.stage_seed("generate"), config.num_outputs);
            gateway::write_records(generations_path, records);
            return {{"generations", std::to_string(records.size())}};
        });
    if (stop_after == "generate") return result;

    // --- sft ---
    run_stage(
        "sft",
        {{"corpus.jsonl", file_hash_or_empty(corpus_path)},
         {"generations.jsonl", file_hash_or_empty(generations_path)}},
        {sft_path, stats_path, train_config_path}, [&]() -> std::map<std::string, std::string> {
            auto corpus_records = corpus::read_corpus(corpus_path);
            std::map<std::string, std::string> asm_by_id;
            std::map<std::string, CweSet> gold;
            for (const auto& record : corpus_records) {
                asm_by_id[record.source.id] = record.compiled.asm_code;
                if (record.source.is_vulnerable()) {
                    gold[record.source.id] = record.source.cwe_labels;
                }
            }
            auto generations = gateway::read_records(generations_path);
            std::string prefix =
                task == prompts::TaskKind::bcs
                    ? (config.bcs_prefix.empty() ? sft::kDefaultBcsPrefix : config.bcs_prefix)
                    : (config.vd_prefix.empty() ? sft::kDefaultVdPrefix : config.vd_prefix);
            auto built = sft::build_records(generations, task, prefix, *tokenizer, asm_by_id);

            json stats;
            stats["built"] = built.records.size();
            stats["dropped_overlength"] = built.dropped_overlength;
            stats["skipped_empty_report"] = built.skipped_empty_report;
            stats["skipped_missing_asm"] = built.skipped_missing_asm;

            std::vector<sft::SftRecord> records = std::move(built.records);
            if (config.sft_reject) {
                auto rejection = sft::reject_sample(records, gold);
                stats["rejection"] = {{"total", rejection.stats.total},
                                      {"kept", rejection.stats.kept},
                                      {"match_rate", rejection.stats.match_rate}};
                records = std::move(rejection.records);
            }
            sft::shuffle_records(records, config.stage_seed("sft"));

            std::map<std::string, std::string> overrides;
            if (config.sft_budget > 0 && !records.empty()) {
                auto budget =
                    sft::budget_plan(records, config.sft_budget, config.stage_seed("budget"));
                stats["budget"] = {{"budget_tokens", budget.report.budget_tokens},
                                   {"dataset_tokens", budget.report.dataset_tokens},
                                   {"passes_over_data", budget.report.passes_over_data},
                                   {"records_used", budget.report.records_used},
                                   {"overshoot", budget.report.overshoot}};
                overrides["budget_tokens"] = std::to_string(config.sft_budget);
            }
            sft::write_sft_jsonl(sft_path, records);
            write_text_file(stats_path, stats.dump(2) + "\n");
            sft::emit_training_config(train_config_path, {}, overrides);
            return {{"sft_records", std::to_string(records.size())},
                    {"dropped_overlength", std::to_string(built.dropped_overlength)}};
        });
    if (stop_after == "sft" || !config.eval_vd) return result;

    // --- eval_vd (optional) ---
    run_stage(
        "eval_vd",
        {{"corpus.jsonl", file_hash_or_empty(corpus_path)},
         {"generations.jsonl", file_hash_or_empty(generations_path)}},
        {vd_scores_path}, [&]() -> std::map<std::string, std::string> {
            auto corpus_records = corpus::read_corpus(corpus_path);
            std::map<std::string, CweSet> gold;
            for (const auto& record : corpus_records) {
                gold[record.source.id] = record.source.cwe_labels;
            }
            auto generations = gateway::read_records(generations_path);
            std::vector<vd::VdPrediction> predictions;
            for (const auto& generation : generations) {
                if (generation.output_index != 0) {
                    continue;
                }
                predictions.push_back({generation.sample_id,
                                       vd::extract_cwes(generation.final_report),
                                       generation.final_report});
            }
            auto score = vd::micro_scores(predictions, gold);
            write_text_file(vd_scores_path, vd::score_to_json(score) + "\n");
            return {{"scored", std::to_string(predictions.size())},
                    {"f1", format_fixed(score.f1, 6)}};
        });
    return result;
}

} // namespace forge::pipeline
