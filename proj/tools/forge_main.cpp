// forge: synthetic assembly-analysis data pipeline and evaluation toolkit.
//
// Subcommands: corpus, render, generate, sft, eval bcs, eval vd, classify,
// run, validate. Exit codes: 0 success, 1 validation problem, 2 runtime
// failure.

#include "forge/bcs_eval.hpp"
#include "forge/compiler.hpp"
#include "forge/corpus.hpp"
#include "forge/gateway.hpp"
#include "forge/mlp.hpp"
#include "forge/pipeline.hpp"
#include "forge/prompts.hpp"
#include "forge/sft.hpp"
#include "forge/vd_eval.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <iostream>

namespace {

using namespace forge;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

std::map<std::string, std::string> load_config_map(const std::string& config_path,
                                                   const std::vector<std::string>& sets) {
    std::map<std::string, std::string> values;
    if (!config_path.empty()) {
        values = pipeline::parse_config_file(config_path);
    }
    for (const auto& assignment : sets) {
        std::size_t eq = assignment.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("--set expects key=value, got '" + assignment + "'");
        }
        values[assignment.substr(0, eq)] = assignment.substr(eq + 1);
    }
    return values;
}

void print_findings(const std::vector<pipeline::Finding>& findings) {
    for (const auto& finding : findings) {
        std::cerr << (finding.fatal ? "[fatal] " : "[warn]  ") << finding.message << "\n";
    }
}

gateway::GenParams params_from_kv(const std::string& text) {
    // "temp=0.4,top_p=0.95,max_new_tokens=4096,mode=sampling"
    gateway::GenParams params;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t comma = text.find(',', start);
        std::string item = text.substr(start, comma == std::string::npos ? std::string::npos
                                                                         : comma - start);
        std::size_t eq = item.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("--params expects key=value pairs, got '" + item + "'");
        }
        std::string key = item.substr(0, eq);
        std::string value = item.substr(eq + 1);
        if (key == "temp" || key == "temperature") params.temperature = std::stod(value);
        else if (key == "top_p") params.top_p = std::stod(value);
        else if (key == "max_new_tokens") params.max_new_tokens = std::stoi(value);
        else if (key == "mode") params.mode = gateway::parse_mode(value);
        else throw ValidationError("unknown generation param '" + key + "'");
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return params;
}

std::string default_templates_dir() {
    pipeline::PipelineConfig config;
    return config.effective_templates_dir().string();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"forge: assembly-analysis synthetic data pipeline"};
    app.require_subcommand(1);

    // shared state filled by the parsers below
    std::string config_path;
    std::vector<std::string> set_overrides;

    // --- corpus ---
    auto* corpus_cmd = app.add_subcommand("corpus", "corpus construction");
    corpus_cmd->require_subcommand(1);

    auto* ingest_cmd = corpus_cmd->add_subcommand("ingest", "ingest + compile + token-filter");
    std::string ingest_input, ingest_format = "jsonl", ingest_origin = "custom";
    std::string ingest_compiler = "gcc", ingest_out, ingest_tokenizer = "approx";
    std::uint64_t ingest_max_tokens = 16'384;
    int ingest_workers = 4;
    bool ingest_lenient = false;
    ingest_cmd->add_option("--input", ingest_input, "JSONL or CSV input")->required();
    ingest_cmd->add_option("--format", ingest_format, "jsonl|csv");
    ingest_cmd->add_option("--origin", ingest_origin, "diversevul-like|vdisc-like|custom");
    ingest_cmd->add_option("--compiler", ingest_compiler, "compiler command");
    ingest_cmd->add_option("--max-tokens", ingest_max_tokens, "assembly token cap (inclusive)");
    ingest_cmd->add_option("--tokenizer", ingest_tokenizer, "approx|sidecar:<path>");
    ingest_cmd->add_option("--workers", ingest_workers, "parallel compile processes");
    ingest_cmd->add_flag("--lenient", ingest_lenient, "last-wins on duplicate ids");
    ingest_cmd->add_option("--out", ingest_out, "corpus JSONL output")->required();

    auto* split_cmd = corpus_cmd->add_subcommand("split", "deterministic train/test split");
    std::string split_in, split_out;
    std::uint64_t split_seed = 0;
    std::size_t split_test_size = 500;
    bool split_stratified_flag = false;
    split_cmd->add_option("--in", split_in, "corpus JSONL")->required();
    split_cmd->add_option("--test-size", split_test_size, "held-out test set size");
    split_cmd->add_option("--seed", split_seed, "shuffle seed");
    split_cmd->add_flag("--stratified", split_stratified_flag, "stratify by CWE");
    split_cmd->add_option("--out", split_out, "split JSON output")->required();

    // --- render ---
    auto* render_cmd = app.add_subcommand("render", "render prompt conversations");
    std::string render_corpus, render_sample, render_strategy = "cing", render_task = "vd";
    std::string render_templates = default_templates_dir(), render_out = "-";
    render_cmd->add_option("--corpus", render_corpus, "corpus JSONL")->required();
    render_cmd->add_option("--sample", render_sample, "sample id (all when omitted)");
    render_cmd->add_option("--strategy", render_strategy, "cing|mcc|nocing|zero_shot");
    render_cmd->add_option("--task", render_task, "bcs|vd");
    render_cmd->add_option("--templates", render_templates, "template asset directory");
    render_cmd->add_option("--out", render_out, "output path or - for stdout");

    // --- generate ---
    auto* generate_cmd = app.add_subcommand("generate", "run the generation protocol");
    std::string gen_conversations, gen_backend = "mock:echo", gen_model = "generator";
    std::string gen_params_text, gen_out, gen_cache;
    std::string gen_corpus, gen_strategy = "cing", gen_task = "vd";
    std::string gen_templates = default_templates_dir();
    int gen_concurrency = 8, gen_num_outputs = 1;
    std::uint64_t gen_seed = 0;
    generate_cmd->add_option("--conversations", gen_conversations,
                             "rendered conversations JSONL (alternative to --corpus)");
    generate_cmd->add_option("--corpus", gen_corpus,
                             "corpus JSONL; rendered on the fly with --strategy/--task");
    generate_cmd->add_option("--strategy", gen_strategy, "cing|mcc|nocing|zero_shot");
    generate_cmd->add_option("--task", gen_task, "bcs|vd");
    generate_cmd->add_option("--templates", gen_templates, "template asset directory");
    generate_cmd->add_option("--backend", gen_backend, "mock:echo|mock:script=<path>|URL");
    generate_cmd->add_option("--model", gen_model, "model name sent to the backend");
    generate_cmd->add_option("--params", gen_params_text,
                             "temp=0.4,top_p=0.95,max_new_tokens=4096,mode=sampling");
    generate_cmd->add_option("--concurrency", gen_concurrency, "max in-flight conversations");
    generate_cmd->add_option("--num-outputs", gen_num_outputs, "outputs per conversation");
    generate_cmd->add_option("--seed", gen_seed, "base seed (cache salt)");
    generate_cmd->add_option("--cache-dir", gen_cache, "response cache directory");
    generate_cmd->add_option("--out", gen_out, "generation records JSONL")->required();

    // --- sft ---
    auto* sft_cmd = app.add_subcommand("sft", "supervised fine-tuning datasets");
    sft_cmd->require_subcommand(1);
    auto* sft_build = sft_cmd->add_subcommand("build", "build SFT records from generations");
    std::string sftb_gens, sftb_corpus, sftb_task = "vd", sftb_prefix, sftb_out_dir;
    std::string sftb_tokenizer = "approx";
    bool sftb_reject = false;
    std::uint64_t sftb_budget = 0, sftb_seed = 0;
    sft_build->add_option("--gens", sftb_gens, "generation records JSONL")->required();
    sft_build->add_option("--corpus", sftb_corpus, "corpus JSONL (assembly + gold labels)")
        ->required();
    sft_build->add_option("--task", sftb_task, "bcs|vd");
    sft_build->add_option("--prefix", sftb_prefix, "task prefix override");
    sft_build->add_option("--tokenizer", sftb_tokenizer, "approx|sidecar:<path>");
    sft_build->add_flag("--reject", sftb_reject, "CWE rejection sampling");
    sft_build->add_option("--budget", sftb_budget, "token budget for the replication plan");
    sft_build->add_option("--seed", sftb_seed, "shuffle/plan seed");
    sft_build->add_option("--out", sftb_out_dir, "output directory")->required();

    // --- eval ---
    auto* eval_cmd = app.add_subcommand("eval", "evaluation suites");
    eval_cmd->require_subcommand(1);

    auto* eval_bcs = eval_cmd->add_subcommand("bcs", "pairwise judge tournament");
    std::vector<std::string> bcs_model_files;
    std::string bcs_corpus, bcs_judge_backend = "mock:echo", bcs_judge_model = "judge";
    std::string bcs_templates = default_templates_dir(), bcs_out_dir, bcs_pairing = "index";
    std::string bcs_cache;
    int bcs_outputs = 1, bcs_concurrency = 8;
    std::uint64_t bcs_seed = 13;
    eval_bcs->add_option("--models", bcs_model_files,
                         "per-model generation JSONL files (name taken from the stem)")
        ->required()
        ->expected(-2);
    eval_bcs->add_option("--corpus", bcs_corpus, "corpus JSONL with asm + C code")->required();
    eval_bcs->add_option("--judge-backend", bcs_judge_backend, "judge endpoint or mock");
    eval_bcs->add_option("--judge-model", bcs_judge_model, "judge model name");
    eval_bcs->add_option("--outputs-per-model", bcs_outputs, "outputs per model per sample");
    eval_bcs->add_option("--pairing", bcs_pairing, "index|all output pairing");
    eval_bcs->add_option("--concurrency", bcs_concurrency, "judge call parallelism");
    eval_bcs->add_option("--seed", bcs_seed, "presentation-order seed");
    eval_bcs->add_option("--templates", bcs_templates, "template asset directory");
    eval_bcs->add_option("--cache-dir", bcs_cache, "judge response cache");
    eval_bcs->add_option("--out", bcs_out_dir, "output directory")->required();

    auto* eval_vd = eval_cmd->add_subcommand("vd", "micro F1/P/R for CWE predictions");
    std::string vd_gens, vd_gold, vd_out;
    bool vd_per_cwe = false;
    eval_vd->add_option("--gens", vd_gens, "generation records JSONL")->required();
    eval_vd->add_option("--gold", vd_gold, "corpus JSONL with gold labels")->required();
    eval_vd->add_option("--out", vd_out, "scores JSON output (stdout when omitted)");
    eval_vd->add_flag("--per-cwe", vd_per_cwe, "debug: per-label tp/fp/fn breakdown");

    // --- classify ---
    auto* classify_cmd = app.add_subcommand("classify", "multi-label MLP over embeddings");
    std::string clf_train, clf_test, clf_out;
    int clf_runs = 20, clf_h1 = 1024, clf_h2 = 256, clf_epochs = 50, clf_batch = 64,
        clf_patience = 5, clf_parallel = 0;
    double clf_lr = 1e-3, clf_val_fraction = 0.1;
    std::uint64_t clf_seed = 0;
    classify_cmd->add_option("--train", clf_train, "training embeddings (.jsonl or .cfem)")
        ->required();
    classify_cmd->add_option("--test", clf_test, "test embeddings (.jsonl or .cfem)")->required();
    classify_cmd->add_option("--runs", clf_runs, "independent training runs");
    classify_cmd->add_option("--seed", clf_seed, "base seed");
    classify_cmd->add_option("--hidden1", clf_h1, "first hidden width");
    classify_cmd->add_option("--hidden2", clf_h2, "second hidden width");
    classify_cmd->add_option("--epochs", clf_epochs, "max epochs");
    classify_cmd->add_option("--batch", clf_batch, "minibatch size");
    classify_cmd->add_option("--lr", clf_lr, "learning rate");
    classify_cmd->add_option("--patience", clf_patience, "early-stop patience");
    classify_cmd->add_option("--val-fraction", clf_val_fraction, "validation share of train");
    classify_cmd->add_option("--parallel-runs", clf_parallel, "parallel runs (0 = auto)");
    classify_cmd->add_option("--out", clf_out, "summary JSON output (stdout when omitted)");

    // --- run / validate ---
    auto* run_cmd = app.add_subcommand("run", "end-to-end pipeline from a config file");
    run_cmd->add_option("--config", config_path, "key=value config file");
    run_cmd->add_option("--set", set_overrides, "override config entries (key=value)");
    std::string run_stop_after;
    run_cmd->add_option("--stop-after", run_stop_after, "halt after this stage");

    auto* validate_cmd = app.add_subcommand("validate", "validate a pipeline config");
    validate_cmd->add_option("--config", config_path, "key=value config file");
    validate_cmd->add_option("--set", set_overrides, "override config entries (key=value)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e); // prints the message or help text
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (*ingest_cmd) {
            corpus::IngestOptions options;
            options.origin = corpus::parse_origin(ingest_origin);
            options.strict_duplicates = !ingest_lenient;
            auto ingested = corpus::ingest(
                ingest_input, corpus::parse_input_format(ingest_format), options);
            for (const auto& warning : ingested.warnings) {
                std::cerr << "[warn] " << warning << "\n";
            }
            corpus::CompilerConfig compiler_config;
            compiler_config.command = ingest_compiler;
            auto compiled = corpus::compile_all(ingested.samples, compiler_config, ingest_workers);
            auto tokenizer = make_token_counter(ingest_tokenizer);
            std::vector<corpus::CorpusRecord> records;
            std::size_t over_limit = 0;
            for (std::size_t i = 0; i < ingested.samples.size(); ++i) {
                if (compiled[i].compile_ok &&
                    tokenizer->count(compiled[i].asm_code) > ingest_max_tokens) {
                    ++over_limit;
                    continue;
                }
                records.push_back({ingested.samples[i], compiled[i]});
            }
            corpus::write_corpus(ingest_out, records);
            std::cout << "ingested " << ingested.samples.size() << " samples ("
                      << ingested.skipped << " skipped), wrote " << records.size()
                      << " records (" << over_limit << " over the token limit) to " << ingest_out
                      << "\n";
            return kExitOk;
        }

        if (*split_cmd) {
            auto records = corpus::read_corpus(split_in);
            std::vector<corpus::SourceSample> samples;
            samples.reserve(records.size());
            for (auto& record : records) {
                samples.push_back(record.source);
            }
            auto split = split_stratified_flag
                             ? corpus::split_stratified(samples, split_test_size, split_seed)
                             : corpus::split(samples, split_test_size, split_seed);
            json doc;
            doc["seed"] = split.seed;
            doc["train_ids"] = split.train_ids;
            doc["test_ids"] = split.test_ids;
            write_text_file(split_out, doc.dump(2) + "\n");
            std::cout << "split " << samples.size() << " samples into " << split.train_ids.size()
                      << " train / " << split.test_ids.size() << " test\n";
            return kExitOk;
        }

        if (*render_cmd) {
            prompts::TemplateStore templates(render_templates);
            auto records = corpus::read_corpus(render_corpus);
            auto strategy = prompts::parse_strategy(render_strategy);
            auto task = prompts::parse_task(render_task);
            std::string out;
            std::size_t rendered = 0;
            for (const auto& record : records) {
                if (!render_sample.empty() && record.source.id != render_sample) {
                    continue;
                }
                if (!record.compiled.compile_ok) {
                    continue;
                }
                auto conversation = prompts::render(record.source, record.compiled.asm_code,
                                                    strategy, task, templates);
                out += prompts::conversation_to_json(conversation);
                out += '\n';
                ++rendered;
            }
            if (!render_sample.empty() && rendered == 0) {
                throw ValidationError("sample '" + render_sample +
                                      "' not found (or did not compile)");
            }
            if (render_out == "-") {
                std::cout << out;
            } else {
                write_text_file(render_out, out);
            }
            return kExitOk;
        }

        if (*generate_cmd) {
            if (gen_conversations.empty() == gen_corpus.empty()) {
                throw ValidationError("generate needs exactly one of --conversations or --corpus");
            }
            std::vector<prompts::RenderedConversation> conversations;
            if (!gen_conversations.empty()) {
                for_each_line(gen_conversations, [&](std::size_t, std::string_view line) {
                    conversations.push_back(prompts::conversation_from_json(line));
                });
            } else {
                prompts::TemplateStore templates(gen_templates);
                auto strategy = prompts::parse_strategy(gen_strategy);
                auto task = prompts::parse_task(gen_task);
                for (const auto& record : corpus::read_corpus(gen_corpus)) {
                    if (!record.compiled.compile_ok) {
                        continue;
                    }
                    conversations.push_back(prompts::render(
                        record.source, record.compiled.asm_code, strategy, task, templates));
                }
            }
            auto backend = gateway::make_backend(gen_backend, gen_model);
            gateway::GatewayOptions options;
            options.cache_dir = gen_cache;
            gateway::Gateway gw(backend, options);
            gateway::GenParams params =
                gen_params_text.empty() ? gateway::GenParams{} : params_from_kv(gen_params_text);
            auto records = gateway::generate_all(conversations, gw, params, gen_concurrency,
                                                 gen_seed, gen_num_outputs);
            gateway::write_records(gen_out, records);
            std::size_t lint_hits = 0;
            for (const auto& record : records) {
                lint_hits += gateway::lint_final_report(record.final_report).size();
            }
            std::cout << "wrote " << records.size() << " generation records to " << gen_out;
            if (lint_hits > 0) {
                std::cout << " (" << lint_hits << " C-code mentions flagged by the linter)";
            }
            std::cout << "\n";
            return kExitOk;
        }

        if (*sft_build) {
            auto corpus_records = corpus::read_corpus(sftb_corpus);
            std::map<std::string, std::string> asm_by_id;
            std::map<std::string, CweSet> gold;
            for (const auto& record : corpus_records) {
                asm_by_id[record.source.id] = record.compiled.asm_code;
                if (record.source.is_vulnerable()) {
                    gold[record.source.id] = record.source.cwe_labels;
                }
            }
            auto generations = gateway::read_records(sftb_gens);
            auto task = prompts::parse_task(sftb_task);
            std::string prefix = !sftb_prefix.empty() ? sftb_prefix
                                 : task == prompts::TaskKind::bcs ? sft::kDefaultBcsPrefix
                                                                  : sft::kDefaultVdPrefix;
            auto tokenizer = make_token_counter(sftb_tokenizer);
            auto built = sft::build_records(generations, task, prefix, *tokenizer, asm_by_id);

            json stats;
            stats["built"] = built.records.size();
            stats["dropped_overlength"] = built.dropped_overlength;
            stats["skipped_empty_report"] = built.skipped_empty_report;
            stats["skipped_missing_asm"] = built.skipped_missing_asm;
            auto records = std::move(built.records);
            if (sftb_reject) {
                auto rejection = sft::reject_sample(records, gold);
                stats["rejection"] = {{"total", rejection.stats.total},
                                      {"kept", rejection.stats.kept},
                                      {"match_rate", rejection.stats.match_rate}};
                records = std::move(rejection.records);
            }
            sft::shuffle_records(records, sftb_seed);
            std::map<std::string, std::string> overrides;
            if (sftb_budget > 0 && !records.empty()) {
                auto budget = sft::budget_plan(records, sftb_budget, sftb_seed);
                stats["budget"] = {{"budget_tokens", budget.report.budget_tokens},
                                   {"dataset_tokens", budget.report.dataset_tokens},
                                   {"passes_over_data", budget.report.passes_over_data},
                                   {"records_used", budget.report.records_used},
                                   {"overshoot", budget.report.overshoot}};
                overrides["budget_tokens"] = std::to_string(sftb_budget);
            }
            std::filesystem::path out_dir = sftb_out_dir;
            std::filesystem::create_directories(out_dir);
            sft::write_sft_jsonl(out_dir / "sft.jsonl", records);
            write_text_file(out_dir / "sft_stats.json", stats.dump(2) + "\n");
            sft::emit_training_config(out_dir / "training_config.txt", {}, overrides);
            std::cout << "wrote " << records.size() << " SFT records to "
                      << (out_dir / "sft.jsonl").string() << "\n";
            return kExitOk;
        }

        if (*eval_bcs) {
            auto corpus_records = corpus::read_corpus(bcs_corpus);
            bcs::TournamentInputs inputs;
            std::vector<std::string> test_ids;
            for (const auto& record : corpus_records) {
                inputs.asm_by_id[record.source.id] = record.compiled.asm_code;
                inputs.c_by_id[record.source.id] = record.source.c_code;
                test_ids.push_back(record.source.id);
            }
            bcs::ReportStore reports;
            std::vector<std::string> model_names;
            for (const auto& file : bcs_model_files) {
                std::string name = std::filesystem::path(file).stem().string();
                model_names.push_back(name);
                reports.load_jsonl(name, file);
            }
            auto tasks = bcs::schedule_tournament(model_names, test_ids, bcs_outputs, bcs_seed,
                                                  bcs_pairing == "all");
            prompts::TemplateStore templates(bcs_templates);
            auto backend = gateway::make_backend(bcs_judge_backend, bcs_judge_model);
            gateway::GatewayOptions gw_options;
            gw_options.cache_dir = bcs_cache;
            gateway::Gateway judge(backend, gw_options);
            gateway::GenParams params;
            params.mode = gateway::GenParams::Mode::greedy; // verdict stability
            auto comparisons = bcs::run_tournament(tasks, reports, inputs, templates, judge,
                                                   params, bcs_concurrency, bcs_seed);
            auto matrix = bcs::aggregate(comparisons, model_names);

            std::filesystem::path out_dir = bcs_out_dir;
            std::filesystem::create_directories(out_dir);
            bcs::write_comparisons(out_dir / "comparisons.jsonl", comparisons);
            write_text_file(out_dir / "winrate_matrix.csv", bcs::matrix_to_csv(matrix));
            write_text_file(out_dir / "winrate_matrix.txt", bcs::matrix_to_text(matrix));
            write_text_file(out_dir / "phrase_analysis.csv",
                            bcs::phrase_analysis_to_csv(bcs::phrase_analysis(comparisons)));
            std::cout << bcs::matrix_to_text(matrix);
            return kExitOk;
        }

        if (*eval_vd) {
            auto corpus_records = corpus::read_corpus(vd_gold);
            std::map<std::string, CweSet> gold;
            for (const auto& record : corpus_records) {
                gold[record.source.id] = record.source.cwe_labels;
            }
            auto generations = gateway::read_records(vd_gens);
            std::vector<vd::VdPrediction> predictions;
            for (const auto& generation : generations) {
                predictions.push_back({generation.sample_id,
                                       vd::extract_cwes(generation.final_report),
                                       generation.final_report});
            }
            auto score = vd::micro_scores(predictions, gold);
            std::string model_name = std::filesystem::path(vd_gens).stem().string();
            std::cout << vd::score_report({{model_name, score}});
            if (vd_per_cwe) {
                for (const auto& [label, counts] : vd::per_label_counts(predictions, gold)) {
                    std::cout << label << " tp=" << counts.tp << " fp=" << counts.fp
                              << " fn=" << counts.fn << "\n";
                }
            }
            if (!vd_out.empty()) {
                write_text_file(vd_out, vd::score_to_json(score) + "\n");
            }
            return kExitOk;
        }

        if (*classify_cmd) {
            auto load = [](const std::string& path) {
                return std::filesystem::path(path).extension() == ".cfem"
                           ? clf::read_embeddings_cfem(path)
                           : clf::read_embeddings_jsonl(path);
            };
            auto splits = clf::make_splits(load(clf_train), load(clf_test), clf_val_fraction,
                                           clf_seed);
            clf::Hyperparams hypers;
            hypers.hidden1 = clf_h1;
            hypers.hidden2 = clf_h2;
            hypers.learning_rate = clf_lr;
            hypers.batch_size = clf_batch;
            hypers.epochs = clf_epochs;
            hypers.patience = clf_patience;
            auto summary = clf::evaluate_runs(splits, hypers, clf_runs, clf_seed,
                                              clf::default_threshold_grid(), clf_parallel);
            std::cout << summary.to_table();
            if (!clf_out.empty()) {
                write_text_file(clf_out, summary.to_json() + "\n");
            }
            return kExitOk;
        }

        if (*run_cmd) {
            auto config = pipeline::PipelineConfig::from_map(
                load_config_map(config_path, set_overrides));
            auto findings = pipeline::validate_config(config);
            print_findings(findings);
            if (pipeline::has_fatal(findings)) {
                return kExitValidation;
            }
            auto result = pipeline::run_pipeline(config, run_stop_after);
            for (const auto& stage : result.stages) {
                std::cout << "stage " << stage.name << (stage.skipped ? " [up-to-date]" : "");
                for (const auto& [key, value] : stage.counts) {
                    std::cout << " " << key << "=" << value;
                }
                std::cout << "\n";
            }
            std::cout << "artifacts in " << result.out_dir.string() << "\n";
            return kExitOk;
        }

        if (*validate_cmd) {
            auto config = pipeline::PipelineConfig::from_map(
                load_config_map(config_path, set_overrides));
            auto findings = pipeline::validate_config(config);
            print_findings(findings);
            if (pipeline::has_fatal(findings)) {
                return kExitValidation;
            }
            std::cout << "config ok\n";
            return kExitOk;
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
