#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "forge/common.hpp"
#include "forge/pipeline.hpp"
#include "forge/sft.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>

using namespace forge;
using namespace forge::pipeline;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fixture(const char* name) { return fs::path(FORGE_FIXTURE_DIR) / name; }

fs::path scratch_dir(const std::string& tag) {
    auto dir = fs::temp_directory_path() / ("forge-pipe-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

PipelineConfig fixture_config(const fs::path& out_dir) {
    std::map<std::string, std::string> values = {
        {"input", fixture("five_functions.jsonl").string()},
        {"format", "jsonl"},
        {"strategy", "cing"},
        {"task", "bcs"},
        {"backend", "mock:echo"},
        {"seed", "7"},
        {"concurrency", "2"},
        {"templates_dir", FORGE_TEMPLATE_DIR},
        {"out_dir", out_dir.string()},
    };
    return PipelineConfig::from_map(values);
}

std::string slurp(const fs::path& path) { return read_text_file(path); }

} // namespace

TEST_CASE("config text parsing: comments, blanks, bad lines, unknown keys") {
    auto values = parse_config_text("# comment\n\nseed = 9\n input =  data.jsonl \n");
    CHECK(values.at("seed") == "9");
    CHECK(values.at("input") == "data.jsonl");
    CHECK_THROWS_AS(parse_config_text("not a kv line\n"), ValidationError);
    CHECK_THROWS_AS(PipelineConfig::from_map({{"mystery_key", "1"}}), ValidationError);
    CHECK_THROWS_AS(PipelineConfig::from_map({{"seed", "not-a-number"}}), ValidationError);
}

TEST_CASE("stage seeds derive from the root seed and stage name") {
    PipelineConfig config;
    config.seed = 7;
    CHECK(config.stage_seed("generate") != config.stage_seed("sft"));
    PipelineConfig same;
    same.seed = 7;
    CHECK(config.stage_seed("generate") == same.stage_seed("generate"));
    PipelineConfig other;
    other.seed = 8;
    CHECK(config.stage_seed("generate") != other.stage_seed("generate"));
}

TEST_CASE("validate: fixture config with intact templates has no fatal findings") {
    auto out_dir = scratch_dir("validate");
    auto findings = validate_config(fixture_config(out_dir));
    CHECK_FALSE(has_fatal(findings));
    fs::remove_all(out_dir);
}

TEST_CASE("validate: zero concurrency, missing backend, missing input are fatal") {
    auto out_dir = scratch_dir("validate-bad");
    auto config = fixture_config(out_dir);
    config.concurrency = 0;
    CHECK(has_fatal(validate_config(config)));

    config = fixture_config(out_dir);
    config.backend = "";
    CHECK(has_fatal(validate_config(config)));

    config = fixture_config(out_dir);
    config.backend = "ftp://nope";
    CHECK(has_fatal(validate_config(config)));

    config = fixture_config(out_dir);
    config.input = "/does/not/exist.jsonl";
    CHECK(has_fatal(validate_config(config)));

    // missing seed is only a warning
    config = fixture_config(out_dir);
    config.raw.erase("seed");
    auto findings = validate_config(config);
    CHECK_FALSE(has_fatal(findings));
    CHECK(findings.size() >= 1);
    fs::remove_all(out_dir);
}

TEST_CASE("validate: tampered template is a fatal hash mismatch") {
    auto copy_dir = scratch_dir("templates-copy");
    fs::copy(FORGE_TEMPLATE_DIR, copy_dir, fs::copy_options::recursive);
    CHECK_FALSE(has_fatal(verify_template_integrity(copy_dir)));

    auto victim = copy_dir / "judge.txt";
    write_text_file(victim, slurp(victim) + "tampered\n");
    auto findings = verify_template_integrity(copy_dir);
    REQUIRE(has_fatal(findings));
    bool mentions_judge = false;
    for (const auto& finding : findings) {
        mentions_judge |= finding.message.find("judge.txt") != std::string::npos;
    }
    CHECK(mentions_judge);

    fs::remove(copy_dir / "MANIFEST.sha256");
    CHECK(has_fatal(verify_template_integrity(copy_dir)));
    fs::remove_all(copy_dir);
}

TEST_CASE("five-sample dry run: counts, artifacts, manifest") {
    auto out_dir = scratch_dir("dryrun");
    auto config = fixture_config(out_dir);
    auto result = run_pipeline(config);
    REQUIRE(result.stages.size() == 4); // corpus, render, generate, sft

    CHECK(fs::exists(out_dir / "corpus.jsonl"));
    CHECK(fs::exists(out_dir / "conversations.jsonl"));
    CHECK(fs::exists(out_dir / "generations.jsonl"));
    CHECK(fs::exists(out_dir / "sft.jsonl"));
    CHECK(fs::exists(out_dir / "manifest.json"));

    // all five fixture functions compile, so five SFT records come out
    ApproxTokenCounter counter;
    auto records = sft::read_sft_jsonl(out_dir / "sft.jsonl", counter);
    CHECK(records.size() == 5);
    for (const auto& record : records) {
        CHECK(record.total_tokens() <= sft::kMaxSequenceTokens);
    }

    // manifest lists every artifact with its content hash
    auto manifest = json::parse(slurp(out_dir / "manifest.json"));
    REQUIRE(manifest.contains("stages"));
    for (const char* stage : {"corpus", "render", "generate", "sft"}) {
        REQUIRE(manifest["stages"].contains(stage));
        for (const auto& [file, hash] : manifest["stages"][stage]["outputs"].items()) {
            CHECK(sha256_file(out_dir / file) == hash.get<std::string>());
        }
    }
    CHECK(manifest["config"]["seed"] == "7");
    CHECK(manifest.contains("templates"));
    CHECK(manifest["templates"].size() >= 14); // all template assets hashed

    fs::remove_all(out_dir);
}

TEST_CASE("rerun in a fresh directory is byte-identical; same directory skips stages") {
    auto dir_a = scratch_dir("det-a");
    auto dir_b = scratch_dir("det-b");
    run_pipeline(fixture_config(dir_a));
    run_pipeline(fixture_config(dir_b));
    for (const char* name : {"corpus.jsonl", "conversations.jsonl", "generations.jsonl",
                             "sft.jsonl", "sft_stats.json", "training_config.txt"}) {
        CAPTURE(name);
        CHECK(slurp(dir_a / name) == slurp(dir_b / name));
    }

    // second run over the same directory: everything is up to date
    auto again = run_pipeline(fixture_config(dir_a));
    for (const auto& stage : again.stages) {
        CHECK(stage.skipped);
    }
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("resumability: stopping after a stage and resuming matches an uninterrupted run") {
    auto dir_partial = scratch_dir("resume");
    auto dir_full = scratch_dir("full");

    auto partial = run_pipeline(fixture_config(dir_partial), "render");
    CHECK(partial.stages.size() == 2);
    CHECK_FALSE(fs::exists(dir_partial / "generations.jsonl"));

    auto resumed = run_pipeline(fixture_config(dir_partial));
    REQUIRE(resumed.stages.size() == 4);
    CHECK(resumed.stages[0].skipped); // corpus already done
    CHECK(resumed.stages[1].skipped); // render already done
    CHECK_FALSE(resumed.stages[2].skipped);

    run_pipeline(fixture_config(dir_full));
    for (const char* name : {"corpus.jsonl", "conversations.jsonl", "generations.jsonl",
                             "sft.jsonl"}) {
        CAPTURE(name);
        CHECK(slurp(dir_partial / name) == slurp(dir_full / name));
    }
    fs::remove_all(dir_partial);
    fs::remove_all(dir_full);
}

TEST_CASE("invalid config halts before any work") {
    auto out_dir = scratch_dir("halt");
    auto config = fixture_config(out_dir);
    config.backend = "";
    CHECK_THROWS_AS(run_pipeline(config), ValidationError);
    CHECK_FALSE(fs::exists(out_dir / "corpus.jsonl"));
    fs::remove_all(out_dir);
}

TEST_CASE("optional vd eval stage writes scores") {
    auto out_dir = scratch_dir("evalvd");
    auto config = fixture_config(out_dir);
    config.task = "vd";
    config.eval_vd = true;
    auto result = run_pipeline(config);
    REQUIRE(result.stages.size() == 5);
    CHECK(fs::exists(out_dir / "vd_scores.json"));
    auto scores = json::parse(slurp(out_dir / "vd_scores.json"));
    CHECK(scores.contains("f1"));
    // echo backend replies with the prompt, which for vulnerable samples
    // contains the injected gold CWEs, so recall is positive
    CHECK(scores["recall"].get<double>() > 0.0);
    fs::remove_all(out_dir);
}

TEST_CASE("resolved config echo covers every key") {
    PipelineConfig config;
    auto resolved = config.resolved();
    for (const char* key : {"input", "backend", "seed", "strategy", "task", "out_dir",
                            "tokenizer", "max_tokens", "concurrency"}) {
        CHECK(resolved.count(key) == 1);
    }
}
