#include "forge/prompts.hpp"

#include "forge/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>

namespace forge::prompts {

using nlohmann::json;

namespace {

// Every placeholder any template may use. The multi-turn vulnerable template
// spells the plural variant in its first turn; both map to the same block.
constexpr std::array<std::string_view, 7> kKnownPlaceholders = {
    "c_code",  "assembly_code", "asm_code", "CWEs_and_their_description",
    "CWEs_and_their_descriptions", "report1", "report2"};

std::string brace(std::string_view name) { return "{" + std::string(name) + "}"; }

} // namespace

std::string strategy_name(Strategy strategy) {
    switch (strategy) {
    case Strategy::cing_clearly: return "cing";
    case Strategy::multi_turn_cing_clearly: return "mcc";
    case Strategy::no_cing: return "nocing";
    case Strategy::zero_shot_baseline: return "zero_shot";
    }
    return "cing";
}

Strategy parse_strategy(std::string_view name) {
    if (name == "cing" || name == "cc") return Strategy::cing_clearly;
    if (name == "mcc") return Strategy::multi_turn_cing_clearly;
    if (name == "nocing" || name == "noc") return Strategy::no_cing;
    if (name == "zero_shot" || name == "baseline") return Strategy::zero_shot_baseline;
    throw ConfigError("unknown strategy: " + std::string(name) +
                      " (expected cing, mcc, nocing, or zero_shot)");
}

std::string task_name(TaskKind task) { return task == TaskKind::bcs ? "bcs" : "vd"; }

TaskKind parse_task(std::string_view name) {
    if (name == "bcs") return TaskKind::bcs;
    if (name == "vd") return TaskKind::vd;
    throw ConfigError("unknown task: " + std::string(name) + " (expected bcs or vd)");
}

int user_turn_count(Strategy strategy) {
    return strategy == Strategy::multi_turn_cing_clearly ? 3 : 1;
}

// ---------------------------------------------------------------------------
// TemplateStore

TemplateStore::TemplateStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    if (!std::filesystem::is_directory(dir_)) {
        throw ConfigError("template directory does not exist: " + dir_.string());
    }
}

std::string TemplateStore::template_rel_path(Strategy strategy, TaskKind task, bool vulnerable) {
    if (strategy == Strategy::zero_shot_baseline) {
        return "zero_shot_baseline.txt";
    }
    return strategy_name(strategy) + "/" + task_name(task) + "/" +
           (vulnerable ? "vuln.txt" : "benign.txt");
}

const std::string& TemplateStore::load(const std::string& rel_path) const {
    auto it = cache_.find(rel_path);
    if (it != cache_.end()) {
        return it->second;
    }
    std::string content = read_text_file(dir_ / rel_path);
    if (content.empty() || content.back() != '\n') {
        content.push_back('\n');
    }
    // one canonical trailing newline
    while (content.size() >= 2 && content[content.size() - 2] == '\n') {
        content.pop_back();
    }
    return cache_.emplace(rel_path, std::move(content)).first->second;
}

const std::string& TemplateStore::conversation_template(Strategy strategy, TaskKind task,
                                                        bool vulnerable) const {
    return load(template_rel_path(strategy, task, vulnerable));
}

const std::string& TemplateStore::judge_template() const { return load("judge.txt"); }

std::vector<std::string> TemplateStore::split_turns(std::string_view content) {
    std::string separator = "\n" + std::string(kTurnBreak) + "\n";
    std::vector<std::string> turns;
    std::size_t start = 0;
    for (;;) {
        std::size_t hit = content.find(separator, start);
        std::string turn(hit == std::string_view::npos ? content.substr(start)
                                                       : content.substr(start, hit - start));
        if (turn.empty() || turn.back() != '\n') {
            turn.push_back('\n');
        }
        turns.push_back(std::move(turn));
        if (hit == std::string_view::npos) {
            break;
        }
        start = hit + separator.size();
    }
    return turns;
}

std::map<std::string, std::string> TemplateStore::integrity_hashes() const {
    std::map<std::string, std::string> hashes;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir_)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") {
            continue;
        }
        std::string rel = std::filesystem::relative(entry.path(), dir_).generic_string();
        hashes[rel] = sha256_file(entry.path());
    }
    return hashes;
}

// ---------------------------------------------------------------------------
// Rendering

std::string render_template(std::string_view template_text, const VarMap& vars) {
    std::string out(template_text);
    for (std::string_view name : kKnownPlaceholders) {
        std::string token = brace(name);
        if (out.find(token) == std::string::npos) {
            continue;
        }
        auto it = vars.find(std::string(name));
        if (it == vars.end() || it->second.empty()) {
            throw RenderError(std::string(name),
                              "missing value for template placeholder {" + std::string(name) + "}");
        }
        out = replace_all(std::move(out), token, it->second);
    }
    for (std::string_view name : kKnownPlaceholders) {
        if (out.find(brace(name)) != std::string::npos) {
            throw RenderError(std::string(name), "unresolved placeholder {" + std::string(name) +
                                                     "} after substitution");
        }
    }
    return out;
}

std::string cwe_block(const CweSet& labels, const CweRegistry& registry, bool strict) {
    std::string out;
    for (const auto& label : labels) { // CweSet orders by numeric id
        std::string description = label.description();
        if (description.empty()) {
            if (auto found = registry.lookup(label.number())) {
                description = *found;
            } else if (strict) {
                throw ValidationError("no description available for " + label.id());
            } else {
                description = "(no description)";
            }
        }
        if (!out.empty()) {
            out += '\n';
        }
        out += label.id() + ": " + description;
    }
    return out;
}

RenderedConversation render(const corpus::SourceSample& source, const std::string& asm_code,
                            Strategy strategy, TaskKind task, const TemplateStore& store,
                            const CweRegistry& registry, const RenderOptions& options) {
    VarMap vars;
    if (!asm_code.empty()) {
        vars["asm_code"] = asm_code;
        vars["assembly_code"] = asm_code;
    }
    if (!source.c_code.empty()) {
        vars["c_code"] = source.c_code;
    }
    if (task == TaskKind::vd && source.is_vulnerable()) {
        std::string block =
            cwe_block(source.cwe_labels, registry, options.strict_cwe_descriptions);
        vars["CWEs_and_their_description"] = block;
        vars["CWEs_and_their_descriptions"] = std::move(block);
    }

    const std::string& template_text =
        store.conversation_template(strategy, task, source.is_vulnerable());
    std::string rendered = render_template(template_text, vars);

    RenderedConversation conversation;
    conversation.sample_id = source.id;
    conversation.strategy = strategy;
    conversation.task = task;
    for (auto& turn : TemplateStore::split_turns(rendered)) {
        conversation.user_turns.push_back({"user", std::move(turn)});
    }
    if (static_cast<int>(conversation.user_turns.size()) != user_turn_count(strategy)) {
        throw Error("template for " + strategy_name(strategy) + " produced " +
                    std::to_string(conversation.user_turns.size()) + " turns, expected " +
                    std::to_string(user_turn_count(strategy)));
    }
    conversation.placeholders_resolved = true;
    return conversation;
}

ChatMessage render_judge(const std::string& asm_code, const std::string& c_code,
                         const std::string& report1, const std::string& report2,
                         const TemplateStore& store) {
    if (report1.empty() || report2.empty()) {
        throw ValidationError("render_judge: both reports must be nonempty");
    }
    VarMap vars{{"asm_code", asm_code},
                {"c_code", c_code},
                {"report1", report1},
                {"report2", report2}};
    return {"user", render_template(store.judge_template(), vars)};
}

// ---------------------------------------------------------------------------
// JSON

std::string conversation_to_json(const RenderedConversation& conversation) {
    json row;
    row["sample_id"] = conversation.sample_id;
    row["strategy"] = strategy_name(conversation.strategy);
    row["task"] = task_name(conversation.task);
    json turns = json::array();
    for (const auto& message : conversation.user_turns) {
        turns.push_back({{"role", message.role}, {"content", message.content}});
    }
    row["user_turns"] = turns;
    row["placeholders_resolved"] = conversation.placeholders_resolved;
    return row.dump();
}

RenderedConversation conversation_from_json(std::string_view text) {
    auto row = json::parse(text);
    RenderedConversation conversation;
    conversation.sample_id = row.at("sample_id").get<std::string>();
    conversation.strategy = parse_strategy(row.at("strategy").get<std::string>());
    conversation.task = parse_task(row.at("task").get<std::string>());
    for (const auto& turn : row.at("user_turns")) {
        conversation.user_turns.push_back(
            {turn.at("role").get<std::string>(), turn.at("content").get<std::string>()});
    }
    conversation.placeholders_resolved = row.value("placeholders_resolved", true);
    return conversation;
}

} // namespace forge::prompts
