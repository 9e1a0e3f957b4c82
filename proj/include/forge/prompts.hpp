#pragma once

#include "forge/common.hpp"
#include "forge/corpus.hpp"
#include "forge/cwe.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace forge::prompts {

enum class Strategy { cing_clearly, multi_turn_cing_clearly, no_cing, zero_shot_baseline };
enum class TaskKind { bcs, vd };

std::string strategy_name(Strategy strategy); // "cing" | "mcc" | "nocing" | "zero_shot"
Strategy parse_strategy(std::string_view name);
std::string task_name(TaskKind task); // "bcs" | "vd"
TaskKind parse_task(std::string_view name);

/// Number of user turns the strategy produces. Only the multi-turn strategy
/// has more than one.
int user_turn_count(Strategy strategy);

struct ChatMessage {
    std::string role; // "system" | "user" | "assistant"
    std::string content;
};

struct RenderedConversation {
    std::string sample_id;
    Strategy strategy = Strategy::cing_clearly;
    TaskKind task = TaskKind::bcs;
    std::vector<ChatMessage> user_turns;
    bool placeholders_resolved = false;
};

class RenderError : public Error {
public:
    RenderError(std::string placeholder, const std::string& detail)
        : Error(detail), placeholder_(std::move(placeholder)) {}
    const std::string& placeholder() const { return placeholder_; }

private:
    std::string placeholder_;
};

/// Loads the template assets from disk. Multi-turn files hold their turns
/// separated by a line containing exactly kTurnBreak; every file carries a
/// single trailing newline.
class TemplateStore {
public:
    static constexpr std::string_view kTurnBreak = "<<<TURN_BREAK>>>";

    explicit TemplateStore(std::filesystem::path dir);

    const std::filesystem::path& dir() const { return dir_; }
    /// Raw file content for the (strategy, task, vulnerable) combination.
    const std::string& conversation_template(Strategy strategy, TaskKind task,
                                             bool vulnerable) const;
    const std::string& judge_template() const;
    /// Relative path of the asset backing the combination.
    static std::string template_rel_path(Strategy strategy, TaskKind task, bool vulnerable);
    /// sha256 per relative template path, for provenance manifests.
    std::map<std::string, std::string> integrity_hashes() const;

    static std::vector<std::string> split_turns(std::string_view content);

private:
    const std::string& load(const std::string& rel_path) const;
    std::filesystem::path dir_;
    mutable std::map<std::string, std::string> cache_;
};

/// The variable names templates may reference. Raw substitution, no escaping.
using VarMap = std::map<std::string, std::string>;

/// Substitutes {name} tokens and verifies that (a) every placeholder present
/// in the template received a nonempty value and (b) no known placeholder
/// survives in the output. Throws RenderError naming the offending
/// placeholder.
std::string render_template(std::string_view template_text, const VarMap& vars);

/// Deterministic "CWE-N: description" block, one label per line, sorted by
/// numeric id; empty set renders as "". Unknown descriptions are fatal in
/// strict mode and "(no description)" otherwise.
std::string cwe_block(const CweSet& labels, const CweRegistry& registry, bool strict = true);

struct RenderOptions {
    bool strict_cwe_descriptions = true;
    /// Optional system message prepended by the gateway (none by default).
    std::string system_message;
};

/// Renders the full conversation for one sample. Template choice follows
/// (strategy, task, is_vulnerable); CWE text is injected only for vulnerable
/// VD renders.
RenderedConversation render(const corpus::SourceSample& source, const std::string& asm_code,
                            Strategy strategy, TaskKind task, const TemplateStore& store,
                            const CweRegistry& registry = CweRegistry::builtin(),
                            const RenderOptions& options = {});

/// The pairwise judge prompt with both reports injected verbatim.
ChatMessage render_judge(const std::string& asm_code, const std::string& c_code,
                         const std::string& report1, const std::string& report2,
                         const TemplateStore& store);

std::string conversation_to_json(const RenderedConversation& conversation);
RenderedConversation conversation_from_json(std::string_view text);

} // namespace forge::prompts
