#include "forge/bcs_eval.hpp"

#include "forge/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>

namespace forge::bcs {

using nlohmann::json;

std::string verdict_name(Verdict verdict) {
    switch (verdict) {
    case Verdict::first: return "first";
    case Verdict::second: return "second";
    case Verdict::tie: return "tie";
    case Verdict::unparsed: return "unparsed";
    }
    return "unparsed";
}

namespace {

Verdict parse_verdict_name(std::string_view name) {
    if (name == "first") return Verdict::first;
    if (name == "second") return Verdict::second;
    if (name == "tie") return Verdict::tie;
    return Verdict::unparsed;
}

} // namespace

std::vector<ComparisonTask> schedule_tournament(const std::vector<std::string>& models,
                                                const std::vector<std::string>& test_ids,
                                                int outputs_per_model, std::uint64_t seed,
                                                bool pair_outputs_all) {
    if (outputs_per_model < 1) {
        throw ValidationError("schedule_tournament: outputs_per_model must be >= 1");
    }
    if (models.size() < 2) {
        throw ValidationError("schedule_tournament: need at least two models");
    }
    for (std::size_t i = 0; i < models.size(); ++i) {
        for (std::size_t j = i + 1; j < models.size(); ++j) {
            if (models[i] == models[j]) {
                throw ValidationError("schedule_tournament: duplicate model '" + models[i] + "'");
            }
        }
    }
    Rng rng(seed);
    std::vector<ComparisonTask> tasks;
    for (std::size_t i = 0; i < models.size(); ++i) {
        for (std::size_t j = i + 1; j < models.size(); ++j) {
            for (const auto& sample_id : test_ids) {
                if (pair_outputs_all) {
                    // all k x k output pairings, once each
                    for (int a = 0; a < outputs_per_model; ++a) {
                        for (int b = 0; b < outputs_per_model; ++b) {
                            ComparisonTask task;
                            task.model_a = models[i];
                            task.model_b = models[j];
                            task.sample_id = sample_id;
                            task.output_index = a * outputs_per_model + b;
                            task.duplicate = 0;
                            task.a_shown_first = rng.bounded(2) == 0;
                            tasks.push_back(std::move(task));
                        }
                    }
                    continue;
                }
                // index pairing, duplicated with independent order coins:
                // |ids| * k * 2 comparisons per pair
                for (int k = 0; k < outputs_per_model; ++k) {
                    for (int duplicate = 0; duplicate < 2; ++duplicate) {
                        ComparisonTask task;
                        task.model_a = models[i];
                        task.model_b = models[j];
                        task.sample_id = sample_id;
                        task.output_index = k;
                        task.duplicate = duplicate;
                        task.a_shown_first = rng.bounded(2) == 0;
                        tasks.push_back(std::move(task));
                    }
                }
            }
        }
    }
    return tasks;
}

namespace {

constexpr std::string_view kVerdictMarker = "the better report is";

// Characters that may sit between the marker and the token, or trail it.
bool is_filler(char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == ':' || c == '*' || c == '_' ||
           c == '`' || c == '"' || c == '\'' || c == '#' || c == '[' || c == '(';
}

bool is_alnum(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

std::optional<Verdict> verdict_token_at(std::string_view lower, std::size_t pos) {
    while (pos < lower.size() && is_filler(lower[pos])) {
        ++pos;
    }
    if (pos >= lower.size()) {
        return std::nullopt;
    }
    if (lower.compare(pos, 4, "none") == 0) {
        if (pos + 4 >= lower.size() || !is_alnum(lower[pos + 4])) {
            return Verdict::tie;
        }
        return std::nullopt;
    }
    char c = lower[pos];
    if ((c == '1' || c == '2') && (pos + 1 >= lower.size() || !is_alnum(lower[pos + 1]))) {
        return c == '1' ? Verdict::first : Verdict::second;
    }
    return std::nullopt;
}

} // namespace

Verdict parse_verdict(std::string_view judge_text) {
    std::string lower = to_lower(judge_text);
    // last parseable occurrence wins
    std::size_t search_end = lower.size();
    while (search_end > 0) {
        std::size_t pos = lower.rfind(kVerdictMarker, search_end - 1);
        if (pos == std::string::npos) {
            return Verdict::unparsed;
        }
        if (auto verdict = verdict_token_at(lower, pos + kVerdictMarker.size())) {
            return *verdict;
        }
        search_end = pos;
    }
    return Verdict::unparsed;
}

WinRateMatrix aggregate(const std::vector<JudgeComparison>& comparisons,
                        const std::vector<std::string>& models) {
    WinRateMatrix matrix;
    matrix.models = models;
    std::size_t n = models.size();
    auto zero64 = std::vector<std::vector<std::uint64_t>>(n, std::vector<std::uint64_t>(n, 0));
    matrix.wins = zero64;
    matrix.ties = zero64;
    matrix.unparsed = zero64;
    matrix.totals = zero64;
    matrix.winrate.assign(n, std::vector<double>(n, 0.0));
    matrix.avg_winrate.assign(n, 0.0);

    auto index_of = [&](const std::string& model) -> std::size_t {
        for (std::size_t i = 0; i < n; ++i) {
            if (models[i] == model) {
                return i;
            }
        }
        throw ValidationError("aggregate: comparison references unknown model '" + model + "'");
    };

    for (const auto& comparison : comparisons) {
        std::size_t first = index_of(comparison.model_first);
        std::size_t second = index_of(comparison.model_second);
        if (first == second) {
            throw ValidationError("aggregate: comparison pits a model against itself");
        }
        ++matrix.totals[first][second];
        ++matrix.totals[second][first];
        switch (comparison.verdict) {
        case Verdict::first:
            ++matrix.wins[first][second];
            break;
        case Verdict::second:
            ++matrix.wins[second][first];
            break;
        case Verdict::tie:
            ++matrix.ties[first][second];
            ++matrix.ties[second][first];
            break;
        case Verdict::unparsed:
            ++matrix.unparsed[first][second];
            ++matrix.unparsed[second][first];
            break;
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        std::size_t opponents = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) {
                continue;
            }
            if (matrix.totals[i][j] > 0) {
                matrix.winrate[i][j] = 100.0 * static_cast<double>(matrix.wins[i][j]) /
                                       static_cast<double>(matrix.totals[i][j]);
            }
            sum += matrix.winrate[i][j];
            ++opponents;
        }
        matrix.avg_winrate[i] = opponents == 0 ? 0.0 : sum / static_cast<double>(opponents);
    }
    return matrix;
}

std::string matrix_to_text(const WinRateMatrix& matrix) {
    std::size_t name_width = 3;
    for (const auto& model : matrix.models) {
        name_width = std::max(name_width, model.size());
    }
    auto pad_left = [](std::string text, std::size_t width) {
        while (text.size() < width) {
            text.insert(text.begin(), ' ');
        }
        return text;
    };
    auto pad_right = [](std::string text, std::size_t width) {
        while (text.size() < width) {
            text += ' ';
        }
        return text;
    };
    std::size_t cell_width = std::max<std::size_t>(8, name_width + 2);

    std::string out = pad_right("vs.", name_width);
    for (const auto& model : matrix.models) {
        out += pad_left(model, cell_width);
    }
    out += pad_left("avg. winrate", 16);
    out += '\n';
    for (std::size_t i = 0; i < matrix.models.size(); ++i) {
        out += pad_right(matrix.models[i], name_width);
        for (std::size_t j = 0; j < matrix.models.size(); ++j) {
            out += pad_left(i == j ? "-" : format_fixed(matrix.winrate[i][j], 2), cell_width);
        }
        out += pad_left(format_fixed(matrix.avg_winrate[i], 2), 16);
        out += '\n';
    }
    return out;
}

std::string matrix_to_csv(const WinRateMatrix& matrix) {
    std::string out = "model";
    for (const auto& model : matrix.models) {
        out += "," + model;
    }
    out += ",avg_winrate\n";
    for (std::size_t i = 0; i < matrix.models.size(); ++i) {
        out += matrix.models[i];
        for (std::size_t j = 0; j < matrix.models.size(); ++j) {
            out += ",";
            out += (i == j) ? "" : format_fixed(matrix.winrate[i][j], 2);
        }
        out += "," + format_fixed(matrix.avg_winrate[i], 2) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Length stats

std::size_t count_sections(std::string_view report) {
    std::size_t count = 0;
    for (const auto& line : split_lines(report)) {
        std::string_view body = trim(line);
        while (!body.empty() && body.front() == '#') {
            body.remove_prefix(1);
        }
        body = trim(body);
        if (body.size() >= 2 && body.substr(0, 2) == "**") {
            body = trim(body.substr(2));
        }
        constexpr std::string_view keyword = "Section ";
        if (body.size() > keyword.size() && body.substr(0, keyword.size()) == keyword &&
            body[keyword.size()] >= '0' && body[keyword.size()] <= '9') {
            ++count;
        }
    }
    return count;
}

LengthStats length_stats(const std::vector<std::string>& reports, const TokenCounter& tokenizer) {
    LengthStats stats;
    if (reports.empty()) {
        return stats;
    }
    std::uint64_t tokens = 0;
    std::uint64_t sections = 0;
    for (const auto& report : reports) {
        tokens += tokenizer.count(report);
        sections += count_sections(report);
    }
    stats.mean_tokens = static_cast<double>(tokens) / static_cast<double>(reports.size());
    stats.mean_sections = static_cast<double>(sections) / static_cast<double>(reports.size());
    return stats;
}

// ---------------------------------------------------------------------------
// Phrase analysis

const std::vector<std::string> kDefaultPhrases = {
    "core functionality", "main purpose", "more focused", "more correctly",
    "more detailed",      "clarity",      "conciseness"};

std::map<std::string, double> PhraseShare::share_by_model() const {
    std::map<std::string, double> shares;
    if (total == 0) {
        return shares;
    }
    for (const auto& [model, wins] : wins_by_model) {
        shares[model] = static_cast<double>(wins) / static_cast<double>(total);
    }
    return shares;
}

std::map<std::string, PhraseShare> phrase_analysis(const std::vector<JudgeComparison>& comparisons,
                                                   const std::vector<std::string>& phrases) {
    std::map<std::string, PhraseShare> analysis;
    for (const auto& phrase : phrases) {
        analysis[phrase]; // ensure the entry exists even when never seen
    }
    for (const auto& comparison : comparisons) {
        const std::string* winner = nullptr;
        if (comparison.verdict == Verdict::first) {
            winner = &comparison.model_first;
        } else if (comparison.verdict == Verdict::second) {
            winner = &comparison.model_second;
        } else {
            continue; // ties and unparsed excluded
        }
        for (const auto& phrase : phrases) {
            if (contains_ci(comparison.rationale, phrase)) {
                auto& share = analysis[phrase];
                ++share.total;
                ++share.wins_by_model[*winner];
            }
        }
    }
    return analysis;
}

std::string phrase_analysis_to_csv(const std::map<std::string, PhraseShare>& analysis) {
    std::string out = "phrase,model,wins_with_phrase,total_with_phrase,share\n";
    for (const auto& [phrase, share] : analysis) {
        for (const auto& [model, wins] : share.wins_by_model) {
            out += "\"" + phrase + "\"," + model + "," + std::to_string(wins) + "," +
                   std::to_string(share.total) + "," +
                   format_fixed(static_cast<double>(wins) / static_cast<double>(share.total), 4) +
                   "\n";
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tournament execution

std::string ReportStore::key(const std::string& model, const std::string& sample_id,
                             int output_index) {
    return model + "\x1f" + sample_id + "\x1f" + std::to_string(output_index);
}

void ReportStore::add(const std::string& model, const std::string& sample_id, int output_index,
                      std::string report) {
    reports_[key(model, sample_id, output_index)] = std::move(report);
}

void ReportStore::load_jsonl(const std::string& model, const std::filesystem::path& path) {
    for (const auto& record : gateway::read_records(path)) {
        add(model, record.sample_id, record.output_index, record.final_report);
    }
}

const std::string* ReportStore::find(const std::string& model, const std::string& sample_id,
                                     int output_index) const {
    auto it = reports_.find(key(model, sample_id, output_index));
    return it == reports_.end() ? nullptr : &it->second;
}

void ReportStore::require_all(const std::vector<ComparisonTask>& tasks) const {
    std::vector<std::string> gaps;
    for (const auto& task : tasks) {
        for (const std::string* model : {&task.model_a, &task.model_b}) {
            if (find(*model, task.sample_id, task.output_index) == nullptr) {
                std::string gap = *model + "/" + task.sample_id + "/k" +
                                  std::to_string(task.output_index);
                if (std::find(gaps.begin(), gaps.end(), gap) == gaps.end()) {
                    gaps.push_back(gap);
                }
            }
        }
    }
    if (!gaps.empty()) {
        std::string message = "missing generations for " + std::to_string(gaps.size()) +
                              " (model, sample, output) slots:";
        for (std::size_t i = 0; i < gaps.size() && i < 20; ++i) {
            message += " " + gaps[i];
        }
        if (gaps.size() > 20) {
            message += " ...";
        }
        throw ValidationError(message);
    }
}

std::vector<JudgeComparison> run_tournament(const std::vector<ComparisonTask>& tasks,
                                            const ReportStore& reports,
                                            const TournamentInputs& inputs,
                                            const prompts::TemplateStore& templates,
                                            gateway::Gateway& judge,
                                            const gateway::GenParams& params, int concurrency,
                                            std::uint64_t seed) {
    reports.require_all(tasks);
    std::vector<JudgeComparison> comparisons(tasks.size());
    parallel_for(tasks.size(), concurrency, [&](std::size_t i) {
        const auto& task = tasks[i];
        auto asm_it = inputs.asm_by_id.find(task.sample_id);
        auto c_it = inputs.c_by_id.find(task.sample_id);
        if (asm_it == inputs.asm_by_id.end() || c_it == inputs.c_by_id.end()) {
            throw ValidationError("run_tournament: no corpus entry for sample '" +
                                  task.sample_id + "'");
        }
        const std::string& first_model = task.a_shown_first ? task.model_a : task.model_b;
        const std::string& second_model = task.a_shown_first ? task.model_b : task.model_a;
        const std::string* report1 = reports.find(first_model, task.sample_id, task.output_index);
        const std::string* report2 = reports.find(second_model, task.sample_id, task.output_index);

        auto prompt = prompts::render_judge(asm_it->second, c_it->second, *report1, *report2,
                                            templates);
        std::uint64_t call_seed =
            splitmix64(seed ^ fnv1a64(first_model + "|" + second_model + "|" + task.sample_id +
                                      "|" + std::to_string(task.output_index) + "|" +
                                      std::to_string(task.duplicate)));
        auto completion = judge.complete({prompt}, params, call_seed);

        JudgeComparison comparison;
        comparison.sample_id = task.sample_id;
        comparison.model_first = first_model;
        comparison.model_second = second_model;
        comparison.output_index = task.output_index;
        comparison.duplicate = task.duplicate;
        comparison.rationale = completion.message.content;
        comparison.verdict = parse_verdict(comparison.rationale);
        comparisons[i] = std::move(comparison);
    });
    return comparisons;
}

// ---------------------------------------------------------------------------
// JSONL

std::string comparison_to_json_line(const JudgeComparison& comparison) {
    json row;
    row["sample_id"] = comparison.sample_id;
    row["model_first"] = comparison.model_first;
    row["model_second"] = comparison.model_second;
    row["output_index"] = comparison.output_index;
    row["duplicate"] = comparison.duplicate;
    row["verdict"] = verdict_name(comparison.verdict);
    row["rationale"] = comparison.rationale;
    return row.dump();
}

JudgeComparison comparison_from_json_line(std::string_view line) {
    auto row = json::parse(line);
    JudgeComparison comparison;
    comparison.sample_id = row.at("sample_id").get<std::string>();
    comparison.model_first = row.at("model_first").get<std::string>();
    comparison.model_second = row.at("model_second").get<std::string>();
    comparison.output_index = row.value("output_index", 0);
    comparison.duplicate = row.value("duplicate", 0);
    comparison.verdict = parse_verdict_name(row.value("verdict", "unparsed"));
    comparison.rationale = row.value("rationale", "");
    return comparison;
}

void write_comparisons(const std::filesystem::path& path,
                       const std::vector<JudgeComparison>& comparisons) {
    std::string out;
    for (const auto& comparison : comparisons) {
        out += comparison_to_json_line(comparison);
        out += '\n';
    }
    write_text_file(path, out);
}

std::vector<JudgeComparison> read_comparisons(const std::filesystem::path& path) {
    std::vector<JudgeComparison> comparisons;
    for_each_line(path, [&](std::size_t, std::string_view line) {
        comparisons.push_back(comparison_from_json_line(line));
    });
    return comparisons;
}

} // namespace forge::bcs
