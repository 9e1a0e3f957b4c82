#include "forge/corpus.hpp"

#include "forge/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace forge::corpus {

using nlohmann::json;

std::string origin_name(Origin origin) {
    switch (origin) {
    case Origin::diversevul_like: return "diversevul-like";
    case Origin::vdisc_like: return "vdisc-like";
    case Origin::custom: return "custom";
    }
    return "custom";
}

Origin parse_origin(std::string_view name) {
    if (name == "diversevul-like" || name == "diversevul") return Origin::diversevul_like;
    if (name == "vdisc-like" || name == "vdisc") return Origin::vdisc_like;
    if (name == "custom" || name.empty()) return Origin::custom;
    throw ConfigError("unknown origin: " + std::string(name));
}

InputFormat parse_input_format(std::string_view name) {
    if (name == "jsonl") return InputFormat::jsonl;
    if (name == "csv") return InputFormat::csv;
    throw ConfigError("unknown input format: " + std::string(name) + " (expected jsonl or csv)");
}

namespace {

struct RawRecord {
    std::string id;
    std::string func;
    std::vector<std::string> cwe_ids;
    std::map<std::string, std::string> cwe_desc; // raw id -> description
};

// Builds a SourceSample from a raw record; returns false with a reason when
// the record is unusable.
bool build_sample(const RawRecord& raw, Origin origin, SourceSample& out, std::string& reason) {
    if (trim(raw.func).empty()) {
        reason = "missing function body";
        return false;
    }
    CweSet labels;
    for (const std::string& raw_id : raw.cwe_ids) {
        if (trim(raw_id).empty()) {
            continue;
        }
        std::string description;
        if (auto it = raw.cwe_desc.find(raw_id); it != raw.cwe_desc.end()) {
            description = it->second;
        }
        auto label = CweLabel::parse(raw_id, std::move(description));
        if (!label) {
            reason = "unparseable CWE id '" + raw_id + "'";
            return false;
        }
        auto [it, inserted] = labels.insert(*label);
        if (!inserted && label->has_description() && !it->has_description()) {
            // keep the described variant on duplicate ids
            labels.erase(it);
            labels.insert(*label);
        }
    }
    out.id = raw.id;
    out.c_code = raw.func;
    out.cwe_labels = std::move(labels);
    out.origin = origin;
    return true;
}

std::vector<std::string> json_string_list(const json& value) {
    std::vector<std::string> out;
    if (value.is_string()) {
        out.push_back(value.get<std::string>());
    } else if (value.is_number_integer()) {
        out.push_back(std::to_string(value.get<long long>()));
    } else if (value.is_array()) {
        for (const auto& item : value) {
            if (item.is_string()) {
                out.push_back(item.get<std::string>());
            } else if (item.is_number_integer()) {
                out.push_back(std::to_string(item.get<long long>()));
            } else {
                throw ValidationError("cwe entries must be strings or integers");
            }
        }
    } else if (!value.is_null()) {
        throw ValidationError("cwe field must be a list");
    }
    return out;
}

bool parse_jsonl_record(std::string_view line, RawRecord& raw, std::string& reason) {
    auto row = json::parse(line, nullptr, false);
    if (row.is_discarded() || !row.is_object()) {
        reason = "invalid JSON";
        return false;
    }
    try {
        if (row.contains("id")) {
            if (row["id"].is_string()) {
                raw.id = row["id"].get<std::string>();
            } else if (row["id"].is_number_integer()) {
                raw.id = std::to_string(row["id"].get<long long>());
            }
        }
        if (row.contains("func") && row["func"].is_string()) {
            raw.func = row["func"].get<std::string>();
        }
        if (row.contains("cwe")) {
            raw.cwe_ids = json_string_list(row["cwe"]);
        }
        if (row.contains("cwe_desc") && !row["cwe_desc"].is_null()) {
            const auto& desc = row["cwe_desc"];
            if (desc.is_object()) {
                for (auto it = desc.begin(); it != desc.end(); ++it) {
                    raw.cwe_desc[it.key()] = it.value().get<std::string>();
                }
            } else if (desc.is_array()) {
                if (desc.size() != raw.cwe_ids.size()) {
                    reason = "cwe_desc list length does not match cwe list";
                    return false;
                }
                for (std::size_t i = 0; i < raw.cwe_ids.size(); ++i) {
                    raw.cwe_desc[raw.cwe_ids[i]] = desc[i].get<std::string>();
                }
            } else {
                reason = "cwe_desc must be an object or list";
                return false;
            }
        }
    } catch (const std::exception& e) {
        reason = e.what();
        return false;
    }
    return true;
}

// Minimal RFC 4180 reader: quoted fields, doubled-quote escapes, embedded
// newlines inside quotes.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
    std::string text = read_text_file(path);
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool row_has_data = false;

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
    };
    auto end_row = [&] {
        if (row_has_data || !row.empty()) {
            end_field();
            rows.push_back(std::move(row));
            row.clear();
        }
        row_has_data = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            in_quotes = true;
            row_has_data = true;
            break;
        case ',':
            end_field();
            row_has_data = true;
            break;
        case '\r':
            break;
        case '\n':
            end_row();
            break;
        default:
            field.push_back(c);
            row_has_data = true;
            break;
        }
    }
    if (in_quotes) {
        throw ValidationError("unterminated quoted field in " + path.string());
    }
    if (row_has_data || !row.empty()) {
        end_row();
    }
    return rows;
}

std::vector<std::string> split_cwe_cell(const std::string& cell) {
    // Either a JSON array or a ';'-separated list.
    std::string_view body = trim(cell);
    if (body.empty()) {
        return {};
    }
    if (body.front() == '[') {
        auto arr = json::parse(body, nullptr, false);
        if (arr.is_discarded()) {
            throw ValidationError("bad JSON array in cwe cell");
        }
        return json_string_list(arr);
    }
    std::vector<std::string> out;
    std::size_t start = 0;
    std::string text(body);
    while (start <= text.size()) {
        std::size_t sep = text.find(';', start);
        std::string part = text.substr(start, sep == std::string::npos ? std::string::npos
                                                                       : sep - start);
        if (!trim(part).empty()) {
            out.emplace_back(trim(part));
        }
        if (sep == std::string::npos) {
            break;
        }
        start = sep + 1;
    }
    return out;
}

} // namespace

IngestResult ingest(const std::filesystem::path& path, InputFormat format,
                    const IngestOptions& options) {
    if (!std::filesystem::exists(path)) {
        throw IoError("input file does not exist: " + path.string());
    }
    IngestResult result;
    std::map<std::string, std::size_t> index_by_id;
    std::size_t auto_id = 0;

    auto accept = [&](RawRecord raw, std::size_t lineno) {
        if (raw.id.empty()) {
            raw.id = "sample-" + std::to_string(++auto_id);
        }
        SourceSample sample;
        std::string reason;
        if (!build_sample(raw, options.origin, sample, reason)) {
            ++result.skipped;
            result.warnings.push_back("line " + std::to_string(lineno) + ": skipped (" + reason +
                                      ")");
            return;
        }
        if (auto it = index_by_id.find(sample.id); it != index_by_id.end()) {
            if (options.strict_duplicates) {
                throw ValidationError("duplicate sample id '" + sample.id + "' at line " +
                                      std::to_string(lineno));
            }
            result.warnings.push_back("line " + std::to_string(lineno) + ": duplicate id '" +
                                      sample.id + "' replaces earlier record");
            result.samples[it->second] = std::move(sample);
            return;
        }
        index_by_id[sample.id] = result.samples.size();
        result.samples.push_back(std::move(sample));
    };

    if (format == InputFormat::jsonl) {
        for_each_line(path, [&](std::size_t lineno, std::string_view line) {
            RawRecord raw;
            std::string reason;
            if (!parse_jsonl_record(line, raw, reason)) {
                ++result.skipped;
                result.warnings.push_back("line " + std::to_string(lineno) + ": skipped (" +
                                          reason + ")");
                return;
            }
            accept(std::move(raw), lineno);
        });
        return result;
    }

    auto rows = read_csv(path);
    if (rows.empty()) {
        return result;
    }
    const auto& header = rows.front();
    auto column = [&](std::string_view name) -> int {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (trim(header[i]) == name) {
                return static_cast<int>(i);
            }
        }
        return -1;
    };
    int id_col = column("id");
    int func_col = column("func");
    int cwe_col = column("cwe");
    int desc_col = column("cwe_desc");
    if (func_col < 0) {
        throw ValidationError("CSV header of " + path.string() + " has no 'func' column");
    }
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& cells = rows[r];
        auto cell = [&](int col) -> std::string {
            return (col >= 0 && static_cast<std::size_t>(col) < cells.size()) ? cells[col] : "";
        };
        RawRecord raw;
        raw.id = cell(id_col);
        raw.func = cell(func_col);
        try {
            raw.cwe_ids = split_cwe_cell(cell(cwe_col));
            std::string desc_cell = cell(desc_col);
            if (!trim(desc_cell).empty()) {
                auto desc = json::parse(desc_cell, nullptr, false);
                if (!desc.is_discarded() && desc.is_object()) {
                    for (auto it = desc.begin(); it != desc.end(); ++it) {
                        raw.cwe_desc[it.key()] = it.value().get<std::string>();
                    }
                }
            }
        } catch (const std::exception& e) {
            ++result.skipped;
            result.warnings.push_back("row " + std::to_string(r + 1) + ": skipped (" +
                                      std::string(e.what()) + ")");
            continue;
        }
        accept(std::move(raw), r + 1);
    }
    return result;
}

std::vector<CompiledSample> token_filter(const std::vector<CompiledSample>& samples,
                                         const TokenCounter& tokenizer, std::size_t max_tokens) {
    if (max_tokens == 0) {
        throw ConfigError("token_filter: max_tokens must be > 0");
    }
    std::vector<CompiledSample> kept;
    kept.reserve(samples.size());
    for (const auto& sample : samples) {
        if (tokenizer.count(sample.asm_code) <= max_tokens) {
            kept.push_back(sample);
        }
    }
    return kept;
}

namespace {

CorpusSplit split_ids(std::vector<std::string> ids, std::size_t test_size, std::uint64_t seed) {
    CorpusSplit result;
    result.seed = seed;
    Rng rng(seed);
    rng.shuffle(ids);
    result.test_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(test_size));
    result.train_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(test_size), ids.end());
    return result;
}

} // namespace

CorpusSplit split(const std::vector<SourceSample>& samples, std::size_t test_size,
                  std::uint64_t seed) {
    if (test_size > samples.size()) {
        throw ValidationError("split: test_size " + std::to_string(test_size) +
                              " exceeds corpus size " + std::to_string(samples.size()));
    }
    std::vector<std::string> ids;
    ids.reserve(samples.size());
    for (const auto& sample : samples) {
        ids.push_back(sample.id);
    }
    // Sorting first makes the split a pure function of the id set.
    std::sort(ids.begin(), ids.end());
    return split_ids(std::move(ids), test_size, seed);
}

CorpusSplit split_stratified(const std::vector<SourceSample>& samples, std::size_t test_size,
                             std::uint64_t seed) {
    if (test_size > samples.size()) {
        throw ValidationError("split_stratified: test_size exceeds corpus size");
    }
    std::map<std::string, std::vector<std::string>> strata;
    for (const auto& sample : samples) {
        std::string key = sample.is_vulnerable() ? sample.cwe_labels.begin()->id() : "benign";
        strata[key].push_back(sample.id);
    }

    // Proportional quota per stratum, largest remainder fills the slack.
    std::size_t total = samples.size();
    std::vector<std::pair<double, std::string>> remainders;
    std::map<std::string, std::size_t> quota;
    std::size_t assigned = 0;
    for (auto& [key, ids] : strata) {
        std::sort(ids.begin(), ids.end());
        double exact = static_cast<double>(test_size) * static_cast<double>(ids.size()) /
                       static_cast<double>(total);
        std::size_t base = static_cast<std::size_t>(exact);
        base = std::min(base, ids.size());
        quota[key] = base;
        assigned += base;
        remainders.push_back({exact - static_cast<double>(base), key});
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (const auto& [rem, key] : remainders) {
        if (assigned >= test_size) break;
        if (quota[key] < strata[key].size()) {
            ++quota[key];
            ++assigned;
        }
    }
    // Rare leftover when some strata saturate: take from any stratum with room.
    for (auto& [key, ids] : strata) {
        while (assigned < test_size && quota[key] < ids.size()) {
            ++quota[key];
            ++assigned;
        }
    }

    CorpusSplit result;
    result.seed = seed;
    Rng rng(seed);
    for (auto& [key, ids] : strata) {
        rng.shuffle(ids);
        std::size_t q = quota[key];
        for (std::size_t i = 0; i < ids.size(); ++i) {
            (i < q ? result.test_ids : result.train_ids).push_back(ids[i]);
        }
    }
    std::sort(result.test_ids.begin(), result.test_ids.end());
    std::sort(result.train_ids.begin(), result.train_ids.end());
    return result;
}

// ---------------------------------------------------------------------------
// Corpus JSONL

std::string to_jsonl_line(const CorpusRecord& record) {
    json row;
    row["id"] = record.source.id;
    row["c_code"] = record.source.c_code;
    json labels = json::array();
    json descs = json::object();
    for (const auto& label : record.source.cwe_labels) {
        labels.push_back(label.id());
        if (label.has_description()) {
            descs[label.id()] = label.description();
        }
    }
    row["cwe_labels"] = labels;
    if (!descs.empty()) {
        row["cwe_desc"] = descs;
    }
    row["is_vulnerable"] = record.source.is_vulnerable();
    row["origin"] = origin_name(record.source.origin);
    row["asm_code"] = record.compiled.asm_code;
    row["compile_ok"] = record.compiled.compile_ok;
    row["compiler_id"] = record.compiled.compiler_id;
    if (!record.compiled.diagnostics.empty()) {
        row["diagnostics"] = record.compiled.diagnostics;
    }
    return row.dump();
}

CorpusRecord record_from_json_line(std::string_view line) {
    auto row = json::parse(line);
    CorpusRecord record;
    record.source.id = row.at("id").get<std::string>();
    record.source.c_code = row.value("c_code", "");
    record.source.origin = parse_origin(row.value("origin", "custom"));
    json descs = row.value("cwe_desc", json::object());
    for (const auto& raw : row.value("cwe_labels", json::array())) {
        std::string raw_id = raw.get<std::string>();
        std::string description;
        if (descs.contains(raw_id)) {
            description = descs[raw_id].get<std::string>();
        }
        auto label = CweLabel::parse(raw_id, std::move(description));
        if (!label) {
            throw ValidationError("bad CWE id in corpus record " + record.source.id);
        }
        record.source.cwe_labels.insert(*label);
    }
    record.compiled.source_id = record.source.id;
    record.compiled.asm_code = row.value("asm_code", "");
    record.compiled.compile_ok = row.value("compile_ok", false);
    record.compiled.compiler_id = row.value("compiler_id", "");
    record.compiled.diagnostics = row.value("diagnostics", "");
    return record;
}

void write_corpus(const std::filesystem::path& path, const std::vector<CorpusRecord>& records) {
    std::string out;
    for (const auto& record : records) {
        out += to_jsonl_line(record);
        out += '\n';
    }
    write_text_file(path, out);
}

std::vector<CorpusRecord> read_corpus(const std::filesystem::path& path) {
    std::vector<CorpusRecord> records;
    for_each_line(path, [&](std::size_t lineno, std::string_view line) {
        try {
            records.push_back(record_from_json_line(line));
        } catch (const json::exception& e) {
            throw ValidationError("bad corpus row at line " + std::to_string(lineno) + " of " +
                                  path.string() + ": " + e.what());
        }
    });
    return records;
}

} // namespace forge::corpus
