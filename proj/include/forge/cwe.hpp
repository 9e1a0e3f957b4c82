#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace forge {

/// One CWE taxonomy entry in canonical form "CWE-<n>" (uppercase prefix, no
/// leading zeros). Ordering and equality use the numeric id only, so a set of
/// labels is deduplicated regardless of which description variant came in.
class CweLabel {
public:
    static CweLabel from_number(int number, std::string description = "");

    /// Accepts "CWE-79", "cwe-79", "CWE79", "CWE-0079", "cwe 79" and the
    /// unicode-hyphen variant. Returns nullopt when no digits are present.
    static std::optional<CweLabel> parse(std::string_view text, std::string description = "");

    int number() const { return number_; }
    /// Canonical id, e.g. "CWE-79".
    const std::string& id() const { return id_; }
    const std::string& description() const { return description_; }
    bool has_description() const { return !description_.empty(); }
    void set_description(std::string description) { description_ = std::move(description); }

    bool operator<(const CweLabel& other) const { return number_ < other.number_; }
    bool operator==(const CweLabel& other) const { return number_ == other.number_; }

private:
    CweLabel(int number, std::string description);
    int number_;
    std::string id_;
    std::string description_;
};

using CweSet = std::set<CweLabel>;

/// Canonical form of a raw CWE id string, or nullopt if it cannot be parsed.
std::optional<std::string> normalize_cwe_id(std::string_view raw);

/// All CWE mentions in free text: case-insensitive "CWE", an optional single
/// separator (ASCII '-', space, or U+2010), then digits. Normalized and
/// deduplicated.
CweSet extract_cwe_mentions(std::string_view text);

/// Built-in descriptions for common CWE ids plus optional user-supplied
/// entries. Used when an ingested label carries no description of its own.
class CweRegistry {
public:
    /// Registry preloaded with a curated set of frequent CWEs.
    static const CweRegistry& builtin();

    CweRegistry() = default;
    void add(int number, std::string description);
    /// Merges "CWE-n<TAB>description" lines (JSONL {"id","description"} also
    /// accepted) from a file.
    void load_file(const std::filesystem::path& path);
    std::optional<std::string> lookup(int number) const;

private:
    std::vector<std::pair<int, std::string>> entries_; // sorted by number
};

} // namespace forge
