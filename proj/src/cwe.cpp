#include "forge/cwe.hpp"

#include "forge/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>

namespace forge {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Parses the digit run at text[pos...], returns the numeric value without
// leading zeros, or nullopt if absent/overlong.
std::optional<int> parse_digits(std::string_view text, std::size_t& pos) {
    std::size_t start = pos;
    while (pos < text.size() && is_digit(text[pos])) {
        ++pos;
    }
    if (pos == start || pos - start > 9) {
        return std::nullopt;
    }
    long value = 0;
    for (std::size_t i = start; i < pos; ++i) {
        value = value * 10 + (text[i] - '0');
    }
    return static_cast<int>(value);
}

// True if text[pos..] starts with "cwe" case-insensitively.
bool match_cwe_prefix(std::string_view text, std::size_t pos) {
    if (pos + 3 > text.size()) {
        return false;
    }
    auto lower = [](char c) { return (c >= 'A' && c <= 'Z') ? char(c - 'A' + 'a') : c; };
    return lower(text[pos]) == 'c' && lower(text[pos + 1]) == 'w' && lower(text[pos + 2]) == 'e';
}

// Consumes one optional separator after "CWE": '-', ' ', or U+2010 (e2 80 90).
std::size_t skip_separator(std::string_view text, std::size_t pos) {
    if (pos >= text.size()) {
        return pos;
    }
    if (text[pos] == '-' || text[pos] == ' ') {
        return pos + 1;
    }
    if (pos + 3 <= text.size() && static_cast<unsigned char>(text[pos]) == 0xe2 &&
        static_cast<unsigned char>(text[pos + 1]) == 0x80 &&
        static_cast<unsigned char>(text[pos + 2]) == 0x90) {
        return pos + 3;
    }
    return pos;
}

} // namespace

CweLabel::CweLabel(int number, std::string description)
    : number_(number), id_("CWE-" + std::to_string(number)), description_(std::move(description)) {}

CweLabel CweLabel::from_number(int number, std::string description) {
    return CweLabel(number, std::move(description));
}

std::optional<CweLabel> CweLabel::parse(std::string_view text, std::string description) {
    std::string_view trimmed = trim(text);
    std::size_t pos = 0;
    if (match_cwe_prefix(trimmed, pos)) {
        pos = skip_separator(trimmed, pos + 3);
    }
    auto number = parse_digits(trimmed, pos);
    if (!number || pos != trimmed.size()) {
        return std::nullopt;
    }
    return CweLabel(*number, std::move(description));
}

std::optional<std::string> normalize_cwe_id(std::string_view raw) {
    auto label = CweLabel::parse(raw);
    if (!label) {
        return std::nullopt;
    }
    return label->id();
}

CweSet extract_cwe_mentions(std::string_view text) {
    CweSet out;
    for (std::size_t i = 0; i + 3 <= text.size(); ++i) {
        if (!match_cwe_prefix(text, i)) {
            continue;
        }
        std::size_t pos = skip_separator(text, i + 3);
        if (auto number = parse_digits(text, pos)) {
            out.insert(CweLabel::from_number(*number));
            i = pos - 1;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Registry

void CweRegistry::add(int number, std::string description) {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), number,
                               [](const auto& entry, int n) { return entry.first < n; });
    if (it != entries_.end() && it->first == number) {
        it->second = std::move(description);
    } else {
        entries_.insert(it, {number, std::move(description)});
    }
}

std::optional<std::string> CweRegistry::lookup(int number) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), number,
                               [](const auto& entry, int n) { return entry.first < n; });
    if (it != entries_.end() && it->first == number) {
        return it->second;
    }
    return std::nullopt;
}

void CweRegistry::load_file(const std::filesystem::path& path) {
    for_each_line(path, [&](std::size_t lineno, std::string_view line) {
        std::string_view body = trim(line);
        if (body.empty() || body.front() == '#') {
            return;
        }
        if (body.front() == '{') {
            auto row = nlohmann::json::parse(body, nullptr, false);
            if (row.is_discarded() || !row.contains("id") || !row.contains("description")) {
                throw ValidationError("bad CWE registry row at line " + std::to_string(lineno) +
                                      " of " + path.string());
            }
            auto label = CweLabel::parse(row["id"].get<std::string>());
            if (!label) {
                throw ValidationError("bad CWE id in registry at line " + std::to_string(lineno));
            }
            add(label->number(), row["description"].get<std::string>());
            return;
        }
        std::size_t tab = body.find('\t');
        if (tab == std::string_view::npos) {
            throw ValidationError("expected '<id>\\t<description>' in " + path.string() +
                                  " line " + std::to_string(lineno));
        }
        auto label = CweLabel::parse(body.substr(0, tab));
        if (!label) {
            throw ValidationError("bad CWE id in registry at line " + std::to_string(lineno));
        }
        add(label->number(), std::string(trim(body.substr(tab + 1))));
    });
}

const CweRegistry& CweRegistry::builtin() {
    static const CweRegistry registry = [] {
        CweRegistry r;
        // Curated subset covering the ids that show up frequently in C/C++
        // vulnerability corpora. Names follow the MITRE taxonomy.
        r.add(20, "Improper Input Validation");
        r.add(22, "Improper Limitation of a Pathname to a Restricted Directory ('Path Traversal')");
        r.add(59, "Improper Link Resolution Before File Access ('Link Following')");
        r.add(74, "Improper Neutralization of Special Elements in Output Used by a Downstream Component ('Injection')");
        r.add(77, "Improper Neutralization of Special Elements used in a Command ('Command Injection')");
        r.add(78, "Improper Neutralization of Special Elements used in an OS Command ('OS Command Injection')");
        r.add(79, "Improper Neutralization of Input During Web Page Generation ('Cross-site Scripting')");
        r.add(89, "Improper Neutralization of Special Elements used in an SQL Command ('SQL Injection')");
        r.add(94, "Improper Control of Generation of Code ('Code Injection')");
        r.add(119, "Improper Restriction of Operations within the Bounds of a Memory Buffer");
        r.add(120, "Buffer Copy without Checking Size of Input ('Classic Buffer Overflow')");
        r.add(121, "Stack-based Buffer Overflow");
        r.add(122, "Heap-based Buffer Overflow");
        r.add(125, "Out-of-bounds Read");
        r.add(129, "Improper Validation of Array Index");
        r.add(131, "Incorrect Calculation of Buffer Size");
        r.add(134, "Use of Externally-Controlled Format String");
        r.add(170, "Improper Null Termination");
        r.add(190, "Integer Overflow or Wraparound");
        r.add(191, "Integer Underflow (Wrap or Wraparound)");
        r.add(193, "Off-by-one Error");
        r.add(200, "Exposure of Sensitive Information to an Unauthorized Actor");
        r.add(252, "Unchecked Return Value");
        r.add(264, "Permissions, Privileges, and Access Controls");
        r.add(269, "Improper Privilege Management");
        r.add(276, "Incorrect Default Permissions");
        r.add(284, "Improper Access Control");
        r.add(287, "Improper Authentication");
        r.add(295, "Improper Certificate Validation");
        r.add(306, "Missing Authentication for Critical Function");
        r.add(310, "Cryptographic Issues");
        r.add(319, "Cleartext Transmission of Sensitive Information");
        r.add(327, "Use of a Broken or Risky Cryptographic Algorithm");
        r.add(330, "Use of Insufficiently Random Values");
        r.add(352, "Cross-Site Request Forgery (CSRF)");
        r.add(362, "Concurrent Execution using Shared Resource with Improper Synchronization ('Race Condition')");
        r.add(369, "Divide By Zero");
        r.add(400, "Uncontrolled Resource Consumption");
        r.add(401, "Missing Release of Memory after Effective Lifetime");
        r.add(404, "Improper Resource Shutdown or Release");
        r.add(415, "Double Free");
        r.add(416, "Use After Free");
        r.add(426, "Untrusted Search Path");
        r.add(434, "Unrestricted Upload of File with Dangerous Type");
        r.add(457, "Use of Uninitialized Variable");
        r.add(476, "NULL Pointer Dereference");
        r.add(502, "Deserialization of Untrusted Data");
        r.add(522, "Insufficiently Protected Credentials");
        r.add(532, "Insertion of Sensitive Information into Log File");
        r.add(601, "URL Redirection to Untrusted Site ('Open Redirect')");
        r.add(611, "Improper Restriction of XML External Entity Reference");
        r.add(617, "Reachable Assertion");
        r.add(662, "Improper Synchronization");
        r.add(665, "Improper Initialization");
        r.add(667, "Improper Locking");
        r.add(668, "Exposure of Resource to Wrong Sphere");
        r.add(674, "Uncontrolled Recursion");
        r.add(676, "Use of Potentially Dangerous Function");
        r.add(681, "Incorrect Conversion between Numeric Types");
        r.add(682, "Incorrect Calculation");
        r.add(690, "Unchecked Return Value to NULL Pointer Dereference");
        r.add(703, "Improper Check or Handling of Exceptional Conditions");
        r.add(704, "Incorrect Type Conversion or Cast");
        r.add(732, "Incorrect Permission Assignment for Critical Resource");
        r.add(754, "Improper Check for Unusual or Exceptional Conditions");
        r.add(755, "Improper Handling of Exceptional Conditions");
        r.add(772, "Missing Release of Resource after Effective Lifetime");
        r.add(787, "Out-of-bounds Write");
        r.add(798, "Use of Hard-coded Credentials");
        r.add(824, "Access of Uninitialized Pointer");
        r.add(835, "Loop with Unreachable Exit Condition ('Infinite Loop')");
        r.add(843, "Access of Resource Using Incompatible Type ('Type Confusion')");
        r.add(908, "Use of Uninitialized Resource");
        r.add(909, "Missing Initialization of Resource");
        r.add(918, "Server-Side Request Forgery (SSRF)");
        r.add(943, "Improper Neutralization of Special Elements in Data Query Logic");
        return r;
    }();
    return registry;
}

} // namespace forge
