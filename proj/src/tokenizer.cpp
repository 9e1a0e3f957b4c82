#include "forge/tokenizer.hpp"

#include "forge/common.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>

namespace forge {

std::string SidecarTokenCounter::text_key(std::string_view text) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(text)));
    return buf;
}

SidecarTokenCounter::SidecarTokenCounter(const std::filesystem::path& sidecar_path)
    : path_(sidecar_path) {
    for_each_line(sidecar_path, [&](std::size_t lineno, std::string_view line) {
        auto row = nlohmann::json::parse(line, nullptr, false);
        if (row.is_discarded() || !row.contains("hash") || !row.contains("tokens")) {
            throw ValidationError("bad sidecar row at line " + std::to_string(lineno) + " of " +
                                  sidecar_path.string());
        }
        counts_[row["hash"].get<std::string>()] = row["tokens"].get<std::size_t>();
    });
}

std::size_t SidecarTokenCounter::count(std::string_view text) const {
    auto it = counts_.find(text_key(text));
    if (it == counts_.end()) {
        throw ValidationError("sidecar " + path_.string() + " has no token count for text hash " +
                              text_key(text));
    }
    return it->second;
}

std::unique_ptr<TokenCounter> make_token_counter(std::string_view spec) {
    if (spec.empty() || spec == "approx") {
        return std::make_unique<ApproxTokenCounter>();
    }
    constexpr std::string_view prefix = "sidecar:";
    if (spec.substr(0, prefix.size()) == prefix) {
        return std::make_unique<SidecarTokenCounter>(
            std::filesystem::path(std::string(spec.substr(prefix.size()))));
    }
    throw ConfigError("unknown tokenizer spec: " + std::string(spec) +
                      " (expected 'approx' or 'sidecar:<path>')");
}

} // namespace forge
