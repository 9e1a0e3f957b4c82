#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>

namespace forge {

/// Counts tokens of a text under some tokenization scheme. The real pipeline
/// in the paper uses the fine-tuned model's tokenizer; that is not available
/// here, so counting is pluggable.
class TokenCounter {
public:
    virtual ~TokenCounter() = default;
    virtual std::size_t count(std::string_view text) const = 0;
    virtual std::string name() const = 0;
};

/// ceil(byte_length / 4) — the usual rough bytes-per-token estimate.
class ApproxTokenCounter : public TokenCounter {
public:
    std::size_t count(std::string_view text) const override { return (text.size() + 3) / 4; }
    std::string name() const override { return "approx"; }
};

/// Exact counts produced offline by any external tokenizer and shipped as a
/// sidecar JSONL file of {"hash": "<16-hex fnv1a-64 of the utf-8 text>",
/// "tokens": N} rows. Lookup is by content hash so the sidecar does not care
/// what the text is used for.
class SidecarTokenCounter : public TokenCounter {
public:
    explicit SidecarTokenCounter(const std::filesystem::path& sidecar_path);
    std::size_t count(std::string_view text) const override;
    std::string name() const override { return "sidecar"; }

    static std::string text_key(std::string_view text);

private:
    std::unordered_map<std::string, std::size_t> counts_;
    std::filesystem::path path_;
};

/// "approx" or "sidecar:<path>".
std::unique_ptr<TokenCounter> make_token_counter(std::string_view spec);

} // namespace forge
