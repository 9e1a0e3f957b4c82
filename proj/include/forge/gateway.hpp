#pragma once

#include "forge/common.hpp"
#include "forge/prompts.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace forge::gateway {

using prompts::ChatMessage;
using prompts::RenderedConversation;
using prompts::Strategy;
using prompts::TaskKind;

struct GenParams {
    enum class Mode { sampling, greedy };

    double temperature = 0.4;
    double top_p = 0.95;
    int max_new_tokens = 4096;
    Mode mode = Mode::sampling;

    /// Temperature actually used and recorded; greedy pins it to 0.
    double effective_temperature() const { return mode == Mode::greedy ? 0.0 : temperature; }
};

GenParams::Mode parse_mode(std::string_view name);
std::string mode_name(GenParams::Mode mode);

struct Usage {
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
};

struct Completion {
    ChatMessage message;
    Usage usage;
    int attempts = 1;
    bool cache_hit = false;
};

/// Generation failed in a way retries could not fix. Carries the last HTTP
/// status when there was one (0 for transport errors).
class GenerationError : public Error {
public:
    GenerationError(const std::string& what, int last_status, bool retryable)
        : Error(what), last_status_(last_status), retryable_(retryable) {}
    int last_status() const { return last_status_; }
    bool retryable() const { return retryable_; }

private:
    int last_status_;
    bool retryable_;
};

/// A turn of the protocol failed; the transcript built so far is preserved
/// for diagnostics.
class ProtocolError : public Error {
public:
    ProtocolError(const std::string& what, std::vector<ChatMessage> partial)
        : Error(what), partial_transcript_(std::move(partial)) {}
    const std::vector<ChatMessage>& partial_transcript() const { return partial_transcript_; }

private:
    std::vector<ChatMessage> partial_transcript_;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    /// Stable identifier covering endpoint + model; part of every cache key.
    virtual std::string id() const = 0;
    virtual Completion complete(const std::vector<ChatMessage>& messages,
                                const GenParams& params) = 0;
};

/// Replies with the content of the last user message. Tracks how many calls
/// reached it so tests can assert cache behavior.
class EchoBackend : public ChatBackend {
public:
    std::string id() const override { return "mock:echo"; }
    Completion complete(const std::vector<ChatMessage>& messages, const GenParams& params) override;
    int calls() const { return calls_.load(); }

private:
    std::atomic<int> calls_{0};
};

/// Plays back canned replies keyed by the turn index (the number of assistant
/// messages already in the request), so replies are a pure function of the
/// request and safe under concurrency. Indexes wrap around.
class ScriptedBackend : public ChatBackend {
public:
    explicit ScriptedBackend(std::vector<std::string> replies);
    static ScriptedBackend from_file(const std::filesystem::path& path); // JSON array of strings
    std::string id() const override { return "mock:script"; }
    Completion complete(const std::vector<ChatMessage>& messages, const GenParams& params) override;

private:
    std::vector<std::string> replies_;
};

struct HttpBackendConfig {
    std::string base_url;        // e.g. http://host:8080 or http://host:8080/custom/path
    std::string model;
    std::string api_key_env = "FORGE_API_KEY";
    int max_attempts = 5;
    std::chrono::milliseconds backoff_base{100};
    std::chrono::milliseconds request_timeout{120'000};
};

/// Chat-completions wire protocol: POST {model, messages, temperature, top_p,
/// max_tokens}; reply read from choices[0].message.content. Transport
/// failures, 429 and 5xx are retried with exponential backoff; other 4xx
/// (e.g. context-length rejections) are not.
class HttpBackend : public ChatBackend {
public:
    explicit HttpBackend(HttpBackendConfig config);
    ~HttpBackend() override;
    std::string id() const override;
    Completion complete(const std::vector<ChatMessage>& messages, const GenParams& params) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// "mock:echo", "mock:script=<path>", or an http(s) URL.
std::shared_ptr<ChatBackend> make_backend(const std::string& spec, const std::string& model,
                                          const HttpBackendConfig& http_defaults = {});

// ---------------------------------------------------------------------------
// Gateway: caching + protocol execution on top of a backend

struct GenerationRecord {
    std::string sample_id;
    Strategy strategy = Strategy::cing_clearly;
    TaskKind task = TaskKind::bcs;
    int output_index = 0;
    std::vector<ChatMessage> transcript; // user/assistant alternating, ends with assistant
    std::string final_report;
    Usage usage;
    std::string backend_id;
    bool cache_hit = false;  // true iff every turn came from cache
    GenParams params;        // provenance echo of the sampling parameters
};

struct GatewayOptions {
    /// Empty disables caching.
    std::filesystem::path cache_dir;
    /// Optional system message prepended to every request.
    std::string system_message;
};

class Gateway {
public:
    Gateway(std::shared_ptr<ChatBackend> backend, GatewayOptions options = {});

    /// One completion; `seed` salts the cache key so re-sampling the same
    /// messages under a different seed is a distinct entry.
    Completion complete(const std::vector<ChatMessage>& messages, const GenParams& params,
                        std::uint64_t seed);

    /// Runs the full conversation protocol: each user turn is appended and
    /// answered in order; single-turn strategies do one round.
    GenerationRecord run_protocol(const RenderedConversation& conversation,
                                  const GenParams& params, std::uint64_t seed);

    const ChatBackend& backend() const { return *backend_; }

    static std::string cache_key(const std::string& backend_id,
                                 const std::vector<ChatMessage>& messages, const GenParams& params,
                                 std::uint64_t seed);

private:
    std::shared_ptr<ChatBackend> backend_;
    GatewayOptions options_;
};

/// Runs every (conversation, output_index < num_outputs) pair with bounded
/// concurrency. Output is sorted by (sample_id, strategy, output_index) so
/// files are deterministic. Per-sample seeds derive from base_seed.
std::vector<GenerationRecord> generate_all(const std::vector<RenderedConversation>& conversations,
                                           Gateway& gateway, const GenParams& params,
                                           int concurrency, std::uint64_t base_seed,
                                           int num_outputs = 1);

// ---------------------------------------------------------------------------
// Report linting

struct LintFinding {
    std::size_t offset = 0;
    std::string phrase;
};

/// Flags leftover mentions of the C source in a final report ("C code",
/// "the C source", "in C,"), case-insensitive on word boundaries. Advisory.
std::vector<LintFinding> lint_final_report(std::string_view report);

// ---------------------------------------------------------------------------
// JSONL persistence

std::string record_to_json_line(const GenerationRecord& record);
GenerationRecord record_from_json_line(std::string_view line);
void write_records(const std::filesystem::path& path, const std::vector<GenerationRecord>& records);
std::vector<GenerationRecord> read_records(const std::filesystem::path& path);

} // namespace forge::gateway
