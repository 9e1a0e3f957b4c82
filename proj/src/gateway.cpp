#include "forge/gateway.hpp"

#include "forge/common.hpp"
#include "forge/tokenizer.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdlib>
#include <thread>

namespace forge::gateway {

using nlohmann::json;

GenParams::Mode parse_mode(std::string_view name) {
    if (name == "sampling") return GenParams::Mode::sampling;
    if (name == "greedy") return GenParams::Mode::greedy;
    throw ConfigError("unknown decoding mode: " + std::string(name));
}

std::string mode_name(GenParams::Mode mode) {
    return mode == GenParams::Mode::greedy ? "greedy" : "sampling";
}

// ---------------------------------------------------------------------------
// Mock backends

namespace {

Usage approx_usage(const std::vector<ChatMessage>& messages, const std::string& reply) {
    ApproxTokenCounter counter;
    Usage usage;
    for (const auto& message : messages) {
        usage.prompt_tokens += counter.count(message.content);
    }
    usage.completion_tokens = counter.count(reply);
    return usage;
}

} // namespace

Completion EchoBackend::complete(const std::vector<ChatMessage>& messages, const GenParams&) {
    ++calls_;
    const ChatMessage* last_user = nullptr;
    for (const auto& message : messages) {
        if (message.role == "user") {
            last_user = &message;
        }
    }
    if (last_user == nullptr) {
        throw GenerationError("echo backend: no user message in request", 0, false);
    }
    Completion completion;
    completion.message = {"assistant", last_user->content};
    completion.usage = approx_usage(messages, completion.message.content);
    return completion;
}

ScriptedBackend::ScriptedBackend(std::vector<std::string> replies) : replies_(std::move(replies)) {
    if (replies_.empty()) {
        throw ConfigError("scripted backend needs at least one reply");
    }
}

ScriptedBackend ScriptedBackend::from_file(const std::filesystem::path& path) {
    auto doc = json::parse(read_text_file(path));
    if (!doc.is_array()) {
        throw ConfigError("scripted backend file must hold a JSON array of strings: " +
                          path.string());
    }
    std::vector<std::string> replies;
    for (const auto& item : doc) {
        replies.push_back(item.get<std::string>());
    }
    return ScriptedBackend(std::move(replies));
}

Completion ScriptedBackend::complete(const std::vector<ChatMessage>& messages, const GenParams&) {
    std::size_t assistant_turns = 0;
    for (const auto& message : messages) {
        if (message.role == "assistant") {
            ++assistant_turns;
        }
    }
    Completion completion;
    completion.message = {"assistant", replies_[assistant_turns % replies_.size()]};
    completion.usage = approx_usage(messages, completion.message.content);
    return completion;
}

// ---------------------------------------------------------------------------
// HTTP backend

namespace {

struct ParsedUrl {
    std::string host_port; // scheme://host[:port]
    std::string path;
};

ParsedUrl parse_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("backend URL must start with http:// or https://: " + url);
    }
    auto path_start = url.find('/', scheme_end + 3);
    ParsedUrl parsed;
    if (path_start == std::string::npos) {
        parsed.host_port = url;
        parsed.path = "/v1/chat/completions";
    } else {
        parsed.host_port = url.substr(0, path_start);
        parsed.path = url.substr(path_start);
        if (parsed.path == "/") {
            parsed.path = "/v1/chat/completions";
        }
    }
    return parsed;
}

} // namespace

struct HttpBackend::Impl {
    HttpBackendConfig config;
    ParsedUrl url;
    std::string bearer;
};

HttpBackend::HttpBackend(HttpBackendConfig config) : impl_(std::make_unique<Impl>()) {
    impl_->config = std::move(config);
    impl_->url = parse_url(impl_->config.base_url);
    if (const char* key = std::getenv(impl_->config.api_key_env.c_str())) {
        impl_->bearer = key;
    }
}

HttpBackend::~HttpBackend() = default;

std::string HttpBackend::id() const {
    return "http:" + impl_->config.base_url + "#" + impl_->config.model;
}

Completion HttpBackend::complete(const std::vector<ChatMessage>& messages,
                                 const GenParams& params) {
    json body;
    body["model"] = impl_->config.model;
    json msgs = json::array();
    for (const auto& message : messages) {
        msgs.push_back({{"role", message.role}, {"content", message.content}});
    }
    body["messages"] = msgs;
    body["temperature"] = params.effective_temperature();
    body["top_p"] = params.top_p;
    body["max_tokens"] = params.max_new_tokens;
    std::string payload = body.dump();

    httplib::Headers headers;
    if (!impl_->bearer.empty()) {
        headers.emplace("Authorization", "Bearer " + impl_->bearer);
    }

    int last_status = 0;
    std::string last_error;
    for (int attempt = 1; attempt <= impl_->config.max_attempts; ++attempt) {
        httplib::Client client(impl_->url.host_port);
        auto timeout_s = std::chrono::duration_cast<std::chrono::seconds>(
            impl_->config.request_timeout);
        client.set_read_timeout(timeout_s.count(), 0);
        client.set_connection_timeout(10, 0);

        auto response = client.Post(impl_->url.path, headers, payload, "application/json");
        if (response) {
            last_status = response->status;
            if (response->status == 200) {
                auto doc = json::parse(response->body, nullptr, false);
                if (doc.is_discarded() || !doc.contains("choices") || doc["choices"].empty()) {
                    throw GenerationError("backend returned malformed completion body",
                                          response->status, false);
                }
                Completion completion;
                completion.message = {
                    "assistant",
                    doc["choices"][0]["message"]["content"].get<std::string>()};
                if (doc.contains("usage")) {
                    completion.usage.prompt_tokens = doc["usage"].value("prompt_tokens", 0ULL);
                    completion.usage.completion_tokens =
                        doc["usage"].value("completion_tokens", 0ULL);
                }
                completion.attempts = attempt;
                return completion;
            }
            bool retryable = response->status == 429 || response->status >= 500;
            if (!retryable) {
                // e.g. context-length rejection; retrying cannot help
                throw GenerationError("backend rejected request with status " +
                                          std::to_string(response->status) + ": " + response->body,
                                      response->status, false);
            }
            last_error = "status " + std::to_string(response->status);
        } else {
            last_status = 0;
            last_error = "transport error: " + httplib::to_string(response.error());
        }
        if (attempt < impl_->config.max_attempts) {
            auto delay = impl_->config.backoff_base * (1LL << (attempt - 1));
            delay = std::min<std::chrono::milliseconds>(delay, std::chrono::milliseconds(10'000));
            std::this_thread::sleep_for(delay);
        }
    }
    throw GenerationError("backend failed after " + std::to_string(impl_->config.max_attempts) +
                              " attempts (" + last_error + ")",
                          last_status, true);
}

std::shared_ptr<ChatBackend> make_backend(const std::string& spec, const std::string& model,
                                          const HttpBackendConfig& http_defaults) {
    if (spec == "mock:echo") {
        return std::make_shared<EchoBackend>();
    }
    constexpr std::string_view script_prefix = "mock:script=";
    if (spec.rfind(script_prefix, 0) == 0) {
        return std::make_shared<ScriptedBackend>(
            ScriptedBackend::from_file(spec.substr(script_prefix.size())));
    }
    if (spec.rfind("http://", 0) == 0 || spec.rfind("https://", 0) == 0) {
        HttpBackendConfig config = http_defaults;
        config.base_url = spec;
        config.model = model;
        return std::make_shared<HttpBackend>(std::move(config));
    }
    throw ConfigError("unknown backend spec: " + spec +
                      " (expected mock:echo, mock:script=<path>, or an http(s) URL)");
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(std::shared_ptr<ChatBackend> backend, GatewayOptions options)
    : backend_(std::move(backend)), options_(std::move(options)) {
    if (!options_.cache_dir.empty()) {
        std::filesystem::create_directories(options_.cache_dir);
    }
}

std::string Gateway::cache_key(const std::string& backend_id,
                               const std::vector<ChatMessage>& messages, const GenParams& params,
                               std::uint64_t seed) {
    json key;
    key["backend"] = backend_id;
    json msgs = json::array();
    for (const auto& message : messages) {
        msgs.push_back({{"role", message.role}, {"content", message.content}});
    }
    key["messages"] = msgs;
    key["temperature"] = params.effective_temperature();
    key["top_p"] = params.top_p;
    key["max_tokens"] = params.max_new_tokens;
    key["mode"] = mode_name(params.mode);
    key["seed"] = seed;
    return sha256_hex(key.dump());
}

Completion Gateway::complete(const std::vector<ChatMessage>& messages, const GenParams& params,
                             std::uint64_t seed) {
    std::vector<ChatMessage> request = messages;
    if (!options_.system_message.empty() &&
        (request.empty() || request.front().role != "system")) {
        request.insert(request.begin(), {"system", options_.system_message});
    }

    std::filesystem::path cache_file;
    if (!options_.cache_dir.empty()) {
        cache_file = options_.cache_dir /
                     (cache_key(backend_->id(), request, params, seed) + ".json");
        if (std::filesystem::exists(cache_file)) {
            auto doc = json::parse(read_text_file(cache_file));
            Completion completion;
            completion.message = {"assistant", doc.at("content").get<std::string>()};
            completion.usage.prompt_tokens = doc.value("prompt_tokens", 0ULL);
            completion.usage.completion_tokens = doc.value("completion_tokens", 0ULL);
            completion.attempts = 0;
            completion.cache_hit = true;
            return completion;
        }
    }

    Completion completion = backend_->complete(request, params);
    if (!cache_file.empty()) {
        json doc;
        doc["content"] = completion.message.content;
        doc["prompt_tokens"] = completion.usage.prompt_tokens;
        doc["completion_tokens"] = completion.usage.completion_tokens;
        write_text_file(cache_file, doc.dump());
    }
    return completion;
}

GenerationRecord Gateway::run_protocol(const RenderedConversation& conversation,
                                       const GenParams& params, std::uint64_t seed) {
    if (!conversation.placeholders_resolved) {
        throw ValidationError("run_protocol: conversation for sample '" + conversation.sample_id +
                              "' has unresolved placeholders");
    }
    GenerationRecord record;
    record.sample_id = conversation.sample_id;
    record.strategy = conversation.strategy;
    record.task = conversation.task;
    record.backend_id = backend_->id();
    record.cache_hit = true;
    record.params = params;
    record.params.temperature = params.effective_temperature();

    for (std::size_t turn = 0; turn < conversation.user_turns.size(); ++turn) {
        record.transcript.push_back(conversation.user_turns[turn]);
        try {
            Completion completion = complete(record.transcript, params, seed);
            record.transcript.push_back(completion.message);
            record.usage.prompt_tokens += completion.usage.prompt_tokens;
            record.usage.completion_tokens += completion.usage.completion_tokens;
            record.cache_hit = record.cache_hit && completion.cache_hit;
        } catch (const GenerationError& e) {
            // keep only the completed exchanges so the partial transcript
            // still alternates and ends with an assistant message
            record.transcript.pop_back();
            throw ProtocolError("sample '" + conversation.sample_id + "' failed on turn " +
                                    std::to_string(turn + 1) + ": " + e.what(),
                                record.transcript);
        }
    }
    record.final_report = record.transcript.back().content;
    return record;
}

std::vector<GenerationRecord> generate_all(const std::vector<RenderedConversation>& conversations,
                                           Gateway& gateway, const GenParams& params,
                                           int concurrency, std::uint64_t base_seed,
                                           int num_outputs) {
    if (num_outputs < 1) {
        throw ConfigError("generate_all: num_outputs must be >= 1");
    }
    struct Task {
        const RenderedConversation* conversation;
        int output_index;
    };
    std::vector<Task> tasks;
    tasks.reserve(conversations.size() * static_cast<std::size_t>(num_outputs));
    for (const auto& conversation : conversations) {
        for (int k = 0; k < num_outputs; ++k) {
            tasks.push_back({&conversation, k});
        }
    }

    std::vector<GenerationRecord> records(tasks.size());
    std::vector<std::string> failures(tasks.size());
    parallel_for(tasks.size(), concurrency, [&](std::size_t i) {
        const auto& task = tasks[i];
        std::uint64_t seed = splitmix64(
            base_seed ^ fnv1a64(task.conversation->sample_id + "#" +
                                prompts::strategy_name(task.conversation->strategy) + "#" +
                                std::to_string(task.output_index)));
        try {
            records[i] = gateway.run_protocol(*task.conversation, params, seed);
            records[i].output_index = task.output_index;
        } catch (const Error& e) {
            failures[i] = e.what();
        }
    });

    std::string failed_ids;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (!failures[i].empty()) {
            if (!failed_ids.empty()) {
                failed_ids += "; ";
            }
            failed_ids += failures[i];
        }
    }
    if (!failed_ids.empty()) {
        throw Error("generation failed: " + failed_ids);
    }

    std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
        if (a.sample_id != b.sample_id) return a.sample_id < b.sample_id;
        if (a.strategy != b.strategy) return a.strategy < b.strategy;
        return a.output_index < b.output_index;
    });
    return records;
}

// ---------------------------------------------------------------------------
// Lint

namespace {

bool is_word_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

// Case-insensitive phrase scan with word boundaries at both ends. A phrase
// ending in punctuation (like "in C,") only needs the leading boundary.
void scan_phrase(std::string_view text, std::string_view phrase,
                 std::vector<LintFinding>& findings) {
    std::string haystack = to_lower(text);
    std::string needle = to_lower(phrase);
    std::size_t pos = 0;
    while ((pos = haystack.find(needle, pos)) != std::string::npos) {
        bool left_ok = pos == 0 || !is_word_char(haystack[pos - 1]);
        std::size_t end = pos + needle.size();
        bool right_ok = !is_word_char(needle.back()) || end >= haystack.size() ||
                        !is_word_char(haystack[end]);
        if (left_ok && right_ok) {
            findings.push_back({pos, std::string(phrase)});
        }
        pos += 1;
    }
}

} // namespace

std::vector<LintFinding> lint_final_report(std::string_view report) {
    static const char* kPhrases[] = {"C code", "the C source", "in C,"};
    std::vector<LintFinding> findings;
    for (const char* phrase : kPhrases) {
        scan_phrase(report, phrase, findings);
    }
    std::sort(findings.begin(), findings.end(),
              [](const auto& a, const auto& b) { return a.offset < b.offset; });
    return findings;
}

// ---------------------------------------------------------------------------
// JSONL

std::string record_to_json_line(const GenerationRecord& record) {
    json row;
    row["sample_id"] = record.sample_id;
    row["strategy"] = prompts::strategy_name(record.strategy);
    row["task"] = prompts::task_name(record.task);
    row["output_index"] = record.output_index;
    json transcript = json::array();
    for (const auto& message : record.transcript) {
        transcript.push_back({{"role", message.role}, {"content", message.content}});
    }
    row["transcript"] = transcript;
    row["final_report"] = record.final_report;
    row["usage"] = {{"prompt_tokens", record.usage.prompt_tokens},
                    {"completion_tokens", record.usage.completion_tokens}};
    row["backend_id"] = record.backend_id;
    row["cache_hit"] = record.cache_hit;
    row["params"] = {{"temperature", record.params.temperature},
                     {"top_p", record.params.top_p},
                     {"max_new_tokens", record.params.max_new_tokens},
                     {"mode", mode_name(record.params.mode)}};
    return row.dump();
}

GenerationRecord record_from_json_line(std::string_view line) {
    auto row = json::parse(line);
    GenerationRecord record;
    record.sample_id = row.at("sample_id").get<std::string>();
    record.strategy = prompts::parse_strategy(row.at("strategy").get<std::string>());
    record.task = prompts::parse_task(row.at("task").get<std::string>());
    record.output_index = row.value("output_index", 0);
    for (const auto& message : row.value("transcript", json::array())) {
        record.transcript.push_back(
            {message.at("role").get<std::string>(), message.at("content").get<std::string>()});
    }
    record.final_report = row.value("final_report", "");
    if (record.final_report.empty() && !record.transcript.empty()) {
        record.final_report = record.transcript.back().content;
    }
    if (row.contains("usage")) {
        record.usage.prompt_tokens = row["usage"].value("prompt_tokens", 0ULL);
        record.usage.completion_tokens = row["usage"].value("completion_tokens", 0ULL);
    }
    record.backend_id = row.value("backend_id", "");
    record.cache_hit = row.value("cache_hit", false);
    if (row.contains("params")) {
        const auto& params = row["params"];
        record.params.temperature = params.value("temperature", 0.0);
        record.params.top_p = params.value("top_p", 0.95);
        record.params.max_new_tokens = params.value("max_new_tokens", 4096);
        record.params.mode = parse_mode(params.value("mode", "sampling"));
    }
    return record;
}

void write_records(const std::filesystem::path& path,
                   const std::vector<GenerationRecord>& records) {
    std::string out;
    for (const auto& record : records) {
        out += record_to_json_line(record);
        out += '\n';
    }
    write_text_file(path, out);
}

std::vector<GenerationRecord> read_records(const std::filesystem::path& path) {
    std::vector<GenerationRecord> records;
    for_each_line(path, [&](std::size_t, std::string_view line) {
        records.push_back(record_from_json_line(line));
    });
    return records;
}

} // namespace forge::gateway
