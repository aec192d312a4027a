#pragma once

// Completion interface over language models. Two implementations: an HTTP
// client for the JSON completion protocol, and a scripted table used as a
// deterministic oracle in tests and dry runs.
//
// Wire protocol:
//   POST {base}/v1/complete        body = CompletionRequest as JSON
//                                  reply = CompletionResponse as JSON
//   GET  {base}/v1/count_tokens?text=...   reply = {"count": n}
// Status 413 means the prompt does not fit the model window; 429/5xx and
// connection failures are transient.

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "todprime/errors.hpp"
#include "todprime/prefix_engine.hpp"

namespace todprime {

enum class FinishReason { Stop, Length };

std::string_view to_string(FinishReason r) noexcept;

struct CompletionRequest {
    std::string prompt;
    std::size_t max_new_tokens = 1;
    std::vector<std::string> stop_sequences;
    double temperature = 0.0;
    bool want_logprobs = false;
    bool echo = false;

    void validate() const;
};

using TokenLogprobs = std::map<std::string, double>;

struct CompletionResponse {
    std::string text;
    FinishReason finish_reason = FinishReason::Stop;
    std::optional<TokenLogprobs> first_token_logprobs;

    bool operator==(const CompletionResponse&) const = default;
};

/// Result slot for one request of a batch.
struct CompletionOutcome {
    std::optional<CompletionResponse> response;
    ErrorCode error = ErrorCode::Ok;
    std::string message;

    bool ok() const noexcept { return response.has_value(); }
};

std::string request_to_json(const CompletionRequest& r);
CompletionRequest request_from_json(std::string_view body);
std::string response_to_json(const CompletionResponse& r);
/// Throws Error(Protocol) on malformed bodies.
CompletionResponse response_from_json(std::string_view body);

/// Cuts `text` at the earliest occurrence of any stop sequence. Returns
/// true when a cut happened.
bool truncate_at_stop(std::string& text, std::span<const std::string> stops);

class Backend {
public:
    virtual ~Backend() = default;

    virtual CompletionResponse complete(const CompletionRequest& request) = 0;

    /// Positionally aligned with `requests`. Failures are reported per item;
    /// the default implementation runs up to max_concurrency() requests at
    /// once.
    virtual std::vector<CompletionOutcome> complete_batch(std::span<const CompletionRequest> requests);

    virtual std::size_t max_concurrency() const noexcept { return 8; }

    /// Exact model token count, when the backend can provide one.
    virtual std::optional<std::size_t> count_tokens(std::string_view text);

    /// Cheap reachability check; throws BackendUnavailable.
    virtual void probe() {}
};

class ScriptedBackend final : public Backend {
public:
    using Table = std::unordered_map<std::string, CompletionResponse>;

    explicit ScriptedBackend(Table table, std::optional<CompletionResponse> fallback = std::nullopt);

    /// One JSON object per line: {"prompt", "text", "logprobs"?, "finish_reason"?}.
    /// A line {"fallback": true, "text": ...} sets the fallback response.
    static std::unique_ptr<ScriptedBackend> from_jsonl(const std::filesystem::path& path);

    CompletionResponse complete(const CompletionRequest& request) override;
    std::vector<CompletionOutcome> complete_batch(std::span<const CompletionRequest> requests) override;

    std::size_t size() const noexcept { return table_.size(); }

private:
    Table table_;
    std::optional<CompletionResponse> fallback_;
};

/// Pass-through decorator that counts forwards and keeps the prompts seen.
class CountingBackend final : public Backend {
public:
    explicit CountingBackend(Backend& inner) : inner_(inner) {}

    CompletionResponse complete(const CompletionRequest& request) override;
    std::vector<CompletionOutcome> complete_batch(std::span<const CompletionRequest> requests) override;
    std::size_t max_concurrency() const noexcept override { return inner_.max_concurrency(); }
    std::optional<std::size_t> count_tokens(std::string_view text) override {
        return inner_.count_tokens(text);
    }

    std::size_t requests() const noexcept { return count_.load(); }
    std::vector<std::string> prompts() const;
    void reset();

private:
    void record(std::span<const CompletionRequest> requests);

    Backend& inner_;
    std::atomic<std::size_t> count_{0};
    mutable std::mutex mu_;
    std::vector<std::string> prompts_;
};

struct RetryPolicy {
    std::vector<std::chrono::milliseconds> backoff{std::chrono::milliseconds(500),
                                                   std::chrono::milliseconds(1000),
                                                   std::chrono::milliseconds(2000)};
};

struct HttpBackendOptions {
    std::string base_url;
    std::size_t max_concurrency = 8;
    RetryPolicy retry;
    std::chrono::seconds timeout{300};
};

class HttpBackend final : public Backend {
public:
    explicit HttpBackend(HttpBackendOptions options);
    ~HttpBackend() override;

    CompletionResponse complete(const CompletionRequest& request) override;
    std::size_t max_concurrency() const noexcept override { return options_.max_concurrency; }
    std::optional<std::size_t> count_tokens(std::string_view text) override;
    void probe() override;

private:
    CompletionResponse complete_once(const CompletionRequest& request);

    HttpBackendOptions options_;
    std::string scheme_host_port_;
    std::string path_prefix_;
    std::counting_semaphore<4096> in_flight_;
};

/// TokenCounter backed by Backend::count_tokens.
class BackendTokenCounter final : public TokenCounter {
public:
    explicit BackendTokenCounter(std::shared_ptr<Backend> backend) : backend_(std::move(backend)) {}
    std::size_t count(std::string_view text) const override;

private:
    std::shared_ptr<Backend> backend_;
};

/// "scripted:PATH" or an http(s) base URL.
std::shared_ptr<Backend> open_backend(std::string_view spec, HttpBackendOptions http_options = {});

}  // namespace todprime
