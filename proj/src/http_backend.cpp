#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "todprime/lm_backend.hpp"

namespace todprime {

namespace {

class SemaphoreGuard {
public:
    explicit SemaphoreGuard(std::counting_semaphore<4096>& s) : s_(s) { s_.acquire(); }
    ~SemaphoreGuard() { s_.release(); }
    SemaphoreGuard(const SemaphoreGuard&) = delete;
    SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;

private:
    std::counting_semaphore<4096>& s_;
};

std::ptrdiff_t clamp_concurrency(std::size_t n) {
    return static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(n, 1, 4096));
}

void check_status(const httplib::Result& res, const std::string& what) {
    if (!res)
        throw Error(ErrorCode::BackendUnavailable,
                    what + ": " + httplib::to_string(res.error()));
    const int status = res->status;
    if (status == 200) return;
    const std::string detail = what + ": HTTP " + std::to_string(status);
    if (status == 413) throw Error(ErrorCode::ContextOverflow, detail + " (prompt too long)");
    if (status == 429 || status >= 500) throw Error(ErrorCode::BackendUnavailable, detail);
    throw Error(ErrorCode::Protocol, detail + " " + res->body.substr(0, 200));
}

template <class Fn>
auto with_retries(const RetryPolicy& policy, Fn&& fn) {
    for (std::size_t attempt = 0;; ++attempt) {
        try {
            return fn();
        } catch (const Error& e) {
            if (e.code() != ErrorCode::BackendUnavailable || attempt >= policy.backoff.size())
                throw;
            std::this_thread::sleep_for(policy.backoff[attempt]);
        }
    }
}

}  // namespace

HttpBackend::HttpBackend(HttpBackendOptions options)
    : options_(std::move(options)), in_flight_(clamp_concurrency(options_.max_concurrency)) {
    const std::string& url = options_.base_url;
    if (url.rfind("https://", 0) == 0)
        throw Error(ErrorCode::Config, "https backends are not supported; use http://");
    if (url.rfind("http://", 0) != 0)
        throw Error(ErrorCode::Config, "backend URL must start with http://");
    const std::size_t slash = url.find('/', 7);
    scheme_host_port_ = url.substr(0, slash);
    if (slash != std::string::npos) path_prefix_ = url.substr(slash);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    if (options_.max_concurrency == 0) options_.max_concurrency = 1;
}

HttpBackend::~HttpBackend() = default;

CompletionResponse HttpBackend::complete_once(const CompletionRequest& request) {
    httplib::Client cli(scheme_host_port_);
    cli.set_connection_timeout(std::chrono::seconds(10));
    cli.set_read_timeout(options_.timeout);
    cli.set_write_timeout(options_.timeout);
    auto res = cli.Post(path_prefix_ + "/v1/complete", request_to_json(request), "application/json");
    check_status(res, "POST /v1/complete");
    CompletionResponse r = response_from_json(res->body);
    // Servers are expected to truncate; enforce it regardless.
    if (truncate_at_stop(r.text, request.stop_sequences)) r.finish_reason = FinishReason::Stop;
    if (request.want_logprobs && r.first_token_logprobs && r.first_token_logprobs->empty())
        r.first_token_logprobs.reset();
    return r;
}

CompletionResponse HttpBackend::complete(const CompletionRequest& request) {
    request.validate();
    SemaphoreGuard slot(in_flight_);
    return with_retries(options_.retry, [&] { return complete_once(request); });
}

std::optional<std::size_t> HttpBackend::count_tokens(std::string_view text) {
    SemaphoreGuard slot(in_flight_);
    return with_retries(options_.retry, [&]() -> std::optional<std::size_t> {
        httplib::Client cli(scheme_host_port_);
        cli.set_connection_timeout(std::chrono::seconds(10));
        cli.set_read_timeout(options_.timeout);
        httplib::Params params{{"text", std::string(text)}};
        auto res = cli.Get(path_prefix_ + "/v1/count_tokens", params, httplib::Headers{});
        check_status(res, "GET /v1/count_tokens");
        try {
            const auto j = nlohmann::json::parse(res->body);
            const auto n = j.at("count").get<long long>();
            if (n < 0) throw Error(ErrorCode::Protocol, "negative token count");
            return static_cast<std::size_t>(n);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::Protocol, std::string("malformed count_tokens reply: ") + e.what());
        }
    });
}

void HttpBackend::probe() {
    auto n = count_tokens("");
    if (n && *n != 0) throw Error(ErrorCode::Protocol, "count_tokens(\"\") must be 0");
}

}  // namespace todprime
