#include "todprime/lm_backend.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "todprime/parallel.hpp"
#include "todprime/text.hpp"

namespace todprime {

using nlohmann::json;

std::string_view to_string(FinishReason r) noexcept {
    return r == FinishReason::Stop ? "stop" : "length";
}

void CompletionRequest::validate() const {
    if (max_new_tokens < 1) throw Error(ErrorCode::InvalidArgument, "max_new_tokens must be >= 1");
    if (!(temperature >= 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be >= 0");
}

std::string request_to_json(const CompletionRequest& r) {
    json j = {{"prompt", r.prompt},
              {"max_new_tokens", r.max_new_tokens},
              {"stop_sequences", r.stop_sequences},
              {"temperature", r.temperature},
              {"want_logprobs", r.want_logprobs},
              {"echo", r.echo}};
    return j.dump();
}

CompletionRequest request_from_json(std::string_view body) {
    try {
        const json j = json::parse(body);
        CompletionRequest r;
        r.prompt = j.at("prompt").get<std::string>();
        r.max_new_tokens = j.value("max_new_tokens", std::size_t{1});
        r.stop_sequences = j.value("stop_sequences", std::vector<std::string>{});
        r.temperature = j.value("temperature", 0.0);
        r.want_logprobs = j.value("want_logprobs", false);
        r.echo = j.value("echo", false);
        r.validate();
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Protocol, std::string("malformed completion request: ") + e.what());
    }
}

namespace {

json logprobs_json(const std::optional<TokenLogprobs>& lp) {
    if (!lp) return nullptr;
    json j = json::object();
    for (const auto& [tok, v] : *lp) j[tok] = v;
    return j;
}

std::optional<TokenLogprobs> logprobs_from(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    const json& lp = j.at(key);
    if (!lp.is_object()) throw Error(ErrorCode::Protocol, std::string(key) + " must be an object");
    TokenLogprobs out;
    for (auto it = lp.begin(); it != lp.end(); ++it) {
        if (!it.value().is_number())
            throw Error(ErrorCode::Protocol, std::string(key) + " values must be numbers");
        const double v = it.value().get<double>();
        if (!std::isfinite(v) || v > 0.0)
            throw Error(ErrorCode::Protocol, "logprob for '" + it.key() + "' is not a log-probability");
        out.emplace(it.key(), v);
    }
    return out;
}

FinishReason finish_from(const json& j) {
    const std::string s = j.value("finish_reason", std::string("stop"));
    if (s == "stop") return FinishReason::Stop;
    if (s == "length") return FinishReason::Length;
    throw Error(ErrorCode::Protocol, "unknown finish_reason '" + s + "'");
}

}  // namespace

std::string response_to_json(const CompletionResponse& r) {
    json j = {{"text", r.text},
              {"finish_reason", std::string(to_string(r.finish_reason))},
              {"first_token_logprobs", logprobs_json(r.first_token_logprobs)}};
    return j.dump();
}

CompletionResponse response_from_json(std::string_view body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Protocol, std::string("response is not JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("text") || !j.at("text").is_string())
        throw Error(ErrorCode::Protocol, "response lacks a string 'text' field");
    CompletionResponse r;
    r.text = j.at("text").get<std::string>();
    r.finish_reason = finish_from(j);
    r.first_token_logprobs = logprobs_from(j, "first_token_logprobs");
    return r;
}

bool truncate_at_stop(std::string& text, std::span<const std::string> stops) {
    std::size_t cut = std::string::npos;
    for (const std::string& stop : stops) {
        if (stop.empty()) continue;
        cut = std::min(cut, text.find(stop));
    }
    if (cut == std::string::npos) return false;
    text.resize(cut);
    return true;
}

// ---------------------------------------------------------------------------

std::vector<CompletionOutcome> Backend::complete_batch(std::span<const CompletionRequest> requests) {
    std::vector<CompletionOutcome> out(requests.size());
    parallel_for(requests.size(), max_concurrency(), [&](std::size_t i) {
        try {
            out[i].response = complete(requests[i]);
        } catch (const Error& e) {
            out[i].error = e.code();
            out[i].message = e.what();
        } catch (const std::exception& e) {
            out[i].error = ErrorCode::Internal;
            out[i].message = e.what();
        }
    });
    return out;
}

std::optional<std::size_t> Backend::count_tokens(std::string_view) { return std::nullopt; }

// ---------------------------------------------------------------------------

ScriptedBackend::ScriptedBackend(Table table, std::optional<CompletionResponse> fallback)
    : table_(std::move(table)), fallback_(std::move(fallback)) {}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open scripted table " + path.string());
    Table table;
    std::optional<CompletionResponse> fallback;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            const json j = json::parse(line);
            CompletionResponse r;
            r.text = j.at("text").get<std::string>();
            r.finish_reason = finish_from(j);
            r.first_token_logprobs = logprobs_from(j, "logprobs");
            if (j.value("fallback", false)) {
                fallback = std::move(r);
                continue;
            }
            std::string prompt = j.at("prompt").get<std::string>();
            if (!table.emplace(std::move(prompt), std::move(r)).second)
                throw SchemaError("duplicate prompt in scripted table", lineno);
        } catch (const json::exception& e) {
            throw SchemaError(std::string("scripted table: ") + e.what(), lineno);
        } catch (const SchemaError&) {
            throw;
        } catch (const Error& e) {
            throw SchemaError(e.what(), lineno);
        }
    }
    return std::make_unique<ScriptedBackend>(std::move(table), std::move(fallback));
}

CompletionResponse ScriptedBackend::complete(const CompletionRequest& request) {
    request.validate();
    auto it = table_.find(request.prompt);
    if (it == table_.end() && !fallback_)
        throw Error(ErrorCode::UnknownPrompt, "scripted backend has no entry for prompt");
    CompletionResponse r = it != table_.end() ? it->second : *fallback_;
    if (truncate_at_stop(r.text, request.stop_sequences)) r.finish_reason = FinishReason::Stop;
    if (!request.want_logprobs) r.first_token_logprobs.reset();
    return r;
}

std::vector<CompletionOutcome> ScriptedBackend::complete_batch(
    std::span<const CompletionRequest> requests) {
    std::vector<CompletionOutcome> out(requests.size());
    for (std::size_t i = 0; i < requests.size(); ++i) {
        try {
            out[i].response = complete(requests[i]);
        } catch (const Error& e) {
            out[i].error = e.code();
            out[i].message = e.what();
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

void CountingBackend::record(std::span<const CompletionRequest> requests) {
    count_ += requests.size();
    std::lock_guard lock(mu_);
    for (const auto& r : requests) prompts_.push_back(r.prompt);
}

CompletionResponse CountingBackend::complete(const CompletionRequest& request) {
    record(std::span(&request, 1));
    return inner_.complete(request);
}

std::vector<CompletionOutcome> CountingBackend::complete_batch(
    std::span<const CompletionRequest> requests) {
    record(requests);
    return inner_.complete_batch(requests);
}

std::vector<std::string> CountingBackend::prompts() const {
    std::lock_guard lock(mu_);
    return prompts_;
}

void CountingBackend::reset() {
    std::lock_guard lock(mu_);
    prompts_.clear();
    count_ = 0;
}

// ---------------------------------------------------------------------------

std::size_t BackendTokenCounter::count(std::string_view text) const {
    if (text.empty()) return 0;
    auto n = backend_->count_tokens(text);
    if (!n) throw Error(ErrorCode::Protocol, "backend does not support token counting");
    return *n;
}

std::shared_ptr<Backend> open_backend(std::string_view spec, HttpBackendOptions http_options) {
    constexpr std::string_view scripted = "scripted:";
    if (spec.substr(0, scripted.size()) == scripted)
        return ScriptedBackend::from_jsonl(std::filesystem::path(std::string(spec.substr(scripted.size()))));
    if (spec.rfind("http://", 0) == 0 || spec.rfind("https://", 0) == 0) {
        http_options.base_url = std::string(spec);
        return std::make_shared<HttpBackend>(std::move(http_options));
    }
    throw Error(ErrorCode::Config, "backend must be 'scripted:PATH' or an http URL, got '" +
                                       std::string(spec) + "'");
}

}  // namespace todprime
