#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "support.hpp"
#include "todprime/lm_backend.hpp"

using namespace todprime;
using tpt::json;

namespace {

CompletionRequest req(std::string prompt, std::size_t max_new = 5) {
    CompletionRequest r;
    r.prompt = std::move(prompt);
    r.max_new_tokens = max_new;
    r.stop_sequences = {"\n"};
    return r;
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::Ok;
}

/// In-process server speaking the completion protocol. The completion
/// handler is swapped per test case; token counts are whitespace words.
class FakeServer {
public:
    using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

    FakeServer() {
        svr_.Post(R"((/api)?/v1/complete)", [this](const httplib::Request& rq, httplib::Response& rs) {
            Handler h;
            {
                std::lock_guard lock(mu_);
                h = handler_;
            }
            if (h) h(rq, rs);
            else rs.status = 404;
        });
        svr_.Get(R"((/api)?/v1/count_tokens)", [](const httplib::Request& rq, httplib::Response& rs) {
            const auto text = rq.get_param_value("text");
            rs.set_content(json{{"count", todprime::text::split_whitespace(text).size()}}.dump(),
                           "application/json");
        });
        port_ = svr_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { svr_.listen_after_bind(); });
        svr_.wait_until_ready();
    }
    ~FakeServer() {
        svr_.stop();
        thread_.join();
    }

    void on_complete(Handler h) {
        std::lock_guard lock(mu_);
        handler_ = std::move(h);
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    httplib::Server svr_;
    std::mutex mu_;
    Handler handler_;
    int port_ = 0;
    std::thread thread_;
};

HttpBackendOptions fast_options(const std::string& url) {
    HttpBackendOptions o;
    o.base_url = url;
    o.retry.backoff = {std::chrono::milliseconds(5), std::chrono::milliseconds(5), std::chrono::milliseconds(5)};
    o.timeout = std::chrono::seconds(5);
    return o;
}

}  // namespace

TEST_CASE("stop-sequence truncation") {
    std::string s = " Boston\n next example";
    const std::vector<std::string> stops{"\n"};
    CHECK(truncate_at_stop(s, stops));
    CHECK(s == " Boston");
    std::string t = "no stop here";
    CHECK_FALSE(truncate_at_stop(t, stops));
    std::string u = "a;b\nc";
    CHECK(truncate_at_stop(u, std::vector<std::string>{"\n", ";"}));
    CHECK(u == "a");
}

TEST_CASE("scripted backend") {
    ScriptedBackend::Table table;
    table["hello ->"] = CompletionResponse{" Boston\nmore", FinishReason::Length, TokenLogprobs{{"true", -0.5}}};
    ScriptedBackend b(table);

    SUBCASE("truncates at the stop and drops unrequested logprobs") {
        auto r = b.complete(req("hello ->"));
        CHECK(r.text == " Boston");
        CHECK(r.finish_reason == FinishReason::Stop);
        CHECK_FALSE(r.first_token_logprobs.has_value());
        auto with_lp = req("hello ->");
        with_lp.want_logprobs = true;
        CHECK(b.complete(with_lp).first_token_logprobs->at("true") == doctest::Approx(-0.5));
    }
    SUBCASE("unknown prompt") {
        CHECK(code_of([&] { b.complete(req("nope")); }) == ErrorCode::UnknownPrompt);
    }
    SUBCASE("fallback") {
        ScriptedBackend fb(table, CompletionResponse{" None", FinishReason::Stop, {}});
        CHECK(fb.complete(req("anything")).text == " None");
    }
    SUBCASE("batch failures are positional") {
        std::vector<CompletionRequest> rs{req("hello ->"), req("missing"), req("hello ->")};
        const auto out = b.complete_batch(rs);
        REQUIRE(out.size() == 3);
        CHECK(out[0].ok());
        CHECK_FALSE(out[1].ok());
        CHECK(out[1].error == ErrorCode::UnknownPrompt);
        CHECK(out[2].ok());
    }
    SUBCASE("invalid request") {
        CHECK(code_of([&] { b.complete(req("hello ->", 0)); }) == ErrorCode::InvalidArgument);
    }
}

TEST_CASE("scripted JSONL tables") {
    tpt::TempDir dir;
    const auto path = dir / "table.jsonl";
    tpt::write_file(path, R"({"prompt": "a ->", "text": " x", "logprobs": {"true": -1.0}})" "\n"
                          "\n"
                          R"({"fallback": true, "text": " fb"})" "\n");
    auto b = ScriptedBackend::from_jsonl(path);
    CHECK(b->size() == 1);
    CHECK(b->complete(req("a ->")).text == " x");
    CHECK(b->complete(req("zzz")).text == " fb");

    tpt::write_file(path, R"({"prompt": "a", "text": "x"})" "\n" R"({"prompt": "a", "text": "y"})" "\n");
    try {
        ScriptedBackend::from_jsonl(path);
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(e.line() == 2);
    }
    tpt::write_file(path, R"({"prompt": "a", "text": "x", "logprobs": {"t": 0.5}})" "\n");
    CHECK(code_of([&] { ScriptedBackend::from_jsonl(path); }) == ErrorCode::Schema);
    CHECK(code_of([&] { ScriptedBackend::from_jsonl(dir / "absent.jsonl"); }) == ErrorCode::Io);

    CHECK(code_of([&] { open_backend("scripted:" + (dir / "absent.jsonl").string()); }) == ErrorCode::Io);
}

TEST_CASE("counting backend") {
    ScriptedBackend inner({}, CompletionResponse{" ok", FinishReason::Stop, {}});
    CountingBackend c(inner);
    std::vector<CompletionRequest> rs{req("p1"), req("p2")};
    c.complete_batch(rs);
    c.complete(req("p3"));
    CHECK(c.requests() == 3);
    CHECK(c.prompts() == std::vector<std::string>{"p1", "p2", "p3"});
    c.reset();
    CHECK(c.requests() == 0);
}

TEST_CASE("wire JSON") {
    auto r = req("x ->");
    r.want_logprobs = true;
    const auto back = request_from_json(request_to_json(r));
    CHECK(back.prompt == r.prompt);
    CHECK(back.max_new_tokens == 5);
    CHECK(back.stop_sequences == r.stop_sequences);
    CHECK(back.want_logprobs);

    const CompletionResponse resp{" true", FinishReason::Length, TokenLogprobs{{"true", -0.25}, {"false", -2.0}}};
    CHECK(response_from_json(response_to_json(resp)) == resp);
    CHECK(response_from_json(R"({"text": "a", "first_token_logprobs": null})").text == "a");
    for (const char* bad : {"not json", "{}", R"({"text": 3})", R"({"text": "a", "finish_reason": "eos"})",
                            R"({"text": "a", "first_token_logprobs": {"t": "x"}})"})
        CHECK(code_of([&] { response_from_json(bad); }) == ErrorCode::Protocol);
}

TEST_CASE("HTTP backend contract") {
    FakeServer fake;
    std::atomic<int> calls{0};

    SUBCASE("complete round trip and server-side stop enforcement") {
        CompletionRequest seen;
        fake.on_complete([&](const httplib::Request& rq, httplib::Response& rs) {
            ++calls;
            const auto r = request_from_json(rq.body);
            seen = r;
            rs.set_content(response_to_json({" echo " + r.prompt + "\nrest", FinishReason::Length,
                                             TokenLogprobs{{"true", -0.1}}}),
                           "application/json");
        });
        HttpBackend b(fast_options(fake.url()));
        CHECK_NOTHROW(b.probe());
        auto r = req("q ->");
        r.want_logprobs = true;
        const auto out = b.complete(r);
        CHECK(out.text == " echo q ->");
        CHECK(out.finish_reason == FinishReason::Stop);
        CHECK(out.first_token_logprobs->at("true") == doctest::Approx(-0.1));
        CHECK(b.count_tokens("a b c") == std::optional<std::size_t>(3));
        CHECK(calls == 1);
        CHECK(seen.stop_sequences == std::vector<std::string>{"\n"});
        CHECK(seen.temperature == 0.0);
        CHECK(seen.want_logprobs);
    }
    SUBCASE("413 is a context overflow and not retried") {
        fake.on_complete([&](const httplib::Request&, httplib::Response& rs) {
            ++calls;
            rs.status = 413;
        });
        HttpBackend b(fast_options(fake.url()));
        CHECK(code_of([&] { b.complete(req("q")); }) == ErrorCode::ContextOverflow);
        CHECK(calls == 1);
    }
    SUBCASE("transient errors are retried") {
        fake.on_complete([&](const httplib::Request&, httplib::Response& rs) {
            if (++calls < 3) {
                rs.status = calls == 1 ? 503 : 429;
                return;
            }
            rs.set_content(R"({"text": " ok"})", "application/json");
        });
        HttpBackend b(fast_options(fake.url()));
        CHECK(b.complete(req("q")).text == " ok");
        CHECK(calls == 3);
    }
    SUBCASE("retries are bounded") {
        fake.on_complete([&](const httplib::Request&, httplib::Response& rs) {
            ++calls;
            rs.status = 500;
        });
        HttpBackend b(fast_options(fake.url()));
        CHECK(code_of([&] { b.complete(req("q")); }) == ErrorCode::BackendUnavailable);
        CHECK(calls == 4);
    }
    SUBCASE("other client errors are protocol errors") {
        fake.on_complete([&](const httplib::Request&, httplib::Response& rs) {
            ++calls;
            rs.status = 400;
            rs.set_content("bad request", "text/plain");
        });
        HttpBackend b(fast_options(fake.url()));
        CHECK(code_of([&] { b.complete(req("q")); }) == ErrorCode::Protocol);
        CHECK(calls == 1);
    }
    SUBCASE("malformed body") {
        fake.on_complete([&](const httplib::Request&, httplib::Response& rs) {
            rs.set_content("{\"txt\": 1}", "application/json");
        });
        HttpBackend b(fast_options(fake.url()));
        CHECK(code_of([&] { b.complete(req("q")); }) == ErrorCode::Protocol);
    }
    SUBCASE("batch through the HTTP backend") {
        fake.on_complete([&](const httplib::Request& rq, httplib::Response& rs) {
            const auto r = request_from_json(rq.body);
            if (r.prompt == "fail") {
                rs.status = 413;
                return;
            }
            rs.set_content(response_to_json({" " + r.prompt, FinishReason::Stop, {}}), "application/json");
        });
        HttpBackend b(fast_options(fake.url()));
        std::vector<CompletionRequest> rs;
        for (int i = 0; i < 20; ++i) rs.push_back(req(i == 7 ? "fail" : "p" + std::to_string(i)));
        const auto out = b.complete_batch(rs);
        for (int i = 0; i < 20; ++i) {
            if (i == 7) {
                CHECK(out[i].error == ErrorCode::ContextOverflow);
            } else {
                REQUIRE(out[i].ok());
                CHECK(out[i].response->text == " p" + std::to_string(i));
            }
        }
    }
    SUBCASE("base URL with a path prefix") {
        fake.on_complete([](const httplib::Request&, httplib::Response& rs) {
            rs.set_content(R"({"text": " prefixed"})", "application/json");
        });
        HttpBackend b(fast_options(fake.url() + "/api/"));
        CHECK_NOTHROW(b.probe());
        CHECK(b.complete(req("q")).text == " prefixed");
    }
}

TEST_CASE("unreachable backend") {
    auto o = fast_options("http://127.0.0.1:1");
    o.retry.backoff = {std::chrono::milliseconds(1)};
    HttpBackend b(o);
    CHECK(code_of([&] { b.probe(); }) == ErrorCode::BackendUnavailable);
    CHECK(code_of([] { HttpBackend bad(HttpBackendOptions{"ftp://x", 1, {}, std::chrono::seconds(1)}); }) ==
          ErrorCode::Config);
    CHECK(code_of([] { open_backend("mystery"); }) == ErrorCode::Config);
}

TEST_CASE("backend token counter") {
    ScriptedBackend none({});
    BackendTokenCounter c(std::shared_ptr<Backend>(&none, [](Backend*) {}));
    CHECK(c.count("") == 0);
    CHECK(code_of([&] { c.count("x"); }) == ErrorCode::Protocol);
}
