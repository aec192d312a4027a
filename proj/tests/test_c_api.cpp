#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <unistd.h>

#include <json.hpp>

#include "todprime/todprime.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Dir {
    fs::path path = fs::temp_directory_path() / ("todprime_capi_" + std::to_string(::getpid()) + "_" + std::to_string(std::rand()));
    Dir() { fs::create_directories(path); }
    ~Dir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

void write(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

std::string take(char* s) {
    std::string out = s ? s : "";
    tp_string_free(s);
    return out;
}

}  // namespace

TEST_CASE("status names and versions") {
    CHECK(std::string(tp_version()) == "0.1.0");
    CHECK(std::string(tp_status_name(TP_OK)) == "ok");
    CHECK(std::string(tp_status_name(TP_ERR_BACKEND_UNAVAILABLE)) == "backend_unavailable");
    CHECK(std::string(tp_status_name(TP_ERR_INTERNAL)) == "internal_error");
}

TEST_CASE("NULL arguments are rejected") {
    tp_config* cfg = nullptr;
    CHECK(tp_config_from_json(nullptr, nullptr, &cfg) == TP_ERR_INVALID_ARGUMENT);
    CHECK(std::string(tp_last_error()).find("NULL") != std::string::npos);
    CHECK(tp_config_load("x.json", nullptr) == TP_ERR_INVALID_ARGUMENT);
    CHECK(tp_experiment_run(nullptr, nullptr, nullptr) == TP_ERR_INVALID_ARGUMENT);
    CHECK(tp_backend_probe(nullptr) == TP_ERR_INVALID_ARGUMENT);
    tp_config_free(nullptr);
    tp_backend_close(nullptr);
    tp_string_free(nullptr);
}

TEST_CASE("config handles") {
    const char* base = R"({"task": "intent", "train": "t.jsonl", "backend": "scripted:x.jsonl"})";
    tp_config* cfg = nullptr;
    REQUIRE(tp_config_from_json(base, "/data", &cfg) == TP_OK);
    CHECK(tp_config_set(cfg, "shots", "1,5") == TP_OK);
    CHECK(tp_config_set(cfg, "colour", "red") == TP_ERR_CONFIG);
    CHECK(std::string(tp_last_error()).find("colour") != std::string::npos);
    CHECK(tp_config_set(cfg, "shots", "zero") == TP_ERR_CONFIG);

    char* out = nullptr;
    REQUIRE(tp_config_to_json(cfg, &out) == TP_OK);
    const json j = json::parse(take(out));
    CHECK(j.at("shots") == json({1, 5}));
    CHECK(j.at("train") == "/data/t.jsonl");
    tp_config_free(cfg);

    const char* kv[] = {"task", "nlg", "train", "/x.jsonl", "backend-url", "http://127.0.0.1:9"};
    REQUIRE(tp_config_open(nullptr, kv, 3, &cfg) == TP_OK);
    REQUIRE(tp_config_to_json(cfg, &out) == TP_OK);
    CHECK(json::parse(take(out)).at("task") == "nlg");
    tp_config_free(cfg);
    CHECK(tp_config_open(nullptr, kv, 1, &cfg) == TP_ERR_CONFIG);
    CHECK(cfg == nullptr);
}

TEST_CASE("scripted backend through the handle") {
    Dir d;
    write(d.path / "table.jsonl",
          R"({"prompt": "a -> b\nc ->", "text": " d\nnext", "logprobs": {"true": -0.5}})" "\n");
    tp_backend* b = nullptr;
    REQUIRE(tp_backend_open(("scripted:" + (d.path / "table.jsonl").string()).c_str(), &b) == TP_OK);
    CHECK(tp_backend_probe(b) == TP_OK);

    char* resp = nullptr;
    REQUIRE(tp_backend_complete(b, R"({"prompt": "a -> b\nc ->", "max_new_tokens": 5, "stop_sequences": ["\n"]})",
                                &resp) == TP_OK);
    const json r = json::parse(take(resp));
    CHECK(r.at("text") == " d");
    CHECK(r.at("finish_reason") == "stop");

    CHECK(tp_backend_complete(b, R"({"prompt": "unknown", "max_new_tokens": 5})", &resp) == TP_ERR_UNKNOWN_PROMPT);
    CHECK(resp == nullptr);
    CHECK(tp_backend_complete(b, "{", &resp) == TP_ERR_PROTOCOL);
    tp_backend_close(b);

    CHECK(tp_backend_open("ftp://x", &b) == TP_ERR_CONFIG);
    CHECK(tp_backend_open(("scripted:" + (d.path / "absent.jsonl").string()).c_str(), &b) == TP_ERR_IO);
}

TEST_CASE("unreachable backend writes nothing") {
    Dir d;
    write(d.path / "train.jsonl", R"({"id": "1", "text": "hi", "intent": "greet", "slots": {}})" "\n"
                                  R"({"id": "2", "text": "bye", "intent": "leave", "slots": {}, "split": "test"})" "\n");
    const json c = {{"task", "intent"}, {"train", "train.jsonl"}, {"backend", "http://127.0.0.1:1"},
                    {"retry_backoff_ms", {1}}};
    tp_config* cfg = nullptr;
    REQUIRE(tp_config_from_json(c.dump().c_str(), d.path.c_str(), &cfg) == TP_OK);
    char* agg = nullptr;
    CHECK(tp_experiment_run(cfg, (d.path / "out").c_str(), &agg) == TP_ERR_BACKEND_UNAVAILABLE);
    CHECK(agg == nullptr);
    CHECK_FALSE(fs::exists(d.path / "out"));
    tp_config_free(cfg);
}

TEST_CASE("score and convert") {
    Dir d;
    write(d.path / "gold.jsonl", R"({"id": "1", "text": "hi", "intent": "greet", "slots": {}})" "\n"
                                 R"({"id": "2", "text": "bye", "intent": "leave", "slots": {}})" "\n");
    write(d.path / "pred.jsonl", R"({"id": "1", "predicted": "greet"})" "\n" R"({"id": "2", "predicted": "greet"})" "\n");
    char* rep = nullptr;
    REQUIRE(tp_score_files("intent", (d.path / "gold.jsonl").c_str(), (d.path / "pred.jsonl").c_str(), &rep) == TP_OK);
    CHECK(json::parse(take(rep)).at("metrics").at("accuracy") == 50.0);
    CHECK(tp_score_files("chat", "a", "b", &rep) == TP_ERR_INVALID_ARGUMENT);

    write(d.path / "snips.json", R"({"GetWeather": [{"data": [{"text": "rain in "}, {"text": "Oslo", "entity": "city"}]}]})");
    size_t n = 0;
    CHECK(tp_convert("snips", (d.path / "snips.json").c_str(), (d.path / "out.jsonl").c_str(), "slot_filling", &n) ==
          TP_OK);
    CHECK(n == 1);
    CHECK(tp_convert("snips", (d.path / "snips.json").c_str(), (d.path / "out.jsonl").c_str(), "nlg", nullptr) ==
          TP_ERR_CONFIG);
}
