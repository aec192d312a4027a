#include "todprime/todprime.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <new>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "todprime/errors.hpp"
#include "todprime/experiment.hpp"
#include "todprime/lm_backend.hpp"

struct tp_config {
    std::string json;
    std::filesystem::path base_dir;
    std::vector<std::pair<std::string, std::string>> overrides;
    todprime::ExperimentConfig parsed;
};

struct tp_backend {
    std::shared_ptr<todprime::Backend> impl;
};

namespace {

thread_local std::string g_last_error;

tp_status fail(tp_status s, std::string msg) {
    g_last_error = std::move(msg);
    return s;
}

template <class Fn>
tp_status guard(Fn&& fn) noexcept {
    g_last_error.clear();
    try {
        fn();
        return TP_OK;
    } catch (const todprime::Error& e) {
        return fail(static_cast<tp_status>(e.code()), e.what());
    } catch (const std::bad_alloc&) {
        return fail(TP_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(TP_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(TP_ERR_INTERNAL, "unknown exception");
    }
}

char* dup(const std::string& s) {
    char* p = static_cast<char*>(std::malloc(s.size() + 1));
    if (!p) throw std::bad_alloc();
    std::memcpy(p, s.data(), s.size() + 1);
    return p;
}

void require(const void* p, const char* what) {
    if (!p) throw todprime::Error(todprime::ErrorCode::InvalidArgument, std::string(what) + " is NULL");
}

}  // namespace

extern "C" {

const char* tp_version(void) { return "0.1.0"; }

const char* tp_status_name(tp_status status) {
    return todprime::error_code_name(static_cast<todprime::ErrorCode>(status));
}

const char* tp_last_error(void) { return g_last_error.c_str(); }

void tp_string_free(char* s) { std::free(s); }

tp_status tp_config_from_json(const char* json, const char* base_dir, tp_config** out) {
    return guard([&] {
        require(json, "json");
        require(out, "out");
        *out = nullptr;
        auto c = std::make_unique<tp_config>();
        c->json = json;
        c->base_dir = base_dir ? base_dir : "";
        c->parsed = todprime::parse_config(c->json, c->base_dir);
        *out = c.release();
    });
}

tp_status tp_config_load(const char* path, tp_config** out) {
    return guard([&] {
        require(path, "path");
        require(out, "out");
        *out = nullptr;
        std::ifstream in(path, std::ios::binary);
        if (!in) throw todprime::Error(todprime::ErrorCode::Config, std::string("cannot read config ") + path);
        std::stringstream ss;
        ss << in.rdbuf();
        auto c = std::make_unique<tp_config>();
        c->json = ss.str();
        c->base_dir = std::filesystem::path(path).parent_path();
        c->parsed = todprime::parse_config(c->json, c->base_dir);
        *out = c.release();
    });
}

tp_status tp_config_open(const char* path, const char* const* overrides, size_t n_overrides,
                         tp_config** out) {
    return guard([&] {
        require(out, "out");
        *out = nullptr;
        if (n_overrides) require(overrides, "overrides");
        auto c = std::make_unique<tp_config>();
        c->json = "{}";
        if (path) {
            std::ifstream in(path, std::ios::binary);
            if (!in) throw todprime::Error(todprime::ErrorCode::Config, std::string("cannot read config ") + path);
            std::stringstream ss;
            ss << in.rdbuf();
            c->json = ss.str();
            c->base_dir = std::filesystem::path(path).parent_path();
        }
        for (size_t i = 0; i < n_overrides; ++i) {
            require(overrides[2 * i], "override key");
            require(overrides[2 * i + 1], "override value");
            c->overrides.emplace_back(overrides[2 * i], overrides[2 * i + 1]);
        }
        c->parsed = todprime::parse_config(c->json, c->base_dir, c->overrides);
        *out = c.release();
    });
}

tp_status tp_config_set(tp_config* config, const char* key, const char* value) {
    return guard([&] {
        require(config, "config");
        require(key, "key");
        require(value, "value");
        auto overrides = config->overrides;
        overrides.emplace_back(key, value);
        config->parsed = todprime::parse_config(config->json, config->base_dir, overrides);
        config->overrides = std::move(overrides);
    });
}

tp_status tp_config_to_json(const tp_config* config, char** out) {
    return guard([&] {
        require(config, "config");
        require(out, "out");
        *out = dup(config->parsed.to_json());
    });
}

void tp_config_free(tp_config* config) { delete config; }

tp_status tp_experiment_run(const tp_config* config, const char* out_dir, char** aggregate_json) {
    return guard([&] {
        require(config, "config");
        if (aggregate_json) *aggregate_json = nullptr;
        todprime::ExperimentConfig cfg = config->parsed;
        if (out_dir) cfg.out = out_dir;
        const auto result = todprime::run_experiment(cfg);
        todprime::write_outputs(result, cfg.out);
        if (aggregate_json) {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& r : result.aggregate) arr.push_back(nlohmann::json::parse(todprime::report_to_json(r)));
            *aggregate_json = dup(arr.dump(2));
        }
    });
}

tp_status tp_score_files(const char* task, const char* gold_path, const char* pred_path, char** report_json) {
    return guard([&] {
        require(task, "task");
        require(gold_path, "gold_path");
        require(pred_path, "pred_path");
        require(report_json, "report_json");
        *report_json = nullptr;
        const auto report = todprime::score_files(todprime::parse_task_kind(task), gold_path, pred_path);
        *report_json = dup(todprime::report_to_json(report));
    });
}

tp_status tp_convert(const char* from, const char* in_path, const char* out_path, const char* task,
                     size_t* n_records) {
    return guard([&] {
        require(from, "from");
        require(in_path, "in_path");
        require(out_path, "out_path");
        require(task, "task");
        const std::size_t n = todprime::convert_corpus(from, in_path, out_path, todprime::parse_task_kind(task));
        if (n_records) *n_records = n;
    });
}

tp_status tp_backend_open(const char* spec, tp_backend** out) {
    return guard([&] {
        require(spec, "spec");
        require(out, "out");
        *out = nullptr;
        auto b = std::make_unique<tp_backend>();
        b->impl = todprime::open_backend(spec);
        *out = b.release();
    });
}

tp_status tp_backend_probe(tp_backend* backend) {
    return guard([&] {
        require(backend, "backend");
        backend->impl->probe();
    });
}

tp_status tp_backend_complete(tp_backend* backend, const char* request_json, char** response_json) {
    return guard([&] {
        require(backend, "backend");
        require(request_json, "request_json");
        require(response_json, "response_json");
        *response_json = nullptr;
        const auto request = todprime::request_from_json(request_json);
        *response_json = dup(todprime::response_to_json(backend->impl->complete(request)));
    });
}

tp_status tp_backend_count_tokens(tp_backend* backend, const char* text, size_t* count) {
    return guard([&] {
        require(backend, "backend");
        require(text, "text");
        require(count, "count");
        const auto n = backend->impl->count_tokens(text);
        if (!n) throw todprime::Error(todprime::ErrorCode::Protocol, "backend cannot count tokens");
        *count = *n;
    });
}

void tp_backend_close(tp_backend* backend) { delete backend; }

}  // extern "C"
