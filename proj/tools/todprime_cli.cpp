// todprime command line: run, score, convert.
//
// Exit codes: 0 ok, 1 config error, 2 backend error, 3 data error.

#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "todprime/todprime.h"

namespace {

constexpr int kOk = 0, kConfig = 1, kBackend = 2, kData = 3;

int exit_code(tp_status s) {
    switch (s) {
        case TP_OK: return kOk;
        case TP_ERR_CONFIG:
        case TP_ERR_INVALID_ARGUMENT:
        case TP_ERR_BUDGET_EXCEEDED:
        case TP_ERR_PRECONDITION: return kConfig;
        case TP_ERR_BACKEND_UNAVAILABLE:
        case TP_ERR_CONTEXT_OVERFLOW:
        case TP_ERR_PROTOCOL:
        case TP_ERR_UNKNOWN_PROMPT: return kBackend;
        default: return kData;
    }
}

int report(tp_status s) {
    if (s != TP_OK) std::cerr << "error [" << tp_status_name(s) << "]: " << tp_last_error() << "\n";
    return exit_code(s);
}

const std::vector<std::string> kOverrides = {
    "task",          "model",           "train",          "test",          "backend",
    "backend-url",   "shots",           "seeds",          "negatives-per-positive",
    "style-arrow",   "style-example-separator",           "style-assignment",
    "style-true-token", "style-false-token", "style-none-token",
    "budget-context-limit", "budget-reserve", "budget-max-shots",
    "max-new-tokens", "token-counter",  "token-factor",   "want-logprobs",
    "max-concurrency", "workers",       "retry-backoff-ms", "out",
};

int run(const std::string& config_path, const std::map<std::string, std::string>& given, bool quiet) {
    std::vector<const char*> kv;
    for (const auto& [k, v] : given) {
        kv.push_back(k.c_str());
        kv.push_back(v.c_str());
    }
    tp_config* cfg = nullptr;
    tp_status s = tp_config_open(config_path.empty() ? nullptr : config_path.c_str(), kv.data(), given.size(), &cfg);
    char* aggregate = nullptr;
    if (s == TP_OK) s = tp_experiment_run(cfg, nullptr, &aggregate);
    if (s == TP_OK && !quiet) std::cout << aggregate << "\n";
    tp_string_free(aggregate);
    tp_config_free(cfg);
    return report(s);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-shot LM priming for task-oriented dialogue"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(tp_version()));

    auto* run_cmd = app.add_subcommand("run", "run a configured few-shot sweep");
    std::string config_path;
    bool quiet = false;
    run_cmd->add_option("--config", config_path, "experiment config (JSON)");
    run_cmd->add_flag("--quiet", quiet, "do not print the aggregate reports");
    std::map<std::string, std::string> values;
    for (const std::string& key : kOverrides) run_cmd->add_option("--" + key, values[key], "override '" + key + "'");

    auto* score_cmd = app.add_subcommand("score", "score a predictions file against gold data");
    std::string task, gold, pred;
    score_cmd->add_option("--task", task, "slot_filling | intent | dst | act | nlg")->required();
    score_cmd->add_option("--gold", gold, "canonical JSONL")->required();
    score_cmd->add_option("--pred", pred, "predictions JSONL")->required();

    auto* convert_cmd = app.add_subcommand("convert", "convert a public corpus release to canonical JSONL");
    std::string from, in, out, convert_task;
    convert_cmd->add_option("--from", from, "source format")
        ->required()
        ->check(CLI::IsMember({"snips", "multiwoz", "fewshotwoz"}));
    convert_cmd->add_option("--in", in, "input file")->required();
    convert_cmd->add_option("--out", out, "output JSONL")->required();
    convert_cmd->add_option("--task", convert_task, "target task (default: intent, dst, nlg)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    if (*run_cmd) {
        std::map<std::string, std::string> given;
        for (const std::string& key : kOverrides)
            if (run_cmd->count("--" + key)) given[key] = values[key];
        return run(config_path, given, quiet);
    }
    if (*score_cmd) {
        char* json = nullptr;
        const tp_status s = tp_score_files(task.c_str(), gold.c_str(), pred.c_str(), &json);
        if (s == TP_OK) std::cout << json;
        tp_string_free(json);
        return report(s);
    }
    if (convert_task.empty()) convert_task = from == "snips" ? "intent" : from == "multiwoz" ? "dst" : "nlg";
    std::size_t n = 0;
    const tp_status s = tp_convert(from.c_str(), in.c_str(), out.c_str(), convert_task.c_str(), &n);
    if (s == TP_OK) std::cout << "wrote " << n << " records to " << out << "\n";
    return report(s);
}
