#include "todprime/experiment.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "todprime/errors.hpp"
#include "todprime/parallel.hpp"
#include "todprime/task_runner.hpp"
#include "todprime/text.hpp"

namespace todprime {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum class FieldType { String, Path, Backend, Count, Real, Flag, CountList, IntList };

const std::map<std::string, FieldType>& fields() {
    static const std::map<std::string, FieldType> f = {
        {"task", FieldType::String},
        {"model", FieldType::String},
        {"train", FieldType::Path},
        {"test", FieldType::Path},
        {"backend", FieldType::Backend},
        {"shots", FieldType::CountList},
        {"seeds", FieldType::CountList},
        {"negatives_per_positive", FieldType::Count},
        {"style.arrow", FieldType::String},
        {"style.example_separator", FieldType::String},
        {"style.assignment", FieldType::String},
        {"style.true_token", FieldType::String},
        {"style.false_token", FieldType::String},
        {"style.none_token", FieldType::String},
        {"budget.context_limit", FieldType::Count},
        {"budget.reserve", FieldType::Count},
        {"budget.max_shots", FieldType::Count},
        {"max_new_tokens", FieldType::Count},
        {"token_counter", FieldType::String},
        {"token_factor", FieldType::Real},
        {"want_logprobs", FieldType::Flag},
        {"max_concurrency", FieldType::Count},
        {"workers", FieldType::Count},
        {"retry_backoff_ms", FieldType::IntList},
        {"out", FieldType::Path},
    };
    return f;
}

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::Config, msg); }

std::uint64_t parse_count(std::string_view s, const std::string& key) {
    const std::string t(text::trim(s));
    if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos)
        config_error(key + ": expected a non-negative integer, got '" + t + "'");
    try {
        return std::stoull(t);
    } catch (const std::exception&) {
        config_error(key + ": integer out of range: '" + t + "'");
    }
}

json value_from_string(const std::string& key, FieldType type, const std::string& raw) {
    switch (type) {
        case FieldType::String:
        case FieldType::Path:
        case FieldType::Backend: return raw;
        case FieldType::Count: return parse_count(raw, key);
        case FieldType::Real:
            try {
                std::size_t used = 0;
                const double v = std::stod(raw, &used);
                if (used != raw.size()) throw std::invalid_argument(raw);
                return v;
            } catch (const std::exception&) {
                config_error(key + ": expected a number, got '" + raw + "'");
            }
        case FieldType::Flag:
            if (raw == "true" || raw == "1") return true;
            if (raw == "false" || raw == "0") return false;
            config_error(key + ": expected true or false, got '" + raw + "'");
        case FieldType::CountList:
        case FieldType::IntList: {
            json list = json::array();
            std::stringstream ss(raw);
            std::string part;
            while (std::getline(ss, part, ',')) list.push_back(parse_count(part, key));
            if (list.empty()) config_error(key + ": empty list");
            return list;
        }
    }
    config_error(key + ": unsupported field");
}

void check_type(const std::string& key, FieldType type, const json& v) {
    bool ok = false;
    switch (type) {
        case FieldType::String:
        case FieldType::Path:
        case FieldType::Backend: ok = v.is_string(); break;
        case FieldType::Count: ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0); break;
        case FieldType::Real: ok = v.is_number(); break;
        case FieldType::Flag: ok = v.is_boolean(); break;
        case FieldType::CountList:
        case FieldType::IntList:
            ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) {
                     return e.is_number_unsigned() || (e.is_number_integer() && e.get<long long>() >= 0);
                 });
            break;
    }
    if (!ok) config_error(key + ": wrong type " + std::string(v.type_name()));
}

std::string resolve(const std::string& p, const fs::path& base) {
    if (p.empty() || base.empty()) return p;
    const fs::path path(p);
    return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

std::string canonical_key(std::string key) {
    std::replace(key.begin(), key.end(), '-', '_');
    if (key == "backend_url") return "backend";
    for (const char* group : {"style_", "budget_"}) {
        const std::string g(group);
        if (key.rfind(g, 0) == 0 && key.size() > g.size())
            return g.substr(0, g.size() - 1) + "." + key.substr(g.size());
    }
    return key;
}

}  // namespace

ExperimentConfig parse_config(std::string_view json_text, const fs::path& base_dir,
                              const std::vector<std::pair<std::string, std::string>>& overrides) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        config_error(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) config_error("config must be a JSON object");

    std::map<std::string, json> flat;
    for (const auto& [k, v] : doc.items()) {
        if ((k == "style" || k == "budget") && v.is_object()) {
            for (const auto& [sub, sv] : v.items()) flat[k + "." + sub] = sv;
            continue;
        }
        flat[k == "backend_url" ? "backend" : k] = v;
    }
    for (auto& [k, v] : flat) {
        auto it = fields().find(k);
        if (it == fields().end()) config_error("unknown config field '" + k + "'");
        check_type(k, it->second, v);
        if (it->second == FieldType::Path) v = resolve(v.get<std::string>(), base_dir);
        if (it->second == FieldType::Backend) {
            const std::string spec = v.get<std::string>();
            if (spec.rfind("scripted:", 0) == 0) v = "scripted:" + resolve(spec.substr(9), base_dir);
        }
    }
    for (const auto& [raw_key, value] : overrides) {
        const std::string k = canonical_key(raw_key);
        auto it = fields().find(k);
        if (it == fields().end()) config_error("unknown option '" + raw_key + "'");
        flat[k] = value_from_string(k, it->second, value);
    }

    ExperimentConfig c;
    if (!flat.count("task")) config_error("config needs a 'task'");
    try {
        c.task = parse_task_kind(flat.at("task").get<std::string>());
    } catch (const Error& e) {
        config_error(e.what());
    }
    c.budget = BudgetPolicy::for_task(c.task);

    auto str = [&](const char* k, std::string& dst) {
        if (auto it = flat.find(k); it != flat.end()) dst = it->second.get<std::string>();
    };
    auto count = [&](const char* k, std::size_t& dst) {
        if (auto it = flat.find(k); it != flat.end()) dst = it->second.get<std::size_t>();
    };
    std::string train, test, out;
    str("model", c.model);
    str("train", train);
    str("test", test);
    str("backend", c.backend);
    str("out", out);
    c.train = train;
    c.test = test;
    if (!out.empty()) c.out = out;
    if (auto it = flat.find("shots"); it != flat.end()) c.shots = it->second.get<std::vector<std::size_t>>();
    if (auto it = flat.find("seeds"); it != flat.end()) c.seeds = it->second.get<std::vector<std::uint64_t>>();
    if (auto it = flat.find("retry_backoff_ms"); it != flat.end())
        c.retry_backoff_ms = it->second.get<std::vector<int>>();
    count("negatives_per_positive", c.negatives_per_positive);
    str("style.arrow", c.style.arrow);
    str("style.example_separator", c.style.example_separator);
    str("style.assignment", c.style.assignment);
    str("style.true_token", c.style.true_token);
    str("style.false_token", c.style.false_token);
    str("style.none_token", c.style.none_token);
    count("budget.context_limit", c.budget.context_limit);
    count("budget.reserve", c.budget.reserve);
    count("budget.max_shots", c.budget.max_shots);
    count("max_new_tokens", c.max_new_tokens);
    str("token_counter", c.token_counter);
    if (auto it = flat.find("token_factor"); it != flat.end()) c.token_factor = it->second.get<double>();
    if (auto it = flat.find("want_logprobs"); it != flat.end()) c.want_logprobs = it->second.get<bool>();
    count("max_concurrency", c.max_concurrency);
    count("workers", c.workers);
    c.validate();
    return c;
}

ExperimentConfig load_config(const fs::path& path,
                             const std::vector<std::pair<std::string, std::string>>& overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) config_error("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path(), overrides);
}

void ExperimentConfig::validate() const {
    if (train.empty()) config_error("'train' is required");
    if (backend.empty()) config_error("'backend' is required");
    if (shots.empty() || std::find(shots.begin(), shots.end(), 0) != shots.end())
        config_error("'shots' must list positive integers");
    if (seeds.empty()) config_error("'seeds' must not be empty");
    if (negatives_per_positive == 0) config_error("'negatives_per_positive' must be at least 1");
    if (token_counter != "auto" && token_counter != "estimate" && token_counter != "backend")
        config_error("'token_counter' must be auto, estimate or backend");
    if (!(token_factor > 0.0)) config_error("'token_factor' must be positive");
    if (max_concurrency == 0 || workers == 0) config_error("'max_concurrency' and 'workers' must be positive");
    if (std::any_of(retry_backoff_ms.begin(), retry_backoff_ms.end(), [](int ms) { return ms < 0; }))
        config_error("'retry_backoff_ms' must be non-negative");
    if (out.empty()) config_error("'out' must not be empty");
    try {
        style.validate();
        budget.validate(max_new_tokens ? max_new_tokens : default_max_new_tokens(prefix_kind_for(task)));
    } catch (const Error& e) {
        config_error(e.what());
    }
}

std::string ExperimentConfig::to_json() const {
    json j = {
        {"task", std::string(to_string(task))},
        {"model", model},
        {"train", train.string()},
        {"test", test.string()},
        {"backend", backend},
        {"shots", shots},
        {"seeds", seeds},
        {"negatives_per_positive", negatives_per_positive},
        {"style",
         {{"arrow", style.arrow},
          {"example_separator", style.example_separator},
          {"assignment", style.assignment},
          {"true_token", style.true_token},
          {"false_token", style.false_token},
          {"none_token", style.none_token}}},
        {"budget",
         {{"context_limit", budget.context_limit}, {"reserve", budget.reserve}, {"max_shots", budget.max_shots}}},
        {"max_new_tokens", max_new_tokens},
        {"token_counter", token_counter},
        {"token_factor", token_factor},
        {"want_logprobs", want_logprobs},
        {"max_concurrency", max_concurrency},
        {"workers", workers},
        {"retry_backoff_ms", retry_backoff_ms},
        {"out", out.string()},
    };
    return j.dump(2);
}

// ---------------------------------------------------------------------------

namespace {

json slots_json(const SlotValueMap& m) {
    json j = json::object();
    for (const auto& [k, v] : m) j[k] = v;
    return j;
}

/// Predictions for one (shots, seed) run, positionally aligned with the
/// test split.
struct RunState {
    std::vector<json> gold, predicted;
    std::vector<ForwardStats> stats;
    std::vector<std::exception_ptr> fatal;

    explicit RunState(std::size_t n) : gold(n), predicted(n), stats(n), fatal(n) {}
};

template <class Item, class Predict>
void predict_all(const std::vector<Item>& items, std::size_t workers, RunState& st, Predict&& predict) {
    parallel_for(items.size(), workers, [&](std::size_t i) {
        try {
            predict(i, items[i]);
        } catch (...) {
            st.fatal[i] = std::current_exception();
        }
    });
    for (const auto& e : st.fatal)
        if (e) std::rethrow_exception(e);
}

std::string item_id(const NluItem& it) { return it.id; }
std::string item_id(const DstDialogue& d) { return d.id(); }
std::string item_id(const ActItem& it) { return it.id; }
std::string item_id(const NlgItem& it) { return it.id; }

RunResult run_one(const ExperimentConfig& cfg, const TaskDataset& ds, Backend& backend,
                  const TokenCounter& counter, std::size_t shots, std::uint64_t seed) {
    RunResult run;
    run.shots = shots;
    run.seed = seed;
    const ShotPool pool = sample_shots(ds, shots, seed, cfg.negatives_per_positive);
    run.warnings = pool.warnings;

    const PrimingContext ctx{backend,          counter,  cfg.style, cfg.budget, cfg.want_logprobs,
                             0.0,              cfg.max_new_tokens};
    const std::size_t n = ds.test_size();
    RunState st(n);
    std::vector<std::string> ids(n);

    switch (cfg.task) {
        case TaskKind::SlotFilling: {
            const auto& items = ds.corpus<NluItem>().test;
            std::map<std::string, ShotsByKey> per_domain;
            for (const auto& [domain, slots] : ds.domain_slots)
                for (const std::string& slot : slots)
                    if (auto it = pool.pools.find(slot_pool_key(domain, slot)); it != pool.pools.end())
                        per_domain[domain][slot] = it->second;
            static const std::vector<std::string> no_slots;
            static const ShotsByKey no_shots;
            std::vector<SlotValueMap> preds(n);
            predict_all(items, cfg.workers, st, [&](std::size_t i, const NluItem& item) {
                auto ds_it = ds.domain_slots.find(item.domain);
                auto sh_it = per_domain.find(item.domain);
                auto p = predict_slots(Utterance(item.text, Speaker::User),
                                       ds_it == ds.domain_slots.end() ? no_slots : ds_it->second,
                                       sh_it == per_domain.end() ? no_shots : sh_it->second, ctx);
                st.gold[i] = slots_json(item.slots);
                st.predicted[i] = slots_json(p.slots);
                st.stats[i] = std::move(p.stats);
                preds[i] = std::move(p.slots);
            });
            run.report = score_slot_filling(items, preds);
            for (std::size_t i = 0; i < n; ++i) ids[i] = item_id(items[i]);
            break;
        }
        case TaskKind::Intent: {
            const auto& items = ds.corpus<NluItem>().test;
            std::vector<std::string> preds(n);
            predict_all(items, cfg.workers, st, [&](std::size_t i, const NluItem& item) {
                auto p = predict_intent(Utterance(item.text, Speaker::User), ds.labels, pool.pools, ctx);
                st.gold[i] = item.intent;
                st.predicted[i] = p.predicted;
                st.stats[i] = std::move(p.stats);
                preds[i] = std::move(p.predicted);
            });
            run.report = score_intent(items, preds, ds.labels);
            for (std::size_t i = 0; i < n; ++i) ids[i] = item_id(items[i]);
            break;
        }
        case TaskKind::Act: {
            const auto& items = ds.corpus<ActItem>().test;
            std::vector<std::set<std::string>> preds(n);
            predict_all(items, cfg.workers, st, [&](std::size_t i, const ActItem& item) {
                auto p = predict_acts(Utterance(item.system_text, Speaker::System), ds.labels, pool.pools, ctx);
                st.gold[i] = item.acts;
                st.predicted[i] = p.predicted;
                st.stats[i] = std::move(p.stats);
                preds[i] = std::move(p.predicted);
            });
            run.report = score_acts(items, preds, ds.labels);
            for (std::size_t i = 0; i < n; ++i) ids[i] = item_id(items[i]);
            break;
        }
        case TaskKind::Dst: {
            const auto& items = ds.corpus<DstDialogue>().test;
            const auto& tracked = ds.domain_slots.at("");
            std::vector<DstTrace> preds(n);
            predict_all(items, cfg.workers, st, [&](std::size_t i, const DstDialogue& d) {
                auto r = run_dst_dialogue(d.dialogue, tracked, pool.pools, ctx);
                json g = json::array(), p = json::array();
                for (const auto& s : d.user_states) g.push_back(slots_json(s));
                for (const auto& s : r.trace.states) p.push_back(slots_json(s));
                st.gold[i] = std::move(g);
                st.predicted[i] = std::move(p);
                st.stats[i] = std::move(r.stats);
                preds[i] = std::move(r.trace);
            });
            run.report = score_dst(items, preds, tracked);
            for (std::size_t i = 0; i < n; ++i) ids[i] = item_id(items[i]);
            break;
        }
        case TaskKind::Nlg: {
            const auto& items = ds.corpus<NlgItem>().test;
            static const std::vector<Shot> none;
            std::vector<std::string> preds(n);
            predict_all(items, cfg.workers, st, [&](std::size_t i, const NlgItem& item) {
                auto it = pool.pools.find(item.domain);
                auto p = generate_nlg(item.act, it == pool.pools.end() ? none : it->second, ctx);
                st.gold[i] = item.reference;
                st.predicted[i] = p.text;
                st.stats[i] = std::move(p.stats);
                preds[i] = std::move(p.text);
            });
            run.report = score_nlg(items, preds);
            for (std::size_t i = 0; i < n; ++i) ids[i] = item_id(items[i]);
            break;
        }
    }

    ForwardStats total;
    for (std::size_t i = 0; i < n; ++i) {
        const ForwardStats& s = st.stats[i];
        json line = {{"id", ids[i]},
                     {"task", std::string(to_string(cfg.task))},
                     {"gold", st.gold[i]},
                     {"predicted", st.predicted[i]},
                     {"prompts_hash", text::hex64(s.prompts_hash)},
                     {"requests", s.requests},
                     {"failures", s.failures}};
        if (!s.errors.empty()) line["errors"] = s.errors;
        run.predictions.push_back(line.dump());
        total.merge(s);
    }
    const std::size_t unavailable = total.failure_codes.count(ErrorCode::BackendUnavailable)
                                        ? total.failure_codes.at(ErrorCode::BackendUnavailable)
                                        : 0;
    if (total.requests > 0 && unavailable == total.requests)
        throw Error(ErrorCode::BackendUnavailable, "every forward failed: backend unavailable");

    run.report.model = cfg.model;
    run.report.shots = shots;
    run.report.seed = seed;
    run.report.errors = total.failures;
    run.report.metadata["requests"] = std::to_string(total.requests);
    run.report.metadata["unparseable"] = std::to_string(total.unparseable);
    run.report.metadata["prompts_hash"] = text::hex64(total.prompts_hash);
    if (!run.warnings.empty()) run.report.metadata["pool_warnings"] = std::to_string(run.warnings.size());
    return run;
}

ScoreReport mean_over_seeds(const std::vector<const RunResult*>& runs) {
    ScoreReport agg;
    const ScoreReport& first = runs.front()->report;
    agg.task = first.task;
    agg.model = first.model;
    agg.shots = runs.front()->shots;
    agg.n_items = first.n_items;
    const double k = static_cast<double>(runs.size());
    std::string seeds;
    for (const RunResult* r : runs) {
        for (const auto& [m, v] : r->report.metrics) agg.metrics[m] += v / k;
        for (const auto& [d, ms] : r->report.domains)
            for (const auto& [m, v] : ms) agg.domains[d][m] += v / k;
        agg.errors += r->report.errors;
        seeds += (seeds.empty() ? "" : ",") + std::to_string(r->seed);
    }
    agg.metadata["seeds"] = seeds;
    return agg;
}

std::unique_ptr<TokenCounter> make_counter(const ExperimentConfig& cfg, const std::shared_ptr<Backend>& backend) {
    bool use_backend = cfg.token_counter == "backend";
    if (cfg.token_counter == "auto") use_backend = dynamic_cast<HttpBackend*>(backend.get()) != nullptr;
    std::shared_ptr<const TokenCounter> inner;
    if (use_backend)
        inner = std::make_shared<BackendTokenCounter>(backend);
    else
        inner = std::make_shared<WordCountEstimator>(cfg.token_factor);
    return std::make_unique<CachedTokenCounter>(std::move(inner));
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, std::shared_ptr<Backend> backend) {
    config.validate();
    TaskDataset ds = config.test.empty() ? load_dataset(config.train, config.task)
                                         : load_dataset(config.train, config.test, config.task);
    if (ds.test_size() == 0) throw Error(ErrorCode::InsufficientData, "dataset has no test items");

    if (!backend) {
        HttpBackendOptions opts;
        opts.max_concurrency = config.max_concurrency;
        opts.retry.backoff.clear();
        for (int ms : config.retry_backoff_ms) opts.retry.backoff.emplace_back(ms);
        backend = open_backend(config.backend, std::move(opts));
    }
    backend->probe();
    const auto counter = make_counter(config, backend);

    ExperimentResult result;
    for (std::size_t shots : config.shots)
        for (std::uint64_t seed : config.seeds)
            result.runs.push_back(run_one(config, ds, *backend, *counter, shots, seed));

    for (std::size_t shots : config.shots) {
        std::vector<const RunResult*> group;
        for (const RunResult& r : result.runs)
            if (r.shots == shots) group.push_back(&r);
        if (!group.empty() && std::none_of(result.aggregate.begin(), result.aggregate.end(),
                                           [&](const ScoreReport& a) { return a.shots == shots; }))
            result.aggregate.push_back(mean_over_seeds(group));
    }
    return result;
}

std::string report_to_json(const ScoreReport& r) {
    json j = {{"task", std::string(to_string(r.task))},
              {"model", r.model},
              {"shots", r.shots},
              {"n_items", r.n_items},
              {"errors", r.errors},
              {"metrics", r.metrics},
              {"domains", r.domains},
              {"metadata", r.metadata}};
    j["seed"] = r.seed ? json(*r.seed) : json(nullptr);
    return j.dump(2) + "\n";
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << content;
    if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

std::string run_stem(const RunResult& r) {
    return "shots" + std::to_string(r.shots) + "_seed" + std::to_string(r.seed);
}

}  // namespace

void write_outputs(const ExperimentResult& result, const fs::path& dir) {
    if (result.aggregate.empty()) throw Error(ErrorCode::InvalidArgument, "nothing to write");
    const TaskKind task = result.aggregate.front().task;
    // Render everything before touching the disk.
    std::vector<std::pair<fs::path, std::string>> files;
    for (const RunResult& r : result.runs) {
        std::string lines;
        for (const std::string& l : r.predictions) lines += l + "\n";
        files.emplace_back(dir / "predictions" / (run_stem(r) + ".jsonl"), std::move(lines));
        files.emplace_back(dir / "reports" / (run_stem(r) + ".json"), report_to_json(r.report));
    }
    json agg = json::array();
    for (const ScoreReport& r : result.aggregate) agg.push_back(json::parse(report_to_json(r)));
    files.emplace_back(dir / "aggregate.json", agg.dump(2) + "\n");
    files.emplace_back(dir / "table.md", emit_table(result.aggregate, task, TableFormat::Markdown));
    for (const auto& [name, csv] : emit_tables(result.aggregate, task, TableFormat::Csv))
        files.emplace_back(dir / ("table_" + name + ".csv"), csv);

    std::string curve = "model,shots,metric,value\n";
    for (const ScoreReport& r : result.aggregate)
        for (const auto& [m, v] : r.metrics) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.4f", v);
            curve += r.model + "," + std::to_string(r.shots) + "," + m + "," + buf + "\n";
        }
    files.emplace_back(dir / "curve.csv", curve);

    std::error_code ec;
    fs::create_directories(dir / "predictions", ec);
    fs::create_directories(dir / "reports", ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
    for (const auto& [path, content] : files) write_file(path, content);
}

}  // namespace todprime
