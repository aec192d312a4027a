#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "todprime/errors.hpp"
#include "todprime/experiment.hpp"
#include "todprime/text.hpp"

namespace todprime {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Scoring

ScoreReport score_slot_filling(const std::vector<NluItem>& gold, const std::vector<SlotValueMap>& pred) {
    if (gold.size() != pred.size())
        throw Error(ErrorCode::InvalidArgument, "score_slot_filling: misaligned predictions");
    std::vector<std::vector<SpanLabel>> g(gold.size()), p(gold.size());
    std::size_t unmatched = 0;
    std::map<std::string, std::vector<std::size_t>> by_domain;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const Utterance u(gold[i].text, Speaker::User);
        auto gm = spans_from_slot_map(u, gold[i].slots);
        unmatched += gm.unmatched.size();
        g[i] = std::move(gm.spans);
        p[i] = spans_from_slot_map(u, pred[i]).spans;
        by_domain[gold[i].domain].push_back(i);
    }
    ScoreReport r = conll_f1(g, p);
    for (const auto& [domain, idx] : by_domain) {
        std::vector<std::vector<SpanLabel>> dg, dp;
        for (std::size_t i : idx) {
            dg.push_back(g[i]);
            dp.push_back(p[i]);
        }
        r.domains[domain]["f1"] = conll_f1(dg, dp).at("f1");
    }
    r.metadata["gold_values_not_in_text"] = std::to_string(unmatched);
    return r;
}

ScoreReport score_intent(const std::vector<NluItem>& gold, const std::vector<std::string>& pred,
                         const LabelSet& labels) {
    std::vector<std::string> g;
    for (const NluItem& it : gold) g.push_back(it.intent);
    return classification_report(g, pred, labels);
}

ScoreReport score_acts(const std::vector<ActItem>& gold, const std::vector<std::set<std::string>>& pred,
                       const LabelSet& labels) {
    std::vector<LabelSetItem> g;
    for (const ActItem& it : gold) g.emplace_back(it.acts.begin(), it.acts.end());
    return multilabel_f1(g, pred, labels);
}

ScoreReport score_dst(const std::vector<DstDialogue>& gold, const std::vector<DstTrace>& pred,
                      const std::vector<std::string>& tracked_slots) {
    std::vector<DstTrace> g;
    for (const DstDialogue& d : gold) g.push_back(DstTrace{d.user_states});
    return dst_accuracy(g, pred, tracked_slots);
}

namespace {

bool has_values(const std::vector<DialogueAct>& acts) {
    return std::any_of(acts.begin(), acts.end(), [](const DialogueAct& a) { return a.slots.size() > 0; });
}

}  // namespace

ScoreReport score_nlg(const std::vector<NlgItem>& gold, const std::vector<std::string>& pred) {
    if (gold.size() != pred.size()) throw Error(ErrorCode::InvalidArgument, "score_nlg: misaligned predictions");
    if (gold.empty()) throw Error(ErrorCode::InvalidArgument, "score_nlg: no items");
    auto score = [](const std::vector<std::size_t>& idx, const std::vector<NlgItem>& items,
                    const std::vector<std::string>& hyp, std::map<std::string, double>& out) {
        std::vector<std::string> h;
        std::vector<std::vector<std::string>> refs;
        std::vector<DialogueAct> acts;
        for (std::size_t i : idx) {
            h.push_back(hyp[i]);
            refs.push_back({items[i].reference});
            acts.push_back(items[i].act);
        }
        out["bleu"] = corpus_bleu(h, refs);
        if (has_values(acts)) out["slr"] = slot_error_rate(acts, h);
    };
    ScoreReport r;
    r.task = TaskKind::Nlg;
    r.n_items = gold.size();
    std::vector<std::size_t> all(gold.size());
    std::map<std::string, std::vector<std::size_t>> by_domain;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        all[i] = i;
        by_domain[gold[i].domain].push_back(i);
    }
    score(all, gold, pred, r.metrics);
    for (const auto& [domain, idx] : by_domain) score(idx, gold, pred, r.domains[domain]);
    return r;
}

// ---------------------------------------------------------------------------
// Tables

namespace {

struct Column {
    std::string header;
    std::string metric;
};

struct Layout {
    std::string name;
    std::vector<Column> columns;
    bool per_domain = false;  // columns read ScoreReport::domains and get an Avg
};

const std::vector<std::pair<std::string, std::string>>& snips_domains() {
    static const std::vector<std::pair<std::string, std::string>> d = {
        {"addtoplaylist", "PlayL"},     {"bookrestaurant", "Rest."},   {"getweather", "Weather"},
        {"playmusic", "PlayM."},        {"ratebook", "RateBook"},      {"searchcreativework", "SearchC."},
        {"searchscreeningevent", "Find."}};
    return d;
}

const std::vector<std::pair<std::string, std::string>>& fewshotwoz_domains() {
    static const std::vector<std::pair<std::string, std::string>> d = {
        {"restaurant", "restaurant"}, {"laptop", "laptop"}, {"hotel", "hotel"},  {"tv", "tv"},
        {"attraction", "attraction"}, {"train", "train"},   {"taxi", "taxi"}};
    return d;
}

/// Every known domain in its canonical order, then any others sorted. Known
/// domains without data render as nan and stay out of Avg.
std::vector<Column> domain_columns(const std::vector<ScoreReport>& reports, const std::string& metric,
                                   const std::vector<std::pair<std::string, std::string>>& known) {
    std::set<std::string> seen;
    for (const ScoreReport& r : reports)
        for (const auto& [d, ms] : r.domains)
            if (ms.count(metric)) seen.insert(d);
    std::vector<Column> cols;
    for (const auto& [domain, header] : known) {
        seen.erase(domain);
        cols.push_back({header, domain});
    }
    for (const std::string& d : seen) cols.push_back({d.empty() ? "(none)" : d, d});
    return cols;
}

std::vector<Layout> layouts(const std::vector<ScoreReport>& reports, TaskKind task) {
    switch (task) {
        case TaskKind::SlotFilling:
            return {{"slot_f1", domain_columns(reports, "f1", snips_domains()), true}};
        case TaskKind::Intent:
            return {{"intent", {{"Micro", "micro_f1"}, {"Macro", "macro_f1"}, {"Acc", "accuracy"}}, false}};
        case TaskKind::Act:
            return {{"act", {{"Micro", "micro_f1"}, {"Macro", "macro_f1"}, {"Acc", "accuracy"}}, false}};
        case TaskKind::Dst:
            return {{"dst", {{"Joint", "joint_accuracy"}, {"Slot", "slot_accuracy"}}, false}};
        case TaskKind::Nlg:
            return {{"nlg_bleu", domain_columns(reports, "bleu", fewshotwoz_domains()), true},
                    {"nlg_slr", domain_columns(reports, "slr", fewshotwoz_domains()), true}};
    }
    return {};
}

std::string metric_of(const Layout& l) {
    if (l.name == "slot_f1") return "f1";
    if (l.name == "nlg_bleu") return "bleu";
    return "slr";
}

double round4(double v) { return std::round(v * 1e4) / 1e4; }

std::string fmt4(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", round4(v) == 0.0 ? 0.0 : v);
    return buf;
}

std::string render(const Layout& layout, const std::vector<ScoreReport>& reports, TableFormat format) {
    std::vector<std::string> header{"Model", "Shots"};
    for (const Column& c : layout.columns) header.push_back(c.header);
    if (layout.per_domain) header.push_back("Avg");

    std::vector<std::vector<std::string>> rows;
    for (const ScoreReport& r : reports) {
        std::vector<std::string> row{r.model, std::to_string(r.shots)};
        double sum = 0;
        std::size_t n = 0;
        for (const Column& c : layout.columns) {
            double v = std::nan("");
            if (layout.per_domain) {
                auto d = r.domains.find(c.metric);
                if (d != r.domains.end()) {
                    auto m = d->second.find(metric_of(layout));
                    if (m != d->second.end()) v = m->second;
                }
            } else if (auto m = r.metrics.find(c.metric); m != r.metrics.end()) {
                v = m->second;
            }
            if (!std::isnan(v)) {
                sum += round4(v);
                ++n;
            }
            row.push_back(fmt4(v));
        }
        if (layout.per_domain) row.push_back(n ? fmt4(sum / static_cast<double>(n)) : "nan");
        rows.push_back(std::move(row));
    }

    std::string out;
    if (format == TableFormat::Csv) {
        out = text::join(header, ",") + "\n";
        for (const auto& row : rows) out += text::join(row, ",") + "\n";
        return out;
    }
    out = "| " + text::join(header, " | ") + " |\n|";
    for (std::size_t i = 0; i < header.size(); ++i) out += i < 1 ? "---|" : "---:|";
    out += "\n";
    for (const auto& row : rows) out += "| " + text::join(row, " | ") + " |\n";
    return out;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> emit_tables(const std::vector<ScoreReport>& reports,
                                                             TaskKind layout, TableFormat format) {
    if (reports.empty()) throw Error(ErrorCode::InvalidArgument, "emit_table: no reports");
    for (const ScoreReport& r : reports)
        if (r.task != layout)
            throw Error(ErrorCode::InvalidArgument, "emit_table: report for task '" +
                                                        std::string(to_string(r.task)) + "' in a '" +
                                                        std::string(to_string(layout)) + "' table");
    std::vector<std::pair<std::string, std::string>> out;
    for (const Layout& l : layouts(reports, layout)) out.emplace_back(l.name, render(l, reports, format));
    return out;
}

std::string emit_table(const std::vector<ScoreReport>& reports, TaskKind layout, TableFormat format) {
    std::string out;
    for (const auto& [name, table] : emit_tables(reports, layout, format)) {
        if (!out.empty()) out += "\n";
        if (format == TableFormat::Markdown && layout == TaskKind::Nlg)
            out += name == "nlg_bleu" ? "BLEU\n\n" : "SLR (missing-only)\n\n";
        out += table;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Metrics-only mode

namespace {

/// The test split when the gold file has one, otherwise every record.
template <class Item>
std::vector<Item> gold_items(const TaskDataset& ds) {
    const auto& c = ds.corpus<Item>();
    return c.test.empty() ? c.train : c.test;
}

std::string id_of(const NluItem& it) { return it.id; }
std::string id_of(const DstDialogue& d) { return d.id(); }
std::string id_of(const ActItem& it) { return it.id; }
std::string id_of(const NlgItem& it) { return it.id; }

[[noreturn]] void bad_pred(std::size_t line, const std::string& msg) { throw SchemaError(msg, line); }

SlotValueMap slot_map_from(const json& j, std::size_t line) {
    if (!j.is_object()) bad_pred(line, "'predicted' must be an object of slot values");
    SlotValueMap m;
    for (const auto& [k, v] : j.items()) {
        if (!v.is_string()) bad_pred(line, "slot '" + k + "' must map to a string");
        std::string value = text::normalize(v.get<std::string>());
        if (value.empty() || value == "none") continue;
        m.set(k, std::move(value));
    }
    return m;
}

/// id -> (line, predicted)
std::unordered_map<std::string, std::pair<std::size_t, json>> read_predictions(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
    std::unordered_map<std::string, std::pair<std::size_t, json>> out;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (text::trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            bad_pred(n, std::string("invalid JSON: ") + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("predicted"))
            bad_pred(n, "prediction needs string 'id' and 'predicted'");
        const std::string id = j["id"].get<std::string>();
        if (!out.emplace(id, std::make_pair(n, j["predicted"])).second)
            throw Error(ErrorCode::DuplicateId, "duplicate prediction id '" + id + "'");
    }
    return out;
}

template <class Item, class Convert>
auto aligned(const std::vector<Item>& gold,
             const std::unordered_map<std::string, std::pair<std::size_t, json>>& preds, Convert&& convert) {
    using T = decltype(convert(json{}, std::size_t{}));
    std::vector<T> out;
    out.reserve(gold.size());
    for (const Item& item : gold) {
        auto it = preds.find(id_of(item));
        if (it == preds.end()) throw SchemaError("no prediction for item '" + id_of(item) + "'", 0);
        out.push_back(convert(it->second.second, it->second.first));
    }
    return out;
}

}  // namespace

ScoreReport score_files(TaskKind task, const std::filesystem::path& gold, const std::filesystem::path& pred) {
    const TaskDataset ds = load_dataset(gold, task);
    const auto preds = read_predictions(pred);
    auto as_string = [](const json& j, std::size_t line) {
        if (!j.is_string()) bad_pred(line, "'predicted' must be a string");
        return j.get<std::string>();
    };
    ScoreReport r;
    switch (task) {
        case TaskKind::SlotFilling: {
            auto items = gold_items<NluItem>(ds);
            r = score_slot_filling(items, aligned(items, preds, slot_map_from));
            break;
        }
        case TaskKind::Intent: {
            auto items = gold_items<NluItem>(ds);
            r = score_intent(items, aligned(items, preds, as_string), ds.labels);
            break;
        }
        case TaskKind::Act: {
            auto items = gold_items<ActItem>(ds);
            auto p = aligned(items, preds, [](const json& j, std::size_t line) {
                if (!j.is_array()) bad_pred(line, "'predicted' must be a list of act labels");
                std::set<std::string> s;
                for (const json& e : j) {
                    if (!e.is_string()) bad_pred(line, "act labels must be strings");
                    s.insert(e.get<std::string>());
                }
                return s;
            });
            r = score_acts(items, p, ds.labels);
            break;
        }
        case TaskKind::Dst: {
            auto items = gold_items<DstDialogue>(ds);
            auto p = aligned(items, preds, [](const json& j, std::size_t line) {
                if (!j.is_array()) bad_pred(line, "'predicted' must be a list of states");
                DstTrace t;
                for (const json& s : j) t.states.push_back(slot_map_from(s, line));
                return t;
            });
            r = score_dst(items, p, ds.domain_slots.at(""));
            break;
        }
        case TaskKind::Nlg: {
            auto items = gold_items<NlgItem>(ds);
            r = score_nlg(items, aligned(items, preds, as_string));
            break;
        }
    }
    return r;
}

}  // namespace todprime
