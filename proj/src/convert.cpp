// Converters from public corpus releases into canonical JSONL.

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "todprime/errors.hpp"
#include "todprime/experiment.hpp"
#include "todprime/text.hpp"

namespace todprime {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw SchemaError(path.string() + ": invalid JSON: " + e.what(), 0);
    }
}

bool clean(std::string_view s) {
    return !s.empty() && s.find_first_of("();=\r\n") == std::string_view::npos;
}

std::string squash(std::string_view s) { return text::normalize(s); }

// snips-nlu-benchmark: {"Intent": [{"data": [{"text", "entity"?}, ...]}, ...]}
std::vector<json> from_snips(const json& doc) {
    if (!doc.is_object()) throw SchemaError("snips: expected an object keyed by intent", 0);
    std::vector<json> out;
    for (const auto& [intent, utterances] : doc.items()) {
        if (!utterances.is_array()) throw SchemaError("snips: intent '" + intent + "' must hold a list", 0);
        const std::string label = text::to_lower(intent);
        std::size_t n = 0;
        for (const json& u : utterances) {
            std::string sentence;
            json slots = json::object();
            for (const json& chunk : u.at("data")) {
                const std::string t = chunk.at("text").get<std::string>();
                sentence += t;
                if (chunk.contains("entity")) {
                    const std::string slot = chunk["entity"].get<std::string>();
                    const std::string value = squash(t);
                    if (clean(slot) && clean(value) && !slots.contains(slot)) slots[slot] = value;
                }
            }
            sentence = squash(sentence);
            if (sentence.empty()) continue;
            out.push_back({{"id", label + "-" + std::to_string(n++)},
                           {"text", sentence},
                           {"intent", label},
                           {"domain", label},
                           {"slots", slots}});
        }
    }
    return out;
}

std::set<std::string> multiwoz_test_ids(const fs::path& data_json) {
    std::set<std::string> ids;
    for (const char* name : {"testListFile.txt", "testListFile.json", "testListFile"}) {
        std::ifstream in(data_json.parent_path() / name);
        std::string line;
        while (std::getline(in, line))
            if (auto t = text::trim(line); !t.empty()) ids.emplace(t);
        if (!ids.empty()) break;
    }
    return ids;
}

json multiwoz_state(const json& metadata) {
    json state = json::object();
    if (!metadata.is_object()) return state;
    for (const auto& [domain, parts] : metadata.items()) {
        for (const char* part : {"semi", "book"}) {
            if (!parts.contains(part)) continue;
            for (const auto& [slot, v] : parts[part].items()) {
                if (!v.is_string()) continue;
                const std::string value = squash(v.get<std::string>());
                if (value.empty() || value == "not mentioned" || value == "none") continue;
                std::string name = text::to_lower(domain) + "-" + (std::string(part) == "book" ? "book " : "") +
                                   text::to_lower(slot);
                if (clean(name) && clean(value)) state[name] = value;
            }
        }
    }
    return state;
}

// MultiWOZ data.json: {dialogue_id: {"log": [{"text", "metadata", "dialog_act"?}, ...]}}.
// User turns are even; the belief state after a user turn sits on the next
// system turn.
std::vector<json> from_multiwoz(const json& doc, const std::set<std::string>& test_ids, TaskKind task) {
    if (!doc.is_object()) throw SchemaError("multiwoz: expected an object keyed by dialogue id", 0);
    std::vector<json> out;
    for (const auto& [id, dialogue] : doc.items()) {
        const json& log = dialogue.at("log");
        const std::string split = test_ids.count(id) ? "test" : "train";
        if (task == TaskKind::Dst) {
            json turns = json::array();
            for (std::size_t i = 0; i < log.size(); ++i) {
                const std::string t = squash(log[i].at("text").get<std::string>());
                if (t.empty()) break;
                json turn = {{"speaker", i % 2 == 0 ? "user" : "system"}, {"text", t}};
                if (i % 2 == 0)
                    turn["state"] = i + 1 < log.size() ? multiwoz_state(log[i + 1].value("metadata", json()))
                                                       : (turns.size() >= 2 ? turns[turns.size() - 2]["state"]
                                                                            : json::object());
                turns.push_back(std::move(turn));
            }
            if (!turns.empty()) out.push_back({{"dialogue_id", id}, {"turns", turns}, {"split", split}});
            continue;
        }
        for (std::size_t i = 1; i < log.size(); i += 2) {
            const json& turn = log[i];
            if (!turn.contains("dialog_act") || !turn["dialog_act"].is_object()) continue;
            std::set<std::string> acts;
            for (const auto& [name, _] : turn["dialog_act"].items()) {
                const auto dash = name.find('-');
                const std::string act = text::to_lower(dash == std::string::npos ? name : name.substr(dash + 1));
                if (clean(act)) acts.insert(act);
            }
            const std::string t = squash(turn.at("text").get<std::string>());
            if (acts.empty() || t.empty()) continue;
            out.push_back({{"id", id + "#" + std::to_string(i)},
                           {"system_text", t},
                           {"acts", std::vector<std::string>(acts.begin(), acts.end())},
                           {"split", split}});
        }
    }
    return out;
}

/// "inform ( name = x ; area = y )" -> "inform(name=x;area=y)". Slots without
/// a value are dropped. Returns empty on anything else.
std::string fewshotwoz_act(std::string_view da) {
    const std::string s = squash(da);
    const auto open = s.find('('), close = s.rfind(')');
    if (open == std::string::npos || close == std::string::npos || close < open ||
        !text::trim(std::string_view(s).substr(close + 1)).empty())
        return {};
    const std::string act(text::trim(std::string_view(s).substr(0, open)));
    if (!clean(act) || act.find(' ') != std::string::npos) return {};
    std::vector<std::string> parts;
    std::stringstream body(s.substr(open + 1, close - open - 1));
    std::string item;
    std::set<std::string> seen;
    while (std::getline(body, item, ';')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) continue;
        const std::string slot(text::trim(std::string_view(item).substr(0, eq)));
        const std::string value(text::trim(std::string_view(item).substr(eq + 1)));
        if (!clean(slot) || !clean(value) || !seen.insert(slot).second) return {};
        parts.push_back(slot + "=" + value);
    }
    return act + "(" + text::join(parts, ";") + ")";
}

// FewShotWoz: lines "act ( slot = value ; ... ) & utterance", or a JSON list
// of {"da", "utterance"} objects or [da, utterance] pairs. The domain is the
// name of the directory holding the file.
std::vector<json> from_fewshotwoz(const fs::path& in) {
    std::vector<std::pair<std::string, std::string>> pairs;
    std::ifstream f(in, std::ios::binary);
    if (!f) throw Error(ErrorCode::Io, "cannot read " + in.string());
    const char first = static_cast<char>(f.peek());
    if (first == '[' || first == '{') {
        const json doc = read_json(in);
        if (!doc.is_array()) throw SchemaError("fewshotwoz: expected a JSON list", 0);
        for (const json& e : doc) {
            if (e.is_array() && e.size() == 2)
                pairs.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
            else
                pairs.emplace_back(e.at("da").get<std::string>(), e.at("utterance").get<std::string>());
        }
    } else {
        std::string line;
        while (std::getline(f, line)) {
            const auto amp = line.find(" & ");
            if (amp == std::string::npos) continue;
            pairs.emplace_back(line.substr(0, amp), line.substr(amp + 3));
        }
    }
    const std::string domain = text::to_lower(in.parent_path().filename().string());
    std::vector<json> out;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const std::string act = fewshotwoz_act(pairs[i].first);
        const std::string ref = squash(pairs[i].second);
        if (act.empty() || ref.empty()) continue;
        json j = {{"id", (domain.empty() ? "item" : domain) + "-" + std::to_string(i)}, {"act", act}, {"reference", ref}};
        if (clean(domain)) j["domain"] = domain;
        out.push_back(std::move(j));
    }
    return out;
}

}  // namespace

std::size_t convert_corpus(std::string_view from, const fs::path& in, const fs::path& out, TaskKind task) {
    std::vector<json> records;
    if (from == "snips") {
        if (task != TaskKind::Intent && task != TaskKind::SlotFilling)
            throw Error(ErrorCode::Config, "snips converts to intent or slot_filling");
        records = from_snips(read_json(in));
    } else if (from == "multiwoz") {
        if (task != TaskKind::Dst && task != TaskKind::Act)
            throw Error(ErrorCode::Config, "multiwoz converts to dst or act");
        records = from_multiwoz(read_json(in), multiwoz_test_ids(in), task);
    } else if (from == "fewshotwoz") {
        if (task != TaskKind::Nlg) throw Error(ErrorCode::Config, "fewshotwoz converts to nlg");
        records = from_fewshotwoz(in);
    } else {
        throw Error(ErrorCode::Config, "unknown source format '" + std::string(from) + "'");
    }
    if (records.empty()) throw SchemaError("no usable records in " + in.string(), 0);

    std::ofstream o(out, std::ios::binary | std::ios::trunc);
    if (!o) throw Error(ErrorCode::Io, "cannot write " + out.string());
    for (const json& r : records) o << r.dump() << "\n";
    o.close();
    // The output must load under the same rules as any hand-written corpus.
    load_dataset(out, task);
    return records.size();
}

}  // namespace todprime
