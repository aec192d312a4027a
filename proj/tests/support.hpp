#pragma once

// Shared fixtures: temp dirs, synthetic corpora, and a gold oracle backend
// that answers a prompt by reading its final stub line.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "todprime/data.hpp"
#include "todprime/errors.hpp"
#include "todprime/lm_backend.hpp"
#include "todprime/text.hpp"

namespace tpt {

namespace fs = std::filesystem;
using nlohmann::json;

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("todprime_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << content;
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_lines(const fs::path& p, const std::vector<json>& records) {
    std::string s;
    for (const json& r : records) s += r.dump() + "\n";
    write_file(p, s);
}

inline todprime::Shot pos(std::string in, std::string out = {}) {
    return {std::move(in), std::move(out), todprime::Polarity::Positive, {}};
}
inline todprime::Shot neg(std::string in) { return {std::move(in), {}, todprime::Polarity::Negative, {}}; }
inline todprime::Shot gen(std::string in, std::string out) {
    return {std::move(in), std::move(out), todprime::Polarity::Neutral, {}};
}

// ---------------------------------------------------------------------------
// Synthetic corpora. Every utterance is unique so a prompt's query line
// identifies its item. `n_test` items go to the test split.

inline std::vector<json> intent_corpus(std::size_t n_test, std::size_t n_labels = 5, std::size_t train_per = 8) {
    std::vector<json> out;
    for (std::size_t l = 0; l < n_labels; ++l)
        for (std::size_t i = 0; i < train_per; ++i)
            out.push_back({{"id", "tr" + std::to_string(l) + "_" + std::to_string(i)},
                           {"text", "train utterance " + std::to_string(i) + " about topic" + std::to_string(l)},
                           {"intent", "intent" + std::to_string(l)},
                           {"slots", json::object()}});
    for (std::size_t i = 0; i < n_test; ++i) {
        const std::size_t l = i % n_labels;
        out.push_back({{"id", "te" + std::to_string(i)},
                       {"text", "test query " + std::to_string(i) + " regarding topic" + std::to_string(l)},
                       {"intent", "intent" + std::to_string(l)},
                       {"slots", json::object()},
                       {"split", "test"}});
    }
    return out;
}

inline std::vector<json> slot_corpus(std::size_t n_test, std::size_t train_per_domain = 12) {
    // Two domains with disjoint slot sets; every third item leaves one slot out.
    const std::vector<std::pair<std::string, std::vector<std::string>>> domains = {
        {"playmusic", {"artist", "genre"}}, {"getweather", {"city", "day"}}};
    std::vector<json> out;
    auto make = [&](std::size_t d, std::size_t i, bool test) {
        const auto& [domain, slots] = domains[d];
        const std::string tag = (test ? "q" : "t") + std::to_string(i);
        json s = json::object();
        std::string text;
        if (d == 0) {
            text = "play " + slots[1] + tag + " songs by " + slots[0] + tag;
            s[slots[0]] = slots[0] + tag;
            if (i % 3 != 0) s[slots[1]] = slots[1] + tag;
        } else {
            text = "weather in city" + tag + " on day" + tag;
            if (i % 3 != 0) s["city"] = "city" + tag;
            s["day"] = "day" + tag;
        }
        json r = {{"id", domain + "_" + tag}, {"text", text}, {"intent", domain}, {"domain", domain}, {"slots", s}};
        if (test) r["split"] = "test";
        return r;
    };
    for (std::size_t d = 0; d < domains.size(); ++d)
        for (std::size_t i = 0; i < train_per_domain; ++i) out.push_back(make(d, i, false));
    for (std::size_t i = 0; i < n_test; ++i) out.push_back(make(i % domains.size(), i, true));
    return out;
}

inline std::vector<json> dst_corpus(std::size_t n_test, std::size_t n_train = 12) {
    const std::vector<std::string> slots = {"area", "food", "price"};
    std::vector<json> out;
    auto make = [&](const std::string& id, std::size_t seed, bool test) {
        std::mt19937 rng(static_cast<unsigned>(seed));
        json turns = json::array();
        json state = json::object();
        const std::size_t n_user = 1 + rng() % 3;
        for (std::size_t t = 0; t < n_user; ++t) {
            // Each user turn sets or changes one or two slots; some later
            // turns change nothing, which exercises the carry.
            std::string text = id + " turn " + std::to_string(t) + " i want";
            const bool idle = t > 0 && rng() % 4 == 0;
            const std::size_t k = idle ? 0 : 1 + rng() % 2;
            for (std::size_t j = 0; j < k; ++j) {
                const std::string& s = slots[rng() % slots.size()];
                const std::string v = s + "v" + std::to_string(rng() % 7);
                state[s] = v;
                text += " " + s + " " + v;
            }
            if (idle) text = id + " turn " + std::to_string(t) + " thanks";
            turns.push_back({{"speaker", "user"}, {"text", text}, {"state", state}});
            if (t + 1 < n_user) turns.push_back({{"speaker", "system"}, {"text", id + " system reply " + std::to_string(t)}});
        }
        json r = {{"dialogue_id", id}, {"turns", turns}};
        if (test) r["split"] = "test";
        return r;
    };
    for (std::size_t i = 0; i < n_train; ++i) out.push_back(make("train" + std::to_string(i), 1000 + i, false));
    for (std::size_t i = 0; i < n_test; ++i) out.push_back(make("test" + std::to_string(i), 5000 + i, true));
    // Guarantee every slot has a positive and a none example in training.
    json turns = json::array();
    turns.push_back({{"speaker", "user"},
                     {"text", "seed dialogue area areav1 food foodv2 price pricev3"},
                     {"state", {{"area", "areav1"}, {"food", "foodv2"}, {"price", "pricev3"}}}});
    out.push_back({{"dialogue_id", "seed_full"}, {"turns", turns}});
    turns = json::array();
    turns.push_back({{"speaker", "user"}, {"text", "seed dialogue hello there"}, {"state", json::object()}});
    out.push_back({{"dialogue_id", "seed_empty"}, {"turns", turns}});
    return out;
}

inline std::vector<json> act_corpus(std::size_t n_test, std::size_t n_train = 30) {
    const std::vector<std::string> labels = {"bye", "greet", "inform", "offerbooked", "request"};
    std::vector<json> out;
    auto make = [&](const std::string& id, std::size_t i, bool test) {
        std::vector<std::string> acts{labels[i % labels.size()]};
        if (i % 3 == 0) acts.push_back(labels[(i + 2) % labels.size()]);
        std::sort(acts.begin(), acts.end());
        json r = {{"id", id}, {"system_text", "system says " + id + " with " + todprime::text::join(acts, " ")}, {"acts", acts}};
        if (test) r["split"] = "test";
        return r;
    };
    for (std::size_t i = 0; i < n_train; ++i) out.push_back(make("tr" + std::to_string(i), i, false));
    for (std::size_t i = 0; i < n_test; ++i) out.push_back(make("te" + std::to_string(i), i + 1, true));
    return out;
}

inline std::vector<json> nlg_corpus(std::size_t n_test, std::size_t train_per_domain = 25) {
    const std::vector<std::string> domains = {"restaurant", "hotel"};
    std::vector<json> out;
    auto make = [&](std::size_t d, std::size_t i, bool test) {
        const std::string tag = (test ? "q" : "t") + std::to_string(i);
        const std::string name = domains[d] + "name" + tag;
        const std::string area = "area" + tag;
        json r = {{"id", domains[d] + "_" + tag},
                  {"act", "inform(name=" + name + ";area=" + area + ")"},
                  {"reference", "the " + name + " is located in the " + area + " part of town ."},
                  {"domain", domains[d]}};
        if (test) r["split"] = "test";
        return r;
    };
    for (std::size_t d = 0; d < domains.size(); ++d)
        for (std::size_t i = 0; i < train_per_domain; ++i) out.push_back(make(d, i, false));
    for (std::size_t i = 0; i < n_test; ++i) out.push_back(make(i % domains.size(), i, true));
    return out;
}

// ---------------------------------------------------------------------------

/// Answers every prompt with the gold continuation for its query line. The
/// stub is "<query> -> <label> =" (binary, value) or "<query> ->" (NLG).
class GoldOracle final : public todprime::Backend {
public:
    explicit GoldOracle(const todprime::TaskDataset& ds, const std::string& arrow = "->")
        : arrow_(" " + arrow + " "), tail_(" " + arrow) {
        using namespace todprime;
        kind_ = ds.kind;
        auto add_nlu = [&](const NluItem& it) {
            intents_[it.text] = it.intent;
            slots_[it.text] = it.slots;
        };
        switch (ds.kind) {
            case TaskKind::SlotFilling:
            case TaskKind::Intent:
                for (const auto& it : ds.corpus<NluItem>().test) add_nlu(it);
                break;
            case TaskKind::Act:
                for (const auto& it : ds.corpus<ActItem>().test) acts_[it.system_text] = it.acts;
                break;
            case TaskKind::Dst:
                for (const auto& d : ds.corpus<DstDialogue>().test) {
                    const auto users = d.user_turns();
                    for (std::size_t t = 0; t < users.size(); ++t) slots_[users[t].text()] = d.user_states[t];
                }
                break;
            case TaskKind::Nlg:
                for (const auto& it : ds.corpus<NlgItem>().test) refs_[serialize_act(it.act)] = it.reference;
                break;
        }
    }

    todprime::CompletionResponse complete(const todprime::CompletionRequest& r) override {
        using namespace todprime;
        const auto nl = r.prompt.rfind('\n');
        const std::string stub = nl == std::string::npos ? r.prompt : r.prompt.substr(nl + 1);
        CompletionResponse out;
        if (kind_ == TaskKind::Nlg) {
            if (stub.size() < tail_.size() || stub.compare(stub.size() - tail_.size(), tail_.size(), tail_) != 0)
                throw Error(ErrorCode::UnknownPrompt, "oracle: stub does not end with the arrow");
            out.text = " " + lookup(refs_, stub.substr(0, stub.size() - tail_.size()));
            return out;
        }
        const auto a = stub.rfind(arrow_);
        if (a == std::string::npos) throw Error(ErrorCode::UnknownPrompt, "oracle: no arrow in stub");
        const std::string query = stub.substr(0, a);
        const std::string rhs = stub.substr(a + arrow_.size());
        const std::string label = rhs.substr(0, rhs.size() - 2);  // strip " ="
        bool yes = false;
        switch (kind_) {
            case TaskKind::Intent: yes = lookup(intents_, query) == label; break;
            case TaskKind::Act: {
                const auto& acts = lookup(acts_, query);
                yes = std::find(acts.begin(), acts.end(), label) != acts.end();
                break;
            }
            default: {
                const auto v = lookup(slots_, query).get(label);
                out.text = " " + (v ? *v : std::string("None"));
                return out;
            }
        }
        out.text = yes ? " true" : " false";
        if (r.want_logprobs) out.first_token_logprobs = TokenLogprobs{{"true", yes ? -0.01 : -6.0}, {"false", yes ? -6.0 : -0.01}};
        return out;
    }

private:
    template <class M>
    static const typename M::mapped_type& lookup(const M& m, const std::string& key) {
        auto it = m.find(key);
        if (it == m.end()) throw todprime::Error(todprime::ErrorCode::UnknownPrompt, "oracle: unknown query '" + key + "'");
        return it->second;
    }

    std::string arrow_, tail_;
    todprime::TaskKind kind_{};
    std::map<std::string, std::string> intents_;
    std::map<std::string, todprime::SlotValueMap> slots_;
    std::map<std::string, std::vector<std::string>> acts_;
    std::map<std::string, std::string> refs_;
};

/// Backend whose answers come from a callable; handy for targeted cases.
class FnBackend final : public todprime::Backend {
public:
    using Fn = std::function<todprime::CompletionResponse(const todprime::CompletionRequest&)>;
    explicit FnBackend(Fn fn) : fn_(std::move(fn)) {}
    todprime::CompletionResponse complete(const todprime::CompletionRequest& r) override { return fn_(r); }

private:
    Fn fn_;
};

/// Text after the last newline: the unanswered stub.
inline std::string stub_of(const std::string& prompt) {
    const auto nl = prompt.rfind('\n');
    return nl == std::string::npos ? prompt : prompt.substr(nl + 1);
}

/// Records every (prompt, response) the inner backend produced.
class Recorder final : public todprime::Backend {
public:
    explicit Recorder(todprime::Backend& inner) : inner_(inner) {}

    todprime::CompletionResponse complete(const todprime::CompletionRequest& r) override {
        auto resp = inner_.complete(r);
        std::lock_guard lock(mu_);
        table_[r.prompt] = resp;
        return resp;
    }

    /// JSONL table loadable by ScriptedBackend::from_jsonl, sorted by prompt.
    std::string jsonl() const {
        std::lock_guard lock(mu_);
        std::string s;
        for (const auto& [prompt, resp] : table_) {
            json j = {{"prompt", prompt}, {"text", resp.text}};
            if (resp.first_token_logprobs) j["logprobs"] = *resp.first_token_logprobs;
            s += j.dump() + "\n";
        }
        return s;
    }

private:
    todprime::Backend& inner_;
    mutable std::mutex mu_;
    std::map<std::string, todprime::CompletionResponse> table_;
};

}  // namespace tpt
