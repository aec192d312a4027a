#include "todprime/data.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <ostream>
#include <set>

#include <json.hpp>

#include "todprime/errors.hpp"
#include "todprime/rng.hpp"
#include "todprime/text.hpp"

namespace todprime {

using nlohmann::json;

std::vector<Utterance> DstDialogue::user_turns() const {
    std::vector<Utterance> out;
    for (const auto& t : dialogue.turns)
        if (t.speaker() == Speaker::User) out.push_back(t);
    return out;
}

std::vector<SlotValueMap> turn_updates(const std::vector<SlotValueMap>& cumulative) {
    std::vector<SlotValueMap> out;
    out.reserve(cumulative.size());
    const SlotValueMap empty;
    for (std::size_t t = 0; t < cumulative.size(); ++t) {
        const SlotValueMap& prev = t ? cumulative[t - 1] : empty;
        SlotValueMap update;
        for (const auto& [slot, value] : cumulative[t])
            if (prev.get(slot) != value) update.set(slot, value);
        out.push_back(std::move(update));
    }
    return out;
}

std::size_t TaskDataset::test_size() const {
    return std::visit([](const auto& c) { return c.test.size(); }, items);
}

std::size_t TaskDataset::train_size() const {
    return std::visit([](const auto& c) { return c.train.size(); }, items);
}

// ---------------------------------------------------------------------------

namespace {

enum class Split { Train, Test };

struct Record {
    const json& j;
    std::size_t line;
    Split split;
};

class Loader {
public:
    explicit Loader(TaskKind kind) : kind_(kind) {}

    void read(const std::filesystem::path& path, std::optional<Split> forced) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorCode::Io, "cannot open dataset " + path.string());
        std::string line;
        std::size_t lineno = 0, records = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (text::trim(line).empty()) continue;
            json j;
            try {
                j = json::parse(line);
            } catch (const json::exception& e) {
                throw SchemaError(std::string("malformed JSON: ") + e.what(), lineno);
            }
            if (!j.is_object()) throw SchemaError("record is not a JSON object", lineno);
            Split split = forced.value_or(Split::Train);
            if (!forced && j.contains("split")) {
                const std::string s = str(j, "split", lineno);
                if (s == "test")
                    split = Split::Test;
                else if (s != "train")
                    throw SchemaError("split must be 'train' or 'test'", lineno);
            }
            try {
                add(Record{j, lineno, split});
            } catch (const json::exception& e) {
                throw SchemaError(e.what(), lineno);
            }
            ++records;
        }
        if (records == 0) throw SchemaError(path.string() + " contains no records", 0);
    }

    TaskDataset finish() {
        std::vector<std::string> labels(label_set_.begin(), label_set_.end());
        if (labels.empty()) throw SchemaError("dataset declares no labels for task " +
                                                  std::string(to_string(kind_)), 0);
        TaskDataset ds{kind_, std::move(items_), LabelSet(std::move(labels)), {}, std::move(warnings_)};
        for (auto& [domain, slots] : domain_slots_)
            ds.domain_slots[domain].assign(slots.begin(), slots.end());
        if (kind_ == TaskKind::Dst)
            ds.domain_slots[""] = ds.labels.labels();
        return ds;
    }

private:
    static std::string str(const json& j, const char* key, std::size_t line) {
        if (!j.contains(key) || !j.at(key).is_string())
            throw SchemaError(std::string("missing string field '") + key + "'", line);
        return j.at(key).get<std::string>();
    }

    static std::string id_of(const json& j, const char* key, std::size_t line) {
        if (j.contains(key) && j.at(key).is_number_integer())
            return std::to_string(j.at(key).get<long long>());
        std::string id = str(j, key, line);
        if (id.empty()) throw SchemaError(std::string("empty '") + key + "'", line);
        return id;
    }

    static std::string utterance_text(const json& j, const char* key, std::size_t line) {
        std::string t = text::normalize(str(j, key, line));
        if (t.empty()) throw SchemaError(std::string("'") + key + "' is empty", line);
        return t;
    }

    std::string name(std::string raw, const char* what, std::size_t line) {
        std::string n = text::normalize(raw);
        if (!is_act_safe(n))
            throw SchemaError(std::string(what) + " '" + raw + "' is empty or contains one of ();=",
                              line);
        return n;
    }

    SlotValueMap slot_map(const json& j, std::size_t line, const std::string& owner) {
        SlotValueMap out;
        if (j.is_null()) return out;
        if (!j.is_object()) throw SchemaError("slot map must be an object", line);
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string slot = name(it.key(), "slot name", line);
            const json* v = &it.value();
            if (v->is_array()) {
                if (v->empty()) continue;
                if (v->size() > 1)
                    warnings_.push_back("line " + std::to_string(line) + ": " + owner + " slot '" +
                                        slot + "' has " + std::to_string(v->size()) +
                                        " values; keeping the first");
                v = &v->front();
            }
            if (v->is_null()) continue;
            if (!v->is_string()) throw SchemaError("value of slot '" + slot + "' is not a string", line);
            std::string value = text::normalize(v->get<std::string>());
            if (value.empty() || value == "none") continue;
            if (!is_act_safe(value))
                throw SchemaError("value '" + value + "' of slot '" + slot + "' contains one of ();=",
                                  line);
            if (out.contains(slot)) throw SchemaError("duplicate slot '" + slot + "'", line);
            out.set(slot, std::move(value));
        }
        return out;
    }

    void claim_id(const std::string& id, std::size_t line) {
        if (!ids_.insert(id).second)
            throw Error(ErrorCode::DuplicateId, "line " + std::to_string(line) + ": duplicate id '" + id + "'");
    }

    template <class Item>
    void push(Item item, Split split) {
        if (!std::holds_alternative<Corpus<Item>>(items_)) items_ = Corpus<Item>{};
        auto& c = std::get<Corpus<Item>>(items_);
        (split == Split::Train ? c.train : c.test).push_back(std::move(item));
    }

    void add(const Record& r) {
        switch (kind_) {
            case TaskKind::SlotFilling:
            case TaskKind::Intent: return add_nlu(r);
            case TaskKind::Dst: return add_dst(r);
            case TaskKind::Act: return add_act(r);
            case TaskKind::Nlg: return add_nlg(r);
        }
    }

    void add_nlu(const Record& r) {
        NluItem item;
        item.id = id_of(r.j, "id", r.line);
        claim_id(item.id, r.line);
        item.text = utterance_text(r.j, "text", r.line);
        item.intent = name(str(r.j, "intent", r.line), "intent", r.line);
        item.domain = r.j.contains("domain") ? name(str(r.j, "domain", r.line), "domain", r.line)
                                             : item.intent;
        item.slots = slot_map(r.j.value("slots", json::object()), r.line, "item " + item.id);
        if (kind_ == TaskKind::Intent) {
            label_set_.insert(item.intent);
        } else {
            for (const auto& [slot, value] : item.slots) {
                label_set_.insert(slot);
                if (r.split == Split::Train) domain_slots_[item.domain].insert(slot);
            }
        }
        push(std::move(item), r.split);
    }

    void add_dst(const Record& r) {
        DstDialogue d;
        d.dialogue.id = id_of(r.j, "dialogue_id", r.line);
        claim_id(d.dialogue.id, r.line);
        if (!r.j.contains("turns") || !r.j.at("turns").is_array())
            throw SchemaError("missing array field 'turns'", r.line);
        for (const json& turn : r.j.at("turns")) {
            const Speaker speaker = [&] {
                try {
                    return parse_speaker(str(turn, "speaker", r.line));
                } catch (const SchemaError&) {
                    throw;
                } catch (const Error& e) {
                    throw SchemaError(e.what(), r.line);
                }
            }();
            d.dialogue.turns.emplace_back(utterance_text(turn, "text", r.line), speaker);
            if (speaker == Speaker::User) {
                if (!turn.contains("state"))
                    throw SchemaError("user turn without 'state' in dialogue " + d.dialogue.id, r.line);
                d.user_states.push_back(slot_map(turn.at("state"), r.line, "dialogue " + d.dialogue.id));
                for (const auto& [slot, value] : d.user_states.back()) label_set_.insert(slot);
            }
        }
        try {
            validate_dialogue(d.dialogue);
        } catch (const Error& e) {
            throw SchemaError(e.what(), r.line);
        }
        for (std::size_t t = 1; t < d.user_states.size(); ++t)
            for (const auto& [slot, value] : d.user_states[t - 1])
                if (!d.user_states[t].contains(slot)) {
                    warnings_.push_back("line " + std::to_string(r.line) + ": dialogue " +
                                        d.dialogue.id + " drops slot '" + slot +
                                        "'; deletions are never predicted");
                    break;
                }
        push(std::move(d), r.split);
    }

    void add_act(const Record& r) {
        ActItem item;
        item.id = id_of(r.j, "id", r.line);
        claim_id(item.id, r.line);
        item.system_text = utterance_text(r.j, "system_text", r.line);
        if (!r.j.contains("acts") || !r.j.at("acts").is_array())
            throw SchemaError("missing array field 'acts'", r.line);
        std::set<std::string> acts;
        for (const json& a : r.j.at("acts")) {
            if (!a.is_string()) throw SchemaError("act labels must be strings", r.line);
            acts.insert(name(a.get<std::string>(), "act label", r.line));
        }
        item.acts.assign(acts.begin(), acts.end());
        label_set_.insert(acts.begin(), acts.end());
        push(std::move(item), r.split);
    }

    void add_nlg(const Record& r) {
        NlgItem item;
        item.id = id_of(r.j, "id", r.line);
        claim_id(item.id, r.line);
        DialogueAct parsed;
        try {
            parsed = parse_act(text::to_lower(text::trim(str(r.j, "act", r.line))));
        } catch (const ParseError& e) {
            throw SchemaError(std::string("act: ") + e.what(), r.line);
        }
        item.act.act = name(parsed.act, "act name", r.line);
        for (const auto& [slot, value] : parsed.slots) {
            std::string v = text::normalize(value);
            if (v.empty() || v == "none") continue;
            item.act.slots.set(name(slot, "slot name", r.line), std::move(v));
        }
        item.reference = utterance_text(r.j, "reference", r.line);
        item.domain = r.j.contains("domain") ? name(str(r.j, "domain", r.line), "domain", r.line)
                                             : std::string();
        label_set_.insert(item.act.act);
        push(std::move(item), r.split);
    }

    TaskKind kind_;
    decltype(TaskDataset::items) items_;
    std::set<std::string> label_set_;
    std::map<std::string, std::set<std::string>> domain_slots_;
    std::set<std::string> ids_;
    std::vector<std::string> warnings_;
};

}  // namespace

TaskDataset load_dataset(const std::filesystem::path& path, TaskKind kind) {
    Loader loader(kind);
    loader.read(path, std::nullopt);
    return loader.finish();
}

TaskDataset load_dataset(const std::filesystem::path& train, const std::filesystem::path& test,
                         TaskKind kind) {
    Loader loader(kind);
    loader.read(train, Split::Train);
    loader.read(test, Split::Test);
    return loader.finish();
}

// ---------------------------------------------------------------------------

namespace {

json slots_json(const SlotValueMap& m) {
    json j = json::object();
    for (const auto& [slot, value] : m) j[slot] = value;
    return j;
}

json record_json(const NluItem& it) {
    return {{"id", it.id}, {"text", it.text}, {"intent", it.intent},
            {"domain", it.domain}, {"slots", slots_json(it.slots)}};
}

json record_json(const DstDialogue& d) {
    json turns = json::array();
    std::size_t user = 0;
    for (const auto& t : d.dialogue.turns) {
        json turn = {{"speaker", std::string(to_string(t.speaker()))}, {"text", t.text()}};
        if (t.speaker() == Speaker::User) turn["state"] = slots_json(d.user_states.at(user++));
        turns.push_back(std::move(turn));
    }
    return {{"dialogue_id", d.dialogue.id}, {"turns", std::move(turns)}};
}

json record_json(const ActItem& it) {
    return {{"id", it.id}, {"system_text", it.system_text}, {"acts", it.acts}};
}

json record_json(const NlgItem& it) {
    json j = {{"id", it.id}, {"act", serialize_act(it.act)}, {"reference", it.reference}};
    if (!it.domain.empty()) j["domain"] = it.domain;
    return j;
}

}  // namespace

void write_dataset(const TaskDataset& dataset, std::ostream& out) {
    std::visit(
        [&](const auto& corpus) {
            for (const auto& item : corpus.train) {
                json j = record_json(item);
                j["split"] = "train";
                out << j.dump() << '\n';
            }
            for (const auto& item : corpus.test) {
                json j = record_json(item);
                j["split"] = "test";
                out << j.dump() << '\n';
            }
        },
        dataset.items);
}

// ---------------------------------------------------------------------------

const std::vector<Shot>& ShotPool::at(const std::string& key) const {
    auto it = pools.find(key);
    if (it == pools.end()) throw Error(ErrorCode::InsufficientData, "no shot pool for '" + key + "'");
    return it->second;
}

std::string slot_pool_key(std::string_view domain, std::string_view slot) {
    std::string k(domain);
    k += '/';
    k += slot;
    return k;
}

namespace {

struct Candidate {
    std::string input;
    std::string output;
    std::string source_id;
};

class PoolBuilder {
public:
    PoolBuilder(ShotPool& pool, std::size_t k, std::size_t ratio) : pool_(pool), k_(k), ratio_(ratio) {}

    void binary(const std::string& key, const std::vector<Candidate>& positives,
                const std::vector<Candidate>& negatives) {
        if (positives.empty())
            throw Error(ErrorCode::InsufficientData, "'" + key + "' has no positive training examples");
        if (negatives.empty())
            throw Error(ErrorCode::InsufficientData, "'" + key + "' has no negative training examples");
        Xoshiro256 rng(pool_.seed ^ text::fnv1a(key));
        const auto pos = sample_without_replacement(positives.size(), k_, rng);
        const auto neg = sample_without_replacement(negatives.size(), pos.size() * ratio_, rng);
        note_shortfall(key, "positive", k_, pos.size());
        note_shortfall(key, "negative", pos.size() * ratio_, neg.size());

        std::vector<Shot>& out = pool_.pools[key];
        std::size_t n = 0;
        for (std::size_t p = 0; p < pos.size(); ++p) {
            const Candidate& c = positives[pos[p]];
            out.push_back(Shot{c.input, c.output, Polarity::Positive, c.source_id});
            for (std::size_t r = 0; r < ratio_ && n < neg.size(); ++r, ++n) {
                const Candidate& d = negatives[neg[n]];
                out.push_back(Shot{d.input, d.output, Polarity::Negative, d.source_id});
            }
        }
    }

    void generative(const std::string& key, const std::vector<Candidate>& items) {
        if (items.empty())
            throw Error(ErrorCode::InsufficientData, "'" + key + "' has no training examples");
        Xoshiro256 rng(pool_.seed ^ text::fnv1a(key));
        const auto idx = sample_without_replacement(items.size(), k_, rng);
        note_shortfall(key, "training", k_, idx.size());
        std::vector<Shot>& out = pool_.pools[key];
        for (std::size_t i : idx)
            out.push_back(Shot{items[i].input, items[i].output, Polarity::Neutral, items[i].source_id});
    }

private:
    void note_shortfall(const std::string& key, const char* what, std::size_t wanted, std::size_t got) {
        if (got < wanted)
            pool_.warnings.push_back("'" + key + "': wanted " + std::to_string(wanted) + " " + what +
                                     " examples, only " + std::to_string(got) + " available");
    }

    ShotPool& pool_;
    std::size_t k_;
    std::size_t ratio_;
};

}  // namespace

ShotPool sample_shots(const TaskDataset& ds, std::size_t k, std::uint64_t seed,
                      std::size_t negatives_per_positive) {
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "shot count must be >= 1");
    if (negatives_per_positive < 1 && prefix_kind_for(ds.kind) != PrefixKind::Generative)
        throw Error(ErrorCode::InvalidArgument, "negatives_per_positive must be >= 1");

    ShotPool pool;
    pool.seed = seed;
    pool.k = std::min(k, task_shot_cap(ds.kind));
    PoolBuilder builder(pool, pool.k, negatives_per_positive);

    switch (ds.kind) {
        case TaskKind::Intent: {
            const auto& train = ds.corpus<NluItem>().train;
            for (const std::string& label : ds.labels) {
                std::vector<Candidate> pos, neg;
                for (const auto& it : train)
                    (it.intent == label ? pos : neg).push_back({it.text, "", it.id});
                builder.binary(label, pos, neg);
            }
            break;
        }
        case TaskKind::Act: {
            const auto& train = ds.corpus<ActItem>().train;
            for (const std::string& label : ds.labels) {
                std::vector<Candidate> pos, neg;
                for (const auto& it : train) {
                    const bool has = std::binary_search(it.acts.begin(), it.acts.end(), label);
                    (has ? pos : neg).push_back({it.system_text, "", it.id});
                }
                builder.binary(label, pos, neg);
            }
            break;
        }
        case TaskKind::SlotFilling: {
            const auto& train = ds.corpus<NluItem>().train;
            for (const auto& [domain, slots] : ds.domain_slots)
                for (const std::string& slot : slots) {
                    std::vector<Candidate> pos, neg, foreign;
                    for (const auto& it : train) {
                        auto v = it.slots.get(slot);
                        if (it.domain != domain) {
                            if (!v) foreign.push_back({it.text, "", it.id});
                        } else if (v) {
                            pos.push_back({it.text, *v, it.id});
                        } else {
                            neg.push_back({it.text, "", it.id});
                        }
                    }
                    // A slot filled in every in-domain item borrows its None
                    // examples from other domains.
                    const std::string key = slot_pool_key(domain, slot);
                    if (neg.empty() && !foreign.empty()) {
                        pool.warnings.push_back("'" + key + "': no in-domain None examples, using other domains");
                        neg = std::move(foreign);
                    }
                    builder.binary(key, pos, neg);
                }
            break;
        }
        case TaskKind::Dst: {
            // Candidates are user turns labelled with their turn-level update.
            std::vector<std::pair<Candidate, SlotValueMap>> turns;
            for (const auto& d : ds.corpus<DstDialogue>().train) {
                const auto users = d.user_turns();
                const auto updates = turn_updates(d.user_states);
                for (std::size_t t = 0; t < users.size(); ++t)
                    turns.push_back({{users[t].text(), "", d.id() + "#" + std::to_string(t)}, updates[t]});
            }
            for (const std::string& slot : ds.labels) {
                std::vector<Candidate> pos, neg;
                for (const auto& [cand, update] : turns) {
                    if (auto v = update.get(slot))
                        pos.push_back({cand.input, *v, cand.source_id});
                    else
                        neg.push_back(cand);
                }
                builder.binary(slot, pos, neg);
            }
            break;
        }
        case TaskKind::Nlg: {
            std::map<std::string, std::vector<Candidate>> by_domain;
            for (const auto& it : ds.corpus<NlgItem>().train)
                by_domain[it.domain].push_back({serialize_act(it.act), it.reference, it.id});
            for (const auto& [domain, items] : by_domain) builder.generative(domain, items);
            break;
        }
    }
    return pool;
}

}  // namespace todprime
