#pragma once

// Canonical JSONL corpora and seeded few-shot pools.
//
// One JSON object per line:
//   NLU  {"id", "text", "intent", "slots": {slot: value}, "domain"?}
//   DST  {"dialogue_id", "turns": [{"speaker", "text", "state"?: {slot: value}}]}
//        (state is the cumulative gold state and is required on user turns)
//   ACT  {"id", "system_text", "acts": [label, ...]}
//   NLG  {"id", "act": "inform(name=...;...)", "reference", "domain"?}
// Any record may carry "split": "train" | "test".
//
// Text is lower-cased on load; values spelled "none" (any case) or "" are
// treated as absent.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "todprime/core_model.hpp"
#include "todprime/prefix_engine.hpp"

namespace todprime {

struct NluItem {
    std::string id;
    std::string text;
    std::string intent;
    std::string domain;
    SlotValueMap slots;
};

struct DstDialogue {
    Dialogue dialogue;
    std::vector<SlotValueMap> user_states;  // cumulative gold state after each user turn

    const std::string& id() const noexcept { return dialogue.id; }
    std::vector<Utterance> user_turns() const;
};

/// Per-user-turn updates: entries of state t that are new or changed
/// relative to state t-1.
std::vector<SlotValueMap> turn_updates(const std::vector<SlotValueMap>& cumulative);

struct ActItem {
    std::string id;
    std::string system_text;
    std::vector<std::string> acts;  // sorted, unique
};

struct NlgItem {
    std::string id;
    DialogueAct act;
    std::string reference;
    std::string domain;
};

template <class Item>
struct Corpus {
    std::vector<Item> train;
    std::vector<Item> test;
};

struct TaskDataset {
    TaskKind kind;
    std::variant<Corpus<NluItem>, Corpus<DstDialogue>, Corpus<ActItem>, Corpus<NlgItem>> items;
    // Intents, act labels, tracked slots, or act names (NLG), sorted.
    LabelSet labels;
    // Slot filling: slots seen in each domain's training items. DST: the
    // single entry "" holds every tracked slot.
    std::map<std::string, std::vector<std::string>> domain_slots;
    std::vector<std::string> warnings;

    template <class Item>
    const Corpus<Item>& corpus() const {
        return std::get<Corpus<Item>>(items);
    }

    std::size_t test_size() const;
    std::size_t train_size() const;
};

/// Records go to the split named by their "split" field (default "train").
TaskDataset load_dataset(const std::filesystem::path& path, TaskKind kind);

/// Every record of the first file is training data, of the second test data.
TaskDataset load_dataset(const std::filesystem::path& train, const std::filesystem::path& test,
                         TaskKind kind);

/// Writes both splits as canonical JSONL with explicit "split" fields.
void write_dataset(const TaskDataset& dataset, std::ostream& out);

/// Shots drawn per class, act label, slot, or NLG domain.
struct ShotPool {
    std::uint64_t seed = 0;
    std::size_t k = 0;
    std::map<std::string, std::vector<Shot>> pools;
    std::vector<std::string> warnings;

    const std::vector<Shot>& at(const std::string& key) const;
};

/// Pool key for slot filling, where slot prefixes are per domain.
std::string slot_pool_key(std::string_view domain, std::string_view slot);

/// Seeded draw without replacement from the training split. k is capped at
/// the task's shot cap. Binary and value pools interleave each positive with
/// `negatives_per_positive` negatives. A slot-filling slot with no None
/// example in its own domain takes them from other domains. Throws
/// Error(InsufficientData) when a class or slot has no positive or no
/// negative candidates.
ShotPool sample_shots(const TaskDataset& dataset, std::size_t k, std::uint64_t seed,
                      std::size_t negatives_per_positive = 1);

}  // namespace todprime
