#pragma once

// Value types shared by every stage of the harness: utterances, slot maps,
// dialogue acts, shots and label sets.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace todprime {

enum class Speaker { User, System };

std::string_view to_string(Speaker s) noexcept;
Speaker parse_speaker(std::string_view s);

/// A single newline-free turn. Construction validates the text.
class Utterance {
public:
    Utterance(std::string text, Speaker speaker);

    const std::string& text() const noexcept { return text_; }
    Speaker speaker() const noexcept { return speaker_; }

    bool operator==(const Utterance&) const = default;

private:
    std::string text_;
    Speaker speaker_;
};

struct Dialogue {
    std::string id;
    std::vector<Utterance> turns;
};

/// Throws Error(Schema) unless turns alternate User, System, User, ...
void validate_dialogue(const Dialogue& d);

/// Slot name to value. Unmentioned slots are simply not stored, so a None
/// value and an absent key are the same thing. Iteration follows insertion
/// order; equality ignores it.
class SlotValueMap {
public:
    using Entry = std::pair<std::string, std::string>;

    SlotValueMap() = default;
    SlotValueMap(std::initializer_list<Entry> entries);

    // Setting std::nullopt removes the slot.
    void set(std::string slot, std::optional<std::string> value);
    std::optional<std::string> get(std::string_view slot) const;
    bool contains(std::string_view slot) const noexcept;
    void erase(std::string_view slot);

    // Every present value in `update` overwrites the value here.
    void overwrite_with(const SlotValueMap& update);

    SlotValueMap restricted_to(const std::vector<std::string>& slots) const;

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    auto begin() const noexcept { return entries_.begin(); }
    auto end() const noexcept { return entries_.end(); }
    const std::vector<Entry>& entries() const noexcept { return entries_; }

    bool operator==(const SlotValueMap& other) const;

private:
    std::vector<Entry> entries_;
};

struct DialogueAct {
    std::string act;
    SlotValueMap slots;

    bool operator==(const DialogueAct&) const = default;
};

/// `act(slot1=value1;slot2=value2)`, slots in stored order.
std::string serialize_act(const DialogueAct& act);

/// Inverse of serialize_act. Throws ParseError on malformed input.
DialogueAct parse_act(std::string_view text);

/// True when `s` can appear as an act name, slot name or value without
/// breaking the act grammar.
bool is_act_safe(std::string_view s) noexcept;

enum class Polarity { Positive, Negative, Neutral };

/// One worked example. Binary prefixes read only `input` and `polarity`;
/// value prefixes render `output` for Positive shots and the none token for
/// Negative ones; generative prefixes use `input` and `output`.
struct Shot {
    std::string input;
    std::string output;
    Polarity polarity = Polarity::Neutral;
    std::string source_id;

    bool operator==(const Shot&) const = default;
};

enum class TaskKind { SlotFilling, Intent, Dst, Act, Nlg };

std::string_view to_string(TaskKind k) noexcept;
TaskKind parse_task_kind(std::string_view s);

/// Largest shot count per task used in the original experiments.
std::size_t task_shot_cap(TaskKind k) noexcept;

class LabelSet {
public:
    explicit LabelSet(std::vector<std::string> labels);

    const std::vector<std::string>& labels() const noexcept { return labels_; }
    std::size_t size() const noexcept { return labels_.size(); }
    bool contains(std::string_view label) const noexcept;
    std::optional<std::size_t> index_of(std::string_view label) const noexcept;

    auto begin() const noexcept { return labels_.begin(); }
    auto end() const noexcept { return labels_.end(); }

    bool operator==(const LabelSet&) const = default;

private:
    std::vector<std::string> labels_;
};

}  // namespace todprime
