#include "todprime/core_model.hpp"

#include <algorithm>

#include "todprime/errors.hpp"
#include "todprime/text.hpp"

namespace todprime {

std::string_view to_string(Speaker s) noexcept {
    return s == Speaker::User ? "user" : "system";
}

Speaker parse_speaker(std::string_view s) {
    if (text::equals_ci(s, "user")) return Speaker::User;
    if (text::equals_ci(s, "system")) return Speaker::System;
    throw Error(ErrorCode::InvalidArgument, "unknown speaker '" + std::string(s) + "'");
}

Utterance::Utterance(std::string text, Speaker speaker)
    : text_(std::move(text)), speaker_(speaker) {
    if (text::trim(text_).empty())
        throw Error(ErrorCode::InvalidArgument, "utterance text is empty");
    if (text::has_newline(text_))
        throw Error(ErrorCode::InvalidArgument, "utterance text contains a newline");
}

void validate_dialogue(const Dialogue& d) {
    if (d.turns.empty())
        throw Error(ErrorCode::Schema, "dialogue '" + d.id + "' has no turns");
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
        const Speaker expected = (i % 2 == 0) ? Speaker::User : Speaker::System;
        if (d.turns[i].speaker() != expected)
            throw Error(ErrorCode::Schema, "dialogue '" + d.id + "' turn " + std::to_string(i) +
                                               " should be spoken by " +
                                               std::string(to_string(expected)));
    }
}

// ---------------------------------------------------------------------------

SlotValueMap::SlotValueMap(std::initializer_list<Entry> entries) {
    for (const auto& [slot, value] : entries) set(slot, value);
}

void SlotValueMap::set(std::string slot, std::optional<std::string> value) {
    if (!value) {
        erase(slot);
        return;
    }
    if (value->empty())
        throw Error(ErrorCode::InvalidArgument, "slot '" + slot + "' has an empty value");
    auto it = std::find_if(entries_.begin(), entries_.end(),
                           [&](const Entry& e) { return e.first == slot; });
    if (it != entries_.end())
        it->second = std::move(*value);
    else
        entries_.emplace_back(std::move(slot), std::move(*value));
}

std::optional<std::string> SlotValueMap::get(std::string_view slot) const {
    for (const auto& [name, value] : entries_)
        if (name == slot) return value;
    return std::nullopt;
}

bool SlotValueMap::contains(std::string_view slot) const noexcept {
    return std::any_of(entries_.begin(), entries_.end(),
                       [&](const Entry& e) { return e.first == slot; });
}

void SlotValueMap::erase(std::string_view slot) {
    std::erase_if(entries_, [&](const Entry& e) { return e.first == slot; });
}

void SlotValueMap::overwrite_with(const SlotValueMap& update) {
    for (const auto& [slot, value] : update) set(slot, value);
}

SlotValueMap SlotValueMap::restricted_to(const std::vector<std::string>& slots) const {
    SlotValueMap out;
    for (const auto& [slot, value] : entries_)
        if (std::find(slots.begin(), slots.end(), slot) != slots.end()) out.set(slot, value);
    return out;
}

bool SlotValueMap::operator==(const SlotValueMap& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (const auto& [slot, value] : entries_) {
        auto v = other.get(slot);
        if (!v || *v != value) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------

bool is_act_safe(std::string_view s) noexcept {
    return !s.empty() && s.find_first_of("();=\r\n") == std::string_view::npos;
}

std::string serialize_act(const DialogueAct& act) {
    std::string out = act.act;
    out += '(';
    bool first = true;
    for (const auto& [slot, value] : act.slots) {
        if (!first) out += ';';
        first = false;
        out += slot;
        out += '=';
        out += value;
    }
    out += ')';
    return out;
}

namespace {

class ActParser {
public:
    explicit ActParser(std::string_view text) : s_(text) {}

    DialogueAct parse() {
        DialogueAct act;
        act.act = token("act name");
        expect('(');
        if (peek() == ')') {
            ++pos_;
        } else {
            for (;;) {
                std::string slot = token("slot name");
                if (act.slots.contains(slot)) fail("duplicate slot '" + slot + "'");
                expect('=');
                std::string value = token("slot value");
                act.slots.set(std::move(slot), std::move(value));
                if (at_end()) fail("expected ';' or ')'");
                const char c = s_[pos_++];
                if (c == ')') break;
                if (c != ';') {
                    --pos_;
                    fail("expected ';' or ')'");
                }
            }
        }
        if (!at_end()) fail("trailing characters after ')'");
        return act;
    }

private:
    bool at_end() const noexcept { return pos_ >= s_.size(); }
    char peek() const noexcept { return at_end() ? '\0' : s_[pos_]; }

    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError(what, pos_ + 1);
    }

    void expect(char c) {
        if (at_end() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }

    std::string token(const char* what) {
        const std::size_t start = pos_;
        while (!at_end() && std::string_view("();=\r\n").find(s_[pos_]) == std::string_view::npos)
            ++pos_;
        if (pos_ == start) fail(std::string("expected ") + what);
        return std::string(s_.substr(start, pos_ - start));
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

}  // namespace

DialogueAct parse_act(std::string_view text) { return ActParser(text).parse(); }

// ---------------------------------------------------------------------------

std::string_view to_string(TaskKind k) noexcept {
    switch (k) {
        case TaskKind::SlotFilling: return "slot_filling";
        case TaskKind::Intent: return "intent";
        case TaskKind::Dst: return "dst";
        case TaskKind::Act: return "act";
        case TaskKind::Nlg: return "nlg";
    }
    return "unknown";
}

TaskKind parse_task_kind(std::string_view s) {
    const std::string k = text::to_lower(s);
    if (k == "slot_filling" || k == "slot-filling" || k == "slots") return TaskKind::SlotFilling;
    if (k == "intent") return TaskKind::Intent;
    if (k == "dst") return TaskKind::Dst;
    if (k == "act") return TaskKind::Act;
    if (k == "nlg") return TaskKind::Nlg;
    throw Error(ErrorCode::InvalidArgument, "unknown task '" + std::string(s) + "'");
}

std::size_t task_shot_cap(TaskKind k) noexcept {
    switch (k) {
        case TaskKind::SlotFilling: return 15;
        case TaskKind::Intent: return 10;
        case TaskKind::Dst: return 15;
        case TaskKind::Act: return 15;
        case TaskKind::Nlg: return 20;
    }
    return 1;
}

LabelSet::LabelSet(std::vector<std::string> labels) : labels_(std::move(labels)) {
    if (labels_.empty()) throw Error(ErrorCode::InvalidArgument, "label set is empty");
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i].empty()) throw Error(ErrorCode::InvalidArgument, "label set has an empty label");
        for (std::size_t j = 0; j < i; ++j)
            if (labels_[i] == labels_[j])
                throw Error(ErrorCode::InvalidArgument, "duplicate label '" + labels_[i] + "'");
    }
}

bool LabelSet::contains(std::string_view label) const noexcept {
    return index_of(label).has_value();
}

std::optional<std::size_t> LabelSet::index_of(std::string_view label) const noexcept {
    for (std::size_t i = 0; i < labels_.size(); ++i)
        if (labels_[i] == label) return i;
    return std::nullopt;
}

const char* error_code_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::Ok: return "ok";
        case ErrorCode::InvalidArgument: return "invalid_argument";
        case ErrorCode::Parse: return "parse_error";
        case ErrorCode::Schema: return "schema_error";
        case ErrorCode::DuplicateId: return "duplicate_id";
        case ErrorCode::InsufficientData: return "insufficient_data";
        case ErrorCode::BudgetExceeded: return "budget_exceeded";
        case ErrorCode::Precondition: return "precondition_violation";
        case ErrorCode::BackendUnavailable: return "backend_unavailable";
        case ErrorCode::ContextOverflow: return "context_overflow";
        case ErrorCode::Protocol: return "protocol_error";
        case ErrorCode::UnknownPrompt: return "unknown_prompt";
        case ErrorCode::Config: return "config_error";
        case ErrorCode::Io: return "io_error";
        case ErrorCode::Internal: return "internal_error";
    }
    return "unknown";
}

}  // namespace todprime
