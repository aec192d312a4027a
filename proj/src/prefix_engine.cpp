#include "todprime/prefix_engine.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>

#include "todprime/errors.hpp"
#include "todprime/text.hpp"

namespace todprime {

void PromptStyle::validate() const {
    if (arrow.empty()) throw Error(ErrorCode::InvalidArgument, "prompt style: arrow is empty");
    if (example_separator.empty())
        throw Error(ErrorCode::InvalidArgument, "prompt style: example separator is empty");
    if (true_token.empty() || false_token.empty() || none_token.empty())
        throw Error(ErrorCode::InvalidArgument, "prompt style: answer tokens must be non-empty");
    if (text::equals_ci(true_token, false_token))
        throw Error(ErrorCode::InvalidArgument, "prompt style: true and false tokens coincide");
    for (const std::string* tok : {&arrow, &assignment, &true_token, &false_token, &none_token})
        if (tok->find(example_separator) != std::string::npos)
            throw Error(ErrorCode::InvalidArgument,
                        "prompt style: token '" + *tok + "' contains the example separator");
}

PrefixKind prefix_kind_for(TaskKind task) noexcept {
    switch (task) {
        case TaskKind::Intent:
        case TaskKind::Act: return PrefixKind::Binary;
        case TaskKind::SlotFilling:
        case TaskKind::Dst: return PrefixKind::Value;
        case TaskKind::Nlg: return PrefixKind::Generative;
    }
    return PrefixKind::Generative;
}

std::size_t default_max_new_tokens(PrefixKind kind) noexcept {
    switch (kind) {
        case PrefixKind::Binary: return 3;
        case PrefixKind::Value: return 20;
        case PrefixKind::Generative: return 64;
    }
    return 1;
}

std::size_t default_reserve(PrefixKind kind) noexcept {
    switch (kind) {
        case PrefixKind::Binary: return 4;
        case PrefixKind::Value: return 24;
        case PrefixKind::Generative: return 72;
    }
    return 1;
}

BudgetPolicy BudgetPolicy::for_task(TaskKind task) {
    const PrefixKind kind = prefix_kind_for(task);
    BudgetPolicy b;
    b.context_limit = 1024;
    b.reserve = default_reserve(kind);
    b.max_shots = task_shot_cap(task) * (kind == PrefixKind::Generative ? 1 : 2);
    return b;
}

void BudgetPolicy::validate(std::size_t max_new_tokens) const {
    if (max_shots < 1) throw Error(ErrorCode::InvalidArgument, "budget: max_shots must be >= 1");
    if (reserve < max_new_tokens)
        throw Error(ErrorCode::InvalidArgument,
                    "budget: reserve " + std::to_string(reserve) + " is below max_new_tokens " +
                        std::to_string(max_new_tokens));
    if (context_limit <= reserve)
        throw Error(ErrorCode::InvalidArgument, "budget: context_limit must exceed reserve");
}

// ---------------------------------------------------------------------------

WordCountEstimator::WordCountEstimator(double factor)
    : per_mille_(static_cast<std::size_t>(std::llround(factor * 1000.0))) {
    if (!(factor > 0.0)) throw Error(ErrorCode::InvalidArgument, "token factor must be positive");
}

std::size_t WordCountEstimator::count(std::string_view s) const {
    std::size_t words = 0;
    bool in_word = false;
    for (unsigned char c : s) {
        const bool space = std::isspace(c) != 0;
        if (!space && !in_word) ++words;
        in_word = !space;
    }
    // Integer ceil keeps 20 * 1.35 at exactly 27.
    return (words * per_mille_ + 999) / 1000;
}

CachedTokenCounter::CachedTokenCounter(std::shared_ptr<const TokenCounter> inner)
    : inner_(std::move(inner)) {}

std::size_t CachedTokenCounter::count(std::string_view s) const {
    if (s.empty()) return 0;
    {
        std::lock_guard lock(mu_);
        if (auto it = cache_.find(s); it != cache_.end()) return it->second;
    }
    const std::size_t n = inner_->count(s);
    std::lock_guard lock(mu_);
    cache_.emplace(std::string(s), n);
    return n;
}

// ---------------------------------------------------------------------------

namespace {

std::string lhs(std::string_view input, const PromptStyle& style) {
    std::string out(input);
    out += ' ';
    out += style.arrow;
    return out;
}

void check_line_text(std::string_view s, const PromptStyle& style, const char* what) {
    if (text::has_newline(s) || s.find(style.example_separator) != std::string_view::npos)
        throw Error(ErrorCode::Precondition,
                    std::string(what) + " contains a newline or the example separator");
}

void check_label(std::string_view label, const PromptStyle& style) {
    if (text::trim(label).empty()) throw Error(ErrorCode::Precondition, "label name is empty");
    check_line_text(label, style, "label name");
}

}  // namespace

std::string render_binary_line(const Shot& shot, std::string_view label, const PromptStyle& style) {
    std::string out = lhs(shot.input, style);
    out += ' ';
    out += label;
    out += style.assignment;
    out += shot.polarity == Polarity::Positive ? style.true_token : style.false_token;
    return out;
}

std::string render_value_line(const Shot& shot, std::string_view slot, const PromptStyle& style) {
    std::string out = lhs(shot.input, style);
    out += ' ';
    out += slot;
    out += style.assignment;
    out += shot.polarity == Polarity::Positive ? shot.output : style.none_token;
    return out;
}

std::string render_generative_line(const Shot& shot, const PromptStyle& style) {
    std::string out = lhs(shot.input, style);
    out += ' ';
    out += shot.output;
    return out;
}

std::string binary_stub(std::string_view query, std::string_view label, const PromptStyle& style) {
    std::string out = lhs(query, style);
    out += ' ';
    out += label;
    out += text::rtrim(style.assignment);
    return out;
}

std::string value_stub(std::string_view query, std::string_view slot, const PromptStyle& style) {
    return binary_stub(query, slot, style);
}

std::string generative_stub(std::string_view query, const PromptStyle& style) {
    return lhs(query, style);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> mandatory_indices(std::span<const Shot> shots, PackRule rule) {
    if (shots.empty()) throw Error(ErrorCode::Precondition, "no shots to pack");
    if (rule == PackRule::AnyShot) return {0};
    std::optional<std::size_t> pos, neg;
    for (std::size_t i = 0; i < shots.size(); ++i) {
        if (!pos && shots[i].polarity == Polarity::Positive) pos = i;
        if (!neg && shots[i].polarity == Polarity::Negative) neg = i;
    }
    if (!pos) throw Error(ErrorCode::Precondition, "shots contain no positive example");
    if (!neg) throw Error(ErrorCode::Precondition, "shots contain no negative example");
    return {std::min(*pos, *neg), std::max(*pos, *neg)};
}

}  // namespace

std::vector<Shot> pack_shots(std::span<const Shot> shots, std::size_t stub_tokens,
                             const BudgetPolicy& budget, const TokenCounter& counter,
                             const ShotRenderer& render, std::string_view separator,
                             PackRule rule) {
    const std::vector<std::size_t> mandatory = mandatory_indices(shots, rule);
    if (budget.max_shots < mandatory.size())
        throw Error(ErrorCode::BudgetExceeded, "max_shots " + std::to_string(budget.max_shots) +
                                                   " cannot hold the mandatory shots");

    auto cost = [&](const Shot& s) {
        std::string line = render(s);
        line += separator;
        return counter.count(line);
    };

    const std::size_t fixed = stub_tokens + budget.reserve;
    if (fixed > budget.context_limit)
        throw Error(ErrorCode::BudgetExceeded, "query stub alone exceeds the context limit");
    const std::size_t available = budget.context_limit - fixed;

    std::vector<bool> keep(shots.size(), false);
    std::size_t used = 0;
    for (std::size_t i : mandatory) {
        keep[i] = true;
        used += cost(shots[i]);
    }
    if (used > available)
        throw Error(ErrorCode::BudgetExceeded,
                    "mandatory shots need " + std::to_string(used + fixed) + " tokens, limit is " +
                        std::to_string(budget.context_limit));

    std::size_t kept = mandatory.size();
    for (std::size_t i = 0; i < shots.size() && kept < budget.max_shots; ++i) {
        if (keep[i]) continue;
        const std::size_t c = cost(shots[i]);
        if (used + c > available) break;
        keep[i] = true;
        used += c;
        ++kept;
    }

    std::vector<Shot> out;
    out.reserve(kept);
    for (std::size_t i = 0; i < shots.size(); ++i)
        if (keep[i]) out.push_back(shots[i]);
    return out;
}

// ---------------------------------------------------------------------------

namespace {

PrimedPrompt assemble(std::span<const Shot> shots, const std::string& stub, const PromptStyle& style,
                      const BudgetPolicy& budget, const TokenCounter& counter,
                      std::size_t max_new_tokens, const ShotRenderer& render, PackRule rule) {
    budget.validate(max_new_tokens);
    std::vector<Shot> packed = pack_shots(shots, counter.count(stub), budget, counter, render,
                                          style.example_separator, rule);

    // The packer costs shots line by line; the whole-text count is what the
    // model sees, so confirm it and shed trailing optional shots if a
    // non-additive counter disagrees.
    for (;;) {
        PrimedPrompt p;
        for (const Shot& s : packed) {
            p.text += render(s);
            p.text += style.example_separator;
        }
        p.text += stub;
        p.token_count = counter.count(p.text);
        p.max_new_tokens = max_new_tokens;
        p.stop_sequences = {style.example_separator};
        p.shot_count = packed.size();
        if (p.token_count + max_new_tokens <= budget.context_limit) return p;

        const std::vector<std::size_t> mandatory = mandatory_indices(packed, rule);
        std::optional<std::size_t> victim;
        for (std::size_t i = packed.size(); i-- > 0;)
            if (std::find(mandatory.begin(), mandatory.end(), i) == mandatory.end()) {
                victim = i;
                break;
            }
        if (!victim)
            throw Error(ErrorCode::BudgetExceeded,
                        "prompt needs " + std::to_string(p.token_count + max_new_tokens) +
                            " tokens, limit is " + std::to_string(budget.context_limit));
        packed.erase(packed.begin() + static_cast<std::ptrdiff_t>(*victim));
    }
}

void check_shots(std::span<const Shot> shots, const PromptStyle& style, bool check_output) {
    for (const Shot& s : shots) {
        if (text::trim(s.input).empty()) throw Error(ErrorCode::Precondition, "shot input is empty");
        check_line_text(s.input, style, "shot input");
        if (check_output) check_line_text(s.output, style, "shot output");
    }
}

}  // namespace

PrimedPrompt build_binary_prefix(std::string_view class_name, std::span<const Shot> shots,
                                 const Utterance& query, const PromptStyle& style,
                                 const BudgetPolicy& budget, const TokenCounter& counter,
                                 std::size_t max_new_tokens) {
    style.validate();
    check_label(class_name, style);
    check_shots(shots, style, false);
    check_line_text(query.text(), style, "query");
    if (max_new_tokens == 0) max_new_tokens = default_max_new_tokens(PrefixKind::Binary);
    const std::string label(class_name);
    return assemble(
        shots, binary_stub(query.text(), label, style), style, budget, counter, max_new_tokens,
        [&](const Shot& s) { return render_binary_line(s, label, style); },
        PackRule::PositiveAndNegative);
}

PrimedPrompt build_value_prefix(std::string_view slot, std::span<const Shot> shots,
                                const Utterance& query, const PromptStyle& style,
                                const BudgetPolicy& budget, const TokenCounter& counter,
                                std::size_t max_new_tokens) {
    style.validate();
    check_label(slot, style);
    check_shots(shots, style, true);
    for (const Shot& s : shots)
        if (s.polarity == Polarity::Positive && text::trim(s.output).empty())
            throw Error(ErrorCode::Precondition, "value shot for '" + std::string(slot) +
                                                     "' has an empty value");
    check_line_text(query.text(), style, "query");
    if (max_new_tokens == 0) max_new_tokens = default_max_new_tokens(PrefixKind::Value);
    const std::string name(slot);
    return assemble(
        shots, value_stub(query.text(), name, style), style, budget, counter, max_new_tokens,
        [&](const Shot& s) { return render_value_line(s, name, style); },
        PackRule::PositiveAndNegative);
}

PrimedPrompt build_generative_prefix(std::span<const Shot> shots, std::string_view query,
                                     const PromptStyle& style, const BudgetPolicy& budget,
                                     const TokenCounter& counter, std::size_t max_new_tokens) {
    style.validate();
    check_shots(shots, style, true);
    if (text::trim(query).empty()) throw Error(ErrorCode::Precondition, "query is empty");
    check_line_text(query, style, "query");
    if (max_new_tokens == 0) max_new_tokens = default_max_new_tokens(PrefixKind::Generative);
    return assemble(
        shots, generative_stub(query, style), style, budget, counter, max_new_tokens,
        [&](const Shot& s) { return render_generative_line(s, style); }, PackRule::AnyShot);
}

}  // namespace todprime
