#pragma once

// Prompt construction for the three priming families:
//
//   binary      x_1 -> label = true   x*_1 -> label = false ... x -> label =
//   value       x_1 -> slot = v_1     x*_1 -> slot = None   ... x -> slot =
//   generative  x_1 -> y_1 ... x_k -> y_k                   ... x ->
//
// Every builder packs shots under a token budget and returns a prompt whose
// text ends with the unanswered stub.

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "todprime/core_model.hpp"

namespace todprime {

struct PromptStyle {
    std::string arrow = "->";
    std::string example_separator = "\n";
    std::string assignment = " = ";
    std::string true_token = "true";
    std::string false_token = "false";
    std::string none_token = "None";

    void validate() const;
};

struct PrimedPrompt {
    std::string text;
    std::vector<std::string> stop_sequences;
    std::size_t max_new_tokens = 1;
    std::size_t token_count = 0;
    std::size_t shot_count = 0;
};

enum class PrefixKind { Binary, Value, Generative };

PrefixKind prefix_kind_for(TaskKind task) noexcept;
std::size_t default_max_new_tokens(PrefixKind kind) noexcept;
std::size_t default_reserve(PrefixKind kind) noexcept;

struct BudgetPolicy {
    std::size_t context_limit = 1024;
    std::size_t reserve = 24;
    std::size_t max_shots = 15;

    /// Defaults for a task. `max_shots` counts prompt lines, so binary and
    /// value tasks get room for one negative per positive.
    static BudgetPolicy for_task(TaskKind task);

    void validate(std::size_t max_new_tokens) const;
};

/// Token counting capability. Implementations must return 0 for the empty
/// string and never count a concatenation lower than either part.
class TokenCounter {
public:
    virtual ~TokenCounter() = default;
    virtual std::size_t count(std::string_view text) const = 0;
};

/// ceil(words * factor). The default factor 1.35 over-estimates BPE counts
/// for ordinary English text; factor 1.0 is an exact whitespace word count.
class WordCountEstimator final : public TokenCounter {
public:
    explicit WordCountEstimator(double factor = 1.35);
    std::size_t count(std::string_view text) const override;

private:
    std::size_t per_mille_;
};

/// Thread-safe memoizing wrapper, used in front of remote counters.
class CachedTokenCounter final : public TokenCounter {
public:
    explicit CachedTokenCounter(std::shared_ptr<const TokenCounter> inner);
    std::size_t count(std::string_view text) const override;

private:
    std::shared_ptr<const TokenCounter> inner_;
    mutable std::mutex mu_;
    mutable std::map<std::string, std::size_t, std::less<>> cache_;
};

// Line renderers. Exposed so callers (and the packer) can cost shots.
std::string render_binary_line(const Shot& shot, std::string_view label, const PromptStyle& style);
std::string render_value_line(const Shot& shot, std::string_view slot, const PromptStyle& style);
std::string render_generative_line(const Shot& shot, const PromptStyle& style);

std::string binary_stub(std::string_view query, std::string_view label, const PromptStyle& style);
std::string value_stub(std::string_view query, std::string_view slot, const PromptStyle& style);
std::string generative_stub(std::string_view query, const PromptStyle& style);

using ShotRenderer = std::function<std::string(const Shot&)>;

enum class PackRule {
    AnyShot,             // at least one shot
    PositiveAndNegative  // at least one Positive and one Negative shot
};

/// Selects the shots to place in a prompt. Shots are in priority order.
/// The mandatory shots (the first shot, or the first Positive and first
/// Negative) are always kept; the remaining shots are then taken in order
/// until `max_shots` is reached or the next one would overflow
///   sum(shot costs) + stub_tokens + reserve <= context_limit
/// where a shot's cost is the count of its rendered line plus separator.
/// Output preserves input order. Throws BudgetExceeded when the mandatory
/// shots alone do not fit, Precondition when they do not exist.
std::vector<Shot> pack_shots(std::span<const Shot> shots, std::size_t stub_tokens,
                             const BudgetPolicy& budget, const TokenCounter& counter,
                             const ShotRenderer& render, std::string_view separator,
                             PackRule rule);

// `max_new_tokens` of 0 selects the family default (binary 3, value 20,
// generative 64).
PrimedPrompt build_binary_prefix(std::string_view class_name, std::span<const Shot> shots,
                                 const Utterance& query, const PromptStyle& style,
                                 const BudgetPolicy& budget, const TokenCounter& counter,
                                 std::size_t max_new_tokens = 0);

PrimedPrompt build_value_prefix(std::string_view slot, std::span<const Shot> shots,
                                const Utterance& query, const PromptStyle& style,
                                const BudgetPolicy& budget, const TokenCounter& counter,
                                std::size_t max_new_tokens = 0);

PrimedPrompt build_generative_prefix(std::span<const Shot> shots, std::string_view query,
                                     const PromptStyle& style, const BudgetPolicy& budget,
                                     const TokenCounter& counter,
                                     std::size_t max_new_tokens = 0);

}  // namespace todprime
