#pragma once

// Per-task prediction on top of the prefix builders and a Backend.
//
// Binary tasks (intent, act) issue one forward per label; value tasks
// (slot filling, DST) one forward per slot; NLG one forward. Forwards of a
// single prediction are dispatched together through Backend::complete_batch.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "todprime/core_model.hpp"
#include "todprime/errors.hpp"
#include "todprime/lm_backend.hpp"
#include "todprime/prefix_engine.hpp"

namespace todprime {

using ShotsByKey = std::map<std::string, std::vector<Shot>>;

struct PrimingContext {
    Backend& backend;
    const TokenCounter& counter;
    PromptStyle style;
    BudgetPolicy budget;
    bool want_logprobs = true;
    double temperature = 0.0;
    std::size_t max_new_tokens = 0;  // 0 = family default
};

/// Bookkeeping for one prediction: forwards issued, failed forwards
/// (backend or budget errors), unparseable continuations, and a hash over
/// every prompt in dispatch order.
struct ForwardStats {
    std::size_t requests = 0;
    std::size_t failures = 0;
    std::size_t unparseable = 0;
    std::uint64_t prompts_hash = 0xcbf29ce484222325ULL;
    std::vector<std::string> errors;
    std::map<ErrorCode, std::size_t> failure_codes;

    void add_prompt(std::string_view prompt);
    void merge(const ForwardStats& other);
};

struct BinaryVerdict {
    bool value = false;
    double score = -1.0;
    bool parsed = false;
};

/// Lower-cased prefix match of the trimmed continuation against the true /
/// false tokens. Score is the first-position logprob of the true token when
/// logprobs are present, otherwise +1 / -1.
BinaryVerdict parse_binary(const CompletionResponse& response, const PromptStyle& style);

/// Log-probability assigned to the true token at the first generated
/// position. When the token is missing from the top-k list, the smallest
/// listed logprob is used as an upper bound.
double true_token_logprob(const TokenLogprobs& logprobs, const PromptStyle& style);

/// Trimmed, whitespace-normalized value; the none token or an empty
/// continuation yields nullopt.
std::optional<std::string> parse_value(const CompletionResponse& response, const PromptStyle& style);

struct IntentPrediction {
    std::map<std::string, double> scores;
    std::string predicted;
    ForwardStats stats;
};

struct ActPrediction {
    std::set<std::string> predicted;
    ForwardStats stats;
};

struct SlotPrediction {
    SlotValueMap slots;
    ForwardStats stats;
};

struct DstTrace {
    std::vector<SlotValueMap> states;  // predicted state after each user turn
};

struct DstRun {
    DstTrace trace;
    ForwardStats stats;
};

struct NlgPrediction {
    std::string text;
    ForwardStats stats;
};

/// Argmax over per-label scores; a failed forward scores -infinity and ties
/// go to the earlier label.
IntentPrediction predict_intent(const Utterance& query, const LabelSet& labels,
                                const ShotsByKey& shots_per_class, const PrimingContext& ctx);

/// Multi-label: every label whose continuation parses as true.
ActPrediction predict_acts(const Utterance& system_utterance, const LabelSet& labels,
                           const ShotsByKey& shots_per_label, const PrimingContext& ctx);

SlotPrediction predict_slots(const Utterance& query, const std::vector<std::string>& slot_names,
                             const ShotsByKey& shots_per_slot, const PrimingContext& ctx);

/// previous_state overwritten by every slot predicted for this user turn.
SlotPrediction predict_dst_turn(const SlotValueMap& previous_state, const Utterance& user_utterance,
                                const std::vector<std::string>& slot_names,
                                const ShotsByKey& shots_per_slot, const PrimingContext& ctx);

/// Runs predict_dst_turn over the user turns of a dialogue in order.
DstRun run_dst_dialogue(const Dialogue& dialogue, const std::vector<std::string>& slot_names,
                        const ShotsByKey& shots_per_slot, const PrimingContext& ctx);

NlgPrediction generate_nlg(const DialogueAct& act, const std::vector<Shot>& shots,
                           const PrimingContext& ctx);

}  // namespace todprime
