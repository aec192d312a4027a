#pragma once

// Evaluation measures. Scales follow the published result tables column by
// column: CoNLL F1, accuracy, joint/slot accuracy, BLEU and SLR are
// percentages; intent micro/macro F1 and ACT exact-match accuracy are
// fractions; ACT micro/macro F1 are percentages.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "todprime/core_model.hpp"
#include "todprime/task_runner.hpp"

namespace todprime {

struct SpanLabel {
    std::size_t start = 0;  // token index
    std::size_t end = 0;    // exclusive
    std::string label;

    auto operator<=>(const SpanLabel&) const = default;
};

struct SpanMatch {
    std::vector<SpanLabel> spans;
    std::vector<std::string> unmatched;  // slots whose value was not found
};

/// Whole-token match of each slot value in a whitespace-tokenized utterance.
/// Slots are placed in stored order; a value takes its first occurrence that
/// does not overlap an earlier span.
SpanMatch spans_from_slot_map(const Utterance& utterance, const SlotValueMap& slots);

struct ScoreReport {
    TaskKind task = TaskKind::Intent;
    std::map<std::string, double> metrics;
    std::size_t n_items = 0;
    std::map<std::string, std::string> metadata;

    // Filled in by experiment runs.
    std::string model;
    std::size_t shots = 0;
    std::optional<std::uint64_t> seed;
    std::size_t errors = 0;
    std::map<std::string, std::map<std::string, double>> domains;  // domain -> metric -> value

    double at(const std::string& name) const;
};

ScoreReport conll_f1(const std::vector<std::vector<SpanLabel>>& gold,
                     const std::vector<std::vector<SpanLabel>>& pred);

ScoreReport classification_report(const std::vector<std::string>& gold,
                                   const std::vector<std::string>& pred, const LabelSet& labels);

using LabelSetItem = std::set<std::string>;

ScoreReport multilabel_f1(const std::vector<LabelSetItem>& gold, const std::vector<LabelSetItem>& pred,
                          const LabelSet& labels);

/// Joint and slot accuracy over the tracked slots. Values compare after
/// whitespace normalization and lower-casing.
ScoreReport dst_accuracy(const std::vector<DstTrace>& gold, const std::vector<DstTrace>& pred,
                         const std::vector<std::string>& tracked_slots);

/// Corpus BLEU-4 on whitespace tokens, 0-100. Zero n-gram matches are
/// smoothed to 1e-9; orders with no hypothesis n-grams at all are left out
/// of the geometric mean.
double corpus_bleu(const std::vector<std::string>& hypotheses,
                   const std::vector<std::vector<std::string>>& references);

/// Missing-value slot error rate, 0-100. Per item: fraction of value-bearing
/// slots whose normalized value is not a substring of the normalized
/// hypothesis; averaged over items with at least one value.
double slot_error_rate(const std::vector<DialogueAct>& acts, const std::vector<std::string>& hypotheses);

}  // namespace todprime
