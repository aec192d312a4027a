#include "todprime/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <unordered_map>

#include "todprime/errors.hpp"
#include "todprime/text.hpp"

namespace todprime {

double ScoreReport::at(const std::string& name) const {
    auto it = metrics.find(name);
    if (it == metrics.end()) throw Error(ErrorCode::InvalidArgument, "report has no metric '" + name + "'");
    return it->second;
}

namespace {

double ratio(double num, double den) { return den > 0 ? num / den : 0.0; }

double f1_from_counts(double tp, double fp, double fn) { return ratio(2 * tp, 2 * tp + fp + fn); }

void require_aligned(std::size_t a, std::size_t b, const char* what) {
    if (a != b)
        throw Error(ErrorCode::InvalidArgument, std::string(what) + ": gold has " + std::to_string(a) +
                                                    " items, predictions " + std::to_string(b));
}

}  // namespace

// ---------------------------------------------------------------------------

SpanMatch spans_from_slot_map(const Utterance& utterance, const SlotValueMap& slots) {
    SpanMatch out;
    const auto tokens = text::split_whitespace(text::to_lower(utterance.text()));
    std::vector<bool> taken(tokens.size(), false);
    for (const auto& [slot, value] : slots) {
        const auto needle = text::split_whitespace(text::to_lower(value));
        bool found = false;
        if (!needle.empty() && needle.size() <= tokens.size()) {
            for (std::size_t s = 0; s + needle.size() <= tokens.size() && !found; ++s) {
                bool match = true;
                for (std::size_t k = 0; k < needle.size() && match; ++k)
                    match = !taken[s + k] && tokens[s + k] == needle[k];
                if (!match) continue;
                for (std::size_t k = 0; k < needle.size(); ++k) taken[s + k] = true;
                out.spans.push_back(SpanLabel{s, s + needle.size(), slot});
                found = true;
            }
        }
        if (!found) out.unmatched.push_back(slot);
    }
    std::sort(out.spans.begin(), out.spans.end());
    return out;
}

ScoreReport conll_f1(const std::vector<std::vector<SpanLabel>>& gold,
                     const std::vector<std::vector<SpanLabel>>& pred) {
    require_aligned(gold.size(), pred.size(), "conll_f1");
    std::size_t n_gold = 0, n_pred = 0, correct = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        std::vector<SpanLabel> g = gold[i], p = pred[i];
        std::sort(g.begin(), g.end());
        g.erase(std::unique(g.begin(), g.end()), g.end());
        std::sort(p.begin(), p.end());
        p.erase(std::unique(p.begin(), p.end()), p.end());
        std::vector<SpanLabel> both;
        std::set_intersection(g.begin(), g.end(), p.begin(), p.end(), std::back_inserter(both));
        n_gold += g.size();
        n_pred += p.size();
        correct += both.size();
    }
    const double precision = ratio(correct, n_pred);
    const double recall = ratio(correct, n_gold);
    ScoreReport r;
    r.task = TaskKind::SlotFilling;
    r.n_items = gold.size();
    r.metrics["precision"] = 100.0 * precision;
    r.metrics["recall"] = 100.0 * recall;
    r.metrics["f1"] = 100.0 * ratio(2 * precision * recall, precision + recall);
    r.metadata["gold_spans"] = std::to_string(n_gold);
    r.metadata["predicted_spans"] = std::to_string(n_pred);
    r.metadata["correct_spans"] = std::to_string(correct);
    return r;
}

ScoreReport classification_report(const std::vector<std::string>& gold,
                                   const std::vector<std::string>& pred, const LabelSet& labels) {
    require_aligned(gold.size(), pred.size(), "classification_report");
    if (gold.empty()) throw Error(ErrorCode::InvalidArgument, "classification_report: no items");
    const std::size_t n = labels.size();
    std::vector<double> tp(n, 0), fp(n, 0), fn(n, 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] == pred[i]) ++correct;
        const auto g = labels.index_of(gold[i]);
        const auto p = labels.index_of(pred[i]);
        if (g && p && *g == *p) {
            tp[*g] += 1;
            continue;
        }
        if (g) fn[*g] += 1;
        if (p) fp[*p] += 1;
    }
    double sum_tp = 0, sum_fp = 0, sum_fn = 0, macro = 0;
    for (std::size_t c = 0; c < n; ++c) {
        sum_tp += tp[c];
        sum_fp += fp[c];
        sum_fn += fn[c];
        macro += f1_from_counts(tp[c], fp[c], fn[c]);
    }
    ScoreReport r;
    r.task = TaskKind::Intent;
    r.n_items = gold.size();
    r.metrics["accuracy"] = 100.0 * static_cast<double>(correct) / static_cast<double>(gold.size());
    r.metrics["micro_f1"] = f1_from_counts(sum_tp, sum_fp, sum_fn);
    r.metrics["macro_f1"] = macro / static_cast<double>(n);
    return r;
}

ScoreReport multilabel_f1(const std::vector<LabelSetItem>& gold, const std::vector<LabelSetItem>& pred,
                          const LabelSet& labels) {
    require_aligned(gold.size(), pred.size(), "multilabel_f1");
    if (gold.empty()) throw Error(ErrorCode::InvalidArgument, "multilabel_f1: no items");
    const std::size_t n = labels.size();
    std::vector<double> tp(n, 0), fp(n, 0), fn(n, 0);
    std::size_t exact = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] == pred[i]) ++exact;
        for (std::size_t c = 0; c < n; ++c) {
            const std::string& label = labels.labels()[c];
            const bool g = gold[i].count(label) > 0;
            const bool p = pred[i].count(label) > 0;
            if (g && p) tp[c] += 1;
            else if (p) fp[c] += 1;
            else if (g) fn[c] += 1;
        }
    }
    double sum_tp = 0, sum_fp = 0, sum_fn = 0, macro = 0;
    for (std::size_t c = 0; c < n; ++c) {
        sum_tp += tp[c];
        sum_fp += fp[c];
        sum_fn += fn[c];
        macro += f1_from_counts(tp[c], fp[c], fn[c]);
    }
    ScoreReport r;
    r.task = TaskKind::Act;
    r.n_items = gold.size();
    r.metrics["micro_precision"] = 100.0 * ratio(sum_tp, sum_tp + sum_fp);
    r.metrics["micro_recall"] = 100.0 * ratio(sum_tp, sum_tp + sum_fn);
    r.metrics["micro_f1"] = 100.0 * f1_from_counts(sum_tp, sum_fp, sum_fn);
    r.metrics["macro_f1"] = 100.0 * macro / static_cast<double>(n);
    r.metrics["accuracy"] = static_cast<double>(exact) / static_cast<double>(gold.size());
    return r;
}

ScoreReport dst_accuracy(const std::vector<DstTrace>& gold, const std::vector<DstTrace>& pred,
                         const std::vector<std::string>& tracked_slots) {
    require_aligned(gold.size(), pred.size(), "dst_accuracy");
    if (tracked_slots.empty()) throw Error(ErrorCode::InvalidArgument, "dst_accuracy: no tracked slots");
    std::size_t turns = 0, joint = 0, pairs = 0, slot_hits = 0;
    for (std::size_t d = 0; d < gold.size(); ++d) {
        const auto& g = gold[d].states;
        const auto& p = pred[d].states;
        if (g.size() != p.size())
            throw Error(ErrorCode::InvalidArgument, "dst_accuracy: dialogue " + std::to_string(d) +
                                                        " has " + std::to_string(g.size()) +
                                                        " gold turns but " + std::to_string(p.size()) +
                                                        " predicted");
        for (std::size_t t = 0; t < g.size(); ++t) {
            bool all = true;
            for (const std::string& slot : tracked_slots) {
                auto gv = g[t].get(slot);
                auto pv = p[t].get(slot);
                const bool same = gv.has_value() == pv.has_value() &&
                                  (!gv || text::normalize(*gv) == text::normalize(*pv));
                slot_hits += same;
                all = all && same;
                ++pairs;
            }
            joint += all;
            ++turns;
        }
    }
    if (turns == 0) throw Error(ErrorCode::InvalidArgument, "dst_accuracy: no turns");
    ScoreReport r;
    r.task = TaskKind::Dst;
    r.n_items = gold.size();
    r.metrics["joint_accuracy"] = 100.0 * static_cast<double>(joint) / static_cast<double>(turns);
    r.metrics["slot_accuracy"] = 100.0 * static_cast<double>(slot_hits) / static_cast<double>(pairs);
    r.metadata["turns"] = std::to_string(turns);
    r.metadata["tracked_slots"] = std::to_string(tracked_slots.size());
    return r;
}

// ---------------------------------------------------------------------------

namespace {

using NgramCounts = std::unordered_map<std::string, std::size_t>;

NgramCounts ngrams(const std::vector<std::string>& toks, std::size_t n) {
    NgramCounts out;
    if (toks.size() < n) return out;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
        std::string key;
        for (std::size_t k = 0; k < n; ++k) {
            if (k) key += '\x1f';
            key += toks[i + k];
        }
        ++out[key];
    }
    return out;
}

}  // namespace

double corpus_bleu(const std::vector<std::string>& hypotheses,
                   const std::vector<std::vector<std::string>>& references) {
    constexpr std::size_t kMaxOrder = 4;
    constexpr double kEpsilon = 1e-9;
    require_aligned(references.size(), hypotheses.size(), "corpus_bleu");
    if (hypotheses.empty()) throw Error(ErrorCode::InvalidArgument, "corpus_bleu: empty corpus");

    std::array<double, kMaxOrder> matches{}, totals{};
    double hyp_len = 0, ref_len = 0;
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        if (references[i].empty())
            throw Error(ErrorCode::InvalidArgument, "corpus_bleu: item " + std::to_string(i) + " has no reference");
        const auto hyp = text::split_whitespace(hypotheses[i]);
        std::vector<std::vector<std::string>> refs;
        for (const auto& r : references[i]) refs.push_back(text::split_whitespace(r));

        hyp_len += static_cast<double>(hyp.size());
        // Closest reference length; ties go to the shorter reference.
        std::size_t best = refs.front().size();
        for (const auto& r : refs) {
            const auto d = [&](std::size_t len) {
                return len > hyp.size() ? len - hyp.size() : hyp.size() - len;
            };
            if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
        }
        ref_len += static_cast<double>(best);

        for (std::size_t n = 1; n <= kMaxOrder; ++n) {
            const NgramCounts h = ngrams(hyp, n);
            NgramCounts max_ref;
            for (const auto& r : refs)
                for (const auto& [g, c] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], c);
            for (const auto& [g, c] : h) {
                totals[n - 1] += static_cast<double>(c);
                auto it = max_ref.find(g);
                if (it != max_ref.end()) matches[n - 1] += static_cast<double>(std::min(c, it->second));
            }
        }
    }
    if (hyp_len == 0) return 0.0;

    double log_sum = 0;
    std::size_t orders = 0;
    for (std::size_t n = 0; n < kMaxOrder; ++n) {
        if (totals[n] == 0) continue;
        const double m = matches[n] > 0 ? matches[n] : kEpsilon;
        log_sum += std::log(m / totals[n]);
        ++orders;
    }
    const double brevity = hyp_len < ref_len ? std::exp(1.0 - ref_len / hyp_len) : 1.0;
    return 100.0 * brevity * std::exp(log_sum / static_cast<double>(orders));
}

double slot_error_rate(const std::vector<DialogueAct>& acts, const std::vector<std::string>& hypotheses) {
    require_aligned(acts.size(), hypotheses.size(), "slot_error_rate");
    double sum = 0;
    std::size_t scored = 0;
    for (std::size_t i = 0; i < acts.size(); ++i) {
        const std::size_t n = acts[i].slots.size();
        if (n == 0) continue;
        const std::string hyp = text::normalize(hypotheses[i]);
        std::size_t missing = 0;
        for (const auto& [slot, value] : acts[i].slots)
            if (hyp.find(text::normalize(value)) == std::string::npos) ++missing;
        sum += static_cast<double>(missing) / static_cast<double>(n);
        ++scored;
    }
    if (scored == 0) throw Error(ErrorCode::InvalidArgument, "slot_error_rate: no act carries a slot value");
    return 100.0 * sum / static_cast<double>(scored);
}

}  // namespace todprime
