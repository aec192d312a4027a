#pragma once

// Independent reference implementations used to cross-check the metrics.
// They share no code with src/ beyond the value types.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "todprime/metrics.hpp"

namespace tpt::oracle {

inline std::vector<std::string> words(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

/// Span F1 by brute force: every (item, start, end, label) tuple goes into a
/// corpus-wide set and the sets are intersected.
inline double conll_f1(const std::vector<std::vector<todprime::SpanLabel>>& gold,
                       const std::vector<std::vector<todprime::SpanLabel>>& pred) {
    using Key = std::tuple<std::size_t, std::size_t, std::size_t, std::string>;
    std::set<Key> g, p;
    for (std::size_t i = 0; i < gold.size(); ++i)
        for (const auto& s : gold[i]) g.insert({i, s.start, s.end, s.label});
    for (std::size_t i = 0; i < pred.size(); ++i)
        for (const auto& s : pred[i]) p.insert({i, s.start, s.end, s.label});
    std::size_t hit = 0;
    for (const auto& k : p) hit += g.count(k);
    if (hit == 0) return 0.0;
    const double prec = double(hit) / double(p.size());
    const double rec = double(hit) / double(g.size());
    return 100.0 * 2 * prec * rec / (prec + rec);
}

/// Corpus BLEU-4 following the sacrebleu recipe: clipped counts against the
/// per-gram max over references, closest reference length (shorter on
/// ties), floor smoothing, and the geometric mean stopping at the first
/// order with no hypothesis n-grams.
inline double corpus_bleu(const std::vector<std::string>& hyps,
                          const std::vector<std::vector<std::string>>& refs) {
    using Gram = std::vector<std::string>;
    auto grams = [](const std::vector<std::string>& t, std::size_t n) {
        std::map<Gram, int> m;
        for (std::size_t i = 0; i + n <= t.size(); ++i) ++m[Gram(t.begin() + long(i), t.begin() + long(i + n))];
        return m;
    };
    double correct[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
    double sys_len = 0, ref_len = 0;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
        const auto h = words(hyps[i]);
        sys_len += double(h.size());
        long best_diff = -1;
        std::size_t best_len = 0;
        for (const auto& r : refs[i]) {
            const std::size_t len = words(r).size();
            const long diff = std::labs(long(len) - long(h.size()));
            if (best_diff < 0 || diff < best_diff || (diff == best_diff && len < best_len)) {
                best_diff = diff;
                best_len = len;
            }
        }
        ref_len += double(best_len);
        for (std::size_t n = 1; n <= 4; ++n) {
            std::map<Gram, int> clip;
            for (const auto& r : refs[i])
                for (const auto& [g, c] : grams(words(r), n)) clip[g] = std::max(clip[g], c);
            for (const auto& [g, c] : grams(h, n)) {
                total[n - 1] += c;
                correct[n - 1] += std::min(c, clip.count(g) ? clip[g] : 0);
            }
        }
    }
    if (sys_len == 0) return 0.0;
    double log_p = 0;
    int order = 0;
    for (int n = 0; n < 4; ++n) {
        if (total[n] == 0) break;
        order = n + 1;
        log_p += std::log((correct[n] == 0 ? 1e-9 : correct[n]) / total[n]);
    }
    const double bp = sys_len < ref_len ? std::exp(1 - ref_len / sys_len) : 1.0;
    return 100.0 * bp * std::exp(log_p / order);
}

inline std::string norm(const std::string& s) {
    std::string out;
    for (const auto& w : words(s)) {
        if (!out.empty()) out += ' ';
        for (char c : w) out += char(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

struct DstCounts {
    double joint = 0;
    double slot = 0;
};

/// Enumerates every (dialogue, turn, slot) triple once.
inline DstCounts dst_accuracy(const std::vector<todprime::DstTrace>& gold,
                              const std::vector<todprime::DstTrace>& pred,
                              const std::vector<std::string>& slots) {
    std::size_t triples = 0, equal = 0, turns = 0, joint = 0;
    for (std::size_t d = 0; d < gold.size(); ++d)
        for (std::size_t t = 0; t < gold[d].states.size(); ++t) {
            std::size_t equal_here = 0;
            for (const auto& s : slots) {
                const auto g = gold[d].states[t].get(s);
                const auto p = pred[d].states[t].get(s);
                const std::string gv = g ? "=" + norm(*g) : "";
                const std::string pv = p ? "=" + norm(*p) : "";
                equal_here += gv == pv;
                ++triples;
            }
            equal += equal_here;
            joint += equal_here == slots.size();
            ++turns;
        }
    return {100.0 * double(joint) / double(turns), 100.0 * double(equal) / double(triples)};
}

}  // namespace tpt::oracle
