#include "todprime/task_runner.hpp"

#include <algorithm>
#include <optional>

#include "todprime/errors.hpp"
#include "todprime/text.hpp"

namespace todprime {

void ForwardStats::add_prompt(std::string_view prompt) {
    prompts_hash = text::fnv1a(prompt, prompts_hash);
    prompts_hash = text::fnv1a(std::string_view("\0", 1), prompts_hash);
}

void ForwardStats::merge(const ForwardStats& other) {
    requests += other.requests;
    failures += other.failures;
    unparseable += other.unparseable;
    prompts_hash = text::fnv1a(text::hex64(other.prompts_hash), prompts_hash);
    errors.insert(errors.end(), other.errors.begin(), other.errors.end());
    for (const auto& [code, n] : other.failure_codes) failure_codes[code] += n;
}

// ---------------------------------------------------------------------------

double true_token_logprob(const TokenLogprobs& logprobs, const PromptStyle& style) {
    const std::string want = text::to_lower(style.true_token);
    std::optional<double> exact, partial, floor;
    for (const auto& [token, lp] : logprobs) {
        floor = floor ? std::min(*floor, lp) : lp;
        const std::string t = text::to_lower(text::trim(token));
        if (t.empty()) continue;
        if (t == want)
            exact = exact ? std::max(*exact, lp) : lp;
        else if (want.rfind(t, 0) == 0)
            partial = partial ? std::max(*partial, lp) : lp;
    }
    if (exact) return *exact;
    if (partial) return *partial;
    return floor.value_or(-std::numeric_limits<double>::infinity());
}

BinaryVerdict parse_binary(const CompletionResponse& response, const PromptStyle& style) {
    BinaryVerdict v;
    const std::string_view t = text::trim(response.text);
    // Check the longer token first so neither can shadow the other.
    const bool true_first = style.true_token.size() >= style.false_token.size();
    const std::string& a = true_first ? style.true_token : style.false_token;
    const std::string& b = true_first ? style.false_token : style.true_token;
    if (text::starts_with_ci(t, a)) {
        v.parsed = true;
        v.value = true_first;
    } else if (text::starts_with_ci(t, b)) {
        v.parsed = true;
        v.value = !true_first;
    }
    if (response.first_token_logprobs && !response.first_token_logprobs->empty())
        v.score = true_token_logprob(*response.first_token_logprobs, style);
    else
        v.score = v.value ? 1.0 : -1.0;
    return v;
}

std::optional<std::string> parse_value(const CompletionResponse& response, const PromptStyle& style) {
    std::string v = text::normalize(response.text);
    if (v.empty() || text::equals_ci(v, style.none_token)) return std::nullopt;
    return v;
}

// ---------------------------------------------------------------------------

namespace {

struct Job {
    std::string key;
    std::optional<CompletionRequest> request;  // nullopt when the prompt could not be built
    ErrorCode build_error = ErrorCode::Ok;
    std::string build_message;
};

/// Sends every built request as one batch; outcomes align with `jobs`.
std::vector<CompletionOutcome> dispatch(const std::vector<Job>& jobs, const PrimingContext& ctx,
                                        ForwardStats& stats) {
    std::vector<CompletionRequest> requests;
    std::vector<std::size_t> where;
    for (std::size_t i = 0; i < jobs.size(); ++i)
        if (jobs[i].request) {
            stats.add_prompt(jobs[i].request->prompt);
            requests.push_back(*jobs[i].request);
            where.push_back(i);
        }
    stats.requests += requests.size();

    std::vector<CompletionOutcome> out(jobs.size());
    if (!requests.empty()) {
        auto results = ctx.backend.complete_batch(requests);
        if (results.size() != requests.size())
            throw Error(ErrorCode::Internal, "backend returned a misaligned batch");
        for (std::size_t j = 0; j < results.size(); ++j) out[where[j]] = std::move(results[j]);
    }
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (!jobs[i].request) {
            out[i].error = jobs[i].build_error;
            out[i].message = jobs[i].build_message;
        }
        if (!out[i].ok()) {
            ++stats.failures;
            ++stats.failure_codes[out[i].error];
            stats.errors.push_back(jobs[i].key + ": " + std::string(error_code_name(out[i].error)) +
                                   (out[i].message.empty() ? "" : " " + out[i].message));
        }
    }
    return out;
}

CompletionRequest to_request(const PrimedPrompt& p, const PrimingContext& ctx) {
    CompletionRequest r;
    r.prompt = p.text;
    r.max_new_tokens = p.max_new_tokens;
    r.stop_sequences = p.stop_sequences;
    r.temperature = ctx.temperature;
    r.want_logprobs = ctx.want_logprobs;
    return r;
}

template <class Build>
Job make_job(std::string key, Build&& build, const PrimingContext& ctx) {
    Job job;
    job.key = std::move(key);
    try {
        job.request = to_request(build(), ctx);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::BudgetExceeded && e.code() != ErrorCode::Precondition &&
            e.code() != ErrorCode::InsufficientData)
            throw;
        job.build_error = e.code();
        job.build_message = e.what();
    }
    return job;
}

const std::vector<Shot>& shots_for(const ShotsByKey& shots, const std::string& key) {
    auto it = shots.find(key);
    if (it == shots.end()) throw Error(ErrorCode::InsufficientData, "no shots for '" + key + "'");
    return it->second;
}

std::vector<BinaryVerdict> run_binary(const Utterance& query, const LabelSet& labels,
                                      const ShotsByKey& shots, const PrimingContext& ctx,
                                      ForwardStats& stats, std::vector<bool>& ok) {
    std::vector<Job> jobs;
    for (const std::string& label : labels)
        jobs.push_back(make_job(
            label,
            [&] {
                return build_binary_prefix(label, shots_for(shots, label), query, ctx.style, ctx.budget,
                                           ctx.counter, ctx.max_new_tokens);
            },
            ctx));
    auto outcomes = dispatch(jobs, ctx, stats);

    std::vector<BinaryVerdict> verdicts(jobs.size());
    ok.assign(jobs.size(), false);
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (!outcomes[i].ok()) continue;
        ok[i] = true;
        verdicts[i] = parse_binary(*outcomes[i].response, ctx.style);
        if (!verdicts[i].parsed) ++stats.unparseable;
    }
    return verdicts;
}

}  // namespace

IntentPrediction predict_intent(const Utterance& query, const LabelSet& labels,
                                const ShotsByKey& shots_per_class, const PrimingContext& ctx) {
    IntentPrediction out;
    std::vector<bool> ok;
    const auto verdicts = run_binary(query, labels, shots_per_class, ctx, out.stats, ok);
    std::optional<std::size_t> best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double s = ok[i] ? verdicts[i].score : -std::numeric_limits<double>::infinity();
        out.scores[labels.labels()[i]] = s;
        if (!best || s > best_score) {
            best = i;
            best_score = s;
        }
    }
    out.predicted = labels.labels()[*best];
    return out;
}

ActPrediction predict_acts(const Utterance& system_utterance, const LabelSet& labels,
                           const ShotsByKey& shots_per_label, const PrimingContext& ctx) {
    ActPrediction out;
    std::vector<bool> ok;
    const auto verdicts = run_binary(system_utterance, labels, shots_per_label, ctx, out.stats, ok);
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (ok[i] && verdicts[i].value) out.predicted.insert(labels.labels()[i]);
    return out;
}

SlotPrediction predict_slots(const Utterance& query, const std::vector<std::string>& slot_names,
                             const ShotsByKey& shots_per_slot, const PrimingContext& ctx) {
    SlotPrediction out;
    std::vector<Job> jobs;
    for (const std::string& slot : slot_names)
        jobs.push_back(make_job(
            slot,
            [&] {
                return build_value_prefix(slot, shots_for(shots_per_slot, slot), query, ctx.style,
                                          ctx.budget, ctx.counter, ctx.max_new_tokens);
            },
            ctx));
    auto outcomes = dispatch(jobs, ctx, out.stats);
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (!outcomes[i].ok()) continue;
        if (text::trim(outcomes[i].response->text).empty()) ++out.stats.unparseable;
        if (auto v = parse_value(*outcomes[i].response, ctx.style))
            out.slots.set(jobs[i].key, std::move(*v));
    }
    return out;
}

SlotPrediction predict_dst_turn(const SlotValueMap& previous_state, const Utterance& user_utterance,
                                const std::vector<std::string>& slot_names,
                                const ShotsByKey& shots_per_slot, const PrimingContext& ctx) {
    if (user_utterance.speaker() != Speaker::User)
        throw Error(ErrorCode::Precondition, "DST turns are predicted from user utterances only");
    SlotPrediction turn = predict_slots(user_utterance, slot_names, shots_per_slot, ctx);
    SlotPrediction out;
    out.slots = previous_state;
    out.slots.overwrite_with(turn.slots);
    out.stats = std::move(turn.stats);
    return out;
}

DstRun run_dst_dialogue(const Dialogue& dialogue, const std::vector<std::string>& slot_names,
                        const ShotsByKey& shots_per_slot, const PrimingContext& ctx) {
    DstRun run;
    SlotValueMap state;
    for (const Utterance& turn : dialogue.turns) {
        if (turn.speaker() != Speaker::User) continue;
        SlotPrediction next = predict_dst_turn(state, turn, slot_names, shots_per_slot, ctx);
        state = std::move(next.slots);
        run.stats.merge(next.stats);
        run.trace.states.push_back(state);
    }
    return run;
}

NlgPrediction generate_nlg(const DialogueAct& act, const std::vector<Shot>& shots,
                           const PrimingContext& ctx) {
    NlgPrediction out;
    const std::string query = serialize_act(act);
    std::vector<Job> jobs{make_job(
        query,
        [&] {
            return build_generative_prefix(shots, query, ctx.style, ctx.budget, ctx.counter,
                                           ctx.max_new_tokens);
        },
        ctx)};
    auto outcomes = dispatch(jobs, ctx, out.stats);
    if (outcomes[0].ok()) out.text = std::string(text::trim(outcomes[0].response->text));
    return out;
}

}  // namespace todprime
