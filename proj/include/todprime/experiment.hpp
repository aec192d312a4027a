#pragma once

// Few-shot sweeps: sample a pool per (shots, seed), predict every test item,
// score, aggregate over seeds and emit result tables.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "todprime/core_model.hpp"
#include "todprime/data.hpp"
#include "todprime/lm_backend.hpp"
#include "todprime/metrics.hpp"
#include "todprime/prefix_engine.hpp"

namespace todprime {

struct ExperimentConfig {
    TaskKind task = TaskKind::Intent;
    std::string model = "model";
    std::filesystem::path train;
    std::filesystem::path test;  // empty: train holds both splits
    std::string backend;         // "scripted:PATH" or "http://host:port"
    std::vector<std::size_t> shots{1};
    std::vector<std::uint64_t> seeds{0};
    std::size_t negatives_per_positive = 1;
    PromptStyle style;
    BudgetPolicy budget;
    std::size_t max_new_tokens = 0;  // 0 = task default
    std::string token_counter = "auto";  // auto | estimate | backend
    double token_factor = 1.35;
    bool want_logprobs = true;
    std::size_t max_concurrency = 8;
    std::size_t workers = 4;
    std::vector<int> retry_backoff_ms{500, 1000, 2000};
    std::filesystem::path out = "results";

    void validate() const;
    std::string to_json() const;
};

/// Parses a JSON config. Relative paths resolve against base_dir. Overrides
/// are (kebab-case key, value) pairs applied after parsing; nested fields
/// are addressed as "style-arrow", "budget-context-limit" and so on.
/// Throws Error(Config).
ExperimentConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = {},
                              const std::vector<std::pair<std::string, std::string>>& overrides = {});

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::pair<std::string, std::string>>& overrides = {});

struct RunResult {
    std::size_t shots = 0;
    std::uint64_t seed = 0;
    ScoreReport report;
    std::vector<std::string> predictions;  // JSONL lines in test order
    std::vector<std::string> warnings;
};

struct ExperimentResult {
    std::vector<RunResult> runs;
    std::vector<ScoreReport> aggregate;  // one per shot count, mean over seeds
};

/// Probes the backend before any work; an unreachable backend throws
/// Error(BackendUnavailable). When `backend` is null it is opened from the
/// config.
ExperimentResult run_experiment(const ExperimentConfig& config, std::shared_ptr<Backend> backend = nullptr);

/// Writes predictions/, reports/, aggregate.json, table.md, table_<name>.csv
/// and curve.csv under `dir`.
void write_outputs(const ExperimentResult& result, const std::filesystem::path& dir);

std::string report_to_json(const ScoreReport& report);

enum class TableFormat { Markdown, Csv };

/// Rows: Model, Shots, metric columns, Avg for per-domain layouts. NLG emits
/// a BLEU table and an SLR table. Throws Error(InvalidArgument) on empty
/// input or reports from another task.
std::string emit_table(const std::vector<ScoreReport>& reports, TaskKind layout,
                       TableFormat format = TableFormat::Markdown);

/// Named tables ("slot_f1", "intent", "act", "dst", "nlg_bleu", "nlg_slr").
std::vector<std::pair<std::string, std::string>> emit_tables(const std::vector<ScoreReport>& reports,
                                                             TaskKind layout, TableFormat format);

/// Metrics-only mode. Gold is canonical JSONL; its test split is scored when
/// present, otherwise every record. Predictions are JSONL lines
/// {"id", "predicted"} in the shape written by runs.
ScoreReport score_files(TaskKind task, const std::filesystem::path& gold, const std::filesystem::path& pred);

// Per-task scoring shared by runs and score_files.
ScoreReport score_slot_filling(const std::vector<NluItem>& gold, const std::vector<SlotValueMap>& pred);
ScoreReport score_intent(const std::vector<NluItem>& gold, const std::vector<std::string>& pred,
                         const LabelSet& labels);
ScoreReport score_acts(const std::vector<ActItem>& gold, const std::vector<std::set<std::string>>& pred,
                       const LabelSet& labels);
ScoreReport score_dst(const std::vector<DstDialogue>& gold, const std::vector<DstTrace>& pred,
                      const std::vector<std::string>& tracked_slots);
ScoreReport score_nlg(const std::vector<NlgItem>& gold, const std::vector<std::string>& pred);

/// Source formats: "snips" (snips-nlu-benchmark JSON), "multiwoz" (data.json;
/// task dst or act), "fewshotwoz" (JSON list of {"da", "utterance"} or lines
/// "act & utterance"). Returns the number of records written.
std::size_t convert_corpus(std::string_view from, const std::filesystem::path& in,
                           const std::filesystem::path& out, TaskKind task);

}  // namespace todprime
