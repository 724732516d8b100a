#pragma once

#include "dtb/config.hpp"
#include "dtb/evaluation.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dtb {

/// Pipeline stages in dependency order. Each consumes the previous stage's
/// on-disk artifacts, so they can run in separate process invocations.
enum class Stage { Synth, Features, Train, Transcribe, Nmf, Analyze };

std::string to_string(Stage stage);
Stage stage_from_string(const std::string& s);
const std::vector<Stage>& all_stages();

/// Canonical artifact locations under a config's out_dir.
struct ExperimentPaths {
    std::filesystem::path root;

    explicit ExperimentPaths(std::filesystem::path out_dir) : root(std::move(out_dir)) {}

    std::filesystem::path config_echo() const { return root / "config.txt"; }
    std::filesystem::path run_log() const { return root / "runs.jsonl"; }
    std::filesystem::path dataset_dir() const { return root / "dataset"; }
    std::filesystem::path manifest() const { return dataset_dir() / "manifest.json"; }
    std::filesystem::path features_dir(const std::string& split) const {
        return root / "features" / split;
    }
    std::filesystem::path feature_cache(const std::string& split, const std::string& id) const {
        return features_dir(split) / (id + ".feat");
    }
    std::filesystem::path checkpoint() const { return root / "model" / "checkpoint.dtnn"; }
    std::filesystem::path history_csv() const { return root / "model" / "history.csv"; }
    std::filesystem::path pred_dir() const { return root / "predictions"; }
    std::filesystem::path pred_roll(const std::string& id) const {
        return pred_dir() / (id + ".csv");
    }
    std::filesystem::path pred_summary() const { return pred_dir() / "summary.json"; }
    std::filesystem::path nmf_dir() const { return root / "nmf"; }
    std::filesystem::path nmf_dictionary() const { return nmf_dir() / "dictionary.dnmf"; }
    std::filesystem::path nmf_pred_dir() const { return nmf_dir() / "predictions"; }
    std::filesystem::path nmf_pred_roll(const std::string& id) const {
        return nmf_pred_dir() / (id + ".csv");
    }
    std::filesystem::path nmf_summary() const { return nmf_dir() / "summary.json"; }
    std::filesystem::path nmf_stats_csv() const { return nmf_dir() / "combination_stats.csv"; }
    std::filesystem::path analysis_dir() const { return root / "analysis"; }
    std::filesystem::path stats_csv() const {
        return analysis_dir() / "combination_stats_test.csv";
    }
    std::filesystem::path analysis_summary() const { return analysis_dir() / "summary.json"; }
};

struct StageResult {
    Stage stage = Stage::Synth;
    bool skipped = false; // outputs were up to date and --force was not given
    double seconds = 0.0;
    std::vector<std::filesystem::path> artifacts;
};

/// One run_experiment invocation. Bulk per-item files (WAVs, caches, rolls)
/// are reachable through the listed manifest/directory artifacts.
struct RunRecord {
    std::string version;
    std::string config_text;
    std::vector<StageResult> stages;
};

std::string tool_version();

/// True when the stage's outputs exist and are complete for this config.
bool stage_up_to_date(const ExperimentConfig& cfg, Stage stage);

/// Run one stage unconditionally (no up-to-date check). Throws
/// DependencyError naming the stage to run first if prerequisites are absent.
StageResult run_stage(const ExperimentConfig& cfg, Stage stage);

/// Run the requested stages in dependency order: echoes the config, skips
/// up-to-date stages unless `force`, and appends one JSON line to runs.jsonl.
RunRecord run_experiment(const ExperimentConfig& cfg, const std::vector<Stage>& stages,
                         bool force = false);

/// The two halves of the nmf stage, separately invocable: learn + save the
/// note dictionary; transcribe the interval items with the saved dictionary.
std::vector<std::filesystem::path> run_nmf_dict(const ExperimentConfig& cfg);
std::vector<std::filesystem::path> run_nmf_transcribe(const ExperimentConfig& cfg);

/// Micro-averaged test-set scores recomputed from the saved prediction rolls.
PrfSummary evaluate_test_predictions(const ExperimentConfig& cfg);

} // namespace dtb
