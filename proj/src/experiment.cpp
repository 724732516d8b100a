#include "dtb/experiment.hpp"

#include "dtb/errors.hpp"
#include "dtb/evaluation.hpp"
#include "dtb/nmf.hpp"
#include "dtb/train.hpp"
#include "dtb/wav.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <set>

namespace dtb {

namespace {

namespace fs = std::filesystem;

constexpr const char* kVersion = "dtb 0.1.0";

/// Items of one split in deterministic (id-sorted) order.
std::vector<DatasetItemRef> sorted_split(const DatasetLayout& layout, const std::string& name) {
    std::vector<DatasetItemRef> items = layout.split(name);
    std::sort(items.begin(), items.end(),
              [](const DatasetItemRef& a, const DatasetItemRef& b) { return a.id < b.id; });
    return items;
}

DatasetLayout require_dataset(const ExperimentPaths& paths) {
    if (!fs::exists(paths.manifest())) {
        throw DependencyError("no dataset manifest at " + paths.manifest().string() +
                              "; run the synth stage first");
    }
    return read_dataset_layout(paths.dataset_dir());
}

void require_caches(const ExperimentPaths& paths, const DatasetLayout& layout,
                    const std::string& split) {
    for (const DatasetItemRef& item : layout.split(split)) {
        if (!fs::exists(paths.feature_cache(split, item.id))) {
            throw DependencyError("no feature cache for " + split + "/" + item.id +
                                  "; run the features stage first");
        }
    }
}

/// Label roll base pitch for a model with `n_pitches` outputs: full piano for
/// 88-wide heads, the configured dataset range when the widths agree.
Pitch label_base(const ExperimentConfig& cfg, int n_pitches) {
    const int span = cfg.dataset.pitch_hi.midi - cfg.dataset.pitch_lo.midi + 1;
    if (n_pitches == kPianoRange) return kPianoLow;
    if (n_pitches == span) return cfg.dataset.pitch_lo;
    throw ConfigError("architecture " + to_string(cfg.arch) + " emits " +
                      std::to_string(n_pitches) + " pitches but the dataset range " +
                      std::to_string(cfg.dataset.pitch_lo.midi) + "-" +
                      std::to_string(cfg.dataset.pitch_hi.midi) + " spans " +
                      std::to_string(span));
}

/// Output pitch count of an architecture (flat heads, or map width for AUNet).
int arch_pitches(const nn::ArchitectureSpec& arch) {
    const nn::Shape out = arch.output();
    return out.flat ? out.count() : out.w;
}

PianoRoll truth_roll(const DatasetItemRef& item, double frame_rate, int n_frames, Pitch base,
                     int n_pitches) {
    return events_to_pianoroll(read_ground_truth(item.labels), frame_rate, n_frames, base,
                               n_pitches);
}

void write_summary(const nlohmann::json& j, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw InputError("failed writing " + path.string());
}

// --- synth -------------------------------------------------------------------

std::vector<fs::path> do_synth(const ExperimentConfig& cfg, const ExperimentPaths& paths) {
    const DatasetManifest manifest = build_fluid_dataset(cfg.dataset);
    write_dataset(manifest, paths.dataset_dir());
    return {paths.manifest()};
}

bool synth_done(const ExperimentPaths& paths) {
    if (!fs::exists(paths.manifest())) return false;
    const DatasetLayout layout = read_dataset_layout(paths.dataset_dir());
    for (const char* split : {"train", "valid", "test"})
        for (const DatasetItemRef& item : layout.split(split))
            if (!fs::exists(item.wav) || !fs::exists(item.labels)) return false;
    return true;
}

// --- features ----------------------------------------------------------------

std::vector<fs::path> do_features(const ExperimentConfig& cfg, const ExperimentPaths& paths) {
    const DatasetLayout layout = require_dataset(paths);
    const FilterBank bank = build_filterbank(cfg.features);
    std::vector<fs::path> artifacts;
    for (const char* split : {"train", "valid", "test"}) {
        fs::create_directories(paths.features_dir(split));
        for (const DatasetItemRef& item : sorted_split(layout, split)) {
            const AudioClip audio = read_wav16(item.wav);
            const FeatureMatrix features = extract_features(audio, cfg.features, bank);
            write_feature_cache(features, paths.feature_cache(split, item.id));
        }
        artifacts.push_back(paths.features_dir(split));
    }
    return artifacts;
}

bool features_done(const ExperimentPaths& paths) {
    if (!fs::exists(paths.manifest())) return false;
    const DatasetLayout layout = read_dataset_layout(paths.dataset_dir());
    for (const char* split : {"train", "valid", "test"})
        for (const DatasetItemRef& item : layout.split(split))
            if (!fs::exists(paths.feature_cache(split, item.id))) return false;
    return true;
}

// --- train -------------------------------------------------------------------

std::vector<TrainItem> load_split_items(const ExperimentPaths& paths, const DatasetLayout& layout,
                                        const std::string& split, Pitch base, int n_pitches) {
    std::vector<TrainItem> items;
    for (const DatasetItemRef& ref : sorted_split(layout, split)) {
        TrainItem item;
        item.features = read_feature_cache(paths.feature_cache(split, ref.id));
        item.labels =
            truth_roll(ref, item.features.frame_rate, item.features.n_frames, base, n_pitches);
        items.push_back(std::move(item));
    }
    return items;
}

std::vector<fs::path> do_train(const ExperimentConfig& cfg, const ExperimentPaths& paths) {
    const DatasetLayout layout = require_dataset(paths);
    require_caches(paths, layout, "train");
    require_caches(paths, layout, "valid");

    const nn::ArchitectureSpec arch = nn::build_architecture(cfg.arch);
    const int n_pitches = arch_pitches(arch);
    const Pitch base = label_base(cfg, n_pitches);

    std::vector<TrainItem> train_items = load_split_items(paths, layout, "train", base, n_pitches);
    std::vector<TrainItem> valid_items = load_split_items(paths, layout, "valid", base, n_pitches);

    std::vector<const FeatureMatrix*> train_features;
    for (const TrainItem& item : train_items) train_features.push_back(&item.features);
    const Standardization standardization = fit_standardization(train_features);
    for (TrainItem& item : train_items) standardization.apply(item.features);
    for (TrainItem& item : valid_items) standardization.apply(item.features);

    nn::Model<float> model(arch, cfg.train.seed);
    TrainResult result = train(model, train_items, valid_items, cfg.train);

    const auto n_bins = static_cast<std::uint32_t>(cfg.features.n_bins);
    result.checkpoint.arrays.push_back(
        NamedArray{"standardization.mean", {n_bins}, standardization.mean});
    result.checkpoint.arrays.push_back(
        NamedArray{"standardization.inv_std", {n_bins}, standardization.inv_std});
    result.checkpoint.meta["label_base"] = base.midi;
    result.checkpoint.meta["n_pitches"] = n_pitches;

    fs::create_directories(paths.checkpoint().parent_path());
    save_checkpoint(result.checkpoint, paths.checkpoint());

    std::ofstream history(paths.history_csv(), std::ios::binary);
    if (!history) throw InputError("cannot open " + paths.history_csv().string());
    history << "epoch,loss,precision,recall,f_measure,lr\n";
    char row[160];
    for (std::size_t e = 0; e < result.history.size(); ++e) {
        const EpochStats& s = result.history[e];
        std::snprintf(row, sizeof row, "%zu,%.6f,%.6f,%.6f,%.6f,%.6g\n", e, s.loss, s.precision,
                      s.recall, s.f_measure, s.lr);
        history << row;
    }
    return {paths.checkpoint(), paths.history_csv()};
}

bool train_done(const ExperimentPaths& paths) {
    return fs::exists(paths.checkpoint()) && fs::exists(paths.history_csv());
}

// --- transcribe ----------------------------------------------------------------

Standardization standardization_from(const Checkpoint& ckpt) {
    const NamedArray* mean = ckpt.find("standardization.mean");
    const NamedArray* inv_std = ckpt.find("standardization.inv_std");
    if (mean == nullptr || inv_std == nullptr)
        throw FormatError("checkpoint has no standardization arrays");
    return Standardization{mean->values, inv_std->values};
}

std::vector<fs::path> do_transcribe(const ExperimentConfig& cfg, const ExperimentPaths& paths) {
    if (!fs::exists(paths.checkpoint())) {
        throw DependencyError("no checkpoint at " + paths.checkpoint().string() +
                              "; run the train stage first");
    }
    const DatasetLayout layout = require_dataset(paths);
    require_caches(paths, layout, "test");

    const Checkpoint ckpt = load_checkpoint(paths.checkpoint());
    nn::Model<float> model = model_from_checkpoint(ckpt);
    const Standardization standardization = standardization_from(ckpt);
    const int n_pitches = arch_pitches(model.spec());
    const Pitch base = label_base(cfg, n_pitches);

    fs::create_directories(paths.pred_dir());
    PrfCounts counts;
    for (const DatasetItemRef& item : sorted_split(layout, "test")) {
        FeatureMatrix features = read_feature_cache(paths.feature_cache("test", item.id));
        standardization.apply(features);
        const PianoRoll pred = predict_roll(model, features, cfg.train.threshold, base);
        write_roll_csv(pred, paths.pred_roll(item.id));
        counts.add(pred, truth_roll(item, pred.frame_rate(), pred.n_frames(), base, n_pitches));
    }
    write_summary(summary_json(prf_from_counts(counts.tp, counts.fp, counts.fn)),
                  paths.pred_summary());
    return {paths.pred_dir(), paths.pred_summary()};
}

bool transcribe_done(const ExperimentPaths& paths) {
    if (!fs::exists(paths.pred_summary()) || !fs::exists(paths.manifest())) return false;
    const DatasetLayout layout = read_dataset_layout(paths.dataset_dir());
    for (const DatasetItemRef& item : layout.test)
        if (!fs::exists(paths.pred_roll(item.id))) return false;
    return true;
}

// --- nmf ---------------------------------------------------------------------

/// The non-jittered splits, dictionary sources first: isolated notes live in
/// test for COMBI and in train for ISOL.
struct NmfSplits {
    std::string notes;     // split holding the isolated notes
    std::string intervals; // split holding the two-note items
};

NmfSplits nmf_splits(const ExperimentConfig& cfg) {
    if (cfg.dataset.mode == DatasetMode::kCombi) return {"test", "train"};
    return {"train", "test"};
}

std::vector<fs::path> do_nmf_dict(const ExperimentConfig& cfg, const ExperimentPaths& paths) {
    const DatasetLayout layout = require_dataset(paths);
    const NmfSplits splits = nmf_splits(cfg);
    require_caches(paths, layout, splits.notes);

    std::vector<FeatureMatrix> features;
    std::vector<std::pair<const FeatureMatrix*, Pitch>> isolated;
    const std::vector<DatasetItemRef> items = sorted_split(layout, splits.notes);
    features.reserve(items.size());
    for (const DatasetItemRef& item : items) {
        if (item.combination.size() != 1) continue;
        features.push_back(read_feature_cache(paths.feature_cache(splits.notes, item.id)));
        isolated.emplace_back(&features.back(), item.combination.pitches().front());
    }
    if (isolated.empty()) {
        throw InputError("split '" + splits.notes + "' has no isolated-note items to learn from");
    }
    const Dictionary dict =
        learn_note_dictionary(isolated, cfg.dataset.pitch_lo, cfg.dataset.pitch_hi);
    fs::create_directories(paths.nmf_dir());
    save_dictionary(dict, paths.nmf_dictionary());
    return {paths.nmf_dictionary()};
}

std::vector<fs::path> do_nmf_transcribe(const ExperimentConfig& cfg,
                                        const ExperimentPaths& paths) {
    if (!fs::exists(paths.nmf_dictionary())) {
        throw DependencyError("no dictionary at " + paths.nmf_dictionary().string() +
                              "; run nmf-dict (or the nmf stage) first");
    }
    const DatasetLayout layout = require_dataset(paths);
    const NmfSplits splits = nmf_splits(cfg);
    require_caches(paths, layout, splits.intervals);

    const Dictionary dict = load_dictionary(paths.nmf_dictionary());
    const int n_pitches = dict.n_templates();
    const Pitch base = dict.pitch_map.front();

    fs::create_directories(paths.nmf_pred_dir());
    PrfCounts counts;
    CombinationAccumulator acc;
    std::set<NoteCombination> note_combos;
    for (const DatasetItemRef& item : sorted_split(layout, splits.intervals)) {
        const FeatureMatrix features =
            read_feature_cache(paths.feature_cache(splits.intervals, item.id));
        const PianoRoll pred = nmf_transcribe(features, dict, cfg.nmf);
        write_roll_csv(pred, paths.nmf_pred_roll(item.id));
        const PianoRoll truth =
            truth_roll(item, pred.frame_rate(), pred.n_frames(), base, n_pitches);
        counts.add(pred, truth);
        acc.add(pred, truth);
    }
    for (const DatasetItemRef& item : layout.split(splits.notes))
        note_combos.insert(item.combination);

    write_summary(summary_json(prf_from_counts(counts.tp, counts.fp, counts.fn)),
                  paths.nmf_summary());
    write_combination_csv(acc.stats(-1, kDefaultMinFrames),
                          partition_shared(note_combos, acc.combinations()).shared,
                          paths.nmf_stats_csv());
    return {paths.nmf_dictionary(), paths.nmf_pred_dir(), paths.nmf_summary(),
            paths.nmf_stats_csv()};
}

std::vector<fs::path> do_nmf(const ExperimentConfig& cfg, const ExperimentPaths& paths) {
    do_nmf_dict(cfg, paths);
    return do_nmf_transcribe(cfg, paths);
}

bool nmf_done(const ExperimentPaths& paths) {
    return fs::exists(paths.nmf_dictionary()) && fs::exists(paths.nmf_summary()) &&
           fs::exists(paths.nmf_stats_csv());
}

// --- analyze -------------------------------------------------------------------

/// Per-cell counts split by whether the frame's ground truth combination is
/// shared with the training data.
struct GroupedCounts {
    PrfCounts overall, shared, unshared;
};

void add_frame_cells(const PianoRoll& pred, const PianoRoll& truth, int t, PrfCounts& counts) {
    for (int p = 0; p < truth.n_pitches(); ++p) {
        const bool y = truth.at(t, p);
        const bool yh = pred.at(t, p);
        counts.tp += (y && yh);
        counts.fp += (!y && yh);
        counts.fn += (y && !yh);
    }
}

std::vector<fs::path> do_analyze(const ExperimentConfig& cfg, const ExperimentPaths& paths) {
    const DatasetLayout layout = require_dataset(paths);
    if (!fs::exists(paths.pred_summary())) {
        throw DependencyError("no predictions under " + paths.pred_dir().string() +
                              "; run the transcribe stage first");
    }
    const nn::ArchitectureSpec arch = nn::build_architecture(cfg.arch);
    const int n_pitches = arch_pitches(arch);
    const Pitch base = label_base(cfg, n_pitches);
    const double frame_rate = cfg.features.frame_rate();

    // combinations the training data exposes, from its ground-truth rolls
    std::set<NoteCombination> train_combos;
    for (const DatasetItemRef& item : layout.train) {
        const auto events = read_ground_truth(item.labels);
        double last_offset = 0.0;
        for (const NoteEvent& e : events) last_offset = std::max(last_offset, e.offset);
        const int n_frames = static_cast<int>(last_offset * frame_rate) + 1;
        const PianoRoll roll = events_to_pianoroll(events, frame_rate, n_frames, base, n_pitches);
        for (int t = 0; t < roll.n_frames(); ++t) {
            NoteCombination combo = active_set(roll, t);
            if (combo.size() > 0) train_combos.insert(std::move(combo));
        }
    }

    CombinationAccumulator acc;
    GroupedCounts counts;
    for (const DatasetItemRef& item : sorted_split(layout, "test")) {
        const fs::path pred_path = paths.pred_roll(item.id);
        if (!fs::exists(pred_path)) {
            throw DependencyError("no prediction for test/" + item.id +
                                  "; run the transcribe stage first");
        }
        const PianoRoll pred = read_roll_csv(pred_path, frame_rate, base);
        const PianoRoll truth = truth_roll(item, frame_rate, pred.n_frames(), base, n_pitches);
        acc.add(pred, truth);
        for (int t = 0; t < truth.n_frames(); ++t) {
            add_frame_cells(pred, truth, t, counts.overall);
            const NoteCombination combo = active_set(truth, t);
            if (combo.size() == 0) continue;
            add_frame_cells(pred, truth, t,
                            train_combos.count(combo) ? counts.shared : counts.unshared);
        }
    }

    const SharedPartition partition = partition_shared(train_combos, acc.combinations());
    fs::create_directories(paths.analysis_dir());
    write_combination_csv(acc.stats(-1, kDefaultMinFrames), partition.shared, paths.stats_csv());

    nlohmann::json summary;
    summary["overall"] = summary_json(prf_from_counts(counts.overall.tp, counts.overall.fp,
                                                      counts.overall.fn));
    summary["shared"] =
        summary_json(prf_from_counts(counts.shared.tp, counts.shared.fp, counts.shared.fn));
    summary["unshared"] = summary_json(
        prf_from_counts(counts.unshared.tp, counts.unshared.fp, counts.unshared.fn));
    summary["n_shared_combinations"] = partition.shared.size();
    summary["n_unshared_combinations"] = partition.unshared.size();
    write_summary(summary, paths.analysis_summary());
    return {paths.stats_csv(), paths.analysis_summary()};
}

bool analyze_done(const ExperimentPaths& paths) {
    return fs::exists(paths.stats_csv()) && fs::exists(paths.analysis_summary());
}

} // namespace

std::string to_string(Stage stage) {
    switch (stage) {
    case Stage::Synth: return "synth";
    case Stage::Features: return "features";
    case Stage::Train: return "train";
    case Stage::Transcribe: return "transcribe";
    case Stage::Nmf: return "nmf";
    case Stage::Analyze: return "analyze";
    }
    throw ArgumentError("invalid stage value");
}

Stage stage_from_string(const std::string& s) {
    for (Stage stage : all_stages())
        if (to_string(stage) == s) return stage;
    throw ArgumentError("unknown stage '" + s +
                        "' (expected synth, features, train, transcribe, nmf, or analyze)");
}

const std::vector<Stage>& all_stages() {
    static const std::vector<Stage> stages = {Stage::Synth,      Stage::Features, Stage::Train,
                                              Stage::Transcribe, Stage::Nmf,      Stage::Analyze};
    return stages;
}

std::string tool_version() { return kVersion; }

std::vector<fs::path> run_nmf_dict(const ExperimentConfig& cfg) {
    return do_nmf_dict(cfg, ExperimentPaths(cfg.out_dir));
}

std::vector<fs::path> run_nmf_transcribe(const ExperimentConfig& cfg) {
    return do_nmf_transcribe(cfg, ExperimentPaths(cfg.out_dir));
}

PrfSummary evaluate_test_predictions(const ExperimentConfig& cfg) {
    const ExperimentPaths paths(cfg.out_dir);
    const DatasetLayout layout = require_dataset(paths);
    const nn::ArchitectureSpec arch = nn::build_architecture(cfg.arch);
    const int n_pitches = arch_pitches(arch);
    const Pitch base = label_base(cfg, n_pitches);
    const double frame_rate = cfg.features.frame_rate();

    PrfCounts counts;
    for (const DatasetItemRef& item : sorted_split(layout, "test")) {
        const fs::path pred_path = paths.pred_roll(item.id);
        if (!fs::exists(pred_path)) {
            throw DependencyError("no prediction for test/" + item.id +
                                  "; run the transcribe stage first");
        }
        const PianoRoll pred = read_roll_csv(pred_path, frame_rate, base);
        counts.add(pred, truth_roll(item, frame_rate, pred.n_frames(), base, n_pitches));
    }
    return prf_from_counts(counts.tp, counts.fp, counts.fn);
}

bool stage_up_to_date(const ExperimentConfig& cfg, Stage stage) {
    const ExperimentPaths paths(cfg.out_dir);
    switch (stage) {
    case Stage::Synth: return synth_done(paths);
    case Stage::Features: return features_done(paths);
    case Stage::Train: return train_done(paths);
    case Stage::Transcribe: return transcribe_done(paths);
    case Stage::Nmf: return nmf_done(paths);
    case Stage::Analyze: return analyze_done(paths);
    }
    throw ArgumentError("invalid stage value");
}

StageResult run_stage(const ExperimentConfig& cfg, Stage stage) {
    const ExperimentPaths paths(cfg.out_dir);
    StageResult result;
    result.stage = stage;
    const auto start = std::chrono::steady_clock::now();
    switch (stage) {
    case Stage::Synth: result.artifacts = do_synth(cfg, paths); break;
    case Stage::Features: result.artifacts = do_features(cfg, paths); break;
    case Stage::Train: result.artifacts = do_train(cfg, paths); break;
    case Stage::Transcribe: result.artifacts = do_transcribe(cfg, paths); break;
    case Stage::Nmf: result.artifacts = do_nmf(cfg, paths); break;
    case Stage::Analyze: result.artifacts = do_analyze(cfg, paths); break;
    }
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

RunRecord run_experiment(const ExperimentConfig& cfg, const std::vector<Stage>& stages,
                         bool force) {
    cfg.validate();
    const ExperimentPaths paths(cfg.out_dir);
    std::filesystem::create_directories(paths.root);
    write_config(cfg, paths.config_echo());

    const std::set<Stage> requested(stages.begin(), stages.end());
    RunRecord record;
    record.version = tool_version();
    record.config_text = render_config(cfg);
    for (Stage stage : all_stages()) {
        if (!requested.count(stage)) continue;
        if (!force && stage_up_to_date(cfg, stage)) {
            StageResult skipped;
            skipped.stage = stage;
            skipped.skipped = true;
            record.stages.push_back(std::move(skipped));
            continue;
        }
        record.stages.push_back(run_stage(cfg, stage));
    }

    nlohmann::json line;
    line["version"] = record.version;
    line["config"] = record.config_text;
    line["stages"] = nlohmann::json::array();
    for (const StageResult& s : record.stages) {
        nlohmann::json js;
        js["stage"] = to_string(s.stage);
        js["skipped"] = s.skipped;
        js["seconds"] = s.seconds;
        js["artifacts"] = nlohmann::json::array();
        for (const fs::path& a : s.artifacts) js["artifacts"].push_back(a.generic_string());
        line["stages"].push_back(std::move(js));
    }
    std::ofstream log(paths.run_log(), std::ios::binary | std::ios::app);
    if (!log) throw InputError("cannot open " + paths.run_log().string() + " for appending");
    log << line.dump() << '\n';
    return record;
}

} // namespace dtb
