#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <vector>

#include "json.hpp"

#include "dtb/notation.hpp"

namespace dtb {

/// Per-frame transcription outcome. A frame can have additions and omissions
/// at once; "exact" means neither.
struct FrameErrorClass {
    bool exact = false;
    bool has_additions = false;
    bool has_omissions = false;
};

/// has_additions ⇔ pred∖truth nonempty; has_omissions ⇔ truth∖pred nonempty;
/// exact ⇔ pred == truth. Empty sets are allowed on both sides.
FrameErrorClass classify_frame(const NoteCombination& pred, const NoteCombination& truth);

/// Aggregate outcome over all frames whose ground truth equals `combination`.
/// The proportions are independent counts over the group's frames; exact +
/// additions + omissions need not sum to 1.
struct CombinationStats {
    NoteCombination combination;
    long long n_frames = 0;
    double p_exact = 0;
    double p_additions = 0;
    double p_omissions = 0;
};

/// Groups frames by ground-truth combination across any number of roll pairs.
/// Silence frames (empty ground truth) are excluded from the grouping but
/// still feed the framewise precision/recall elsewhere.
class CombinationAccumulator {
public:
    void add(const PianoRoll& pred, const PianoRoll& truth);

    /// Groups with at least `min_frames` frames, sorted by descending frame
    /// count (ties: ascending combination), truncated to `top_k` (all if < 0).
    std::vector<CombinationStats> stats(int top_k, int min_frames) const;

    /// Every ground-truth combination seen so far (silence excluded).
    std::set<NoteCombination> combinations() const;

private:
    struct Counts {
        long long frames = 0, exact = 0, additions = 0, omissions = 0;
    };
    std::map<NoteCombination, Counts> groups_;
};

constexpr int kDefaultMinFrames = 20;

/// One-pair convenience wrapper over CombinationAccumulator.
std::vector<CombinationStats> combination_stats(const PianoRoll& pred, const PianoRoll& truth,
                                                int top_k, int min_frames = kDefaultMinFrames);

/// shared = eval ∩ reference, unshared = eval ∖ reference.
struct SharedPartition {
    std::set<NoteCombination> shared;
    std::set<NoteCombination> unshared;
};
SharedPartition partition_shared(const std::set<NoteCombination>& reference_combos,
                                 const std::set<NoteCombination>& eval_combos);

/// Micro-averaged framewise scores over all (frame, pitch) cells, with the
/// 0/0 → 0 convention for each quantity.
struct PrfSummary {
    long long tp = 0, fp = 0, fn = 0;
    double precision = 0, recall = 0, f_measure = 0;
};
PrfSummary framewise_prf(const PianoRoll& pred, const PianoRoll& truth);
PrfSummary prf_from_counts(long long tp, long long fp, long long fn);

/// CSV: header `combination,n_frames,p_exact,p_additions,p_omissions,shared`,
/// one row per combination ("60 64" style pitch list, quoted).
void write_combination_csv(const std::vector<CombinationStats>& stats,
                           const std::set<NoteCombination>& shared_with,
                           const std::filesystem::path& path);

/// JSON summary of framewise scores and counts.
nlohmann::json summary_json(const PrfSummary& prf);

} // namespace dtb
