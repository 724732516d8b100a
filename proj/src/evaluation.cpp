#include "dtb/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "dtb/errors.hpp"

namespace dtb {

namespace {

void check_same_shape(const PianoRoll& pred, const PianoRoll& truth) {
    if (pred.n_frames() != truth.n_frames() || pred.n_pitches() != truth.n_pitches() ||
        pred.pitch_lo().midi != truth.pitch_lo().midi ||
        pred.frame_rate() != truth.frame_rate())
        throw ConfigError("prediction and truth rolls disagree in shape, rate, or pitch range");
}

} // namespace

FrameErrorClass classify_frame(const NoteCombination& pred, const NoteCombination& truth) {
    FrameErrorClass out;
    for (const Pitch& p : pred.pitches())
        if (!truth.contains(p)) {
            out.has_additions = true;
            break;
        }
    for (const Pitch& p : truth.pitches())
        if (!pred.contains(p)) {
            out.has_omissions = true;
            break;
        }
    out.exact = !out.has_additions && !out.has_omissions;
    return out;
}

void CombinationAccumulator::add(const PianoRoll& pred, const PianoRoll& truth) {
    check_same_shape(pred, truth);
    for (int t = 0; t < truth.n_frames(); ++t) {
        const NoteCombination truth_set = active_set(truth, t);
        if (truth_set.empty()) continue; // silence is not a note combination
        const FrameErrorClass cls = classify_frame(active_set(pred, t), truth_set);
        Counts& c = groups_[truth_set];
        ++c.frames;
        if (cls.exact) ++c.exact;
        if (cls.has_additions) ++c.additions;
        if (cls.has_omissions) ++c.omissions;
    }
}

std::vector<CombinationStats> CombinationAccumulator::stats(int top_k, int min_frames) const {
    std::vector<CombinationStats> out;
    for (const auto& [combo, c] : groups_) {
        if (c.frames < min_frames) continue;
        CombinationStats s;
        s.combination = combo;
        s.n_frames = c.frames;
        s.p_exact = static_cast<double>(c.exact) / static_cast<double>(c.frames);
        s.p_additions = static_cast<double>(c.additions) / static_cast<double>(c.frames);
        s.p_omissions = static_cast<double>(c.omissions) / static_cast<double>(c.frames);
        out.push_back(std::move(s));
    }
    std::stable_sort(out.begin(), out.end(), [](const CombinationStats& a,
                                                const CombinationStats& b) {
        if (a.n_frames != b.n_frames) return a.n_frames > b.n_frames;
        return a.combination < b.combination;
    });
    if (top_k >= 0 && static_cast<size_t>(top_k) < out.size()) out.resize(top_k);
    return out;
}

std::set<NoteCombination> CombinationAccumulator::combinations() const {
    std::set<NoteCombination> out;
    for (const auto& [combo, c] : groups_) out.insert(combo);
    return out;
}

std::vector<CombinationStats> combination_stats(const PianoRoll& pred, const PianoRoll& truth,
                                                int top_k, int min_frames) {
    CombinationAccumulator acc;
    acc.add(pred, truth);
    return acc.stats(top_k, min_frames);
}

SharedPartition partition_shared(const std::set<NoteCombination>& reference_combos,
                                 const std::set<NoteCombination>& eval_combos) {
    SharedPartition out;
    for (const NoteCombination& c : eval_combos) {
        if (reference_combos.count(c))
            out.shared.insert(c);
        else
            out.unshared.insert(c);
    }
    return out;
}

PrfSummary prf_from_counts(long long tp, long long fp, long long fn) {
    PrfSummary s;
    s.tp = tp;
    s.fp = fp;
    s.fn = fn;
    s.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    s.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    s.f_measure = s.precision + s.recall == 0
                      ? 0.0
                      : 2 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

PrfSummary framewise_prf(const PianoRoll& pred, const PianoRoll& truth) {
    check_same_shape(pred, truth);
    long long tp = 0, fp = 0, fn = 0;
    for (int t = 0; t < truth.n_frames(); ++t)
        for (int k = 0; k < truth.n_pitches(); ++k) {
            const bool p = pred.at(t, k);
            const bool y = truth.at(t, k);
            if (p && y)
                ++tp;
            else if (p)
                ++fp;
            else if (y)
                ++fn;
        }
    return prf_from_counts(tp, fp, fn);
}

void write_combination_csv(const std::vector<CombinationStats>& stats,
                           const std::set<NoteCombination>& shared_with,
                           const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary); // binary: byte-identical across platforms
    if (!out) throw InputError("cannot write " + path.string());
    out << "combination,n_frames,p_exact,p_additions,p_omissions,shared\n";
    char buf[64];
    for (const CombinationStats& s : stats) {
        out << '"' << s.combination.to_string() << '"' << ',' << s.n_frames;
        std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%.6f", s.p_exact, s.p_additions,
                      s.p_omissions);
        out << buf << ',' << (shared_with.count(s.combination) ? 1 : 0) << '\n';
    }
    if (!out) throw InputError("failed while writing " + path.string());
}

nlohmann::json summary_json(const PrfSummary& prf) {
    return nlohmann::json{{"precision", prf.precision}, {"recall", prf.recall},
                          {"f_measure", prf.f_measure}, {"tp", prf.tp},
                          {"fp", prf.fp},               {"fn", prf.fn}};
}

} // namespace dtb
