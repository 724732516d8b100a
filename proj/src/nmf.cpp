#include "dtb/nmf.hpp"

#include <algorithm>
#include <cmath>

#include "dtb/checkpoint.hpp"
#include "dtb/errors.hpp"
#include "dtb/rng.hpp"

namespace dtb {

namespace {

constexpr double kEps = 1e-12; // update-denominator guard

double frobenius_residual(const std::vector<double>& x, const std::vector<double>& w,
                          const std::vector<double>& h, int d_bins, int t_frames, int rank) {
    double sq = 0;
    for (int t = 0; t < t_frames; ++t) {
        const double* xt = x.data() + static_cast<size_t>(t) * d_bins;
        for (int b = 0; b < d_bins; ++b) {
            double rec = 0;
            for (int c = 0; c < rank; ++c)
                rec += w[static_cast<size_t>(c) * d_bins + b] *
                       h[static_cast<size_t>(c) * t_frames + t];
            const double r = xt[b] - rec;
            sq += r * r;
        }
    }
    return std::sqrt(sq);
}

} // namespace

void NmfConfig::validate() const {
    if (rank < 1) throw ConfigError("nmf.rank must be at least 1");
    if (max_iters < 1) throw ConfigError("nmf.max_iters must be at least 1");
    if (!(tolerance > 0)) throw ConfigError("nmf.tolerance must be positive");
    if (threshold < 0 || threshold >= 1)
        throw ConfigError("nmf.threshold must lie in [0, 1)");
    if (floor_abs < 0) throw ConfigError("nmf.floor_abs must be non-negative");
}

NmfResult nmf_factorize(const std::vector<double>& x, int n_bins, int n_frames,
                        const NmfConfig& cfg, const std::vector<double>* fixed_w) {
    cfg.validate();
    if (n_bins < 1 || n_frames < 1) throw ArgumentError("factorization needs a non-empty matrix");
    if (x.size() != static_cast<size_t>(n_bins) * n_frames)
        throw ArgumentError("matrix data length does not match dims");
    double x_max = 0;
    for (double v : x) {
        if (v < 0) throw InputError("negative entries: NMF requires non-negative features");
        x_max = std::max(x_max, v);
    }
    if (x_max == 0) throw InputError("all-zero matrix cannot be factorized");

    NmfResult res;
    res.n_bins = n_bins;
    res.rank = fixed_w != nullptr ? static_cast<int>(fixed_w->size()) / n_bins : cfg.rank;
    const int rank = res.rank;
    if (fixed_w != nullptr && fixed_w->size() != static_cast<size_t>(n_bins) * rank)
        throw ArgumentError("fixed dictionary size is not a multiple of the bin count");

    // Deterministic non-negative initialization (fixed internal stream: two
    // factorizations of the same matrix always agree).
    Rng rng(0xD1C7);
    if (fixed_w != nullptr) {
        res.w = *fixed_w;
    } else {
        res.w.resize(static_cast<size_t>(n_bins) * rank);
        for (double& v : res.w) v = rng.uniform(0.1, 1.0);
    }
    res.h.n_templates = rank;
    res.h.n_frames = n_frames;
    res.h.h.resize(static_cast<size_t>(rank) * n_frames);
    for (double& v : res.h.h) v = rng.uniform(0.1, 1.0) * x_max;

    std::vector<double>& w = res.w;
    std::vector<double>& h = res.h.h;
    std::vector<double> gram(static_cast<size_t>(rank) * rank); // W^T W
    std::vector<double> wtx(static_cast<size_t>(rank) * n_frames);
    std::vector<double> hht(static_cast<size_t>(rank) * rank); // H H^T
    std::vector<double> xht(static_cast<size_t>(n_bins) * rank);

    res.error_history.push_back(frobenius_residual(x, w, h, n_bins, n_frames, rank));
    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        // H <- H * (W^T X) / (W^T W H)
        for (int c = 0; c < rank; ++c)
            for (int c2 = 0; c2 < rank; ++c2) {
                double s = 0;
                for (int b = 0; b < n_bins; ++b)
                    s += w[static_cast<size_t>(c) * n_bins + b] *
                         w[static_cast<size_t>(c2) * n_bins + b];
                gram[static_cast<size_t>(c) * rank + c2] = s;
            }
        for (int c = 0; c < rank; ++c) {
            const double* wc = w.data() + static_cast<size_t>(c) * n_bins;
            for (int t = 0; t < n_frames; ++t) {
                const double* xt = x.data() + static_cast<size_t>(t) * n_bins;
                double s = 0;
                for (int b = 0; b < n_bins; ++b) s += wc[b] * xt[b];
                wtx[static_cast<size_t>(c) * n_frames + t] = s;
            }
        }
        for (int c = 0; c < rank; ++c) {
            double* hc = h.data() + static_cast<size_t>(c) * n_frames;
            const double* g = gram.data() + static_cast<size_t>(c) * rank;
            for (int t = 0; t < n_frames; ++t) {
                double den = 0;
                for (int c2 = 0; c2 < rank; ++c2)
                    den += g[c2] * h[static_cast<size_t>(c2) * n_frames + t];
                hc[t] *= wtx[static_cast<size_t>(c) * n_frames + t] / (den + kEps);
            }
        }
        if (fixed_w == nullptr) {
            // W <- W * (X H^T) / (W H H^T)
            for (int c = 0; c < rank; ++c)
                for (int c2 = 0; c2 < rank; ++c2) {
                    double s = 0;
                    for (int t = 0; t < n_frames; ++t)
                        s += h[static_cast<size_t>(c) * n_frames + t] *
                             h[static_cast<size_t>(c2) * n_frames + t];
                    hht[static_cast<size_t>(c) * rank + c2] = s;
                }
            for (int c = 0; c < rank; ++c) {
                const double* hc = h.data() + static_cast<size_t>(c) * n_frames;
                for (int b = 0; b < n_bins; ++b) {
                    double s = 0;
                    for (int t = 0; t < n_frames; ++t)
                        s += x[static_cast<size_t>(t) * n_bins + b] * hc[t];
                    xht[static_cast<size_t>(b) * rank + c] = s;
                }
            }
            for (int b = 0; b < n_bins; ++b) {
                for (int c = 0; c < rank; ++c) {
                    double den = 0;
                    for (int c2 = 0; c2 < rank; ++c2)
                        den += w[static_cast<size_t>(c2) * n_bins + b] *
                               hht[static_cast<size_t>(c2) * rank + c];
                    w[static_cast<size_t>(c) * n_bins + b] *=
                        xht[static_cast<size_t>(b) * rank + c] / (den + kEps);
                }
            }
        }
        const double err = frobenius_residual(x, w, h, n_bins, n_frames, rank);
        const double prev = res.error_history.back();
        res.error_history.push_back(err);
        if (prev - err < cfg.tolerance * std::max(prev, kEps) && iter > 0) break;
    }
    return res;
}

Dictionary learn_note_dictionary(
    const std::vector<std::pair<const FeatureMatrix*, Pitch>>& isolated_items, Pitch lo,
    Pitch hi) {
    if (lo.midi > hi.midi) throw ArgumentError("dictionary pitch range is empty");
    const int n_pitches = hi.midi - lo.midi + 1;

    int n_bins = 0;
    for (const auto& [features, pitch] : isolated_items) {
        if (features == nullptr || features->n_frames <= 0)
            throw ArgumentError("dictionary items must carry non-empty features");
        if (n_bins == 0)
            n_bins = features->n_bins;
        else if (features->n_bins != n_bins)
            throw ArgumentError("dictionary items disagree on feature bin count");
    }
    if (n_bins == 0) throw ArgumentError("no dictionary items given");

    std::vector<int> missing;
    Dictionary dict;
    dict.n_bins = n_bins;
    dict.w.assign(static_cast<size_t>(n_pitches) * n_bins, 0.0f);
    NmfConfig cfg;
    cfg.rank = 1;
    cfg.max_iters = 300;
    cfg.tolerance = 1e-9;
    for (int midi = lo.midi; midi <= hi.midi; ++midi) {
        // Stack every frame of every item for this pitch into one D x T matrix.
        std::vector<double> x;
        int t_frames = 0;
        for (const auto& [features, pitch] : isolated_items) {
            if (pitch.midi != midi) continue;
            for (int t = 0; t < features->n_frames; ++t) {
                const float* row = features->row(t);
                for (int b = 0; b < n_bins; ++b) x.push_back(row[b]);
                ++t_frames;
            }
        }
        if (t_frames == 0) {
            missing.push_back(midi);
            continue;
        }
        const NmfResult res = nmf_factorize(x, n_bins, t_frames, cfg);
        double norm = 0;
        for (int b = 0; b < n_bins; ++b) norm += res.w[b] * res.w[b];
        norm = std::sqrt(norm);
        if (norm <= 0) throw NumericalError("degenerate template for pitch " +
                                            std::to_string(midi));
        const int col = midi - lo.midi;
        for (int b = 0; b < n_bins; ++b)
            dict.w[static_cast<size_t>(col) * n_bins + b] =
                static_cast<float>(res.w[b] / norm);
        dict.pitch_map.push_back(Pitch{midi});
    }
    if (!missing.empty()) {
        std::string list;
        for (size_t i = 0; i < missing.size(); ++i)
            list += (i ? ", " : "") + std::to_string(missing[i]);
        throw InputError("no isolated-note items for pitches: " + list);
    }
    return dict;
}

PianoRoll nmf_transcribe(const FeatureMatrix& features, const Dictionary& dict,
                         const NmfConfig& cfg) {
    cfg.validate();
    if (features.n_bins != dict.n_bins)
        throw ConfigError("features have " + std::to_string(features.n_bins) +
                          " bins but the dictionary expects " + std::to_string(dict.n_bins));
    if (features.n_frames <= 0) throw ArgumentError("cannot transcribe empty features");
    const int d = dict.n_templates();
    if (d < 1) throw ArgumentError("dictionary has no templates");
    for (int c = 1; c < d; ++c)
        if (dict.pitch_map[c].midi != dict.pitch_map[c - 1].midi + 1)
            throw ConfigError("dictionary pitch map must cover a contiguous ascending range");

    // A silent input has nothing to factorize; the contract is an empty roll.
    bool any = false;
    std::vector<double> x(features.data.begin(), features.data.end());
    for (double v : x) {
        if (v < 0)
            throw InputError("negative features: transcribe with pre-standardization "
                             "(non-negative) features");
        if (v > 0) any = true;
    }
    PianoRoll roll(features.frame_rate, dict.pitch_map.front(), d, features.n_frames);
    if (!any) return roll;

    std::vector<double> w(dict.w.begin(), dict.w.end());
    const NmfResult res = nmf_factorize(x, features.n_bins, features.n_frames, cfg, &w);
    for (int t = 0; t < features.n_frames; ++t) {
        double frame_max = 0;
        for (int c = 0; c < d; ++c) frame_max = std::max(frame_max, res.h.at(c, t));
        const double cut = std::max(cfg.threshold * frame_max, cfg.floor_abs);
        for (int c = 0; c < d; ++c) roll.set(t, c, res.h.at(c, t) > cut);
    }
    return roll;
}

void save_dictionary(const Dictionary& dict, const std::filesystem::path& path) {
    // Stored as (templates, bins): row-major rows are the contiguous templates.
    NamedArray w;
    w.name = "w";
    w.dims = {static_cast<uint32_t>(dict.n_templates()), static_cast<uint32_t>(dict.n_bins)};
    w.values = dict.w;
    nlohmann::json meta;
    meta["pitch_map"] = nlohmann::json::array();
    for (const Pitch& p : dict.pitch_map) meta["pitch_map"].push_back(p.midi);
    save_array_container("DNMF", {w}, meta, path);
}

Dictionary load_dictionary(const std::filesystem::path& path) {
    auto [arrays, meta] = load_array_container("DNMF", path);
    Dictionary dict;
    const NamedArray* w = nullptr;
    for (const auto& a : arrays)
        if (a.name == "w") w = &a;
    if (w == nullptr || w->dims.size() != 2)
        throw FormatError(path.string() + ": missing 2-d 'w' array");
    const int d = static_cast<int>(w->dims[0]);
    dict.n_bins = static_cast<int>(w->dims[1]);
    dict.w = w->values;
    if (!meta.contains("pitch_map") || !meta["pitch_map"].is_array() ||
        static_cast<int>(meta["pitch_map"].size()) != d)
        throw FormatError(path.string() + ": pitch_map does not match template count");
    for (const auto& m : meta["pitch_map"]) dict.pitch_map.push_back(Pitch{m.get<int>()});
    return dict;
}

} // namespace dtb
