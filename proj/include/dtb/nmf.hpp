#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "dtb/features.hpp"
#include "dtb/notation.hpp"

namespace dtb {

/// Spectral template per pitch: column-major D x d matrix whose columns are
/// L2-normalized, one per pitch (ascending, contiguous range).
struct Dictionary {
    int n_bins = 0;               // D
    std::vector<Pitch> pitch_map; // column -> pitch
    std::vector<float> w;         // w[col * n_bins + bin]

    int n_templates() const { return static_cast<int>(pitch_map.size()); }
    float at(int bin, int col) const {
        return w[static_cast<std::size_t>(col) * n_bins + bin];
    }
};

/// Per-template, per-frame gains.
struct Activations {
    int n_templates = 0; // d
    int n_frames = 0;    // T
    std::vector<double> h; // h[template * n_frames + frame]

    double at(int tpl, int frame) const {
        return h[static_cast<std::size_t>(tpl) * n_frames + frame];
    }
};

struct NmfConfig {
    int rank = 1;            // d, when W is learned
    int max_iters = 500;
    double tolerance = 1e-6; // stop when the relative error decrease falls below this
    double threshold = 0.1;  // activation binarization: fraction of the per-frame max
    double floor_abs = 1e-6; // absolute silence floor

    void validate() const;
};

/// Frobenius-norm multiplicative-update factorization X ~= W H of a D x T
/// non-negative matrix. X is column-major with frames contiguous
/// (x[t * n_bins + bin]) — exactly the layout of FeatureMatrix::data.
struct NmfResult {
    int n_bins = 0;
    int rank = 0;
    std::vector<double> w; // column-major, like Dictionary::w
    Activations h;
    std::vector<double> error_history; // residual Frobenius norm; [0] = before updates
};

/// With `fixed_w` (column-major D x d), only H updates and the result's `w`
/// echoes the input. Throws InputError for negative or all-zero X.
NmfResult nmf_factorize(const std::vector<double>& x, int n_bins, int n_frames,
                        const NmfConfig& cfg, const std::vector<double>* fixed_w = nullptr);

/// Learn one rank-1 template per pitch in [lo, hi] from isolated-note
/// features (pre-standardization, non-negative). Every pitch in the range
/// must be covered by at least one item.
Dictionary learn_note_dictionary(
    const std::vector<std::pair<const FeatureMatrix*, Pitch>>& isolated_items, Pitch lo,
    Pitch hi);

/// Infer activations with the dictionary fixed and binarize: pitch p sounds
/// at frame t iff H[p,t] exceeds threshold * (that frame's maximum
/// activation) and the absolute floor.
PianoRoll nmf_transcribe(const FeatureMatrix& features, const Dictionary& dict,
                         const NmfConfig& cfg);

/// DNMF container: the "w" array plus pitch_map metadata.
void save_dictionary(const Dictionary& dict, const std::filesystem::path& path);
Dictionary load_dictionary(const std::filesystem::path& path);

} // namespace dtb
