#pragma once

#include "dtb/synth.hpp"

#include <filesystem>
#include <vector>

namespace dtb {

/// Spectrogram frontend parameters. The bin count is the hard constraint
/// (it must equal the network input width); everything else is tunable.
struct FeatureConfig {
    double sample_rate = 44100.0;
    int fft_size = 4096;
    int hop = 441; // 100 frames/second at the default rate
    int n_bins = 229;
    double f_min = 30.0;
    double f_max = 16000.0;

    double frame_rate() const { return sample_rate / hop; }
    void validate() const;
};

/// Triangular filters with geometrically spaced center frequencies, one row
/// per output bin over the fft_size/2+1 magnitude bins.
struct FilterBank {
    int n_bins = 0;
    int n_fft_bins = 0;               // fft_size/2 + 1
    std::vector<double> weights;      // n_bins x n_fft_bins, row-major
    std::vector<double> centers_hz;   // n_bins center frequencies

    double at(int bin, int fft_bin) const {
        return weights[static_cast<std::size_t>(bin) * n_fft_bins + fft_bin];
    }

    /// Index of the filter whose center frequency is nearest to hz.
    int nearest_center(double hz) const;
};

FilterBank build_filterbank(const FeatureConfig& cfg);

/// Per-frame feature rows, stored float32 so caches round-trip bit-exactly.
struct FeatureMatrix {
    double frame_rate = 0.0;
    int n_frames = 0;
    int n_bins = 0;
    std::vector<float> data; // n_frames x n_bins, row-major

    float at(int frame, int bin) const {
        return data[static_cast<std::size_t>(frame) * n_bins + bin];
    }
    float* row(int frame) { return data.data() + static_cast<std::size_t>(frame) * n_bins; }
    const float* row(int frame) const {
        return data.data() + static_cast<std::size_t>(frame) * n_bins;
    }
};

/// Hann-windowed magnitude STFT -> filterbank -> log(1+x). Frame t is
/// centered on sample t*hop (the input is zero-padded by fft_size/2 on both
/// sides), so feature frames line up with label frames at sample_rate/hop.
/// Output has floor(len/hop) + 1 frames and is NOT standardized.
FeatureMatrix extract_features(const AudioClip& audio, const FeatureConfig& cfg);

/// Same, with a prebuilt filterbank (reused across items).
FeatureMatrix extract_features(const AudioClip& audio, const FeatureConfig& cfg,
                               const FilterBank& bank);

/// Per-bin affine standardization fitted on training features.
struct Standardization {
    std::vector<float> mean; // n_bins
    std::vector<float> inv_std;

    void apply(FeatureMatrix& features) const;
};

Standardization fit_standardization(const std::vector<const FeatureMatrix*>& training_features);

/// Copy the context window centered at frame t (edge frames replicated) into
/// dst, which must hold width * n_bins floats.
void copy_window(const FeatureMatrix& features, int t, int width, float* dst);

/// All context windows, one per frame; width must be odd.
std::vector<std::vector<float>> make_windows(const FeatureMatrix& features, int width);

// --- cache file --------------------------------------------------------------
// magic "FEAT", u32 version, f64 frame_rate, u32 n_frames, u32 n_bins,
// then row-major little-endian float32 data.

void write_feature_cache(const FeatureMatrix& features, const std::filesystem::path& path);
FeatureMatrix read_feature_cache(const std::filesystem::path& path);

} // namespace dtb
