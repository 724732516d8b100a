#include "dtb/features.hpp"

#include "dtb/binio.hpp"
#include "dtb/errors.hpp"
#include "dtb/fft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dtb {

void FeatureConfig::validate() const {
    if (sample_rate <= 0.0) throw ConfigError("FeatureConfig: sample_rate must be positive");
    if (fft_size < 2 || (fft_size & (fft_size - 1)) != 0) {
        throw ConfigError("FeatureConfig: fft_size must be a power of two");
    }
    if (hop <= 0) throw ConfigError("FeatureConfig: hop must be positive");
    if (n_bins <= 0) throw ConfigError("FeatureConfig: n_bins must be positive");
    if (!(f_min > 0.0) || !(f_min < f_max) || !(f_max <= sample_rate / 2.0)) {
        throw ConfigError("FeatureConfig: need 0 < f_min < f_max <= sample_rate/2");
    }
}

int FilterBank::nearest_center(double hz) const {
    int best = 0;
    double best_dist = std::abs(centers_hz[0] - hz);
    for (int k = 1; k < n_bins; ++k) {
        const double d = std::abs(centers_hz[static_cast<std::size_t>(k)] - hz);
        if (d < best_dist) {
            best_dist = d;
            best = k;
        }
    }
    return best;
}

FilterBank build_filterbank(const FeatureConfig& cfg) {
    cfg.validate();
    const int n_fft_bins = cfg.fft_size / 2 + 1;
    const double bin_hz = cfg.sample_rate / cfg.fft_size;

    // n_bins triangles need n_bins + 2 geometrically spaced corner
    // frequencies; consecutive centers then sit at a constant ratio.
    const int n_corners = cfg.n_bins + 2;
    const double ratio = std::pow(cfg.f_max / cfg.f_min, 1.0 / (n_corners - 1));
    std::vector<double> corners(static_cast<std::size_t>(n_corners));
    for (int i = 0; i < n_corners; ++i) corners[i] = cfg.f_min * std::pow(ratio, i);
    if (corners[1] - corners[0] <= 0.0) {
        throw ConfigError("build_filterbank: bin count infeasible for the frequency range");
    }

    FilterBank bank;
    bank.n_bins = cfg.n_bins;
    bank.n_fft_bins = n_fft_bins;
    bank.weights.assign(static_cast<std::size_t>(cfg.n_bins) * n_fft_bins, 0.0);
    bank.centers_hz.resize(cfg.n_bins);

    for (int k = 0; k < cfg.n_bins; ++k) {
        const double lo = corners[k];
        const double center = corners[k + 1];
        const double hi = corners[k + 2];
        bank.centers_hz[k] = center;

        double* row = bank.weights.data() + static_cast<std::size_t>(k) * n_fft_bins;
        const int j_lo = std::max(0, static_cast<int>(std::ceil(lo / bin_hz)));
        const int j_hi = std::min(n_fft_bins - 1, static_cast<int>(std::floor(hi / bin_hz)));
        double row_sum = 0.0;
        for (int j = j_lo; j <= j_hi; ++j) {
            const double f = j * bin_hz;
            double w = 0.0;
            if (f > lo && f <= center) {
                w = (f - lo) / (center - lo);
            } else if (f > center && f < hi) {
                w = (hi - f) / (hi - center);
            }
            row[j] = w;
            row_sum += w;
        }
        if (row_sum <= 0.0) {
            // Triangle narrower than the FFT resolution: take the nearest bin
            // so the row keeps a positive response.
            const int j = std::clamp(static_cast<int>(std::lround(center / bin_hz)), 0,
                                     n_fft_bins - 1);
            row[j] = 1.0;
        }
    }
    return bank;
}

FeatureMatrix extract_features(const AudioClip& audio, const FeatureConfig& cfg) {
    return extract_features(audio, cfg, build_filterbank(cfg));
}

FeatureMatrix extract_features(const AudioClip& audio, const FeatureConfig& cfg,
                               const FilterBank& bank) {
    cfg.validate();
    if (audio.sample_rate != cfg.sample_rate) {
        throw ConfigError("extract_features: audio sample rate " +
                          std::to_string(audio.sample_rate) + " != configured " +
                          std::to_string(cfg.sample_rate) + " (no implicit resampling)");
    }
    const auto len = static_cast<long long>(audio.samples.size());
    if (len < cfg.fft_size) {
        throw InputError("extract_features: audio of " + std::to_string(len) +
                         " samples is shorter than one FFT window (" +
                         std::to_string(cfg.fft_size) + ")");
    }
    if (bank.n_bins != cfg.n_bins || bank.n_fft_bins != cfg.fft_size / 2 + 1) {
        throw ConfigError("extract_features: filterbank does not match the configuration");
    }

    const int n_frames = static_cast<int>(len / cfg.hop) + 1;
    const int half = cfg.fft_size / 2;

    std::vector<double> window(static_cast<std::size_t>(cfg.fft_size));
    for (int i = 0; i < cfg.fft_size; ++i) {
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / cfg.fft_size);
    }

    Fft fft(static_cast<std::size_t>(cfg.fft_size));
    std::vector<double> frame(static_cast<std::size_t>(cfg.fft_size));
    std::vector<double> mags;
    FeatureMatrix features;
    features.frame_rate = cfg.frame_rate();
    features.n_frames = n_frames;
    features.n_bins = cfg.n_bins;
    features.data.resize(static_cast<std::size_t>(n_frames) * cfg.n_bins);

    for (int t = 0; t < n_frames; ++t) {
        const long long start = static_cast<long long>(t) * cfg.hop - half;
        for (int i = 0; i < cfg.fft_size; ++i) {
            const long long s = start + i;
            frame[i] = (s >= 0 && s < len) ? audio.samples[static_cast<std::size_t>(s)] * window[i]
                                           : 0.0;
        }
        fft.magnitude(frame, mags);
        float* out = features.row(t);
        for (int k = 0; k < cfg.n_bins; ++k) {
            const double* w = bank.weights.data() + static_cast<std::size_t>(k) * bank.n_fft_bins;
            double acc = 0.0;
            for (int j = 0; j < bank.n_fft_bins; ++j) acc += w[j] * mags[static_cast<std::size_t>(j)];
            out[k] = static_cast<float>(std::log1p(acc));
        }
    }
    return features;
}

void Standardization::apply(FeatureMatrix& features) const {
    if (static_cast<int>(mean.size()) != features.n_bins) {
        throw ConfigError("Standardization: fitted for " + std::to_string(mean.size()) +
                          " bins, features have " + std::to_string(features.n_bins));
    }
    for (int t = 0; t < features.n_frames; ++t) {
        float* row = features.row(t);
        for (int k = 0; k < features.n_bins; ++k) row[k] = (row[k] - mean[k]) * inv_std[k];
    }
}

Standardization fit_standardization(const std::vector<const FeatureMatrix*>& training_features) {
    if (training_features.empty()) {
        throw ArgumentError("fit_standardization: no training features");
    }
    const int n_bins = training_features.front()->n_bins;
    std::vector<double> sum(static_cast<std::size_t>(n_bins), 0.0);
    std::vector<double> sum_sq(static_cast<std::size_t>(n_bins), 0.0);
    std::size_t n_rows = 0;
    for (const FeatureMatrix* f : training_features) {
        if (f->n_bins != n_bins) throw ConfigError("fit_standardization: mixed bin counts");
        for (int t = 0; t < f->n_frames; ++t) {
            const float* row = f->row(t);
            for (int k = 0; k < n_bins; ++k) {
                sum[k] += row[k];
                sum_sq[k] += static_cast<double>(row[k]) * row[k];
            }
        }
        n_rows += static_cast<std::size_t>(f->n_frames);
    }
    if (n_rows == 0) throw ArgumentError("fit_standardization: zero training frames");

    Standardization stats;
    stats.mean.resize(static_cast<std::size_t>(n_bins));
    stats.inv_std.resize(static_cast<std::size_t>(n_bins));
    for (int k = 0; k < n_bins; ++k) {
        const double mean = sum[k] / static_cast<double>(n_rows);
        double var = sum_sq[k] / static_cast<double>(n_rows) - mean * mean;
        var = std::max(var, 0.0);
        const double std_dev = std::sqrt(var);
        stats.mean[k] = static_cast<float>(mean);
        // dead bins keep unit scale instead of amplifying noise
        stats.inv_std[k] = static_cast<float>(std_dev > 1e-8 ? 1.0 / std_dev : 1.0);
    }
    return stats;
}

void copy_window(const FeatureMatrix& features, int t, int width, float* dst) {
    const int half = width / 2;
    for (int i = 0; i < width; ++i) {
        const int src = std::clamp(t - half + i, 0, features.n_frames - 1);
        const float* row = features.row(src);
        std::copy(row, row + features.n_bins, dst + static_cast<std::size_t>(i) * features.n_bins);
    }
}

std::vector<std::vector<float>> make_windows(const FeatureMatrix& features, int width) {
    if (width < 1 || width % 2 == 0) {
        throw ArgumentError("make_windows: width must be odd, got " + std::to_string(width));
    }
    std::vector<std::vector<float>> windows(static_cast<std::size_t>(features.n_frames));
    for (int t = 0; t < features.n_frames; ++t) {
        windows[static_cast<std::size_t>(t)].resize(static_cast<std::size_t>(width) *
                                                    features.n_bins);
        copy_window(features, t, width, windows[static_cast<std::size_t>(t)].data());
    }
    return windows;
}

namespace {
constexpr char kFeatureMagic[5] = "FEAT";
constexpr std::uint32_t kFeatureVersion = 1;
} // namespace

void write_feature_cache(const FeatureMatrix& features, const std::filesystem::path& path) {
    BinWriter w;
    w.bytes(kFeatureMagic, 4);
    w.u32(kFeatureVersion);
    w.f64(features.frame_rate);
    w.u32(static_cast<std::uint32_t>(features.n_frames));
    w.u32(static_cast<std::uint32_t>(features.n_bins));
    w.f32_array(features.data.data(), features.data.size());
    w.save(path);
}

FeatureMatrix read_feature_cache(const std::filesystem::path& path) {
    BinReader r = BinReader::load(path);
    if (r.str(4) != "FEAT") throw FormatError("not a feature cache: " + path.string());
    const std::uint32_t version = r.u32();
    if (version != kFeatureVersion) {
        throw FormatError("feature cache version " + std::to_string(version) + " unsupported: " +
                          path.string());
    }
    FeatureMatrix features;
    features.frame_rate = r.f64();
    features.n_frames = static_cast<int>(r.u32());
    features.n_bins = static_cast<int>(r.u32());
    if (features.n_frames < 0 || features.n_bins <= 0) {
        throw FormatError("feature cache with invalid dimensions: " + path.string());
    }
    features.data.resize(static_cast<std::size_t>(features.n_frames) * features.n_bins);
    r.f32_array(features.data.data(), features.data.size());
    if (!r.exhausted()) throw FormatError("trailing bytes in feature cache: " + path.string());
    return features;
}

} // namespace dtb
