#pragma once

#include "dtb/notation.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dtb {

/// Additive-synthesis voice: harmonic partials with per-partial relative
/// amplitude and detune, a global exponential decay, and a linear attack ramp.
struct SynthPatch {
    int n_partials = 12;
    std::vector<double> partial_amps;         // [0] is the fundamental, always 1
    std::vector<double> partial_detune_cents; // per-partial detune, default 0
    double decay_rate = 0.7;                  // 1/s exponential amplitude decay
    double attack = 0.010;                    // seconds, linear ramp

    /// 1/k amplitude rolloff over `n_partials` partials, no detune.
    static SynthPatch default_patch();

    /// Same patch with `cents` added to every partial's detune (whole-note
    /// detune; used for the jittered validation renders).
    SynthPatch detuned(double cents) const;

    void validate() const;
};

struct AudioClip {
    double sample_rate = 44100.0;
    std::vector<double> samples; // peak magnitude <= 1 after normalization

    double duration() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

double midi_to_hz(int midi);

/// Render one note: sum of sinusoidal partials at f_k = k*f0*2^(detune_k/1200),
/// each scaled by amps[k]*exp(-decay*t), with the attack ramp applied, then
/// peak-normalized to 0.9. Partials at or above Nyquist are dropped.
AudioClip render_note(Pitch pitch, double duration, const SynthPatch& patch, double sample_rate);

/// Sample-wise sum of render_note outputs, no normalization.
AudioClip mix_notes(const NoteCombination& combo, double duration, const SynthPatch& patch,
                    double sample_rate);

/// mix_notes followed by joint peak normalization to 0.9. All notes share
/// onset 0 and offset = duration.
AudioClip render_combination(const NoteCombination& combo, double duration,
                             const SynthPatch& patch, double sample_rate);

/// Peak-normalize in place so max |sample| == target (no-op on silence).
void peak_normalize(AudioClip& clip, double target = 0.9);

// --- FLUID dataset protocol --------------------------------------------------

enum class DatasetMode { kCombi, kIsol };

std::string to_string(DatasetMode mode);
DatasetMode dataset_mode_from_string(const std::string& s);

/// One dataset item: deterministic id, rendered audio, and exact ground truth.
struct DatasetItem {
    std::string id;
    NoteCombination combination;
    AudioClip audio;
    std::vector<NoteEvent> events;
};

struct DatasetSplit {
    std::vector<DatasetItem> items;
};

/// COMBI: train/valid are all two-note intervals over the range, test the
/// isolated notes; ISOL swaps the roles. The validation split is a re-render
/// with a seeded +/-3 cent whole-note detune jitter.
struct DatasetManifest {
    DatasetMode mode = DatasetMode::kCombi;
    Pitch pitch_lo{};
    Pitch pitch_hi{};
    double duration = 2.0;
    double sample_rate = 44100.0;
    std::uint64_t seed = 1;
    DatasetSplit train, valid, test;

    const DatasetSplit& split(const std::string& name) const;
};

struct FluidDatasetParams {
    DatasetMode mode = DatasetMode::kCombi;
    Pitch pitch_lo = kFluidLow;
    Pitch pitch_hi = kFluidHigh; // inclusive
    double duration = 2.0;
    double sample_rate = 44100.0;
    SynthPatch patch = SynthPatch::default_patch();
    double valid_jitter_cents = 3.0;
    std::uint64_t seed = 1;
};

DatasetManifest build_fluid_dataset(const FluidDatasetParams& params);

/// Write WAVs + ground-truth text files + manifest.json under dir:
/// dir/<split>/<id>.wav and dir/<split>/<id>.txt.
void write_dataset(const DatasetManifest& manifest, const std::filesystem::path& dir);

/// On-disk view of one dataset item: audio stays on disk until loaded.
struct DatasetItemRef {
    std::string id;
    NoteCombination combination;
    std::filesystem::path wav;    // absolute
    std::filesystem::path labels; // absolute
};

struct DatasetLayout {
    DatasetMode mode = DatasetMode::kCombi;
    Pitch pitch_lo{};
    Pitch pitch_hi{};
    double duration = 0.0;
    double sample_rate = 0.0;
    std::uint64_t seed = 0;
    std::vector<DatasetItemRef> train, valid, test;

    const std::vector<DatasetItemRef>& split(const std::string& name) const;
};

/// Parse dir/manifest.json (as written by write_dataset).
DatasetLayout read_dataset_layout(const std::filesystem::path& dir);

} // namespace dtb
