#include "dtb/synth.hpp"

#include "dtb/errors.hpp"
#include "dtb/rng.hpp"
#include "dtb/wav.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace dtb {

SynthPatch SynthPatch::default_patch() {
    SynthPatch patch;
    patch.n_partials = 12;
    patch.partial_amps.resize(12);
    for (int k = 0; k < 12; ++k) patch.partial_amps[k] = 1.0 / (k + 1);
    patch.partial_detune_cents.assign(12, 0.0);
    patch.decay_rate = 0.7;
    patch.attack = 0.010;
    return patch;
}

SynthPatch SynthPatch::detuned(double cents) const {
    SynthPatch out = *this;
    if (out.partial_detune_cents.empty()) out.partial_detune_cents.assign(out.n_partials, 0.0);
    for (double& d : out.partial_detune_cents) d += cents;
    return out;
}

void SynthPatch::validate() const {
    if (n_partials < 1) throw ArgumentError("SynthPatch: n_partials must be >= 1");
    if (static_cast<int>(partial_amps.size()) != n_partials) {
        throw ArgumentError("SynthPatch: partial_amps size " +
                            std::to_string(partial_amps.size()) + " != n_partials " +
                            std::to_string(n_partials));
    }
    if (partial_amps[0] != 1.0) throw ArgumentError("SynthPatch: partial_amps[0] must be 1");
    for (double a : partial_amps)
        if (a < 0.0) throw ArgumentError("SynthPatch: negative partial amplitude");
    if (!partial_detune_cents.empty() &&
        static_cast<int>(partial_detune_cents.size()) != n_partials) {
        throw ArgumentError("SynthPatch: partial_detune_cents size mismatch");
    }
    if (decay_rate < 0.0) throw ArgumentError("SynthPatch: decay_rate must be >= 0");
    if (attack < 0.0) throw ArgumentError("SynthPatch: attack must be >= 0");
}

double midi_to_hz(int midi) { return 440.0 * std::pow(2.0, (midi - 69) / 12.0); }

void peak_normalize(AudioClip& clip, double target) {
    double peak = 0.0;
    for (double s : clip.samples) peak = std::max(peak, std::abs(s));
    if (peak <= 0.0) return;
    const double scale = target / peak;
    for (double& s : clip.samples) s *= scale;
}

namespace {

AudioClip render_note_raw(Pitch pitch, double duration, const SynthPatch& patch,
                          double sample_rate) {
    if (duration <= 0.0) throw ArgumentError("render_note: duration must be positive");
    if (sample_rate <= 0.0) throw ArgumentError("render_note: sample_rate must be positive");
    patch.validate();

    const double f0 = midi_to_hz(pitch.midi);
    const double nyquist = sample_rate / 2.0;
    const auto n = static_cast<std::size_t>(std::llround(duration * sample_rate));

    AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.samples.assign(n, 0.0);

    for (int k = 0; k < patch.n_partials; ++k) {
        const double detune =
            patch.partial_detune_cents.empty() ? 0.0 : patch.partial_detune_cents[k];
        const double freq = (k + 1) * f0 * std::pow(2.0, detune / 1200.0);
        if (freq >= nyquist) continue; // drop partials at or above Nyquist
        const double amp = patch.partial_amps[k];
        if (amp == 0.0) continue;
        const double omega = 2.0 * std::numbers::pi * freq / sample_rate;
        const double decay_per_sample = patch.decay_rate / sample_rate;
        for (std::size_t i = 0; i < n; ++i) {
            clip.samples[i] += amp * std::exp(-decay_per_sample * static_cast<double>(i)) *
                               std::sin(omega * static_cast<double>(i));
        }
    }

    if (patch.attack > 0.0) {
        const auto ramp = static_cast<std::size_t>(patch.attack * sample_rate);
        for (std::size_t i = 0; i < std::min(ramp, n); ++i) {
            clip.samples[i] *= static_cast<double>(i) / static_cast<double>(ramp);
        }
    }
    return clip;
}

} // namespace

AudioClip render_note(Pitch pitch, double duration, const SynthPatch& patch, double sample_rate) {
    AudioClip clip = render_note_raw(pitch, duration, patch, sample_rate);
    peak_normalize(clip);
    return clip;
}

AudioClip mix_notes(const NoteCombination& combo, double duration, const SynthPatch& patch,
                    double sample_rate) {
    if (combo.empty()) throw ArgumentError("mix_notes: empty combination");
    AudioClip mix;
    mix.sample_rate = sample_rate;
    for (const Pitch& p : combo.pitches()) {
        AudioClip note = render_note(p, duration, patch, sample_rate);
        if (mix.samples.empty()) {
            mix.samples = std::move(note.samples);
        } else {
            for (std::size_t i = 0; i < mix.samples.size(); ++i)
                mix.samples[i] += note.samples[i];
        }
    }
    return mix;
}

AudioClip render_combination(const NoteCombination& combo, double duration,
                             const SynthPatch& patch, double sample_rate) {
    AudioClip clip = mix_notes(combo, duration, patch, sample_rate);
    peak_normalize(clip);
    return clip;
}

std::string to_string(DatasetMode mode) {
    return mode == DatasetMode::kCombi ? "COMBI" : "ISOL";
}

DatasetMode dataset_mode_from_string(const std::string& s) {
    if (s == "COMBI") return DatasetMode::kCombi;
    if (s == "ISOL") return DatasetMode::kIsol;
    throw ArgumentError("unknown dataset mode '" + s + "' (expected COMBI or ISOL)");
}

const DatasetSplit& DatasetManifest::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "valid") return valid;
    if (name == "test") return test;
    throw ArgumentError("unknown split '" + name + "' (expected train, valid or test)");
}

namespace {

std::string pitch_tag(Pitch p) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%03d", p.midi);
    return buf;
}

std::vector<NoteCombination> isolated_combos(Pitch lo, Pitch hi) {
    std::vector<NoteCombination> out;
    for (int m = lo.midi; m <= hi.midi; ++m) out.push_back(NoteCombination{m});
    return out;
}

std::vector<NoteCombination> interval_combos(Pitch lo, Pitch hi) {
    std::vector<NoteCombination> out;
    for (int a = lo.midi; a <= hi.midi; ++a)
        for (int b = a + 1; b <= hi.midi; ++b) out.push_back(NoteCombination{a, b});
    return out;
}

std::string item_id(const NoteCombination& combo) {
    std::string id = combo.size() == 1 ? "note" : "interval";
    for (const Pitch& p : combo.pitches()) id += "_" + pitch_tag(p);
    return id;
}

DatasetSplit render_split(const std::vector<NoteCombination>& combos,
                          const FluidDatasetParams& params, bool jitter,
                          std::uint64_t stream_id) {
    DatasetSplit split;
    split.items.reserve(combos.size());
    for (std::size_t i = 0; i < combos.size(); ++i) {
        const NoteCombination& combo = combos[i];
        DatasetItem item;
        item.id = item_id(combo);
        item.combination = combo;

        if (jitter) {
            // per-note whole-clip detune, deterministic in (seed, split, item, note)
            AudioClip mix;
            mix.sample_rate = params.sample_rate;
            std::size_t note_idx = 0;
            for (const Pitch& p : combo.pitches()) {
                Rng rng = Rng::derive(params.seed, {stream_id, i, note_idx++});
                const double cents =
                    rng.uniform(-params.valid_jitter_cents, params.valid_jitter_cents);
                AudioClip note =
                    render_note(p, params.duration, params.patch.detuned(cents), params.sample_rate);
                if (mix.samples.empty()) {
                    mix.samples = std::move(note.samples);
                } else {
                    for (std::size_t s = 0; s < mix.samples.size(); ++s)
                        mix.samples[s] += note.samples[s];
                }
            }
            peak_normalize(mix);
            item.audio = std::move(mix);
        } else {
            item.audio =
                render_combination(combo, params.duration, params.patch, params.sample_rate);
        }

        for (const Pitch& p : combo.pitches())
            item.events.emplace_back(0.0, params.duration, p);
        split.items.push_back(std::move(item));
    }
    return split;
}

} // namespace

DatasetManifest build_fluid_dataset(const FluidDatasetParams& params) {
    if (params.pitch_hi.midi <= params.pitch_lo.midi) {
        throw ArgumentError("build_fluid_dataset: degenerate pitch range [" +
                            std::to_string(params.pitch_lo.midi) + ", " +
                            std::to_string(params.pitch_hi.midi) + "] (need >= 2 pitches)");
    }
    if (params.duration <= 0.0) throw ArgumentError("build_fluid_dataset: duration must be positive");
    params.patch.validate();

    const auto singles = isolated_combos(params.pitch_lo, params.pitch_hi);
    const auto intervals = interval_combos(params.pitch_lo, params.pitch_hi);

    DatasetManifest manifest;
    manifest.mode = params.mode;
    manifest.pitch_lo = params.pitch_lo;
    manifest.pitch_hi = params.pitch_hi;
    manifest.duration = params.duration;
    manifest.sample_rate = params.sample_rate;
    manifest.seed = params.seed;

    const auto& train_combos = params.mode == DatasetMode::kCombi ? intervals : singles;
    const auto& test_combos = params.mode == DatasetMode::kCombi ? singles : intervals;

    manifest.train = render_split(train_combos, params, /*jitter=*/false, 0);
    manifest.valid = render_split(train_combos, params, /*jitter=*/true, 1);
    manifest.test = render_split(test_combos, params, /*jitter=*/false, 2);
    return manifest;
}

void write_dataset(const DatasetManifest& manifest, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    nlohmann::json j;
    j["mode"] = to_string(manifest.mode);
    j["pitch_lo"] = manifest.pitch_lo.midi;
    j["pitch_hi"] = manifest.pitch_hi.midi;
    j["duration"] = manifest.duration;
    j["sample_rate"] = manifest.sample_rate;
    j["seed"] = manifest.seed;

    const std::pair<const char*, const DatasetSplit*> splits[] = {
        {"train", &manifest.train}, {"valid", &manifest.valid}, {"test", &manifest.test}};
    for (const auto& [name, split] : splits) {
        fs::create_directories(dir / name);
        nlohmann::json items = nlohmann::json::array();
        for (const DatasetItem& item : split->items) {
            const fs::path wav = fs::path(name) / (item.id + ".wav");
            const fs::path labels = fs::path(name) / (item.id + ".txt");
            write_wav16(item.audio, dir / wav);
            write_ground_truth(item.events, dir / labels);
            items.push_back({{"id", item.id},
                             {"wav", wav.generic_string()},
                             {"labels", labels.generic_string()},
                             {"combination", item.combination.to_string()}});
        }
        j["splits"][name] = std::move(items);
    }

    std::ofstream out(dir / "manifest.json");
    if (!out) throw InputError("write_dataset: cannot open manifest in " + dir.string());
    out << j.dump(2) << '\n';
}

const std::vector<DatasetItemRef>& DatasetLayout::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "valid") return valid;
    if (name == "test") return test;
    throw ArgumentError("unknown dataset split '" + name + "' (expected train, valid, or test)");
}

namespace {

NoteCombination parse_combination(const std::string& text) {
    std::istringstream in(text);
    std::vector<Pitch> pitches;
    int midi = 0;
    while (in >> midi) pitches.push_back(Pitch{midi});
    if (pitches.empty())
        throw FormatError("manifest combination '" + text + "' holds no MIDI numbers");
    return NoteCombination(pitches);
}

} // namespace

DatasetLayout read_dataset_layout(const std::filesystem::path& dir) {
    const std::filesystem::path manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw InputError("cannot open " + manifest_path.string());

    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(manifest_path.string() + ": " + e.what());
    }

    DatasetLayout layout;
    try {
        layout.mode = dataset_mode_from_string(j.at("mode").get<std::string>());
        layout.pitch_lo = Pitch{j.at("pitch_lo").get<int>()};
        layout.pitch_hi = Pitch{j.at("pitch_hi").get<int>()};
        layout.duration = j.at("duration").get<double>();
        layout.sample_rate = j.at("sample_rate").get<double>();
        layout.seed = j.at("seed").get<std::uint64_t>();

        const std::pair<const char*, std::vector<DatasetItemRef>*> splits[] = {
            {"train", &layout.train}, {"valid", &layout.valid}, {"test", &layout.test}};
        for (const auto& [name, refs] : splits) {
            for (const nlohmann::json& item : j.at("splits").at(name)) {
                DatasetItemRef ref;
                ref.id = item.at("id").get<std::string>();
                ref.combination = parse_combination(item.at("combination").get<std::string>());
                ref.wav = dir / std::filesystem::path(item.at("wav").get<std::string>());
                ref.labels = dir / std::filesystem::path(item.at("labels").get<std::string>());
                refs->push_back(std::move(ref));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(manifest_path.string() + ": " + e.what());
    }
    return layout;
}

} // namespace dtb
