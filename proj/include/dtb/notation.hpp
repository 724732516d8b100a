#pragma once

#include "dtb/bigint.hpp"

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dtb {

/// A MIDI note number. Plain 0..127 here; dataset-specific ranges are
/// enforced where events are ingested.
struct Pitch {
    int midi = 0;

    auto operator<=>(const Pitch&) const = default;
};

constexpr Pitch kPianoLow{21};   // A0
constexpr Pitch kPianoHigh{108}; // C8
constexpr int kPianoRange = 88;

constexpr Pitch kFluidLow{49};  // 11 semitones below C4
constexpr Pitch kFluidHigh{71}; // 11 semitones above C4
constexpr int kFluidRange = 23;

/// One played note: [onset, offset) in seconds plus pitch and an optional
/// normalized amplitude.
struct NoteEvent {
    double onset = 0.0;
    double offset = 0.0;
    Pitch pitch{};
    std::optional<double> amplitude;

    NoteEvent() = default;
    NoteEvent(double onset_s, double offset_s, Pitch p,
              std::optional<double> amp = std::nullopt);

    auto operator<=>(const NoteEvent&) const = default;
};

/// The canonical set of simultaneously active pitches: sorted, duplicate
/// free, empty meaning silence. Hashable and ordered so it can key maps.
class NoteCombination {
public:
    NoteCombination() = default;
    explicit NoteCombination(std::vector<Pitch> pitches);
    NoteCombination(std::initializer_list<int> midi);

    bool empty() const { return pitches_.empty(); }
    std::size_t size() const { return pitches_.size(); }
    const std::vector<Pitch>& pitches() const { return pitches_; }
    bool contains(Pitch p) const;

    /// Space-separated MIDI numbers, e.g. "60 64 67"; empty string for silence.
    std::string to_string() const;

    auto operator<=>(const NoteCombination&) const = default;

private:
    std::vector<Pitch> pitches_;
};

/// Frame-indexed binary pitch-activity matrix: n_frames x n_pitches entries
/// in {0,1}, pitch column p covering MIDI pitch_lo + p.
class PianoRoll {
public:
    PianoRoll() = default;
    PianoRoll(double frame_rate, Pitch pitch_lo, int n_pitches, int n_frames);

    double frame_rate() const { return frame_rate_; }
    Pitch pitch_lo() const { return pitch_lo_; }
    int n_pitches() const { return n_pitches_; }
    int n_frames() const { return n_frames_; }

    bool at(int frame, int pitch_index) const;
    void set(int frame, int pitch_index, bool active);

    bool at_pitch(int frame, Pitch p) const { return at(frame, pitch_index(p)); }
    int pitch_index(Pitch p) const;

    bool operator==(const PianoRoll&) const = default;

private:
    void check_frame(int frame) const;

    double frame_rate_ = 0.0;
    Pitch pitch_lo_{};
    int n_pitches_ = 0;
    int n_frames_ = 0;
    std::vector<std::uint8_t> data_;
};

/// Rasterize note events onto a frame grid. Cell (t, p) is active iff some
/// event with pitch p covers the frame-center time t / frame_rate under
/// half-open [onset, offset) semantics.
PianoRoll events_to_pianoroll(const std::vector<NoteEvent>& events, double frame_rate,
                              int n_frames, Pitch pitch_lo, int n_pitches);

/// The canonical combination active at frame t.
NoteCombination active_set(const PianoRoll& roll, int t);

/// Sum of binomial coefficients C(n, i) for i in [k_min, k_max], computed
/// exactly with big integers (Pascal's triangle).
BigUint count_combinations(int n, int k_min, int k_max);

// --- persistence -----------------------------------------------------------

/// CSV export: one row per frame, "frame,b0,b1,...,b{K-1}".
void write_roll_csv(const PianoRoll& roll, const std::filesystem::path& path);
PianoRoll read_roll_csv(const std::filesystem::path& path, double frame_rate, Pitch pitch_lo);

/// Ground-truth text format: header "OnsetTime OffsetTime MidiPitch", then
/// one whitespace-separated event per line.
void write_ground_truth(const std::vector<NoteEvent>& events, const std::filesystem::path& path);
std::vector<NoteEvent> read_ground_truth(const std::filesystem::path& path);

} // namespace dtb
