#include "dtb/notation.hpp"

#include "dtb/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dtb {

NoteEvent::NoteEvent(double onset_s, double offset_s, Pitch p, std::optional<double> amp)
    : onset(onset_s), offset(offset_s), pitch(p), amplitude(amp) {
    if (!(offset > onset)) {
        throw ArgumentError("NoteEvent: offset (" + std::to_string(offset_s) +
                            ") must be greater than onset (" + std::to_string(onset_s) + ")");
    }
    if (amplitude && (*amplitude < 0.0 || *amplitude > 1.0)) {
        throw ArgumentError("NoteEvent: amplitude " + std::to_string(*amplitude) +
                            " outside [0,1]");
    }
}

NoteCombination::NoteCombination(std::vector<Pitch> pitches) : pitches_(std::move(pitches)) {
    std::sort(pitches_.begin(), pitches_.end());
    pitches_.erase(std::unique(pitches_.begin(), pitches_.end()), pitches_.end());
}

NoteCombination::NoteCombination(std::initializer_list<int> midi) {
    pitches_.reserve(midi.size());
    for (int m : midi) pitches_.push_back(Pitch{m});
    std::sort(pitches_.begin(), pitches_.end());
    pitches_.erase(std::unique(pitches_.begin(), pitches_.end()), pitches_.end());
}

bool NoteCombination::contains(Pitch p) const {
    return std::binary_search(pitches_.begin(), pitches_.end(), p);
}

std::string NoteCombination::to_string() const {
    std::string out;
    for (std::size_t i = 0; i < pitches_.size(); ++i) {
        if (i > 0) out += ' ';
        out += std::to_string(pitches_[i].midi);
    }
    return out;
}

PianoRoll::PianoRoll(double frame_rate, Pitch pitch_lo, int n_pitches, int n_frames)
    : frame_rate_(frame_rate), pitch_lo_(pitch_lo), n_pitches_(n_pitches), n_frames_(n_frames) {
    if (frame_rate <= 0.0) throw ArgumentError("PianoRoll: frame_rate must be positive");
    if (n_pitches <= 0) throw ArgumentError("PianoRoll: n_pitches must be positive");
    if (n_frames < 0) throw ArgumentError("PianoRoll: n_frames must be non-negative");
    data_.assign(static_cast<std::size_t>(n_frames) * n_pitches, 0u);
}

void PianoRoll::check_frame(int frame) const {
    if (frame < 0 || frame >= n_frames_) {
        throw IndexError("PianoRoll: frame " + std::to_string(frame) + " out of bounds [0, " +
                         std::to_string(n_frames_) + ")");
    }
}

bool PianoRoll::at(int frame, int pitch_index) const {
    check_frame(frame);
    if (pitch_index < 0 || pitch_index >= n_pitches_) {
        throw IndexError("PianoRoll: pitch index " + std::to_string(pitch_index) +
                         " out of bounds [0, " + std::to_string(n_pitches_) + ")");
    }
    return data_[static_cast<std::size_t>(frame) * n_pitches_ + pitch_index] != 0;
}

void PianoRoll::set(int frame, int pitch_index, bool active) {
    check_frame(frame);
    if (pitch_index < 0 || pitch_index >= n_pitches_) {
        throw IndexError("PianoRoll: pitch index " + std::to_string(pitch_index) +
                         " out of bounds [0, " + std::to_string(n_pitches_) + ")");
    }
    data_[static_cast<std::size_t>(frame) * n_pitches_ + pitch_index] = active ? 1u : 0u;
}

int PianoRoll::pitch_index(Pitch p) const {
    const int idx = p.midi - pitch_lo_.midi;
    if (idx < 0 || idx >= n_pitches_) {
        throw RangeError("PianoRoll: MIDI pitch " + std::to_string(p.midi) +
                         " outside roll range [" + std::to_string(pitch_lo_.midi) + ", " +
                         std::to_string(pitch_lo_.midi + n_pitches_) + ")");
    }
    return idx;
}

PianoRoll events_to_pianoroll(const std::vector<NoteEvent>& events, double frame_rate,
                              int n_frames, Pitch pitch_lo, int n_pitches) {
    PianoRoll roll(frame_rate, pitch_lo, n_pitches, n_frames);
    for (const NoteEvent& ev : events) {
        const int idx = ev.pitch.midi - pitch_lo.midi;
        if (idx < 0 || idx >= n_pitches) {
            throw RangeError("events_to_pianoroll: event (onset " + std::to_string(ev.onset) +
                             "s, MIDI " + std::to_string(ev.pitch.midi) + ") outside pitch range [" +
                             std::to_string(pitch_lo.midi) + ", " +
                             std::to_string(pitch_lo.midi + n_pitches) + ")");
        }
        // frame t samples time t / frame_rate; active on [onset, offset)
        const int first = static_cast<int>(std::ceil(ev.onset * frame_rate - 1e-9));
        for (int t = std::max(first, 0); t < n_frames; ++t) {
            const double time = static_cast<double>(t) / frame_rate;
            if (time >= ev.offset) break;
            if (time >= ev.onset) roll.set(t, idx, true);
        }
    }
    return roll;
}

NoteCombination active_set(const PianoRoll& roll, int t) {
    std::vector<Pitch> pitches;
    for (int p = 0; p < roll.n_pitches(); ++p) {
        if (roll.at(t, p)) pitches.push_back(Pitch{roll.pitch_lo().midi + p});
    }
    return NoteCombination(std::move(pitches));
}

BigUint count_combinations(int n, int k_min, int k_max) {
    if (n < 0 || k_min < 0 || k_min > k_max || k_max > n) {
        throw ArgumentError("count_combinations: need 0 <= k_min <= k_max <= n, got n=" +
                            std::to_string(n) + " k_min=" + std::to_string(k_min) +
                            " k_max=" + std::to_string(k_max));
    }
    // Pascal's triangle, one row at a time; only additions, so BigUint suffices.
    std::vector<BigUint> row{BigUint(1)};
    for (int i = 1; i <= n; ++i) {
        std::vector<BigUint> next(static_cast<std::size_t>(i) + 1, BigUint(1));
        for (int k = 1; k < i; ++k) next[k] = row[k - 1] + row[k];
        row = std::move(next);
    }
    BigUint total(0);
    for (int k = k_min; k <= k_max; ++k) total += row[static_cast<std::size_t>(k)];
    return total;
}

void write_roll_csv(const PianoRoll& roll, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("write_roll_csv: cannot open " + path.string());
    for (int t = 0; t < roll.n_frames(); ++t) {
        out << t;
        for (int p = 0; p < roll.n_pitches(); ++p) out << ',' << (roll.at(t, p) ? 1 : 0);
        out << '\n';
    }
    if (!out) throw InputError("write_roll_csv: write failed for " + path.string());
}

PianoRoll read_roll_csv(const std::filesystem::path& path, double frame_rate, Pitch pitch_lo) {
    std::ifstream in(path);
    if (!in) throw InputError("read_roll_csv: cannot open " + path.string());
    std::vector<std::vector<std::uint8_t>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::uint8_t> bits;
        std::stringstream ss(line);
        std::string cell;
        bool first = true;
        while (std::getline(ss, cell, ',')) {
            if (first) { // frame index column
                first = false;
                continue;
            }
            if (cell != "0" && cell != "1") {
                throw FormatError("read_roll_csv: non-binary cell '" + cell + "' in " +
                                  path.string());
            }
            bits.push_back(cell == "1" ? 1u : 0u);
        }
        if (!rows.empty() && bits.size() != rows.front().size()) {
            throw FormatError("read_roll_csv: ragged rows in " + path.string());
        }
        rows.push_back(std::move(bits));
    }
    if (rows.empty()) throw FormatError("read_roll_csv: empty file " + path.string());
    PianoRoll roll(frame_rate, pitch_lo, static_cast<int>(rows.front().size()),
                   static_cast<int>(rows.size()));
    for (int t = 0; t < roll.n_frames(); ++t)
        for (int p = 0; p < roll.n_pitches(); ++p)
            roll.set(t, p, rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)] != 0);
    return roll;
}

void write_ground_truth(const std::vector<NoteEvent>& events, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("write_ground_truth: cannot open " + path.string());
    out << "OnsetTime OffsetTime MidiPitch\n";
    char buf[96];
    for (const NoteEvent& ev : events) {
        std::snprintf(buf, sizeof(buf), "%.6f %.6f %d\n", ev.onset, ev.offset, ev.pitch.midi);
        out << buf;
    }
    if (!out) throw InputError("write_ground_truth: write failed for " + path.string());
}

std::vector<NoteEvent> read_ground_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("read_ground_truth: cannot open " + path.string());
    std::string header;
    if (!std::getline(in, header)) throw FormatError("read_ground_truth: empty file " + path.string());
    // MAPS-compatible: tolerate tab or space separation in the header
    {
        std::istringstream hs(header);
        std::string a, b, c;
        hs >> a >> b >> c;
        if (a != "OnsetTime" || b != "OffsetTime" || c != "MidiPitch") {
            throw FormatError("read_ground_truth: unexpected header '" + header + "' in " +
                              path.string());
        }
    }
    std::vector<NoteEvent> events;
    std::string line;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        std::istringstream ls(line);
        double onset = 0.0, offset = 0.0;
        int midi = 0;
        if (!(ls >> onset >> offset >> midi)) {
            throw FormatError("read_ground_truth: malformed line " + std::to_string(line_no) +
                              " in " + path.string());
        }
        events.emplace_back(onset, offset, Pitch{midi});
    }
    return events;
}

} // namespace dtb
