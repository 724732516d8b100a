#include "dtb/config.hpp"

#include "dtb/errors.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

namespace dtb {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return {};
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& want) {
    throw ConfigError("key '" + key + "': cannot parse '" + value + "' as " + want);
}

long long to_int(const std::string& key, const std::string& value) {
    long long out = 0;
    const char* last = value.data() + value.size();
    auto [p, ec] = std::from_chars(value.data(), last, out);
    if (ec != std::errc{} || p != last) bad_value(key, value, "an integer");
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
    std::uint64_t out = 0;
    const char* last = value.data() + value.size();
    auto [p, ec] = std::from_chars(value.data(), last, out);
    if (ec != std::errc{} || p != last) bad_value(key, value, "a non-negative integer");
    return out;
}

double to_double(const std::string& key, const std::string& value) {
    double out = 0.0;
    const char* last = value.data() + value.size();
    auto [p, ec] = std::from_chars(value.data(), last, out);
    if (ec != std::errc{} || p != last) bad_value(key, value, "a number");
    return out;
}

bool to_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    bad_value(key, value, "a boolean (true/false)");
}

/// Shortest round-trip decimal form, so render -> parse -> render is stable.
std::string fmt(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw NumericalError("cannot format double");
    return std::string(buf, p);
}

/// 1/k amplitude rolloff, zero detune — default_patch generalized to n.
SynthPatch rolloff_patch(int n_partials, double decay_rate, double attack) {
    SynthPatch patch;
    patch.n_partials = n_partials;
    patch.partial_amps.resize(n_partials);
    for (int k = 0; k < n_partials; ++k) patch.partial_amps[k] = 1.0 / (k + 1);
    patch.partial_detune_cents.assign(n_partials, 0.0);
    patch.decay_rate = decay_rate;
    patch.attack = attack;
    return patch;
}

} // namespace

void ExperimentConfig::validate() const {
    if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
    if (dataset.pitch_lo.midi > dataset.pitch_hi.midi) {
        throw ConfigError("dataset.low " + std::to_string(dataset.pitch_lo.midi) +
                          " exceeds dataset.high " + std::to_string(dataset.pitch_hi.midi));
    }
    if (dataset.pitch_lo.midi < kPianoLow.midi ||
        dataset.pitch_hi.midi > kPianoLow.midi + kPianoRange - 1) {
        throw ConfigError("dataset range " + std::to_string(dataset.pitch_lo.midi) + "-" +
                          std::to_string(dataset.pitch_hi.midi) + " leaves the piano range " +
                          std::to_string(kPianoLow.midi) + "-" +
                          std::to_string(kPianoLow.midi + kPianoRange - 1));
    }
    if (dataset.duration <= 0.0) throw ConfigError("dataset.duration must be > 0");
    if (dataset.sample_rate <= 0.0) throw ConfigError("dataset.sample_rate must be > 0");
    if (dataset.valid_jitter_cents < 0.0)
        throw ConfigError("dataset.valid_jitter_cents must be >= 0");
    dataset.patch.validate();
    features.validate();
    train.validate();
    nmf.validate();
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
    const auto patch_eq = [](const SynthPatch& a, const SynthPatch& b) {
        return a.n_partials == b.n_partials && a.partial_amps == b.partial_amps &&
               a.partial_detune_cents == b.partial_detune_cents &&
               a.decay_rate == b.decay_rate && a.attack == b.attack;
    };
    return out_dir == o.out_dir && seed == o.seed && dataset.mode == o.dataset.mode &&
           dataset.pitch_lo.midi == o.dataset.pitch_lo.midi &&
           dataset.pitch_hi.midi == o.dataset.pitch_hi.midi &&
           dataset.duration == o.dataset.duration &&
           dataset.sample_rate == o.dataset.sample_rate &&
           dataset.valid_jitter_cents == o.dataset.valid_jitter_cents &&
           dataset.seed == o.dataset.seed && patch_eq(dataset.patch, o.dataset.patch) &&
           features.sample_rate == o.features.sample_rate &&
           features.fft_size == o.features.fft_size && features.hop == o.features.hop &&
           features.n_bins == o.features.n_bins && features.f_min == o.features.f_min &&
           features.f_max == o.features.f_max && arch == o.arch && train.lr == o.train.lr &&
           train.momentum == o.train.momentum && train.batch_size == o.train.batch_size &&
           train.max_epochs == o.train.max_epochs && train.lr_patience == o.train.lr_patience &&
           train.stop_patience == o.train.stop_patience && train.dropout == o.train.dropout &&
           train.threshold == o.train.threshold && train.seed == o.train.seed &&
           nmf.rank == o.nmf.rank && nmf.max_iters == o.nmf.max_iters &&
           nmf.tolerance == o.nmf.tolerance && nmf.threshold == o.nmf.threshold &&
           nmf.floor_abs == o.nmf.floor_abs;
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    ExperimentConfig cfg;
    int n_partials = cfg.dataset.patch.n_partials;
    double decay_rate = cfg.dataset.patch.decay_rate;
    double attack = cfg.dataset.patch.attack;

    using Setter = std::function<void(const std::string&, const std::string&)>;
    const std::map<std::string, Setter> keys = {
        {"out_dir", [&](const std::string&, const std::string& v) { cfg.out_dir = v; }},
        {"mode",
         [&](const std::string& k, const std::string& v) {
             try {
                 cfg.dataset.mode = dataset_mode_from_string(v);
             } catch (const Error&) {
                 bad_value(k, v, "a dataset mode (COMBI/ISOL)");
             }
         }},
        {"seed", [&](const std::string& k, const std::string& v) { cfg.seed = to_u64(k, v); }},
        {"arch",
         [&](const std::string& k, const std::string& v) {
             try {
                 cfg.arch = nn::arch_from_string(v);
             } catch (const Error&) {
                 bad_value(k, v, "an architecture (CONVNET/SMALLCONVNET/AUNET)");
             }
         }},
        {"dataset.low",
         [&](const std::string& k, const std::string& v) {
             cfg.dataset.pitch_lo = Pitch{static_cast<int>(to_int(k, v))};
         }},
        {"dataset.high",
         [&](const std::string& k, const std::string& v) {
             cfg.dataset.pitch_hi = Pitch{static_cast<int>(to_int(k, v))};
         }},
        {"dataset.duration",
         [&](const std::string& k, const std::string& v) { cfg.dataset.duration = to_double(k, v); }},
        {"dataset.sample_rate",
         [&](const std::string& k, const std::string& v) {
             cfg.dataset.sample_rate = to_double(k, v);
         }},
        {"dataset.valid_jitter_cents",
         [&](const std::string& k, const std::string& v) {
             cfg.dataset.valid_jitter_cents = to_double(k, v);
         }},
        {"dataset.partials",
         [&](const std::string& k, const std::string& v) {
             n_partials = static_cast<int>(to_int(k, v));
         }},
        {"dataset.decay_rate",
         [&](const std::string& k, const std::string& v) { decay_rate = to_double(k, v); }},
        {"dataset.attack",
         [&](const std::string& k, const std::string& v) { attack = to_double(k, v); }},
        {"features.fft_size",
         [&](const std::string& k, const std::string& v) {
             cfg.features.fft_size = static_cast<int>(to_int(k, v));
         }},
        {"features.hop",
         [&](const std::string& k, const std::string& v) {
             cfg.features.hop = static_cast<int>(to_int(k, v));
         }},
        {"features.n_bins",
         [&](const std::string& k, const std::string& v) {
             cfg.features.n_bins = static_cast<int>(to_int(k, v));
         }},
        {"features.f_min",
         [&](const std::string& k, const std::string& v) { cfg.features.f_min = to_double(k, v); }},
        {"features.f_max",
         [&](const std::string& k, const std::string& v) { cfg.features.f_max = to_double(k, v); }},
        {"train.lr",
         [&](const std::string& k, const std::string& v) { cfg.train.lr = to_double(k, v); }},
        {"train.momentum",
         [&](const std::string& k, const std::string& v) { cfg.train.momentum = to_double(k, v); }},
        {"train.batch_size",
         [&](const std::string& k, const std::string& v) {
             cfg.train.batch_size = static_cast<int>(to_int(k, v));
         }},
        {"train.max_epochs",
         [&](const std::string& k, const std::string& v) {
             cfg.train.max_epochs = static_cast<int>(to_int(k, v));
         }},
        {"train.lr_patience",
         [&](const std::string& k, const std::string& v) {
             cfg.train.lr_patience = static_cast<int>(to_int(k, v));
         }},
        {"train.stop_patience",
         [&](const std::string& k, const std::string& v) {
             cfg.train.stop_patience = static_cast<int>(to_int(k, v));
         }},
        {"train.dropout",
         [&](const std::string& k, const std::string& v) { cfg.train.dropout = to_bool(k, v); }},
        {"train.threshold",
         [&](const std::string& k, const std::string& v) { cfg.train.threshold = to_double(k, v); }},
        {"nmf.rank",
         [&](const std::string& k, const std::string& v) {
             cfg.nmf.rank = static_cast<int>(to_int(k, v));
         }},
        {"nmf.max_iters",
         [&](const std::string& k, const std::string& v) {
             cfg.nmf.max_iters = static_cast<int>(to_int(k, v));
         }},
        {"nmf.tolerance",
         [&](const std::string& k, const std::string& v) { cfg.nmf.tolerance = to_double(k, v); }},
        {"nmf.threshold",
         [&](const std::string& k, const std::string& v) { cfg.nmf.threshold = to_double(k, v); }},
        {"nmf.floor_abs",
         [&](const std::string& k, const std::string& v) { cfg.nmf.floor_abs = to_double(k, v); }},
    };

    std::map<std::string, int> seen; // key -> first line
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": expected 'key = value', got '" + line + "'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": expected 'key = value', got '" + line + "'");
        }
        const auto it = keys.find(key);
        if (it == keys.end()) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": unknown key '" + key +
                              "'");
        }
        if (const auto [prev, inserted] = seen.emplace(key, lineno); !inserted) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key +
                              "' (first set on line " + std::to_string(prev->second) + ")");
        }
        try {
            it->second(key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }

    std::vector<std::string> missing;
    for (const char* required : {"out_dir", "mode"})
        if (!seen.count(required)) missing.emplace_back(required);
    if (!missing.empty()) {
        std::string msg = origin + ": missing required key(s):";
        for (const std::string& k : missing) msg += " " + k;
        throw ConfigError(msg);
    }

    cfg.dataset.patch = rolloff_patch(n_partials, decay_rate, attack);
    cfg.dataset.seed = cfg.seed;
    cfg.train.seed = cfg.seed;
    cfg.features.sample_rate = cfg.dataset.sample_rate;
    cfg.validate();
    return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path.string());
}

std::string render_config(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "# experiment\n";
    out << "out_dir = " << cfg.out_dir.generic_string() << "\n";
    out << "mode = " << to_string(cfg.dataset.mode) << "\n";
    out << "arch = " << to_string(cfg.arch) << "\n";
    out << "seed = " << cfg.seed << "\n";
    out << "\n# dataset\n";
    out << "dataset.low = " << cfg.dataset.pitch_lo.midi << "\n";
    out << "dataset.high = " << cfg.dataset.pitch_hi.midi << "\n";
    out << "dataset.duration = " << fmt(cfg.dataset.duration) << "\n";
    out << "dataset.sample_rate = " << fmt(cfg.dataset.sample_rate) << "\n";
    out << "dataset.valid_jitter_cents = " << fmt(cfg.dataset.valid_jitter_cents) << "\n";
    out << "dataset.partials = " << cfg.dataset.patch.n_partials << "\n";
    out << "dataset.decay_rate = " << fmt(cfg.dataset.patch.decay_rate) << "\n";
    out << "dataset.attack = " << fmt(cfg.dataset.patch.attack) << "\n";
    out << "\n# features\n";
    out << "features.fft_size = " << cfg.features.fft_size << "\n";
    out << "features.hop = " << cfg.features.hop << "\n";
    out << "features.n_bins = " << cfg.features.n_bins << "\n";
    out << "features.f_min = " << fmt(cfg.features.f_min) << "\n";
    out << "features.f_max = " << fmt(cfg.features.f_max) << "\n";
    out << "\n# train\n";
    out << "train.lr = " << fmt(cfg.train.lr) << "\n";
    out << "train.momentum = " << fmt(cfg.train.momentum) << "\n";
    out << "train.batch_size = " << cfg.train.batch_size << "\n";
    out << "train.max_epochs = " << cfg.train.max_epochs << "\n";
    out << "train.lr_patience = " << cfg.train.lr_patience << "\n";
    out << "train.stop_patience = " << cfg.train.stop_patience << "\n";
    out << "train.dropout = " << (cfg.train.dropout ? "true" : "false") << "\n";
    out << "train.threshold = " << fmt(cfg.train.threshold) << "\n";
    out << "\n# nmf\n";
    out << "nmf.rank = " << cfg.nmf.rank << "\n";
    out << "nmf.max_iters = " << cfg.nmf.max_iters << "\n";
    out << "nmf.tolerance = " << fmt(cfg.nmf.tolerance) << "\n";
    out << "nmf.threshold = " << fmt(cfg.nmf.threshold) << "\n";
    out << "nmf.floor_abs = " << fmt(cfg.nmf.floor_abs) << "\n";
    return out.str();
}

void write_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open " + path.string() + " for writing");
    out << render_config(cfg);
    if (!out) throw InputError("failed writing " + path.string());
}

} // namespace dtb
