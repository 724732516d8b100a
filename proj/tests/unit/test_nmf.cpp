#include "doctest.h"

#include "dtb/errors.hpp"
#include "dtb/nmf.hpp"
#include "dtb/rng.hpp"
#include "dtb/synth.hpp"

#include <cmath>
#include <filesystem>
#include <vector>

using namespace dtb;

namespace {

/// Frobenius norm of X - W H, all column-major, the independent check for
/// the error histories the factorization reports.
double residual(const std::vector<double>& x, const std::vector<double>& w,
                const Activations& h, int n_bins, int n_frames) {
    double acc = 0.0;
    for (int t = 0; t < n_frames; ++t)
        for (int b = 0; b < n_bins; ++b) {
            double wh = 0.0;
            for (int k = 0; k < h.n_templates; ++k)
                wh += w[static_cast<size_t>(k) * n_bins + b] * h.at(k, t);
            const double d = x[static_cast<size_t>(t) * n_bins + b] - wh;
            acc += d * d;
        }
    return std::sqrt(acc);
}

} // namespace

TEST_CASE("config validation") {
    NmfConfig cfg;
    cfg.validate();

    NmfConfig bad = cfg;
    bad.rank = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.tolerance = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.threshold = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("factorization rejects bad input") {
    NmfConfig cfg;
    std::vector<double> neg{1.0, -0.5, 2.0, 0.0};
    CHECK_THROWS_AS(nmf_factorize(neg, 2, 2, cfg), InputError);

    std::vector<double> zero(4, 0.0);
    CHECK_THROWS_AS(nmf_factorize(zero, 2, 2, cfg), InputError);

    std::vector<double> wrong_len{1.0, 2.0, 3.0};
    CHECK_THROWS_AS(nmf_factorize(wrong_len, 2, 2, cfg), ArgumentError);
}

TEST_CASE("multiplicative updates decrease the residual monotonically") {
    Rng rng(31);
    const int n_bins = 12, n_frames = 20;
    std::vector<double> x(static_cast<size_t>(n_bins) * n_frames);
    for (auto& v : x) v = rng.uniform(0.0, 2.0);

    NmfConfig cfg;
    cfg.rank = 3;
    cfg.max_iters = 200;
    NmfResult result = nmf_factorize(x, n_bins, n_frames, cfg);

    REQUIRE(result.error_history.size() >= 2);
    for (size_t i = 1; i < result.error_history.size(); ++i)
        CHECK(result.error_history[i] <= result.error_history[i - 1] + 1e-9);

    // The last reported error matches an independent residual computation.
    CHECK(result.error_history.back() ==
          doctest::Approx(residual(x, result.w, result.h, n_bins, n_frames)).epsilon(1e-6));
}

TEST_CASE("exactly low-rank data is reconstructed to near machine precision") {
    // X = W H with rank 2; MU with the right rank drives the error toward 0.
    Rng rng(5);
    const int n_bins = 10, n_frames = 15, rank = 2;
    std::vector<double> w_true(static_cast<size_t>(n_bins) * rank);
    std::vector<double> h_true(static_cast<size_t>(rank) * n_frames);
    for (auto& v : w_true) v = rng.uniform(0.1, 1.0);
    for (auto& v : h_true) v = rng.uniform(0.1, 1.0);

    std::vector<double> x(static_cast<size_t>(n_bins) * n_frames, 0.0);
    double x_norm = 0.0;
    for (int t = 0; t < n_frames; ++t)
        for (int b = 0; b < n_bins; ++b) {
            double acc = 0.0;
            for (int k = 0; k < rank; ++k)
                acc += w_true[static_cast<size_t>(k) * n_bins + b] *
                       h_true[static_cast<size_t>(k) * n_frames + t];
            x[static_cast<size_t>(t) * n_bins + b] = acc;
            x_norm += acc * acc;
        }
    x_norm = std::sqrt(x_norm);

    NmfConfig cfg;
    cfg.rank = rank;
    cfg.max_iters = 2000;
    cfg.tolerance = 1e-14;
    NmfResult result = nmf_factorize(x, n_bins, n_frames, cfg);
    CHECK(result.error_history.back() / x_norm < 1e-4);
}

TEST_CASE("fixed-dictionary inference recovers constructed activations") {
    Rng rng(8);
    const int n_bins = 16, n_frames = 12, rank = 3;
    // Well-separated dictionary columns: disjoint supports.
    std::vector<double> w(static_cast<size_t>(n_bins) * rank, 0.0);
    for (int k = 0; k < rank; ++k)
        for (int b = 0; b < 4; ++b)
            w[static_cast<size_t>(k) * n_bins + k * 5 + b] = rng.uniform(0.5, 1.0);

    std::vector<double> h_true(static_cast<size_t>(rank) * n_frames);
    for (auto& v : h_true) v = rng.uniform(0.2, 2.0);

    std::vector<double> x(static_cast<size_t>(n_bins) * n_frames, 0.0);
    for (int t = 0; t < n_frames; ++t)
        for (int b = 0; b < n_bins; ++b) {
            double acc = 0.0;
            for (int k = 0; k < rank; ++k)
                acc += w[static_cast<size_t>(k) * n_bins + b] *
                       h_true[static_cast<size_t>(k) * n_frames + t];
            x[static_cast<size_t>(t) * n_bins + b] = acc;
        }

    NmfConfig cfg;
    cfg.rank = rank; // ignored with fixed W
    cfg.max_iters = 5000;
    cfg.tolerance = 1e-14;
    NmfResult result = nmf_factorize(x, n_bins, n_frames, cfg, &w);

    CHECK(result.w == w); // echoed, not copied approximately
    for (int k = 0; k < rank; ++k)
        for (int t = 0; t < n_frames; ++t) {
            const double want = h_true[static_cast<size_t>(k) * n_frames + t];
            CHECK(result.h.at(k, t) == doctest::Approx(want).epsilon(1e-4));
        }
}

TEST_CASE("learn_note_dictionary produces normalized per-pitch templates") {
    FeatureConfig fcfg;
    fcfg.fft_size = 2048;
    fcfg.n_bins = 64;
    fcfg.f_max = 8000.0;
    const SynthPatch patch = SynthPatch::default_patch();

    std::vector<FeatureMatrix> feats;
    std::vector<Pitch> pitches{Pitch{60}, Pitch{61}, Pitch{62}};
    for (Pitch p : pitches)
        feats.push_back(dtb::extract_features(dtb::render_note(p, 0.3, patch, 44100.0), fcfg));

    std::vector<std::pair<const FeatureMatrix*, Pitch>> items;
    for (size_t i = 0; i < pitches.size(); ++i) items.push_back({&feats[i], pitches[i]});

    Dictionary dict = learn_note_dictionary(items, Pitch{60}, Pitch{62});
    CHECK(dict.n_bins == 64);
    CHECK(dict.n_templates() == 3);
    CHECK(dict.pitch_map == pitches);

    for (int col = 0; col < 3; ++col) {
        double norm = 0.0;
        for (int b = 0; b < 64; ++b) {
            CHECK(dict.at(b, col) >= 0.0f);
            norm += static_cast<double>(dict.at(b, col)) * dict.at(b, col);
        }
        CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-5));
    }

    // Distinct pitches give distinct templates (low cosine similarity is not
    // guaranteed for semitone neighbours, but identity would be a bug).
    double dot = 0.0;
    for (int b = 0; b < 64; ++b)
        dot += static_cast<double>(dict.at(b, 0)) * dict.at(b, 2);
    CHECK(dot < 0.99);

    // A pitch without any items is an error.
    CHECK_THROWS_AS(learn_note_dictionary(items, Pitch{60}, Pitch{63}), ArgumentError);
}

TEST_CASE("nmf_transcribe recovers an interval from note templates") {
    FeatureConfig fcfg;
    fcfg.fft_size = 2048;
    fcfg.n_bins = 96;
    fcfg.f_max = 8000.0;
    const SynthPatch patch = SynthPatch::default_patch();

    std::vector<FeatureMatrix> feats;
    std::vector<std::pair<const FeatureMatrix*, Pitch>> items;
    std::vector<Pitch> pitches{Pitch{60}, Pitch{64}, Pitch{67}};
    for (Pitch p : pitches)
        feats.push_back(dtb::extract_features(dtb::render_note(p, 0.4, patch, 44100.0), fcfg));
    for (size_t i = 0; i < pitches.size(); ++i) items.push_back({&feats[i], pitches[i]});

    // Dictionary over the contiguous range 60..67.
    std::vector<FeatureMatrix> all_feats;
    std::vector<std::pair<const FeatureMatrix*, Pitch>> all_items;
    for (int midi = 60; midi <= 67; ++midi)
        all_feats.push_back(dtb::extract_features(
            dtb::render_note(Pitch{midi}, 0.4, patch, 44100.0), fcfg));
    for (int midi = 60; midi <= 67; ++midi)
        all_items.push_back({&all_feats[static_cast<size_t>(midi - 60)], Pitch{midi}});
    Dictionary dict = learn_note_dictionary(all_items, Pitch{60}, Pitch{67});

    AudioClip duet = dtb::render_combination(NoteCombination({60, 67}), 0.4, patch, 44100.0);
    FeatureMatrix mix = dtb::extract_features(duet, fcfg);

    NmfConfig cfg;
    cfg.threshold = 0.3;
    PianoRoll roll = nmf_transcribe(mix, dict, cfg);
    CHECK(roll.n_pitches() == 8);
    CHECK(roll.pitch_lo() == Pitch{60});

    // Count how often each pitch fires across the clip.
    int hits_60 = 0, hits_67 = 0, spurious = 0;
    for (int t = 0; t < roll.n_frames(); ++t)
        for (int k = 0; k < 8; ++k) {
            if (!roll.at(t, k)) continue;
            if (k == 0)
                ++hits_60;
            else if (k == 7)
                ++hits_67;
            else
                ++spurious;
        }
    CHECK(hits_60 > roll.n_frames() * 3 / 4);
    CHECK(hits_67 > roll.n_frames() * 3 / 4);
    CHECK(spurious < roll.n_frames() / 4);
}

TEST_CASE("silence stays silent under the absolute floor") {
    Dictionary dict;
    dict.n_bins = 4;
    dict.pitch_map = {Pitch{60}, Pitch{61}};
    dict.w = {0.5f, 0.5f, 0.5f, 0.5f, 0.7f, 0.7f, 0.1f, 0.1f};

    FeatureMatrix silence;
    silence.frame_rate = 100.0;
    silence.n_frames = 5;
    silence.n_bins = 4;
    silence.data.assign(20, 0.0f);

    NmfConfig cfg;
    PianoRoll roll = nmf_transcribe(silence, dict, cfg);
    for (int t = 0; t < 5; ++t)
        for (int k = 0; k < 2; ++k) CHECK_FALSE(roll.at(t, k));
}

TEST_CASE("dictionary save/load round-trip") {
    Dictionary dict;
    dict.n_bins = 3;
    dict.pitch_map = {Pitch{49}, Pitch{50}};
    dict.w = {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f};

    const auto path = std::filesystem::temp_directory_path() / "dtb_test_dict.dnmf";
    save_dictionary(dict, path);
    Dictionary back = load_dictionary(path);
    CHECK(back.n_bins == 3);
    CHECK(back.pitch_map == dict.pitch_map);
    CHECK(back.w == dict.w);
    std::filesystem::remove(path);
}
