#include "doctest.h"

#include "dtb/errors.hpp"
#include "dtb/features.hpp"
#include "dtb/fft.hpp"
#include "dtb/rng.hpp"
#include "dtb/synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

using dtb::AudioClip;
using dtb::FeatureConfig;
using dtb::FeatureMatrix;
using dtb::Fft;

namespace {

/// Textbook O(n^2) DFT, the independence oracle for the FFT.
std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc{0.0, 0.0};
        for (std::size_t j = 0; j < n; ++j) {
            const double phase =
                -2.0 * std::numbers::pi * static_cast<double>(k * j) / static_cast<double>(n);
            acc += x[j] * std::complex<double>(std::cos(phase), std::sin(phase));
        }
        out[k] = acc;
    }
    return out;
}

} // namespace

TEST_CASE("fft matches the naive DFT on random input") {
    dtb::Rng rng(123);
    for (std::size_t size : {8u, 64u, 512u}) {
        std::vector<std::complex<double>> x(size);
        for (auto& v : x) v = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};

        std::vector<std::complex<double>> fast = x;
        Fft(size).forward(fast);
        const auto slow = naive_dft(x);

        double max_err = 0.0;
        double scale = 0.0;
        for (std::size_t k = 0; k < size; ++k) {
            max_err = std::max(max_err, std::abs(fast[k] - slow[k]));
            scale = std::max(scale, std::abs(slow[k]));
        }
        CHECK(max_err / scale < 1e-12);
    }
}

TEST_CASE("fft magnitude of an exact-bin sinusoid") {
    const std::size_t n = 256;
    std::vector<double> frame(n);
    for (std::size_t i = 0; i < n; ++i) {
        frame[i] = std::sin(2.0 * std::numbers::pi * 8.0 * static_cast<double>(i) /
                            static_cast<double>(n));
    }
    std::vector<double> mags;
    Fft(n).magnitude(frame, mags);
    REQUIRE(mags.size() == n / 2 + 1);
    CHECK(mags[8] == doctest::Approx(static_cast<double>(n) / 2.0).epsilon(1e-9));
    CHECK(mags[7] < 1e-9);
    CHECK(mags[9] < 1e-9);
}

TEST_CASE("fft rejects non-power-of-two sizes") {
    CHECK_THROWS_AS(Fft(0), dtb::ArgumentError);
    CHECK_THROWS_AS(Fft(1), dtb::ArgumentError);
    CHECK_THROWS_AS(Fft(96), dtb::ArgumentError);
}

TEST_CASE("filterbank has log-spaced centers and triangular rows") {
    FeatureConfig cfg;
    dtb::FilterBank bank = dtb::build_filterbank(cfg);
    CHECK(bank.n_bins == 229);
    CHECK(bank.n_fft_bins == 2049);

    // Centers are geometric: constant ratio between consecutive centers.
    const double r0 = bank.centers_hz[1] / bank.centers_hz[0];
    for (int k = 1; k + 1 < bank.n_bins; ++k) {
        CHECK(bank.centers_hz[k + 1] / bank.centers_hz[k] == doctest::Approx(r0).epsilon(1e-9));
    }
    CHECK(bank.centers_hz.front() > cfg.f_min);
    CHECK(bank.centers_hz.back() < cfg.f_max);

    // Every row is non-negative with a positive sum, and weights vanish
    // outside [f_min, f_max].
    const double bin_hz = cfg.sample_rate / cfg.fft_size;
    for (int k = 0; k < bank.n_bins; ++k) {
        double row_sum = 0.0;
        for (int j = 0; j < bank.n_fft_bins; ++j) {
            const double w = bank.at(k, j);
            CHECK(w >= 0.0);
            row_sum += w;
            if (w > 0.0) {
                CHECK(j * bin_hz > cfg.f_min * 0.999);
                CHECK(j * bin_hz < cfg.f_max * 1.001);
            }
        }
        CHECK(row_sum > 0.0);
    }
}

TEST_CASE("extract_features frame count and geometry") {
    FeatureConfig cfg;
    AudioClip clip = dtb::render_note(dtb::Pitch{69}, 1.0, dtb::SynthPatch::default_patch(),
                                      44100.0);
    FeatureMatrix f = dtb::extract_features(clip, cfg);
    CHECK(f.n_frames == 101); // floor(44100 / 441) + 1
    CHECK(f.n_bins == 229);
    CHECK(f.frame_rate == doctest::Approx(100.0));

    // log1p output is non-negative and finite.
    for (float v : f.data) {
        CHECK(v >= 0.0f);
        CHECK(std::isfinite(v));
    }
}

TEST_CASE("extract_features localizes a tone at the right filter") {
    FeatureConfig cfg;
    AudioClip clip = dtb::render_note(dtb::Pitch{69}, 0.5, dtb::SynthPatch::default_patch(),
                                      44100.0);
    dtb::FilterBank bank = dtb::build_filterbank(cfg);
    FeatureMatrix f = dtb::extract_features(clip, cfg, bank);

    // In a mid-clip frame, the strongest filter must sit at (or right next
    // to) the 440 Hz center; partials add peaks only above it.
    const float* row = f.row(f.n_frames / 2);
    const int argmax = static_cast<int>(std::max_element(row, row + f.n_bins) - row);
    CHECK(std::abs(argmax - bank.nearest_center(440.0)) <= 1);
}

TEST_CASE("extract_features validates inputs") {
    FeatureConfig cfg;
    AudioClip clip;
    clip.sample_rate = 22050.0;
    clip.samples.assign(44100, 0.0);
    CHECK_THROWS_AS(dtb::extract_features(clip, cfg), dtb::ConfigError);

    AudioClip tiny;
    tiny.sample_rate = 44100.0;
    tiny.samples.assign(1024, 0.0); // shorter than one FFT window
    CHECK_THROWS_AS(dtb::extract_features(tiny, cfg), dtb::InputError);
}

TEST_CASE("standardization zeroes the mean and whitens the variance") {
    dtb::Rng rng(5);
    FeatureMatrix f;
    f.frame_rate = 100.0;
    f.n_frames = 400;
    f.n_bins = 3;
    f.data.resize(1200);
    for (int t = 0; t < f.n_frames; ++t) {
        float* row = f.row(t);
        row[0] = static_cast<float>(rng.uniform(4.0, 6.0));
        row[1] = static_cast<float>(rng.uniform(-1.0, 1.0));
        row[2] = static_cast<float>(rng.uniform(0.0, 10.0));
    }

    dtb::Standardization st = dtb::fit_standardization({&f});
    FeatureMatrix g = f;
    st.apply(g);

    for (int k = 0; k < 3; ++k) {
        double sum = 0.0, sum_sq = 0.0;
        for (int t = 0; t < g.n_frames; ++t) {
            sum += g.row(t)[k];
            sum_sq += static_cast<double>(g.row(t)[k]) * g.row(t)[k];
        }
        const double mean = sum / g.n_frames;
        const double var = sum_sq / g.n_frames - mean * mean;
        CHECK(mean == doctest::Approx(0.0).epsilon(1e-4));
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }

    // Mismatched bin count is a hard error.
    FeatureMatrix wrong;
    wrong.n_frames = 1;
    wrong.n_bins = 2;
    wrong.data.resize(2);
    CHECK_THROWS_AS(st.apply(wrong), dtb::ConfigError);
}

TEST_CASE("copy_window replicates edge frames") {
    FeatureMatrix f;
    f.frame_rate = 100.0;
    f.n_frames = 4;
    f.n_bins = 2;
    // row t = (10t, 10t+1)
    f.data = {0, 1, 10, 11, 20, 21, 30, 31};

    std::vector<float> buf(5 * 2);
    dtb::copy_window(f, 0, 5, buf.data());
    // window centered at 0: frames [-2,-1,0,1,2] clamp to [0,0,0,1,2]
    CHECK(buf == std::vector<float>{0, 1, 0, 1, 0, 1, 10, 11, 20, 21});

    dtb::copy_window(f, 3, 5, buf.data());
    CHECK(buf == std::vector<float>{10, 11, 20, 21, 30, 31, 30, 31, 30, 31});

    dtb::copy_window(f, 2, 5, buf.data());
    CHECK(buf == std::vector<float>{0, 1, 10, 11, 20, 21, 30, 31, 30, 31});
}

TEST_CASE("feature cache round-trips byte-identically") {
    FeatureConfig cfg;
    AudioClip clip = dtb::render_note(dtb::Pitch{60}, 0.2, dtb::SynthPatch::default_patch(),
                                      44100.0);
    FeatureMatrix f = dtb::extract_features(clip, cfg);

    namespace fs = std::filesystem;
    const fs::path p1 = fs::temp_directory_path() / "dtb_test_cache1.feat";
    const fs::path p2 = fs::temp_directory_path() / "dtb_test_cache2.feat";
    dtb::write_feature_cache(f, p1);
    dtb::write_feature_cache(f, p2);

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    CHECK(slurp(p1) == slurp(p2));

    FeatureMatrix back = dtb::read_feature_cache(p1);
    CHECK(back.n_frames == f.n_frames);
    CHECK(back.n_bins == f.n_bins);
    CHECK(back.frame_rate == f.frame_rate);
    CHECK(back.data == f.data);

    // Corrupt magic is rejected.
    {
        std::ofstream out(p2, std::ios::binary);
        out << "XXXX garbage";
    }
    CHECK_THROWS_AS(dtb::read_feature_cache(p2), dtb::FormatError);

    fs::remove(p1);
    fs::remove(p2);
}
