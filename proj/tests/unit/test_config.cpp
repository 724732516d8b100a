#include "doctest.h"

#include "dtb/config.hpp"
#include "dtb/errors.hpp"

#include <filesystem>
#include <string>

using namespace dtb;

namespace {
const std::string kMinimal = "out_dir = /tmp/run\nmode = COMBI\n";
}

TEST_CASE("minimal config materializes all defaults") {
    ExperimentConfig cfg = parse_config_text(kMinimal, "test");
    CHECK(cfg.out_dir == std::filesystem::path("/tmp/run"));
    CHECK(cfg.dataset.mode == DatasetMode::kCombi);
    CHECK(cfg.seed == 1);
    CHECK(cfg.arch == nn::ArchName::SmallConvNet);
    CHECK(cfg.dataset.pitch_lo == kFluidLow);
    CHECK(cfg.dataset.pitch_hi == kFluidHigh);
    CHECK(cfg.dataset.duration == 2.0);
    CHECK(cfg.dataset.sample_rate == 44100.0);
    CHECK(cfg.dataset.valid_jitter_cents == 3.0);
    CHECK(cfg.features.n_bins == 229);
    CHECK(cfg.features.hop == 441);
    CHECK(cfg.train.batch_size == 128);
    CHECK(cfg.nmf.rank == 1);

    // Seeds and the feature sample rate are derived, not independent knobs.
    CHECK(cfg.dataset.seed == cfg.seed);
    CHECK(cfg.train.seed == cfg.seed);
    CHECK(cfg.features.sample_rate == cfg.dataset.sample_rate);
}

TEST_CASE("seed and sample-rate propagation") {
    ExperimentConfig cfg = parse_config_text(
        kMinimal + "seed = 42\ndataset.sample_rate = 32000\n", "test");
    CHECK(cfg.seed == 42);
    CHECK(cfg.dataset.seed == 42);
    CHECK(cfg.train.seed == 42);
    CHECK(cfg.features.sample_rate == 32000.0);
}

TEST_CASE("comments, blank lines, and whitespace are tolerated") {
    const std::string text =
        "# a comment line\n"
        "\n"
        "  out_dir =   /tmp/x  # trailing comment\n"
        "\tmode\t=\tISOL\n"
        "train.lr = 0.5 # another\n";
    ExperimentConfig cfg = parse_config_text(text, "test");
    CHECK(cfg.out_dir == std::filesystem::path("/tmp/x"));
    CHECK(cfg.dataset.mode == DatasetMode::kIsol);
    CHECK(cfg.train.lr == 0.5);
}

TEST_CASE("missing required keys are reported together") {
    CHECK_THROWS_WITH_AS(parse_config_text("seed = 3\n", "cfg"),
                         "cfg: missing required key(s): out_dir mode", ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("out_dir = /tmp/x\n", "cfg"),
                         "cfg: missing required key(s): mode", ConfigError);
}

TEST_CASE("unknown, duplicate, and malformed keys carry line numbers") {
    CHECK_THROWS_WITH_AS(parse_config_text(kMinimal + "bogus.key = 1\n", "cfg"),
                         "cfg:3: unknown key 'bogus.key'", ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text(kMinimal + "seed = 1\nseed = 2\n", "cfg"),
                         "cfg:4: duplicate key 'seed' (first set on line 3)", ConfigError);
    CHECK_THROWS_AS(parse_config_text(kMinimal + "just some words\n", "cfg"), ConfigError);
    CHECK_THROWS_AS(parse_config_text(kMinimal + "train.lr =\n", "cfg"), ConfigError);
    CHECK_THROWS_AS(parse_config_text(kMinimal + " = 5\n", "cfg"), ConfigError);
}

TEST_CASE("value parse failures name the key and the offending text") {
    CHECK_THROWS_AS(parse_config_text(kMinimal + "seed = -1\n", "cfg"), ConfigError);
    CHECK_THROWS_AS(parse_config_text(kMinimal + "train.lr = fast\n", "cfg"), ConfigError);
    CHECK_THROWS_AS(parse_config_text(kMinimal + "train.dropout = maybe\n", "cfg"), ConfigError);
    CHECK_THROWS_AS(parse_config_text(kMinimal + "train.batch_size = 3.5\n", "cfg"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("out_dir = /tmp/x\nmode = BOTH\n", "cfg"), ConfigError);
    CHECK_THROWS_AS(parse_config_text(kMinimal + "arch = RESNET\n", "cfg"), ConfigError);
}

TEST_CASE("boolean spellings") {
    CHECK(parse_config_text(kMinimal + "train.dropout = false\n", "t").train.dropout == false);
    CHECK(parse_config_text(kMinimal + "train.dropout = 0\n", "t").train.dropout == false);
    CHECK(parse_config_text(kMinimal + "train.dropout = true\n", "t").train.dropout == true);
    CHECK(parse_config_text(kMinimal + "train.dropout = 1\n", "t").train.dropout == true);
}

TEST_CASE("validation rejects inconsistent settings at parse time") {
    // low > high
    CHECK_THROWS_AS(
        parse_config_text(kMinimal + "dataset.low = 70\ndataset.high = 60\n", "cfg"),
        ConfigError);
    // outside the piano range
    CHECK_THROWS_AS(parse_config_text(kMinimal + "dataset.low = 10\n", "cfg"), ConfigError);
    CHECK_THROWS_AS(parse_config_text(kMinimal + "dataset.high = 120\n", "cfg"), ConfigError);
    CHECK_THROWS_AS(parse_config_text(kMinimal + "dataset.duration = 0\n", "cfg"), ConfigError);
    CHECK_THROWS_AS(parse_config_text(kMinimal + "nmf.tolerance = 0\n", "cfg"), ConfigError);
    CHECK_THROWS_AS(parse_config_text(kMinimal + "features.fft_size = 1000\n", "cfg"),
                    ConfigError); // not a power of two
}

TEST_CASE("synth patch knobs rebuild the rolloff patch") {
    ExperimentConfig cfg = parse_config_text(
        kMinimal + "dataset.partials = 4\ndataset.decay_rate = 1.5\ndataset.attack = 0.02\n",
        "test");
    const SynthPatch& p = cfg.dataset.patch;
    CHECK(p.n_partials == 4);
    REQUIRE(p.partial_amps.size() == 4);
    CHECK(p.partial_amps[0] == 1.0);
    CHECK(p.partial_amps[1] == 0.5);
    CHECK(p.partial_amps[3] == 0.25);
    CHECK(p.partial_detune_cents == std::vector<double>(4, 0.0));
    CHECK(p.decay_rate == 1.5);
    CHECK(p.attack == 0.02);
}

TEST_CASE("render -> parse round-trips every field") {
    ExperimentConfig cfg = parse_config_text(
        kMinimal +
            "seed = 9\narch = AUNET\ndataset.low = 50\ndataset.high = 70\n"
            "dataset.duration = 0.75\ndataset.valid_jitter_cents = 2.5\n"
            "dataset.partials = 6\ntrain.lr = 0.125\ntrain.dropout = false\n"
            "train.max_epochs = 17\nnmf.threshold = 0.3\nnmf.tolerance = 1e-9\n",
        "test");
    const std::string rendered = render_config(cfg);
    ExperimentConfig back = parse_config_text(rendered, "rendered");
    CHECK(back == cfg);
    // Rendering is a fixed point: render(parse(render(c))) == render(c).
    CHECK(render_config(back) == rendered);
}

TEST_CASE("file I/O round-trip and missing-file error") {
    ExperimentConfig cfg = parse_config_text(kMinimal + "seed = 5\n", "test");
    const auto path = std::filesystem::temp_directory_path() / "dtb_test_config.cfg";
    write_config(cfg, path);
    ExperimentConfig back = parse_config(path);
    CHECK(back == cfg);
    std::filesystem::remove(path);

    CHECK_THROWS_AS(parse_config("/nonexistent/dir/nothing.cfg"), InputError);
}
