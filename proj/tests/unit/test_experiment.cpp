#include "doctest.h"

#include "dtb/errors.hpp"
#include "dtb/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

using namespace dtb;
namespace fs = std::filesystem;

namespace {

/// Fresh scratch directory under the system temp root, removed on destruction.
struct ScratchDir {
    fs::path path;
    explicit ScratchDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~ScratchDir() { fs::remove_all(path); }
};

ExperimentConfig tiny_config(const fs::path& out_dir) {
    // Three notes -> three intervals; short clips keep synth+features cheap.
    return parse_config_text("out_dir = " + out_dir.generic_string() +
                                 "\nmode = COMBI\n"
                                 "dataset.low = 60\ndataset.high = 62\n"
                                 "dataset.duration = 0.25\n",
                             "tiny");
}

int count_lines(const fs::path& p) {
    std::ifstream in(p);
    int n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

} // namespace

TEST_CASE("stage names round-trip in pipeline order") {
    const std::vector<Stage>& stages = all_stages();
    REQUIRE(stages.size() == 6);
    CHECK(stages.front() == Stage::Synth);
    CHECK(stages.back() == Stage::Analyze);
    CHECK(to_string(Stage::Transcribe) == "transcribe");
    for (Stage s : stages) CHECK(stage_from_string(to_string(s)) == s);
    CHECK_THROWS_AS(stage_from_string("deploy"), ArgumentError);
    CHECK_THROWS_AS(stage_from_string("Synth"), ArgumentError); // names are lowercase
}

TEST_CASE("artifact paths hang off out_dir") {
    ExperimentPaths paths(fs::path("/tmp/exp"));
    CHECK(paths.config_echo() == fs::path("/tmp/exp/config.txt"));
    CHECK(paths.manifest() == fs::path("/tmp/exp/dataset/manifest.json"));
    CHECK(paths.feature_cache("train", "x") == fs::path("/tmp/exp/features/train/x.feat"));
    CHECK(paths.checkpoint() == fs::path("/tmp/exp/model/checkpoint.dtnn"));
    CHECK(paths.pred_roll("note_060") == fs::path("/tmp/exp/predictions/note_060.csv"));
    CHECK(paths.nmf_dictionary() == fs::path("/tmp/exp/nmf/dictionary.dnmf"));
    CHECK(paths.stats_csv() == fs::path("/tmp/exp/analysis/combination_stats_test.csv"));
}

TEST_CASE("tool_version is stable and namespaced") {
    CHECK(tool_version().rfind("dtb ", 0) == 0);
}

TEST_CASE("missing prerequisites raise DependencyError") {
    ScratchDir scratch("dtb_test_exp_deps");
    ExperimentConfig cfg = tiny_config(scratch.path / "run");

    for (Stage s : all_stages()) CHECK_FALSE(stage_up_to_date(cfg, s));
    CHECK_THROWS_AS(run_stage(cfg, Stage::Features), DependencyError);
    CHECK_THROWS_AS(run_stage(cfg, Stage::Train), DependencyError);
    CHECK_THROWS_AS(run_stage(cfg, Stage::Analyze), DependencyError);
    CHECK_THROWS_AS(evaluate_test_predictions(cfg), DependencyError);
}

TEST_CASE("synth and features run, then skip, then force-rerun") {
    ScratchDir scratch("dtb_test_exp_run");
    ExperimentConfig cfg = tiny_config(scratch.path / "run");
    const ExperimentPaths paths(cfg.out_dir);
    const std::vector<Stage> stages{Stage::Synth, Stage::Features};

    RunRecord first = run_experiment(cfg, stages);
    REQUIRE(first.stages.size() == 2);
    CHECK_FALSE(first.stages[0].skipped);
    CHECK_FALSE(first.stages[1].skipped);
    CHECK(first.version == tool_version());

    // Artifacts: echoed config, manifest, per-split caches, one log line.
    CHECK(fs::exists(paths.config_echo()));
    CHECK(fs::exists(paths.manifest()));
    const DatasetLayout layout = read_dataset_layout(paths.dataset_dir());
    CHECK(layout.train.size() == 3); // C(3,2) intervals
    CHECK(layout.valid.size() == 3);
    CHECK(layout.test.size() == 3); // the isolated notes
    for (const DatasetItemRef& item : layout.train)
        CHECK(fs::exists(paths.feature_cache("train", item.id)));
    CHECK(count_lines(paths.run_log()) == 1);
    CHECK(stage_up_to_date(cfg, Stage::Synth));
    CHECK(stage_up_to_date(cfg, Stage::Features));
    CHECK_FALSE(stage_up_to_date(cfg, Stage::Train));

    // Second run: everything up to date, both stages skip.
    RunRecord second = run_experiment(cfg, stages);
    REQUIRE(second.stages.size() == 2);
    CHECK(second.stages[0].skipped);
    CHECK(second.stages[1].skipped);
    CHECK(count_lines(paths.run_log()) == 2);

    // Deleting one cache invalidates only the features stage.
    fs::remove(paths.feature_cache("valid", layout.valid.front().id));
    CHECK(stage_up_to_date(cfg, Stage::Synth));
    CHECK_FALSE(stage_up_to_date(cfg, Stage::Features));
    RunRecord third = run_experiment(cfg, stages);
    CHECK(third.stages[0].skipped);
    CHECK_FALSE(third.stages[1].skipped);
    CHECK(fs::exists(paths.feature_cache("valid", layout.valid.front().id)));

    // Force re-runs even when up to date.
    RunRecord forced = run_experiment(cfg, stages, /*force=*/true);
    CHECK_FALSE(forced.stages[0].skipped);
    CHECK_FALSE(forced.stages[1].skipped);

    // The run log is valid JSONL carrying stage names and the config echo.
    std::ifstream log(paths.run_log());
    std::string line;
    REQUIRE(std::getline(log, line));
    const nlohmann::json j = nlohmann::json::parse(line);
    CHECK(j.at("version") == tool_version());
    CHECK(j.at("stages").size() == 2);
    CHECK(j.at("stages")[0].at("stage") == "synth");
    CHECK(j.at("stages")[0].at("skipped") == false);
    ExperimentConfig echoed =
        parse_config_text(j.at("config").get<std::string>(), "log");
    CHECK(echoed == cfg);
}
