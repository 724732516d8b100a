#include "dtb/config.hpp"
#include "dtb/errors.hpp"
#include "dtb/experiment.hpp"
#include "dtb/verify.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitVerifyFailed = 2;
constexpr int kExitRuntime = 3;

struct CommonArgs {
    std::string config_path;
    std::string out_dir;   // overrides out_dir when set
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool force = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", args.out_dir, "override the configured output directory");
    cmd->add_option("--seed", args.seed, "override the configured master seed")
        ->each([&args](const std::string&) { args.seed_set = true; });
    cmd->add_flag("--force", args.force, "re-run even when outputs are up to date");
}

dtb::ExperimentConfig load_config(const CommonArgs& args) {
    dtb::ExperimentConfig cfg = dtb::parse_config(args.config_path);
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (args.seed_set) {
        cfg.seed = args.seed;
        cfg.dataset.seed = args.seed;
        cfg.train.seed = args.seed;
    }
    return cfg;
}

void print_record(const dtb::RunRecord& record) {
    for (const dtb::StageResult& s : record.stages) {
        if (s.skipped) {
            std::printf("stage %-10s skipped (outputs up to date)\n",
                        dtb::to_string(s.stage).c_str());
            continue;
        }
        std::printf("stage %-10s done in %.2fs\n", dtb::to_string(s.stage).c_str(), s.seconds);
        for (const auto& artifact : s.artifacts)
            std::printf("  -> %s\n", artifact.generic_string().c_str());
    }
}

int run_stages(const CommonArgs& args, const std::vector<dtb::Stage>& stages) {
    print_record(dtb::run_experiment(load_config(args), stages, args.force));
    return kExitOk;
}

/// Env cap on worker parallelism. Stages currently run items sequentially
/// (one worker), which satisfies any positive cap; the variable is validated
/// here so misconfiguration fails loudly rather than silently.
int check_threads_env() {
    const char* raw = std::getenv("DTB_THREADS");
    if (raw == nullptr) return kExitOk;
    char* end = nullptr;
    const long value = std::strtol(raw, &end, 10);
    if (end == raw || *end != '\0' || value < 1) {
        std::fprintf(stderr, "error: DTB_THREADS must be a positive integer, got '%s'\n", raw);
        return kExitUsage;
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"framewise transcription experiment toolkit"};
    app.require_subcommand(1);

    CommonArgs synth_args, features_args, train_args, transcribe_args;
    CommonArgs nmf_dict_args, nmf_transcribe_args, evaluate_args, analyze_args, run_args;

    add_common(app.add_subcommand("synth-dataset", "render the note/interval dataset"),
               synth_args);
    add_common(app.add_subcommand("extract-features", "compute and cache feature matrices"),
               features_args);
    add_common(app.add_subcommand("train", "train the configured architecture"), train_args);
    add_common(
        app.add_subcommand("transcribe", "roll predictions + scores for the test split"),
        transcribe_args);
    add_common(app.add_subcommand("nmf-dict", "learn the per-note template dictionary"),
               nmf_dict_args);
    add_common(app.add_subcommand("nmf-transcribe",
                                  "transcribe the interval items with the saved dictionary"),
               nmf_transcribe_args);
    add_common(app.add_subcommand("evaluate", "recompute test scores from saved predictions"),
               evaluate_args);
    add_common(app.add_subcommand("analyze-combinations",
                                  "per-combination error decomposition of the test predictions"),
               analyze_args);

    CLI::App* run_cmd = app.add_subcommand("run", "run pipeline stages in dependency order");
    add_common(run_cmd, run_args);
    std::vector<std::string> stage_names;
    run_cmd->add_option("--stage", stage_names,
                        "stage to run (repeatable; default: all): synth, features, train, "
                        "transcribe, nmf, analyze");

    CLI::App* verify_cmd = app.add_subcommand("verify", "self-checks against built-in oracles");
    std::string verify_target;
    verify_cmd->add_option("target", verify_target, "PARAMS, GRADS, or COMBINATORICS")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (const int code = check_threads_env(); code != kExitOk) return code;

    try {
        if (app.got_subcommand("synth-dataset"))
            return run_stages(synth_args, {dtb::Stage::Synth});
        if (app.got_subcommand("extract-features"))
            return run_stages(features_args, {dtb::Stage::Features});
        if (app.got_subcommand("train")) return run_stages(train_args, {dtb::Stage::Train});
        if (app.got_subcommand("transcribe"))
            return run_stages(transcribe_args, {dtb::Stage::Transcribe});
        if (app.got_subcommand("nmf-dict")) {
            for (const auto& artifact : dtb::run_nmf_dict(load_config(nmf_dict_args)))
                std::printf("-> %s\n", artifact.generic_string().c_str());
            return kExitOk;
        }
        if (app.got_subcommand("nmf-transcribe")) {
            for (const auto& artifact : dtb::run_nmf_transcribe(load_config(nmf_transcribe_args)))
                std::printf("-> %s\n", artifact.generic_string().c_str());
            return kExitOk;
        }
        if (app.got_subcommand("evaluate")) {
            const dtb::PrfSummary prf =
                dtb::evaluate_test_predictions(load_config(evaluate_args));
            std::printf("%s\n", dtb::summary_json(prf).dump(2).c_str());
            return kExitOk;
        }
        if (app.got_subcommand("analyze-combinations"))
            return run_stages(analyze_args, {dtb::Stage::Analyze});
        if (app.got_subcommand("run")) {
            std::vector<dtb::Stage> stages;
            if (stage_names.empty()) {
                stages = dtb::all_stages();
            } else {
                for (const std::string& name : stage_names)
                    stages.push_back(dtb::stage_from_string(name));
            }
            return run_stages(run_args, stages);
        }
        if (app.got_subcommand("verify")) {
            const dtb::VerifyReport report =
                dtb::verify(dtb::verify_target_from_string(verify_target));
            for (const std::string& line : report.lines) std::printf("%s\n", line.c_str());
            if (!report.ok) {
                for (const std::string& failure : report.failures)
                    std::fprintf(stderr, "MISMATCH %s\n", failure.c_str());
                return kExitVerifyFailed;
            }
            std::printf("%s: all checks passed\n", verify_target.c_str());
            return kExitOk;
        }
    } catch (const dtb::ArgumentError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const dtb::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const dtb::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}
