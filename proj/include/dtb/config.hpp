#pragma once

#include "dtb/features.hpp"
#include "dtb/nmf.hpp"
#include "dtb/nn/arch.hpp"
#include "dtb/synth.hpp"
#include "dtb/train.hpp"

#include <filesystem>
#include <string>

namespace dtb {

/// Everything one experiment run needs, with defaults for all but `out_dir`
/// and `mode`. Parsed from flat `key = value` text (see parse_config).
struct ExperimentConfig {
    std::filesystem::path out_dir;
    std::uint64_t seed = 1; // master seed; dataset/train seeds derive from it
    FluidDatasetParams dataset;
    FeatureConfig features;
    nn::ArchName arch = nn::ArchName::SmallConvNet;
    TrainConfig train;
    NmfConfig nmf;

    void validate() const;
    bool operator==(const ExperimentConfig&) const;
};

/// Parse a flat `key = value` config file. `#` starts a comment, blank lines
/// are skipped, section membership is spelled with dotted prefixes
/// (`train.batch_size = 64`). Unknown keys and missing required keys
/// (`out_dir`, `mode`) are hard errors.
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Same grammar, from an in-memory string (`origin` names it in errors).
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);

/// Render the full config — every key, defaults materialized — in the same
/// grammar parse_config reads. parse_config_text(render_config(c)) == c.
std::string render_config(const ExperimentConfig& cfg);

void write_config(const ExperimentConfig& cfg, const std::filesystem::path& path);

} // namespace dtb
