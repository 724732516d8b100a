#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "dtb/nn/model.hpp"

namespace dtb {

/// One named float32 array inside a checkpoint file.
struct NamedArray {
    std::string name;
    std::vector<uint32_t> dims;
    std::vector<float> values; // length == product of dims

    long long count() const {
        long long n = 1;
        for (uint32_t d : dims) n *= d;
        return n;
    }
};

/// Serializable model state: parameter/running-statistic arrays plus a JSON
/// metadata block (architecture name, training configuration and history,
/// feature standardization, label space).
struct Checkpoint {
    std::vector<NamedArray> arrays;
    nlohmann::json meta = nlohmann::json::object();

    const NamedArray* find(const std::string& name) const;
};

/// Shared binary container: 4-byte magic, u32 version, u32 array count; per
/// array u32 name length + name, u8 dtype (0 = f32), u8 ndim, u32 dims,
/// little-endian f32 values; trailing u64 JSON length + UTF-8 JSON metadata.
/// Model checkpoints use magic "DTNN"; NMF dictionaries use "DNMF".
void save_array_container(const char* magic, const std::vector<NamedArray>& arrays,
                          const nlohmann::json& meta, const std::filesystem::path& path);
std::pair<std::vector<NamedArray>, nlohmann::json>
load_array_container(const char* magic, const std::filesystem::path& path);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Extract every parameter and running-statistic array from a model, named
/// "layer<i>.<field>", and record the architecture in meta["architecture"].
Checkpoint checkpoint_from_model(const nn::Model<float>& model);

/// Load parameters into an existing model of the matching architecture.
/// Throws FormatError when an expected array is missing or mis-sized.
void load_model_params(nn::Model<float>& model, const Checkpoint& ckpt);

/// Rebuild the architecture named in meta["architecture"] and load its state.
nn::Model<float> model_from_checkpoint(const Checkpoint& ckpt);

} // namespace dtb
