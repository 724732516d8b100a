#include "dtb/checkpoint.hpp"

#include "dtb/binio.hpp"
#include "dtb/errors.hpp"

namespace dtb {

namespace {

constexpr uint32_t kVersion = 1;
constexpr uint8_t kDtypeF32 = 0;

std::string layer_array_name(size_t layer, const char* field) {
    return "layer" + std::to_string(layer) + "." + field;
}

} // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return &a;
    return nullptr;
}

void save_array_container(const char* magic, const std::vector<NamedArray>& arrays,
                          const nlohmann::json& meta, const std::filesystem::path& path) {
    BinWriter w;
    w.bytes(magic, 4);
    w.u32(kVersion);
    w.u32(static_cast<uint32_t>(arrays.size()));
    for (const auto& a : arrays) {
        if (a.count() != static_cast<long long>(a.values.size()))
            throw ArgumentError("array '" + a.name + "': dims product " +
                                std::to_string(a.count()) + " != value count " +
                                std::to_string(a.values.size()));
        w.u32(static_cast<uint32_t>(a.name.size()));
        w.bytes(a.name.data(), a.name.size());
        w.u8(kDtypeF32);
        w.u8(static_cast<uint8_t>(a.dims.size()));
        for (uint32_t d : a.dims) w.u32(d);
        w.f32_array(a.values.data(), a.values.size());
    }
    const std::string json = meta.dump();
    w.u64(json.size());
    w.bytes(json.data(), json.size());
    w.save(path);
}

std::pair<std::vector<NamedArray>, nlohmann::json>
load_array_container(const char* magic, const std::filesystem::path& path) {
    BinReader r = BinReader::load(path);
    if (r.str(4) != std::string(magic, 4))
        throw FormatError(path.string() + ": wrong file type (expected " +
                          std::string(magic, 4) + " container)");
    const uint32_t version = r.u32();
    if (version != kVersion)
        throw FormatError(path.string() + ": unsupported container version " +
                          std::to_string(version));
    std::vector<NamedArray> arrays;
    const uint32_t count = r.u32();
    arrays.resize(count);
    for (uint32_t i = 0; i < count; ++i) {
        NamedArray& a = arrays[i];
        a.name = r.str(r.u32());
        const uint8_t dtype = r.u8();
        if (dtype != kDtypeF32)
            throw FormatError(path.string() + ": array '" + a.name + "' has unknown dtype " +
                              std::to_string(dtype));
        const uint8_t ndim = r.u8();
        a.dims.resize(ndim);
        long long total = 1;
        for (uint8_t d = 0; d < ndim; ++d) {
            a.dims[d] = r.u32();
            total *= a.dims[d];
        }
        if (total < 0 || total > (1LL << 31))
            throw FormatError(path.string() + ": array '" + a.name + "' has absurd size");
        a.values.resize(static_cast<size_t>(total));
        r.f32_array(a.values.data(), a.values.size());
    }
    const uint64_t json_len = r.u64();
    const std::string json = r.str(json_len);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(json);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": bad metadata block: " + e.what());
    }
    if (!r.exhausted()) throw FormatError(path.string() + ": trailing bytes after metadata");
    return {std::move(arrays), std::move(meta)};
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    save_array_container("DTNN", ckpt.arrays, ckpt.meta, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    auto [arrays, meta] = load_array_container("DTNN", path);
    Checkpoint ckpt;
    ckpt.arrays = std::move(arrays);
    ckpt.meta = std::move(meta);
    return ckpt;
}

Checkpoint checkpoint_from_model(const nn::Model<float>& model) {
    Checkpoint ckpt;
    const auto& layers = model.spec().layers;
    const auto& params = model.params();
    for (size_t i = 0; i < layers.size(); ++i) {
        const nn::LayerSpec& l = layers[i];
        const nn::NodeParams<float>& p = params[i];
        auto push = [&](const char* field, const std::vector<float>& values,
                        std::vector<uint32_t> dims) {
            if (values.empty()) return;
            ckpt.arrays.push_back({layer_array_name(i, field), std::move(dims), values});
        };
        switch (l.kind) {
        case nn::LayerKind::Conv:
            push("weight", p.weight,
                 {static_cast<uint32_t>(l.out_channels), static_cast<uint32_t>(l.in_shape.c),
                  static_cast<uint32_t>(l.kh), static_cast<uint32_t>(l.kw)});
            push("bias", p.bias, {static_cast<uint32_t>(l.out_channels)});
            break;
        case nn::LayerKind::Dense:
            push("weight", p.weight,
                 {static_cast<uint32_t>(l.out_channels),
                  static_cast<uint32_t>(l.in_shape.count())});
            push("bias", p.bias, {static_cast<uint32_t>(l.out_channels)});
            break;
        case nn::LayerKind::BatchNorm: {
            const auto c = static_cast<uint32_t>(l.in_shape.c);
            push("gamma", p.gamma, {c});
            push("beta", p.beta, {c});
            push("running_mean", p.run_mean, {c});
            push("running_var", p.run_var, {c});
            break;
        }
        default:
            break;
        }
    }
    ckpt.meta["architecture"] = model.spec().name;
    return ckpt;
}

void load_model_params(nn::Model<float>& model, const Checkpoint& ckpt) {
    const auto& layers = model.spec().layers;
    auto& params = model.params();
    auto pull = [&](size_t i, const char* field, std::vector<float>& dst) {
        if (dst.empty()) return;
        const std::string name = layer_array_name(i, field);
        const NamedArray* a = ckpt.find(name);
        if (a == nullptr) throw FormatError("checkpoint is missing array '" + name + "'");
        if (a->values.size() != dst.size())
            throw FormatError("checkpoint array '" + name + "' has " +
                              std::to_string(a->values.size()) + " values, expected " +
                              std::to_string(dst.size()));
        dst = a->values;
    };
    for (size_t i = 0; i < layers.size(); ++i) {
        pull(i, "weight", params[i].weight);
        pull(i, "bias", params[i].bias);
        pull(i, "gamma", params[i].gamma);
        pull(i, "beta", params[i].beta);
        pull(i, "running_mean", params[i].run_mean);
        pull(i, "running_var", params[i].run_var);
    }
}

nn::Model<float> model_from_checkpoint(const Checkpoint& ckpt) {
    if (!ckpt.meta.contains("architecture"))
        throw FormatError("checkpoint metadata has no 'architecture' entry");
    const auto arch = nn::build_architecture(
        nn::arch_from_string(ckpt.meta.at("architecture").get<std::string>()));
    nn::Model<float> model(arch);
    load_model_params(model, ckpt);
    return model;
}

} // namespace dtb
