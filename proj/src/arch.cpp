#include "dtb/nn/arch.hpp"

#include <cstdio>
#include <utility>

#include "dtb/errors.hpp"

namespace dtb::nn {

namespace {

const char* act_name(Act a) {
    switch (a) {
    case Act::Identity: return "Id";
    case Act::Relu: return "Relu";
    case Act::Elu: return "Elu";
    case Act::Sigmoid: return "Sigmoid";
    }
    return "?";
}

int ceil_div(int a, int b) {
    return (a + b - 1) / b;
}

} // namespace

std::string Shape::to_string() const {
    if (flat) return std::to_string(c);
    return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

std::string LayerSpec::label() const {
    switch (kind) {
    case LayerKind::Conv: return std::string("Conv (") + act_name(act) + ")";
    case LayerKind::Dense: return std::string("Dense (") + act_name(act) + ")";
    case LayerKind::BatchNorm: return "BatchNorm";
    case LayerKind::Activation:
        switch (act) {
        case Act::Relu: return "Relu";
        case Act::Elu: return "Elu";
        case Act::Sigmoid: return "Sigmoid";
        case Act::Identity: return "Identity";
        }
        return "?";
    case LayerKind::MaxPool: return "MaxPool";
    case LayerKind::Dropout: {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "Dropout, p=%g", rate);
        return buf;
    }
    case LayerKind::Upscale: return "Upscale";
    case LayerKind::Concat: return "Concat";
    }
    return "?";
}

std::string LayerSpec::dims_string() const {
    switch (kind) {
    case LayerKind::Conv:
        return out_shape.to_string() + "@" + std::to_string(kh) + "x" + std::to_string(kw);
    case LayerKind::MaxPool:
        return out_shape.to_string() + "@" + std::to_string(ph) + "x" + std::to_string(pw);
    default:
        return out_shape.to_string();
    }
}

long long ArchitectureSpec::total_params() const {
    long long total = 0;
    for (const auto& l : layers) total += l.params;
    return total;
}

void finalize(ArchitectureSpec& arch) {
    if (arch.input.c <= 0 || arch.input.h <= 0 || arch.input.w <= 0)
        throw ConfigError("architecture '" + arch.name + "': invalid input shape " +
                          arch.input.to_string());
    for (size_t i = 0; i < arch.layers.size(); ++i) {
        LayerSpec& l = arch.layers[i];
        const Shape in = i == 0 ? arch.input : arch.layers[i - 1].out_shape;
        const std::string where =
            "architecture '" + arch.name + "', layer " + std::to_string(i) + " (" + l.label() + ")";
        l.in_shape = in;
        l.params = 0;
        switch (l.kind) {
        case LayerKind::Conv: {
            if (in.flat) throw ConfigError(where + ": conv cannot follow a dense layer");
            if (l.out_channels <= 0 || l.kh <= 0 || l.kw <= 0 || l.sh <= 0 || l.sw <= 0)
                throw ConfigError(where + ": invalid kernel/stride");
            int oh = 0, ow = 0;
            if (l.pad == PadMode::Same) {
                oh = ceil_div(in.h, l.sh);
                ow = ceil_div(in.w, l.sw);
                l.pad_h = std::max(0, (oh - 1) * l.sh + l.kh - in.h) / 2;
                l.pad_w = std::max(0, (ow - 1) * l.sw + l.kw - in.w) / 2;
            } else {
                if (in.h < l.kh || in.w < l.kw)
                    throw ConfigError(where + ": kernel " + std::to_string(l.kh) + "x" +
                                      std::to_string(l.kw) + " exceeds input " + in.to_string());
                oh = (in.h - l.kh) / l.sh + 1;
                ow = (in.w - l.kw) / l.sw + 1;
                l.pad_h = l.pad_w = 0;
            }
            l.out_shape = {l.out_channels, oh, ow, false};
            l.params = static_cast<long long>(l.out_channels) * in.c * l.kh * l.kw +
                       (l.bias ? l.out_channels : 0);
            break;
        }
        case LayerKind::BatchNorm:
            l.out_shape = in;
            l.params = 4LL * in.c;
            break;
        case LayerKind::Activation:
        case LayerKind::Dropout:
            l.out_shape = in;
            break;
        case LayerKind::MaxPool:
            if (in.flat) throw ConfigError(where + ": pool cannot follow a dense layer");
            if (l.ph <= 0 || l.pw <= 0 || in.h < l.ph || in.w < l.pw)
                throw ConfigError(where + ": pool " + std::to_string(l.ph) + "x" +
                                  std::to_string(l.pw) + " exceeds input " + in.to_string());
            l.out_shape = {in.c, in.h / l.ph, in.w / l.pw, false};
            break;
        case LayerKind::Dense: {
            if (l.out_channels <= 0) throw ConfigError(where + ": invalid output size");
            const long long in_total = in.count();
            l.out_shape = {l.out_channels, 1, 1, true};
            l.params = static_cast<long long>(l.out_channels) * in_total +
                       (l.bias ? l.out_channels : 0);
            break;
        }
        case LayerKind::Upscale:
            if (in.flat) throw ConfigError(where + ": upscale cannot follow a dense layer");
            if (l.scale < 1) throw ConfigError(where + ": invalid scale");
            l.out_shape = {in.c, in.h * l.scale, in.w * l.scale, false};
            break;
        case LayerKind::Concat: {
            if (l.skip_input < -1 || l.skip_input >= static_cast<int>(i))
                throw ConfigError(where + ": skip input " + std::to_string(l.skip_input) +
                                  " is not an earlier node");
            const Shape skip =
                l.skip_input == -1 ? arch.input : arch.layers[l.skip_input].out_shape;
            if (in.flat || skip.flat)
                throw ConfigError(where + ": concat inputs must be feature maps");
            if (in.h != skip.h || in.w != skip.w)
                throw ConfigError(where + ": concat inputs disagree: " + in.to_string() +
                                  " vs " + skip.to_string());
            l.out_shape = {in.c + skip.c, in.h, in.w, false};
            break;
        }
        }
    }
}

ArchitectureSpec make_architecture(std::string name, Shape input, std::vector<LayerSpec> layers) {
    ArchitectureSpec arch;
    arch.name = std::move(name);
    arch.input = input;
    arch.layers = std::move(layers);
    finalize(arch);
    return arch;
}

LayerSpec conv(int out_channels, int kh, int kw, PadMode pad, bool bias, Act act, int sh, int sw) {
    LayerSpec l;
    l.kind = LayerKind::Conv;
    l.out_channels = out_channels;
    l.kh = kh;
    l.kw = kw;
    l.sh = sh;
    l.sw = sw;
    l.pad = pad;
    l.bias = bias;
    l.act = act;
    return l;
}

LayerSpec batchnorm() {
    LayerSpec l;
    l.kind = LayerKind::BatchNorm;
    return l;
}

LayerSpec activation(Act act) {
    LayerSpec l;
    l.kind = LayerKind::Activation;
    l.act = act;
    return l;
}

LayerSpec maxpool(int ph, int pw) {
    LayerSpec l;
    l.kind = LayerKind::MaxPool;
    l.ph = ph;
    l.pw = pw;
    return l;
}

LayerSpec dropout(double rate) {
    LayerSpec l;
    l.kind = LayerKind::Dropout;
    l.rate = rate;
    return l;
}

LayerSpec dense(int out, bool bias, Act act) {
    LayerSpec l;
    l.kind = LayerKind::Dense;
    l.out_channels = out;
    l.bias = bias;
    l.act = act;
    return l;
}

LayerSpec upscale(int scale) {
    LayerSpec l;
    l.kind = LayerKind::Upscale;
    l.scale = scale;
    return l;
}

LayerSpec concat(int skip_input) {
    LayerSpec l;
    l.kind = LayerKind::Concat;
    l.skip_input = skip_input;
    return l;
}

std::string to_string(ArchName name) {
    switch (name) {
    case ArchName::ConvNet: return "CONVNET";
    case ArchName::SmallConvNet: return "SMALLCONVNET";
    case ArchName::AUNet: return "AUNET";
    }
    return "?";
}

ArchName arch_from_string(const std::string& s) {
    if (s == "CONVNET") return ArchName::ConvNet;
    if (s == "SMALLCONVNET") return ArchName::SmallConvNet;
    if (s == "AUNET") return ArchName::AUNet;
    throw ConfigError("unknown architecture '" + s +
                      "' (expected CONVNET, SMALLCONVNET, or AUNET)");
}

namespace {

/// ConvNet and SmallConvNet share one topology; they differ in widths.
/// `c1`/`c2` are the conv widths, `extra_conv` adds the 1x3 conv stage that
/// only the small model has, `hidden`/`out` size the dense head.
ArchitectureSpec build_window_net(const std::string& name, int c1, int c2, bool extra_conv,
                                  int hidden, int out) {
    std::vector<LayerSpec> layers;
    layers.push_back(conv(c1, 3, 3, PadMode::Same));
    layers.push_back(batchnorm());
    layers.push_back(activation(Act::Relu));
    layers.push_back(conv(c1, 3, 3, PadMode::Valid));
    layers.push_back(batchnorm());
    layers.push_back(activation(Act::Relu));
    layers.push_back(maxpool(1, 2));
    layers.push_back(dropout(0.25));
    layers.push_back(conv(c2, 3, 3, PadMode::Valid));
    layers.push_back(batchnorm());
    layers.push_back(activation(Act::Relu));
    layers.push_back(maxpool(1, 2));
    layers.push_back(dropout(0.25));
    if (extra_conv) {
        layers.push_back(conv(c2, 1, 3, PadMode::Valid));
        layers.push_back(batchnorm());
        layers.push_back(activation(Act::Relu));
        layers.push_back(maxpool(1, 2));
        layers.push_back(dropout(0.25));
    }
    layers.push_back(dense(hidden));
    layers.push_back(batchnorm());
    layers.push_back(activation(Act::Relu));
    layers.push_back(dropout(0.5));
    layers.push_back(dense(out, /*bias=*/true, Act::Sigmoid));
    return make_architecture(name, {1, 5, 229, false}, std::move(layers));
}

ArchitectureSpec build_aunet() {
    std::vector<LayerSpec> layers;
    auto block = [&](int channels) {
        layers.push_back(conv(channels, 3, 3, PadMode::Same));
        layers.push_back(batchnorm());
        layers.push_back(activation(Act::Elu));
    };
    // Encoder; remember the activation node closing each resolution so the
    // decoder's concats can reference it.
    block(32);
    block(32);
    const int skip_full = static_cast<int>(layers.size()) - 1; // 32 ch, 256x256
    layers.push_back(maxpool(2, 2));
    block(32);
    block(32);
    const int skip_half = static_cast<int>(layers.size()) - 1; // 32 ch, 128x128
    layers.push_back(maxpool(2, 2));
    block(64);
    block(64);
    const int skip_quarter = static_cast<int>(layers.size()) - 1; // 64 ch, 64x64
    layers.push_back(maxpool(2, 2));
    block(64);
    block(64);
    const int skip_eighth = static_cast<int>(layers.size()) - 1; // 64 ch, 32x32
    layers.push_back(maxpool(2, 2));
    block(128);
    block(128);
    // Decoder: upscale, concatenate the encoder activation, two conv blocks.
    auto up_block = [&](int skip, int channels) {
        layers.push_back(upscale(2));
        layers.push_back(concat(skip));
        block(channels);
        block(channels);
    };
    up_block(skip_eighth, 128);
    up_block(skip_quarter, 64);
    up_block(skip_half, 32);
    // Final stage: the second conv halves the frequency axis via stride, and a
    // wide valid kernel collapses it to 88 pitches (128 - 41 + 1 = 88).
    layers.push_back(upscale(2));
    layers.push_back(concat(skip_full));
    block(32);
    layers.push_back(conv(32, 3, 3, PadMode::Same, /*bias=*/false, Act::Identity, 1, 2));
    layers.push_back(batchnorm());
    layers.push_back(activation(Act::Elu));
    layers.push_back(conv(1, 1, 41, PadMode::Valid, /*bias=*/true, Act::Sigmoid));
    return make_architecture("AUNET", {1, 256, 256, false}, std::move(layers));
}

} // namespace

ArchitectureSpec build_architecture(ArchName name) {
    switch (name) {
    case ArchName::ConvNet:
        return build_window_net("CONVNET", 32, 64, false, 512, 88);
    case ArchName::SmallConvNet:
        return build_window_net("SMALLCONVNET", 8, 8, true, 16, 23);
    case ArchName::AUNet:
        return build_aunet();
    }
    throw ConfigError("unknown architecture");
}

ParamCountReport param_count(const ArchitectureSpec& arch) {
    ParamCountReport report;
    report.per_layer.reserve(arch.layers.size());
    for (const auto& l : arch.layers) {
        report.per_layer.push_back(l.params);
        report.total += l.params;
    }
    return report;
}

} // namespace dtb::nn
