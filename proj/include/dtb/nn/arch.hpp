#pragma once

#include <string>
#include <vector>

namespace dtb::nn {

enum class LayerKind { Conv, BatchNorm, Activation, MaxPool, Dropout, Dense, Upscale, Concat };
enum class Act { Identity, Relu, Elu, Sigmoid };
enum class PadMode { Same, Valid };

/// Channels x height (time) x width (frequency). Dense outputs are stored as
/// (features, 1, 1) with `flat` set so they print as a bare count.
struct Shape {
    int c = 0;
    int h = 0;
    int w = 0;
    bool flat = false;

    long long count() const {
        return static_cast<long long>(c) * h * w;
    }
    bool operator==(const Shape&) const = default;
    std::string to_string() const;
};

/// One node of the model DAG. Nodes consume the previous node's output;
/// Concat additionally consumes `skip_input` (-1 refers to the model input).
struct LayerSpec {
    LayerKind kind = LayerKind::Conv;

    // conv / dense
    int out_channels = 0;
    int kh = 0, kw = 0;
    int sh = 1, sw = 1;
    PadMode pad = PadMode::Valid;
    bool bias = false;
    Act act = Act::Identity; // activation fused into conv/dense rows

    int ph = 1, pw = 1;   // max-pool window (stride == window)
    double rate = 0.0;    // dropout
    int scale = 2;        // upscale factor
    int skip_input = -2;  // concat second input; -1 = model input

    // filled in by finalize():
    Shape in_shape, out_shape;
    int pad_h = 0, pad_w = 0; // leading pads for Same convs
    long long params = 0;     // learnable + batchnorm running statistics

    /// Table-style row label, e.g. "Conv (Id)" or "Dropout, p=0.25".
    std::string label() const;
    /// Table-style dimension string, e.g. "32x3x227@3x3" or "512".
    std::string dims_string() const;
};

struct ArchitectureSpec {
    std::string name;
    Shape input;
    std::vector<LayerSpec> layers;

    long long total_params() const;
    const Shape& output() const { return layers.back().out_shape; }
};

/// Compute shapes, paddings and parameter counts for a layer chain. Throws
/// ConfigError on inconsistent shapes (e.g. concat inputs that disagree).
void finalize(ArchitectureSpec& arch);

/// Convenience: finalize a chain given input shape and raw layer specs.
ArchitectureSpec make_architecture(std::string name, Shape input, std::vector<LayerSpec> layers);

// spec helpers for terse builder code
LayerSpec conv(int out_channels, int kh, int kw, PadMode pad, bool bias = false,
               Act act = Act::Identity, int sh = 1, int sw = 1);
LayerSpec batchnorm();
LayerSpec activation(Act act);
LayerSpec maxpool(int ph, int pw);
LayerSpec dropout(double rate);
LayerSpec dense(int out, bool bias = false, Act act = Act::Identity);
LayerSpec upscale(int scale = 2);
LayerSpec concat(int skip_input);

enum class ArchName { ConvNet, SmallConvNet, AUNet };

std::string to_string(ArchName name);
ArchName arch_from_string(const std::string& s);

/// The three reference architectures.
ArchitectureSpec build_architecture(ArchName name);

/// Per-layer parameter counts (index 0 = first layer) and the total.
struct ParamCountReport {
    std::vector<long long> per_layer;
    long long total = 0;
};
ParamCountReport param_count(const ArchitectureSpec& arch);

} // namespace dtb::nn
