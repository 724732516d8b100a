#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dtb/errors.hpp"
#include "dtb/nn/arch.hpp"
#include "dtb/nn/tensor.hpp"
#include "dtb/rng.hpp"

namespace dtb::nn {

enum class RunMode { Train, Infer };

/// Learnable state (and batchnorm running statistics) of one node. Nodes
/// without parameters leave every vector empty.
template <typename T>
struct NodeParams {
    std::vector<T> weight; // conv: [oc][ic][kh][kw]; dense: [out][in]
    std::vector<T> bias;
    std::vector<T> gamma, beta, run_mean, run_var;
};

template <typename T>
T sigmoid(T z) {
    if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
    const T e = std::exp(z);
    return e / (T(1) + e);
}

/// Executable model: architecture plus parameters, with forward passes in
/// TRAIN (batch statistics, optional dropout, gradient caches) and INFER
/// (running statistics, no dropout) modes, and full backpropagation.
///
/// The scalar type is float in production; double instantiations back the
/// finite-difference gradient checks.
template <typename T>
class Model {
public:
    static constexpr double kBnMomentum = 0.1; // running-statistics update rate
    static constexpr double kBnEps = 1e-5;

    /// Seeded initialization: uniform weights scaled by fan-in + fan-out,
    /// batchnorm at identity (gamma 1, beta 0, mean 0, var 1), biases zero.
    Model(ArchitectureSpec spec, uint64_t seed) : spec_(std::move(spec)) {
        allocate();
        const size_t count = spec_.layers.size();
        for (size_t i = 0; i < count; ++i) {
            const LayerSpec& l = spec_.layers[i];
            NodeParams<T>& p = params_[i];
            if (l.kind == LayerKind::Conv || l.kind == LayerKind::Dense) {
                double fan_in = 0, fan_out = 0;
                if (l.kind == LayerKind::Conv) {
                    fan_in = static_cast<double>(l.in_shape.c) * l.kh * l.kw;
                    fan_out = static_cast<double>(l.out_channels) * l.kh * l.kw;
                } else {
                    fan_in = static_cast<double>(l.in_shape.count());
                    fan_out = l.out_channels;
                }
                const double limit = std::sqrt(6.0 / (fan_in + fan_out));
                Rng rng = Rng::derive(seed, {static_cast<uint64_t>(i)});
                for (T& w : p.weight) w = static_cast<T>(rng.uniform(-limit, limit));
            }
        }
    }

    /// Default-initialized parameters (for checkpoint loading).
    explicit Model(ArchitectureSpec spec) : spec_(std::move(spec)) { allocate(); }

    const ArchitectureSpec& spec() const { return spec_; }
    std::vector<NodeParams<T>>& params() { return params_; }
    const std::vector<NodeParams<T>>& params() const { return params_; }
    const std::vector<NodeParams<T>>& grads() const { return grads_; }

    /// Output tensor of node i, retained by the last forward(..., cache=true).
    const Tensor<T>& node_output(size_t i) const {
        if (!has_cache_ || i >= outs_.size() || outs_[i].size() == 0)
            throw ArgumentError("node outputs are only available after a cached forward pass");
        return outs_[i];
    }

    /// Run the network. `dropout_rng` enables dropout in TRAIN mode; pass
    /// nullptr to keep dropout inactive (INFER always ignores it). With
    /// `cache` set, intermediate activations are retained for backward().
    Tensor<T> forward(const Tensor<T>& batch, RunMode mode, Rng* dropout_rng = nullptr,
                      bool cache = false) {
        if (!batch.matches(spec_.input) || batch.n <= 0)
            throw ConfigError("model '" + spec_.name + "': input " + batch.dims_string() +
                              " does not match expected " + spec_.input.to_string() +
                              " (any batch)");
        const size_t count = spec_.layers.size();
        has_cache_ = cache;
        outs_.assign(count, Tensor<T>());
        bn_xhat_.assign(count, Tensor<T>());
        bn_inv_std_.assign(count, {});
        pool_argmax_.assign(count, {});
        drop_scale_.assign(count, {});
        logits_ = Tensor<T>();
        if (cache || needs_input_copy_) input_cache_ = batch;

        for (size_t i = 0; i < count; ++i) {
            const Tensor<T>& in = i == 0 ? batch : outs_[i - 1];
            run_node(i, in, mode, dropout_rng, cache);
            if (!cache) release_dead(i);
        }
        Tensor<T> result = outs_.back();
        if (!cache) outs_.clear();
        return result;
    }

    /// Pre-sigmoid outputs of the final node, cached by the last TRAIN-mode
    /// forward(cache=true). Defined only when the output layer is a fused
    /// sigmoid conv/dense.
    const Tensor<T>& logits() const {
        if (logits_.size() == 0)
            throw ArgumentError("logits are only available after a cached forward pass "
                                "through a sigmoid output layer");
        return logits_;
    }

    /// Mean binary cross-entropy between sigmoid(logits) and 0/1 targets,
    /// computed in the numerically stable logit form.
    static double bce_loss(const Tensor<T>& logits, const Tensor<T>& targets) {
        if (!logits.same_dims(targets))
            throw ArgumentError("logits dims " + logits.dims_string() + " vs targets " +
                                targets.dims_string());
        double total = 0;
        for (size_t i = 0; i < logits.size(); ++i) {
            const double z = static_cast<double>(logits.data[i]);
            const double y = static_cast<double>(targets.data[i]);
            total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
        }
        return total / static_cast<double>(logits.size());
    }

    /// Backpropagate from a gradient w.r.t. the model output. Requires a
    /// preceding forward(..., cache=true). With `grad_wrt_preactivation`, the
    /// seed is taken as dL/d(pre-activation) of the final node, skipping its
    /// fused activation derivative — the natural entry point for the fused
    /// sigmoid + cross-entropy head, whose seed is (p - y) / count.
    void backward(const Tensor<T>& grad_out, bool grad_wrt_preactivation = false) {
        if (!has_cache_)
            throw ArgumentError("backward requires a cached TRAIN-mode forward pass");
        const size_t count = spec_.layers.size();
        if (!grad_out.same_dims(outs_.back()))
            throw ArgumentError("output gradient dims " + grad_out.dims_string() +
                                " do not match model output " + outs_.back().dims_string());
        gbuf_.assign(count, Tensor<T>());
        gbuf_.back() = grad_out;
        input_grad_ = Tensor<T>(input_cache_.n, input_cache_.c, input_cache_.h, input_cache_.w);
        for (size_t ri = count; ri-- > 0;) {
            if (gbuf_[ri].size() == 0) continue; // unused output (not in our graphs)
            const bool skip_act = grad_wrt_preactivation && ri == count - 1;
            backward_node(ri, gbuf_[ri], skip_act);
        }
        gbuf_.clear();
    }

    const Tensor<T>& input_grad() const { return input_grad_; }

    void zero_grad() {
        for (auto& g : grads_) {
            std::fill(g.weight.begin(), g.weight.end(), T(0));
            std::fill(g.bias.begin(), g.bias.end(), T(0));
            std::fill(g.gamma.begin(), g.gamma.end(), T(0));
            std::fill(g.beta.begin(), g.beta.end(), T(0));
        }
    }

    /// SGD with momentum: v = momentum*v - lr*g; p += v. Running statistics
    /// are not touched (they update during TRAIN forward passes).
    void sgd_step(double lr, double momentum) {
        auto update = [&](std::vector<T>& p, const std::vector<T>& g, std::vector<T>& v) {
            for (size_t j = 0; j < p.size(); ++j) {
                v[j] = static_cast<T>(momentum * v[j] - lr * g[j]);
                p[j] += v[j];
            }
        };
        for (size_t i = 0; i < params_.size(); ++i) {
            update(params_[i].weight, grads_[i].weight, vel_[i].weight);
            update(params_[i].bias, grads_[i].bias, vel_[i].bias);
            update(params_[i].gamma, grads_[i].gamma, vel_[i].gamma);
            update(params_[i].beta, grads_[i].beta, vel_[i].beta);
        }
    }

private:
    void allocate() {
        const size_t count = spec_.layers.size();
        params_.assign(count, NodeParams<T>());
        grads_.assign(count, NodeParams<T>());
        vel_.assign(count, NodeParams<T>());
        last_use_.assign(count + 1, 0);
        for (size_t i = 0; i < count; ++i) {
            const LayerSpec& l = spec_.layers[i];
            NodeParams<T>& p = params_[i];
            switch (l.kind) {
            case LayerKind::Conv:
                p.weight.assign(static_cast<size_t>(l.out_channels) * l.in_shape.c * l.kh * l.kw,
                                T(0));
                if (l.bias) p.bias.assign(l.out_channels, T(0));
                break;
            case LayerKind::Dense:
                p.weight.assign(static_cast<size_t>(l.out_channels) * l.in_shape.count(), T(0));
                if (l.bias) p.bias.assign(l.out_channels, T(0));
                break;
            case LayerKind::BatchNorm:
                p.gamma.assign(l.in_shape.c, T(1));
                p.beta.assign(l.in_shape.c, T(0));
                p.run_mean.assign(l.in_shape.c, T(0));
                p.run_var.assign(l.in_shape.c, T(1));
                break;
            default:
                break;
            }
            grads_[i].weight.assign(p.weight.size(), T(0));
            grads_[i].bias.assign(p.bias.size(), T(0));
            grads_[i].gamma.assign(p.gamma.size(), T(0));
            grads_[i].beta.assign(p.beta.size(), T(0));
            vel_[i] = grads_[i];
        }
        // Track where each node's output is last consumed so uncached passes
        // can release intermediate buffers early.
        for (size_t i = 0; i < count; ++i)
            last_use_[i] = i + 1 < count ? i + 1 : i;
        needs_input_copy_ = false;
        for (size_t i = 0; i < count; ++i) {
            const LayerSpec& l = spec_.layers[i];
            if (l.kind != LayerKind::Concat) continue;
            if (l.skip_input == -1)
                needs_input_copy_ = true;
            else
                last_use_[l.skip_input] = std::max<size_t>(last_use_[l.skip_input], i);
        }
    }

    void release_dead(size_t just_ran) {
        for (size_t j = 0; j < just_ran; ++j)
            if (outs_[j].size() != 0 && last_use_[j] <= just_ran) outs_[j] = Tensor<T>();
    }

    const Tensor<T>& skip_source(const LayerSpec& l) const {
        return l.skip_input == -1 ? input_cache_ : outs_[l.skip_input];
    }

    static void apply_activation(Act act, Tensor<T>& t) {
        switch (act) {
        case Act::Identity:
            break;
        case Act::Relu:
            for (T& v : t.data) v = v > T(0) ? v : T(0);
            break;
        case Act::Elu:
            for (T& v : t.data) v = v > T(0) ? v : std::expm1(v);
            break;
        case Act::Sigmoid:
            for (T& v : t.data) v = sigmoid(v);
            break;
        }
    }

    /// dL/dx from dL/dy using only the activation output y.
    static void activation_grad_from_output(Act act, const Tensor<T>& y, const Tensor<T>& dy,
                                            Tensor<T>& dx) {
        switch (act) {
        case Act::Identity:
            dx = dy;
            break;
        case Act::Relu:
            dx = dy;
            for (size_t i = 0; i < dx.size(); ++i)
                if (y.data[i] <= T(0)) dx.data[i] = T(0);
            break;
        case Act::Elu:
            dx = dy;
            for (size_t i = 0; i < dx.size(); ++i)
                if (y.data[i] <= T(0)) dx.data[i] *= y.data[i] + T(1);
            break;
        case Act::Sigmoid:
            dx = dy;
            for (size_t i = 0; i < dx.size(); ++i) dx.data[i] *= y.data[i] * (T(1) - y.data[i]);
            break;
        }
    }

    // ---- forward kernels ----

    void run_node(size_t i, const Tensor<T>& in, RunMode mode, Rng* rng, bool cache) {
        const LayerSpec& l = spec_.layers[i];
        switch (l.kind) {
        case LayerKind::Conv:
            outs_[i] = conv_forward(l, params_[i], in);
            if (l.act != Act::Identity) {
                if (cache && l.act == Act::Sigmoid && i == spec_.layers.size() - 1)
                    logits_ = outs_[i];
                apply_activation(l.act, outs_[i]);
            }
            break;
        case LayerKind::Dense:
            outs_[i] = dense_forward(l, params_[i], in);
            if (l.act != Act::Identity) {
                if (cache && l.act == Act::Sigmoid && i == spec_.layers.size() - 1)
                    logits_ = outs_[i];
                apply_activation(l.act, outs_[i]);
            }
            break;
        case LayerKind::BatchNorm:
            outs_[i] = bn_forward(i, l, in, mode, cache);
            break;
        case LayerKind::Activation:
            outs_[i] = in;
            apply_activation(l.act, outs_[i]);
            break;
        case LayerKind::MaxPool:
            outs_[i] = pool_forward(i, l, in, cache);
            break;
        case LayerKind::Dropout:
            if (mode == RunMode::Train && rng != nullptr && l.rate > 0) {
                outs_[i] = dropout_forward(i, l, in, *rng, cache);
            } else {
                outs_[i] = in;
            }
            break;
        case LayerKind::Upscale:
            outs_[i] = upscale_forward(l, in);
            break;
        case LayerKind::Concat:
            outs_[i] = concat_forward(l, in, skip_source(l));
            break;
        }
    }

    Tensor<T> conv_forward(const LayerSpec& l, const NodeParams<T>& p, const Tensor<T>& in) {
        const int oc_n = l.out_channels, ic_n = in.c;
        Tensor<T> out(in.n, l.out_shape.c, l.out_shape.h, l.out_shape.w);
        const int oh_n = out.h, ow_n = out.w, ih_n = in.h, iw_n = in.w;
        for (int n = 0; n < in.n; ++n) {
            for (int oc = 0; oc < oc_n; ++oc) {
                T* out_plane = out.plane(n, oc);
                if (!p.bias.empty())
                    std::fill(out_plane, out_plane + static_cast<size_t>(oh_n) * ow_n,
                              p.bias[oc]);
                for (int ic = 0; ic < ic_n; ++ic) {
                    const T* in_plane = in.plane(n, ic);
                    const T* w_base =
                        p.weight.data() + (static_cast<size_t>(oc) * ic_n + ic) * l.kh * l.kw;
                    for (int kh = 0; kh < l.kh; ++kh) {
                        const int oh_lo = l.pad_h > kh ? (l.pad_h - kh + l.sh - 1) / l.sh : 0;
                        const int oh_hi = std::min(oh_n - 1, (ih_n - 1 + l.pad_h - kh) / l.sh);
                        for (int kw = 0; kw < l.kw; ++kw) {
                            const T wv = w_base[kh * l.kw + kw];
                            const int ow_lo = l.pad_w > kw ? (l.pad_w - kw + l.sw - 1) / l.sw : 0;
                            const int ow_hi =
                                std::min(ow_n - 1, (iw_n - 1 + l.pad_w - kw) / l.sw);
                            const int woff = kw - l.pad_w;
                            for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                                const int ih = oh * l.sh + kh - l.pad_h;
                                const T* in_row = in_plane + static_cast<size_t>(ih) * iw_n;
                                T* out_row = out_plane + static_cast<size_t>(oh) * ow_n;
                                if (l.sw == 1) {
                                    const T* src = in_row + woff;
                                    for (int ow = ow_lo; ow <= ow_hi; ++ow)
                                        out_row[ow] += wv * src[ow];
                                } else {
                                    for (int ow = ow_lo; ow <= ow_hi; ++ow)
                                        out_row[ow] += wv * in_row[ow * l.sw + woff];
                                }
                            }
                        }
                    }
                }
            }
        }
        return out;
    }

    Tensor<T> dense_forward(const LayerSpec& l, const NodeParams<T>& p, const Tensor<T>& in) {
        const long long in_total = in.per_item();
        Tensor<T> out(in.n, l.out_channels, 1, 1);
        for (int n = 0; n < in.n; ++n) {
            const T* x = in.item(n);
            T* y = out.item(n);
            for (int o = 0; o < l.out_channels; ++o) {
                const T* w = p.weight.data() + static_cast<size_t>(o) * in_total;
                T acc = p.bias.empty() ? T(0) : p.bias[o];
                for (long long j = 0; j < in_total; ++j) acc += w[j] * x[j];
                y[o] = acc;
            }
        }
        return out;
    }

    Tensor<T> bn_forward(size_t i, const LayerSpec&, const Tensor<T>& in, RunMode mode,
                         bool cache) {
        NodeParams<T>& p = params_[i];
        Tensor<T> out(in.n, in.c, in.h, in.w);
        const long long plane = static_cast<long long>(in.h) * in.w;
        const long long m = static_cast<long long>(in.n) * plane;
        if (cache) {
            bn_xhat_[i] = Tensor<T>(in.n, in.c, in.h, in.w);
            bn_inv_std_[i].assign(in.c, T(0));
        }
        for (int ch = 0; ch < in.c; ++ch) {
            T mean, inv_std;
            if (mode == RunMode::Train) {
                double sum = 0;
                for (int n = 0; n < in.n; ++n) {
                    const T* src = in.plane(n, ch);
                    for (long long j = 0; j < plane; ++j) sum += src[j];
                }
                const double mu = sum / static_cast<double>(m);
                double sq = 0;
                for (int n = 0; n < in.n; ++n) {
                    const T* src = in.plane(n, ch);
                    for (long long j = 0; j < plane; ++j) {
                        const double d = src[j] - mu;
                        sq += d * d;
                    }
                }
                const double var = sq / static_cast<double>(m);
                mean = static_cast<T>(mu);
                inv_std = static_cast<T>(1.0 / std::sqrt(var + kBnEps));
                // Running statistics use the unbiased variance, matching the
                // common EMA convention.
                const double unbiased = m > 1 ? var * static_cast<double>(m) / (m - 1) : var;
                p.run_mean[ch] =
                    static_cast<T>((1.0 - kBnMomentum) * p.run_mean[ch] + kBnMomentum * mu);
                p.run_var[ch] =
                    static_cast<T>((1.0 - kBnMomentum) * p.run_var[ch] + kBnMomentum * unbiased);
            } else {
                mean = p.run_mean[ch];
                inv_std = static_cast<T>(
                    1.0 / std::sqrt(static_cast<double>(p.run_var[ch]) + kBnEps));
            }
            const T g = p.gamma[ch], b = p.beta[ch];
            for (int n = 0; n < in.n; ++n) {
                const T* src = in.plane(n, ch);
                T* dst = out.plane(n, ch);
                T* xh = cache ? bn_xhat_[i].plane(n, ch) : nullptr;
                for (long long j = 0; j < plane; ++j) {
                    const T xhat = (src[j] - mean) * inv_std;
                    if (xh) xh[j] = xhat;
                    dst[j] = g * xhat + b;
                }
            }
            if (cache) bn_inv_std_[i][ch] = inv_std;
        }
        return out;
    }

    Tensor<T> pool_forward(size_t i, const LayerSpec& l, const Tensor<T>& in, bool cache) {
        Tensor<T> out(in.n, l.out_shape.c, l.out_shape.h, l.out_shape.w);
        if (cache) pool_argmax_[i].assign(out.size(), 0);
        size_t oi = 0;
        for (int n = 0; n < in.n; ++n) {
            for (int c = 0; c < in.c; ++c) {
                const T* src = in.plane(n, c);
                for (int oh = 0; oh < out.h; ++oh) {
                    for (int ow = 0; ow < out.w; ++ow, ++oi) {
                        const int ih0 = oh * l.ph, iw0 = ow * l.pw;
                        T best = src[static_cast<size_t>(ih0) * in.w + iw0];
                        size_t best_at = in.index(n, c, ih0, iw0);
                        for (int dh = 0; dh < l.ph; ++dh)
                            for (int dw = 0; dw < l.pw; ++dw) {
                                const size_t at = in.index(n, c, ih0 + dh, iw0 + dw);
                                if (in.data[at] > best) {
                                    best = in.data[at];
                                    best_at = at;
                                }
                            }
                        out.data[oi] = best;
                        if (cache) pool_argmax_[i][oi] = best_at;
                    }
                }
            }
        }
        return out;
    }

    Tensor<T> dropout_forward(size_t i, const LayerSpec& l, const Tensor<T>& in, Rng& rng,
                              bool cache) {
        const double keep = 1.0 - l.rate;
        if (keep <= 0) throw ConfigError("dropout rate must be < 1");
        const T scale = static_cast<T>(1.0 / keep);
        Tensor<T> out(in.n, in.c, in.h, in.w);
        if (cache) drop_scale_[i].assign(in.size(), T(0));
        for (size_t j = 0; j < in.size(); ++j) {
            const T s = rng.uniform() < keep ? scale : T(0);
            out.data[j] = in.data[j] * s;
            if (cache) drop_scale_[i][j] = s;
        }
        return out;
    }

    Tensor<T> upscale_forward(const LayerSpec& l, const Tensor<T>& in) {
        Tensor<T> out(in.n, in.c, in.h * l.scale, in.w * l.scale);
        for (int n = 0; n < in.n; ++n)
            for (int c = 0; c < in.c; ++c) {
                const T* src = in.plane(n, c);
                T* dst = out.plane(n, c);
                for (int oh = 0; oh < out.h; ++oh) {
                    const T* src_row = src + static_cast<size_t>(oh / l.scale) * in.w;
                    T* dst_row = dst + static_cast<size_t>(oh) * out.w;
                    for (int ow = 0; ow < out.w; ++ow) dst_row[ow] = src_row[ow / l.scale];
                }
            }
        return out;
    }

    Tensor<T> concat_forward(const LayerSpec&, const Tensor<T>& a, const Tensor<T>& b) {
        Tensor<T> out(a.n, a.c + b.c, a.h, a.w);
        const size_t plane = static_cast<size_t>(a.h) * a.w;
        for (int n = 0; n < a.n; ++n) {
            for (int c = 0; c < a.c; ++c)
                std::copy(a.plane(n, c), a.plane(n, c) + plane, out.plane(n, c));
            for (int c = 0; c < b.c; ++c)
                std::copy(b.plane(n, c), b.plane(n, c) + plane, out.plane(n, a.c + c));
        }
        return out;
    }

    // ---- backward kernels ----

    void add_to_buffer(int target, Tensor<T>&& grad) {
        // target: node index, or -1 for the model input.
        Tensor<T>& dst = target < 0 ? input_grad_ : gbuf_[target];
        if (dst.size() == 0) {
            dst = std::move(grad);
        } else {
            for (size_t j = 0; j < dst.size(); ++j) dst.data[j] += grad.data[j];
        }
    }

    void backward_node(size_t i, const Tensor<T>& dy, bool skip_act) {
        const LayerSpec& l = spec_.layers[i];
        const Tensor<T>& in = i == 0 ? input_cache_ : outs_[i - 1];
        const int prev = static_cast<int>(i) - 1;
        switch (l.kind) {
        case LayerKind::Conv: {
            Tensor<T> dz;
            if (l.act != Act::Identity && !skip_act)
                activation_grad_from_output(l.act, outs_[i], dy, dz);
            const Tensor<T>& d = (l.act != Act::Identity && !skip_act) ? dz : dy;
            add_to_buffer(prev, conv_backward(i, l, in, d));
            break;
        }
        case LayerKind::Dense: {
            Tensor<T> dz;
            if (l.act != Act::Identity && !skip_act)
                activation_grad_from_output(l.act, outs_[i], dy, dz);
            const Tensor<T>& d = (l.act != Act::Identity && !skip_act) ? dz : dy;
            add_to_buffer(prev, dense_backward(i, l, in, d));
            break;
        }
        case LayerKind::BatchNorm:
            add_to_buffer(prev, bn_backward(i, dy));
            break;
        case LayerKind::Activation: {
            Tensor<T> dx;
            activation_grad_from_output(l.act, outs_[i], dy, dx);
            add_to_buffer(prev, std::move(dx));
            break;
        }
        case LayerKind::MaxPool: {
            Tensor<T> dx(in.n, in.c, in.h, in.w);
            for (size_t oi = 0; oi < dy.size(); ++oi)
                dx.data[pool_argmax_[i][oi]] += dy.data[oi];
            add_to_buffer(prev, std::move(dx));
            break;
        }
        case LayerKind::Dropout: {
            if (drop_scale_[i].empty()) {
                Tensor<T> dx = dy;
                add_to_buffer(prev, std::move(dx));
            } else {
                Tensor<T> dx = dy;
                for (size_t j = 0; j < dx.size(); ++j) dx.data[j] *= drop_scale_[i][j];
                add_to_buffer(prev, std::move(dx));
            }
            break;
        }
        case LayerKind::Upscale: {
            Tensor<T> dx(in.n, in.c, in.h, in.w);
            for (int n = 0; n < in.n; ++n)
                for (int c = 0; c < in.c; ++c) {
                    const T* g = dy.plane(n, c);
                    T* dst = dx.plane(n, c);
                    for (int oh = 0; oh < dy.h; ++oh) {
                        T* dst_row = dst + static_cast<size_t>(oh / l.scale) * in.w;
                        const T* g_row = g + static_cast<size_t>(oh) * dy.w;
                        for (int ow = 0; ow < dy.w; ++ow) dst_row[ow / l.scale] += g_row[ow];
                    }
                }
            add_to_buffer(prev, std::move(dx));
            break;
        }
        case LayerKind::Concat: {
            const Tensor<T>& skip = skip_source(l);
            Tensor<T> da(in.n, in.c, in.h, in.w);
            Tensor<T> db(skip.n, skip.c, skip.h, skip.w);
            const size_t plane = static_cast<size_t>(in.h) * in.w;
            for (int n = 0; n < in.n; ++n) {
                for (int c = 0; c < in.c; ++c)
                    std::copy(dy.plane(n, c), dy.plane(n, c) + plane, da.plane(n, c));
                for (int c = 0; c < skip.c; ++c)
                    std::copy(dy.plane(n, in.c + c), dy.plane(n, in.c + c) + plane,
                              db.plane(n, c));
            }
            add_to_buffer(prev, std::move(da));
            add_to_buffer(l.skip_input, std::move(db));
            break;
        }
        }
    }

    Tensor<T> conv_backward(size_t i, const LayerSpec& l, const Tensor<T>& in,
                            const Tensor<T>& dz) {
        NodeParams<T>& g = grads_[i];
        const NodeParams<T>& p = params_[i];
        Tensor<T> dx(in.n, in.c, in.h, in.w);
        const int oh_n = dz.h, ow_n = dz.w, ih_n = in.h, iw_n = in.w;
        if (!g.bias.empty()) {
            for (int n = 0; n < dz.n; ++n)
                for (int oc = 0; oc < dz.c; ++oc) {
                    const T* row = dz.plane(n, oc);
                    T acc = T(0);
                    for (long long j = 0; j < static_cast<long long>(oh_n) * ow_n; ++j)
                        acc += row[j];
                    g.bias[oc] += acc;
                }
        }
        for (int n = 0; n < in.n; ++n) {
            for (int oc = 0; oc < dz.c; ++oc) {
                const T* dz_plane = dz.plane(n, oc);
                for (int ic = 0; ic < in.c; ++ic) {
                    const T* in_plane = in.plane(n, ic);
                    T* dx_plane = dx.plane(n, ic);
                    const size_t w_at = (static_cast<size_t>(oc) * in.c + ic) * l.kh * l.kw;
                    for (int kh = 0; kh < l.kh; ++kh) {
                        const int oh_lo = l.pad_h > kh ? (l.pad_h - kh + l.sh - 1) / l.sh : 0;
                        const int oh_hi = std::min(oh_n - 1, (ih_n - 1 + l.pad_h - kh) / l.sh);
                        for (int kw = 0; kw < l.kw; ++kw) {
                            const int ow_lo = l.pad_w > kw ? (l.pad_w - kw + l.sw - 1) / l.sw : 0;
                            const int ow_hi =
                                std::min(ow_n - 1, (iw_n - 1 + l.pad_w - kw) / l.sw);
                            const int woff = kw - l.pad_w;
                            const T wv = p.weight[w_at + kh * l.kw + kw];
                            T wgrad = T(0);
                            for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                                const int ih = oh * l.sh + kh - l.pad_h;
                                const T* dz_row = dz_plane + static_cast<size_t>(oh) * ow_n;
                                const T* in_row = in_plane + static_cast<size_t>(ih) * iw_n;
                                T* dx_row = dx_plane + static_cast<size_t>(ih) * iw_n;
                                if (l.sw == 1) {
                                    const T* src = in_row + woff;
                                    T* dst = dx_row + woff;
                                    for (int ow = ow_lo; ow <= ow_hi; ++ow) {
                                        wgrad += dz_row[ow] * src[ow];
                                        dst[ow] += wv * dz_row[ow];
                                    }
                                } else {
                                    for (int ow = ow_lo; ow <= ow_hi; ++ow) {
                                        const int iw = ow * l.sw + woff;
                                        wgrad += dz_row[ow] * in_row[iw];
                                        dx_row[iw] += wv * dz_row[ow];
                                    }
                                }
                            }
                            g.weight[w_at + kh * l.kw + kw] += wgrad;
                        }
                    }
                }
            }
        }
        return dx;
    }

    Tensor<T> dense_backward(size_t i, const LayerSpec& l, const Tensor<T>& in,
                             const Tensor<T>& dz) {
        NodeParams<T>& g = grads_[i];
        const NodeParams<T>& p = params_[i];
        const long long in_total = in.per_item();
        Tensor<T> dx(in.n, in.c, in.h, in.w);
        for (int n = 0; n < in.n; ++n) {
            const T* x = in.item(n);
            const T* d = dz.item(n);
            T* dxi = dx.item(n);
            for (int o = 0; o < l.out_channels; ++o) {
                const T dv = d[o];
                if (!g.bias.empty()) g.bias[o] += dv;
                const T* w = p.weight.data() + static_cast<size_t>(o) * in_total;
                T* gw = g.weight.data() + static_cast<size_t>(o) * in_total;
                for (long long j = 0; j < in_total; ++j) {
                    gw[j] += dv * x[j];
                    dxi[j] += dv * w[j];
                }
            }
        }
        return dx;
    }

    Tensor<T> bn_backward(size_t i, const Tensor<T>& dy) {
        if (bn_xhat_[i].size() == 0)
            throw ArgumentError("batchnorm backward requires a cached TRAIN forward");
        NodeParams<T>& g = grads_[i];
        const NodeParams<T>& p = params_[i];
        const Tensor<T>& xhat = bn_xhat_[i];
        Tensor<T> dx(dy.n, dy.c, dy.h, dy.w);
        const long long plane = static_cast<long long>(dy.h) * dy.w;
        const long long m = static_cast<long long>(dy.n) * plane;
        for (int ch = 0; ch < dy.c; ++ch) {
            double sum_dy = 0, sum_dy_xhat = 0;
            for (int n = 0; n < dy.n; ++n) {
                const T* d = dy.plane(n, ch);
                const T* xh = xhat.plane(n, ch);
                for (long long j = 0; j < plane; ++j) {
                    sum_dy += d[j];
                    sum_dy_xhat += static_cast<double>(d[j]) * xh[j];
                }
            }
            g.beta[ch] += static_cast<T>(sum_dy);
            g.gamma[ch] += static_cast<T>(sum_dy_xhat);
            const double k = static_cast<double>(p.gamma[ch]) * bn_inv_std_[i][ch] /
                             static_cast<double>(m);
            for (int n = 0; n < dy.n; ++n) {
                const T* d = dy.plane(n, ch);
                const T* xh = xhat.plane(n, ch);
                T* out = dx.plane(n, ch);
                for (long long j = 0; j < plane; ++j)
                    out[j] = static_cast<T>(k * (m * static_cast<double>(d[j]) - sum_dy -
                                                 static_cast<double>(xh[j]) * sum_dy_xhat));
            }
        }
        return dx;
    }

    ArchitectureSpec spec_;
    std::vector<NodeParams<T>> params_, grads_, vel_;
    std::vector<size_t> last_use_;
    bool needs_input_copy_ = false;

    bool has_cache_ = false;
    Tensor<T> input_cache_;
    std::vector<Tensor<T>> outs_;
    Tensor<T> logits_;
    std::vector<Tensor<T>> bn_xhat_;
    std::vector<std::vector<T>> bn_inv_std_;
    std::vector<std::vector<size_t>> pool_argmax_;
    std::vector<std::vector<T>> drop_scale_;
    std::vector<Tensor<T>> gbuf_;
    Tensor<T> input_grad_;
};

} // namespace dtb::nn
