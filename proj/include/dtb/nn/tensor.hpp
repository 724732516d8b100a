#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "dtb/errors.hpp"
#include "dtb/nn/arch.hpp"

namespace dtb::nn {

/// Dense batch-major tensor (batch, channels, height, width), row-major with
/// width contiguous. The scalar type is a template parameter: float for
/// production models and checkpoints, double for gradient verification.
template <typename T>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_), data(static_cast<size_t>(n_) * c_ * h_ * w_) {
        if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0)
            throw ArgumentError("tensor dims must be non-negative");
    }
    Tensor(int n_, const Shape& s) : Tensor(n_, s.c, s.h, s.w) {}

    size_t size() const { return data.size(); }
    long long per_item() const { return static_cast<long long>(c) * h * w; }

    size_t index(int in, int ic, int ih, int iw) const {
        return ((static_cast<size_t>(in) * c + ic) * h + ih) * w + iw;
    }
    T& at(int in, int ic, int ih, int iw) { return data[index(in, ic, ih, iw)]; }
    T at(int in, int ic, int ih, int iw) const { return data[index(in, ic, ih, iw)]; }

    T* plane(int in, int ic) { return data.data() + (static_cast<size_t>(in) * c + ic) * h * w; }
    const T* plane(int in, int ic) const {
        return data.data() + (static_cast<size_t>(in) * c + ic) * h * w;
    }
    T* item(int in) { return data.data() + static_cast<size_t>(in) * per_item(); }
    const T* item(int in) const { return data.data() + static_cast<size_t>(in) * per_item(); }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool same_dims(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    bool matches(const Shape& s) const { return c == s.c && h == s.h && w == s.w; }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    std::string dims_string() const {
        return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
               std::to_string(w);
    }
};

} // namespace dtb::nn
