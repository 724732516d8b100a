#include "dtb/fft.hpp"

#include "dtb/errors.hpp"

#include <cmath>
#include <numbers>

namespace dtb {

Fft::Fft(std::size_t size) : size_(size) {
    if (size < 2 || (size & (size - 1)) != 0) {
        throw ArgumentError("Fft: size must be a power of two >= 2, got " + std::to_string(size));
    }
    bitrev_.resize(size);
    std::size_t bits = 0;
    while ((1u << bits) < size) ++bits;
    for (std::size_t i = 0; i < size; ++i) {
        std::size_t r = 0;
        for (std::size_t b = 0; b < bits; ++b)
            if (i & (1u << b)) r |= 1u << (bits - 1 - b);
        bitrev_[i] = r;
    }
    twiddles_.resize(size / 2);
    for (std::size_t k = 0; k < size / 2; ++k) {
        const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) /
                             static_cast<double>(size);
        twiddles_[k] = {std::cos(angle), std::sin(angle)};
    }
}

void Fft::forward(std::vector<std::complex<double>>& data) const {
    if (data.size() != size_) throw ArgumentError("Fft::forward: wrong input length");
    for (std::size_t i = 0; i < size_; ++i) {
        const std::size_t j = bitrev_[i];
        if (i < j) std::swap(data[i], data[j]);
    }
    for (std::size_t len = 2; len <= size_; len <<= 1) {
        const std::size_t half = len >> 1;
        const std::size_t step = size_ / len;
        for (std::size_t start = 0; start < size_; start += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const std::complex<double> w = twiddles_[k * step];
                const std::complex<double> u = data[start + k];
                const std::complex<double> t = w * data[start + k + half];
                data[start + k] = u + t;
                data[start + k + half] = u - t;
            }
        }
    }
}

void Fft::magnitude(const std::vector<double>& frame, std::vector<double>& out) const {
    if (frame.size() != size_) throw ArgumentError("Fft::magnitude: wrong frame length");
    work_.assign(size_, {0.0, 0.0});
    for (std::size_t i = 0; i < size_; ++i) work_[i] = {frame[i], 0.0};
    forward(work_);
    out.resize(size_ / 2 + 1);
    for (std::size_t k = 0; k <= size_ / 2; ++k) out[k] = std::abs(work_[k]);
}

} // namespace dtb
