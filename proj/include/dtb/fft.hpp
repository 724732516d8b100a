#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace dtb {

/// Iterative radix-2 Cooley-Tukey FFT over a fixed power-of-2 size.
/// Twiddles and the bit-reversal permutation are precomputed once so the
/// per-frame transform is allocation free.
class Fft {
public:
    explicit Fft(std::size_t size);

    std::size_t size() const { return size_; }

    /// In-place forward transform.
    void forward(std::vector<std::complex<double>>& data) const;

    /// Magnitude spectrum |X_k| for k = 0..size/2 of a real frame.
    /// `frame` must have exactly size() entries; `out` is resized to size/2+1.
    void magnitude(const std::vector<double>& frame, std::vector<double>& out) const;

private:
    std::size_t size_;
    std::vector<std::size_t> bitrev_;
    std::vector<std::complex<double>> twiddles_;
    mutable std::vector<std::complex<double>> work_;
};

} // namespace dtb
