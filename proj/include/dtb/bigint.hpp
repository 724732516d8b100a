#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dtb {

/// Arbitrary-precision unsigned integer, base 1e9 limbs, least significant
/// first. Supports exactly what exact combinatorics needs: addition,
/// comparison, and decimal formatting. Counting combinations only ever adds
/// (Pascal's rule), so no general multiply/divide is provided.
class BigUint {
public:
    BigUint() = default;
    BigUint(std::uint64_t value); // NOLINT(google-explicit-constructor)

    BigUint& operator+=(const BigUint& rhs);
    friend BigUint operator+(BigUint lhs, const BigUint& rhs) {
        lhs += rhs;
        return lhs;
    }

    bool operator==(const BigUint& rhs) const { return limbs_ == rhs.limbs_; }
    bool operator!=(const BigUint& rhs) const { return !(*this == rhs); }

    bool is_zero() const { return limbs_.empty(); }

    /// true iff the value fits in 64 bits.
    bool fits_u64() const;
    std::uint64_t to_u64() const; // throws NumericalError if too large

    /// Plain decimal digits, no separators.
    std::string to_string() const;

private:
    static constexpr std::uint32_t kBase = 1000000000u;
    std::vector<std::uint32_t> limbs_; // empty == zero
};

} // namespace dtb
