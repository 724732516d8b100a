#include "dtb/bigint.hpp"

#include "dtb/errors.hpp"

#include <array>
#include <cstdio>

namespace dtb {

BigUint::BigUint(std::uint64_t value) {
    while (value != 0) {
        limbs_.push_back(static_cast<std::uint32_t>(value % kBase));
        value /= kBase;
    }
}

BigUint& BigUint::operator+=(const BigUint& rhs) {
    const std::size_t n = std::max(limbs_.size(), rhs.limbs_.size());
    limbs_.resize(n, 0u);
    std::uint32_t carry = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t sum = static_cast<std::uint64_t>(limbs_[i]) + carry;
        if (i < rhs.limbs_.size()) sum += rhs.limbs_[i];
        limbs_[i] = static_cast<std::uint32_t>(sum % kBase);
        carry = static_cast<std::uint32_t>(sum / kBase);
    }
    if (carry != 0) limbs_.push_back(carry);
    return *this;
}

bool BigUint::fits_u64() const {
    if (limbs_.size() > 3) return false;
    if (limbs_.size() < 3) return true;
    // 2^64 - 1 = 18'446744073'709551615
    constexpr std::array<std::uint32_t, 3> max = {709551615u, 446744073u, 18u};
    for (std::size_t i = 3; i-- > 0;) {
        if (limbs_[i] != max[i]) return limbs_[i] < max[i];
    }
    return true;
}

std::uint64_t BigUint::to_u64() const {
    if (!fits_u64()) throw NumericalError("BigUint value does not fit in 64 bits: " + to_string());
    std::uint64_t value = 0;
    for (std::size_t i = limbs_.size(); i-- > 0;) value = value * kBase + limbs_[i];
    return value;
}

std::string BigUint::to_string() const {
    if (limbs_.empty()) return "0";
    std::string out = std::to_string(limbs_.back());
    char buf[16];
    for (std::size_t i = limbs_.size() - 1; i-- > 0;) {
        std::snprintf(buf, sizeof(buf), "%09u", limbs_[i]);
        out += buf;
    }
    return out;
}

} // namespace dtb
