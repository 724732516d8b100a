#pragma once

#include "dtb/errors.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace dtb {

/// Little-endian binary writer over an in-memory buffer.
class BinWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void bytes(const void* data, std::size_t n) {
        buf_.append(static_cast<const char*>(data), n);
    }
    void f32_array(const float* data, std::size_t n) {
        if constexpr (std::endian::native == std::endian::little) {
            bytes(data, n * 4);
        } else {
            for (std::size_t i = 0; i < n; ++i) f32(data[i]);
        }
    }

    const std::string& buffer() const { return buf_; }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw InputError("BinWriter: cannot open " + path.string());
        out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
        if (!out) throw InputError("BinWriter: write failed for " + path.string());
    }

private:
    std::string buf_;
};

/// Bounds-checked little-endian reader.
class BinReader {
public:
    explicit BinReader(std::string data, std::string origin = "<memory>")
        : data_(std::move(data)), origin_(std::move(origin)) {}

    static BinReader load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw InputError("BinReader: cannot open " + path.string());
        std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return BinReader(std::move(data), path.string());
    }

    std::uint8_t u8() { return raw(1)[0]; }
    std::uint32_t u32() {
        const auto* p = raw(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
        return v;
    }
    std::uint64_t u64() {
        const auto* p = raw(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str(std::size_t n) {
        const auto* p = raw(n);
        return std::string(reinterpret_cast<const char*>(p), n);
    }
    void f32_array(float* dst, std::size_t n) {
        const auto* p = raw(n * 4);
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(dst, p, n * 4);
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                std::uint32_t bits = 0;
                for (int b = 3; b >= 0; --b) bits = (bits << 8) | p[4 * i + b];
                std::memcpy(&dst[i], &bits, 4);
            }
        }
    }

    bool exhausted() const { return pos_ == data_.size(); }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    const unsigned char* raw(std::size_t n) {
        if (pos_ + n > data_.size()) {
            throw FormatError("truncated file: " + origin_ + " (wanted " + std::to_string(n) +
                              " bytes at offset " + std::to_string(pos_) + ")");
        }
        const auto* p = reinterpret_cast<const unsigned char*>(data_.data()) + pos_;
        pos_ += n;
        return p;
    }

    std::string data_;
    std::string origin_;
    std::size_t pos_ = 0;
};

} // namespace dtb
