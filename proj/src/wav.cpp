#include "dtb/wav.hpp"

#include "dtb/errors.hpp"
#include "dtb/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace dtb {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t get_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

} // namespace

void write_wav16(const AudioClip& clip, const std::filesystem::path& path) {
    const auto n = static_cast<std::uint32_t>(clip.samples.size());
    const auto rate = static_cast<std::uint32_t>(std::llround(clip.sample_rate));
    const std::uint32_t data_bytes = n * 2;

    std::string buf;
    buf.reserve(44 + data_bytes);
    buf += "RIFF";
    put_u32(buf, 36 + data_bytes);
    buf += "WAVEfmt ";
    put_u32(buf, 16);      // fmt chunk size
    put_u16(buf, 1);       // PCM
    put_u16(buf, 1);       // mono
    put_u32(buf, rate);
    put_u32(buf, rate * 2); // byte rate
    put_u16(buf, 2);        // block align
    put_u16(buf, 16);       // bits per sample
    buf += "data";
    put_u32(buf, data_bytes);
    for (double s : clip.samples) {
        const double clamped = std::clamp(s, -1.0, 1.0);
        const auto level = static_cast<std::int16_t>(std::lround(clamped * 32767.0));
        put_u16(buf, static_cast<std::uint16_t>(level));
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("write_wav16: cannot open " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw InputError("write_wav16: write failed for " + path.string());
}

AudioClip read_wav16(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("read_wav16: cannot open " + path.string());
    std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(raw.data());

    if (raw.size() < 44 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0) {
        throw FormatError("read_wav16: not a RIFF/WAVE file: " + path.string());
    }

    AudioClip clip;
    std::size_t pos = 12;
    bool have_fmt = false, have_data = false;
    while (pos + 8 <= raw.size()) {
        const std::uint32_t chunk_size = get_u32(p + pos + 4);
        const bool is_fmt = std::memcmp(p + pos, "fmt ", 4) == 0;
        const bool is_data = std::memcmp(p + pos, "data", 4) == 0;
        const std::size_t body = pos + 8;
        if (body + chunk_size > raw.size()) {
            throw FormatError("read_wav16: truncated chunk in " + path.string());
        }
        if (is_fmt) {
            if (chunk_size < 16) throw FormatError("read_wav16: short fmt chunk in " + path.string());
            if (get_u16(p + body) != 1 || get_u16(p + body + 2) != 1 || get_u16(p + body + 14) != 16) {
                throw FormatError("read_wav16: only mono 16-bit PCM supported: " + path.string());
            }
            clip.sample_rate = static_cast<double>(get_u32(p + body + 4));
            have_fmt = true;
        } else if (is_data) {
            if (!have_fmt) throw FormatError("read_wav16: data chunk before fmt in " + path.string());
            const std::size_t count = chunk_size / 2;
            clip.samples.resize(count);
            for (std::size_t i = 0; i < count; ++i) {
                const auto level = static_cast<std::int16_t>(get_u16(p + body + 2 * i));
                clip.samples[i] = static_cast<double>(level) / 32767.0;
            }
            have_data = true;
        }
        pos = body + chunk_size + (chunk_size & 1u);
    }
    if (!have_data) throw FormatError("read_wav16: no data chunk in " + path.string());
    return clip;
}

} // namespace dtb
