#pragma once

#include <filesystem>
#include <vector>

namespace dtb {

struct AudioClip; // synth.hpp

/// Mono 16-bit PCM WAV. Samples are clamped to [-1, 1] and rounded to the
/// nearest integer level on write.
void write_wav16(const AudioClip& clip, const std::filesystem::path& path);
AudioClip read_wav16(const std::filesystem::path& path);

} // namespace dtb
