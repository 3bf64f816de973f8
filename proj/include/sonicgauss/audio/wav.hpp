#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sonicgauss::audio {

struct WavData {
    std::vector<float> samples;  // mono, channels averaged on read
    int sample_rate = 0;
};

// Reads RIFF/WAVE with 16-bit PCM or 32-bit float payloads.
WavData read_wav(const std::filesystem::path& path);
WavData parse_wav(std::span<const unsigned char> bytes);

// Writes 16-bit PCM mono; samples are clamped to [-1, 1].
void write_wav(const std::filesystem::path& path, std::span<const float> samples, int sample_rate);
std::vector<unsigned char> encode_wav(std::span<const float> samples, int sample_rate);

}  // namespace sonicgauss::audio
