#include "sonicgauss/audio/wav.hpp"

#include "sonicgauss/common/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace sonicgauss::audio {

static_assert(std::endian::native == std::endian::little, "WAV IO assumes a little-endian host");

namespace {

template <typename T>
T read_le(std::span<const unsigned char> b, size_t off) {
    if (off + sizeof(T) > b.size()) {
        throw Error("malformed_wav", "truncated WAV data", "wav");
    }
    T v;
    std::memcpy(&v, b.data() + off, sizeof(T));
    return v;
}

template <typename T>
void append_le(std::vector<unsigned char>& out, T v) {
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    out.insert(out.end(), raw, raw + sizeof(T));
}

}  // namespace

WavData parse_wav(std::span<const unsigned char> bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw Error("malformed_wav", "not a RIFF/WAVE file", "wav");
    }
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    size_t data_off = 0, data_len = 0;
    size_t off = 12;
    while (off + 8 <= bytes.size()) {
        const auto len = read_le<std::uint32_t>(bytes, off + 4);
        if (std::memcmp(bytes.data() + off, "fmt ", 4) == 0) {
            format = read_le<std::uint16_t>(bytes, off + 8);
            channels = read_le<std::uint16_t>(bytes, off + 10);
            rate = read_le<std::uint32_t>(bytes, off + 12);
            bits = read_le<std::uint16_t>(bytes, off + 22);
        } else if (std::memcmp(bytes.data() + off, "data", 4) == 0) {
            data_off = off + 8;
            data_len = std::min<size_t>(len, bytes.size() - data_off);
        }
        off += 8 + len + (len & 1U);
    }
    if (channels == 0 || rate == 0 || data_off == 0) {
        throw Error("malformed_wav", "WAV file lacks fmt or data chunk", "wav");
    }
    const bool pcm16 = format == 1 && bits == 16;
    const bool f32 = format == 3 && bits == 32;
    if (!pcm16 && !f32) {
        throw Error("malformed_wav", "only 16-bit PCM and 32-bit float WAV are supported", "wav");
    }
    const size_t width = bits / 8;
    const size_t frames = data_len / (width * channels);
    WavData out;
    out.sample_rate = static_cast<int>(rate);
    out.samples.resize(frames);
    for (size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (size_t c = 0; c < channels; ++c) {
            const size_t p = data_off + (i * channels + c) * width;
            acc += pcm16 ? read_le<std::int16_t>(bytes, p) / 32768.0 : static_cast<double>(read_le<float>(bytes, p));
        }
        out.samples[i] = static_cast<float>(acc / channels);
    }
    return out;
}

WavData read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("missing_file", "cannot open " + path.string(), "path");
    }
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_wav(bytes);
}

std::vector<unsigned char> encode_wav(std::span<const float> samples, int sample_rate) {
    std::vector<unsigned char> out;
    const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
    out.reserve(44 + data_bytes);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    append_le<std::uint32_t>(out, 36 + data_bytes);
    out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    append_le<std::uint32_t>(out, 16);
    append_le<std::uint16_t>(out, 1);
    append_le<std::uint16_t>(out, 1);
    append_le<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate));
    append_le<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate) * 2);
    append_le<std::uint16_t>(out, 2);
    append_le<std::uint16_t>(out, 16);
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    append_le<std::uint32_t>(out, data_bytes);
    for (float s : samples) {
        const double c = std::clamp(static_cast<double>(s), -1.0, 1.0);
        append_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(c * 32767.0)));
    }
    return out;
}

void write_wav(const std::filesystem::path& path, std::span<const float> samples, int sample_rate) {
    const auto bytes = encode_wav(samples, sample_rate);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("unwritable_path", "cannot write " + path.string(), "path");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace sonicgauss::audio
