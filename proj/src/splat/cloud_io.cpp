#include "sonicgauss/splat/cloud_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace sonicgauss::splat {

static_assert(std::endian::native == std::endian::little, "cloud IO assumes a little-endian host");

namespace {

constexpr size_t kHeaderBytes = 12;
constexpr size_t kRecordBytes = GaussianSplat::kChannels * sizeof(float);

template <typename T>
void put(std::vector<unsigned char>& out, T v) {
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    out.insert(out.end(), raw, raw + sizeof(T));
}

template <typename T>
T get(std::span<const unsigned char> bytes, size_t offset) {
    T v;
    std::memcpy(&v, bytes.data() + offset, sizeof(T));
    return v;
}

}  // namespace

std::vector<unsigned char> serialize_cloud(const GaussianCloud& cloud) {
    GaussianCloud checked = cloud;
    validate_and_canonicalize(checked);
    std::vector<unsigned char> out;
    out.reserve(kHeaderBytes + checked.splats.size() * kRecordBytes);
    out.insert(out.end(), std::begin(kCloudMagic), std::end(kCloudMagic));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(checked.splats.size()));
    put<std::uint32_t>(out, 0U);
    for (const auto& s : checked.splats) {
        for (float v : s.channels()) {
            put<float>(out, v);
        }
    }
    return out;
}

GaussianCloud parse_cloud(std::span<const unsigned char> bytes) {
    if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kCloudMagic, 4) != 0) {
        throw Error("malformed_header", "cloud file is missing the SGS1 header", "magic");
    }
    const auto count = get<std::uint32_t>(bytes, 4);
    const auto sh_degree = get<std::uint32_t>(bytes, 8);
    if (sh_degree != 0) {
        throw Error("malformed_header", "unsupported SH degree " + std::to_string(sh_degree), "sh_degree");
    }
    if (bytes.size() != kHeaderBytes + static_cast<size_t>(count) * kRecordBytes) {
        throw Error("malformed_header",
                    "cloud file size does not match header splat count " + std::to_string(count), "count");
    }
    GaussianCloud cloud;
    cloud.splats.resize(count);
    size_t off = kHeaderBytes;
    for (auto& s : cloud.splats) {
        float v[GaussianSplat::kChannels];
        std::memcpy(v, bytes.data() + off, kRecordBytes);
        off += kRecordBytes;
        s.position = {v[0], v[1], v[2]};
        s.scale = {v[3], v[4], v[5]};
        s.rotation = {v[6], v[7], v[8], v[9]};
        s.opacity = v[10];
        s.color = {v[11], v[12], v[13]};
    }
    validate_and_canonicalize(cloud);
    return cloud;
}

GaussianCloud load_cloud(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("missing_file", "cannot open cloud file " + path.string(), "path");
    }
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    GaussianCloud cloud = parse_cloud(bytes);
    cloud.object_id = path.stem().string();
    return cloud;
}

void save_cloud(const GaussianCloud& cloud, const std::filesystem::path& path) {
    const auto bytes = serialize_cloud(cloud);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("unwritable_path", "cannot write cloud file " + path.string(), "path");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error("unwritable_path", "failed writing cloud file " + path.string(), "path");
    }
}

}  // namespace sonicgauss::splat
