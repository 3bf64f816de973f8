#pragma once

#include "sonicgauss/splat/gaussian_cloud.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace sonicgauss::splat {

// Binary little-endian cloud file: magic "SGS1", u32 splat count,
// u32 SH degree (always 0), then 14 float32 per splat in canonical order.
inline constexpr char kCloudMagic[4] = {'S', 'G', 'S', '1'};

GaussianCloud load_cloud(const std::filesystem::path& path);
void save_cloud(const GaussianCloud& cloud, const std::filesystem::path& path);

std::vector<unsigned char> serialize_cloud(const GaussianCloud& cloud);
// object_id is left empty; load_cloud fills it from the file stem.
GaussianCloud parse_cloud(std::span<const unsigned char> bytes);

}  // namespace sonicgauss::splat
