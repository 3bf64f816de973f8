#pragma once

#include "sonicgauss/common/error.hpp"

#include <Eigen/Core>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace sonicgauss::splat {

using Vec3f = Eigen::Vector3f;
using Vec3d = Eigen::Vector3d;

// One Gaussian ellipsoid with degree-0 spherical-harmonic color.
// Stored in float32, matching the on-disk record.
struct GaussianSplat {
    Vec3f position = Vec3f::Zero();
    Vec3f scale = Vec3f::Constant(0.01F);
    Eigen::Vector4f rotation{1.0F, 0.0F, 0.0F, 0.0F};  // (w, x, y, z)
    float opacity = 0.9F;
    Vec3f color = Vec3f::Constant(0.5F);

    static constexpr int kChannels = 14;
    // p(3) s(3) q(4) o(1) rgb(3), the canonical field order.
    [[nodiscard]] std::array<float, kChannels> channels() const;
};

struct GaussianCloud {
    std::string object_id;
    std::vector<GaussianSplat> splats;
    Vec3f bbox_min = Vec3f::Zero();
    Vec3f bbox_max = Vec3f::Zero();
    std::optional<std::string> material_label;

    void recompute_bbox();
};

// Scale and translation mapping original to normalized coordinates:
// normalized = scale * (original + translation).
struct NormalizeTransform {
    double scale = 1.0;
    Vec3d translation = Vec3d::Zero();

    [[nodiscard]] Vec3d apply(const Vec3d& p) const { return scale * (p + translation); }
};

// Thrown when a splat violates a type invariant; names the record and field.
class CloudValidationError : public Error {
public:
    CloudValidationError(long record, const std::string& field, const std::string& what);
    [[nodiscard]] long record() const noexcept { return record_; }

private:
    long record_;
};

// Checks every invariant; renormalizes quaternions whose norm is off by more
// than 1e-6 and recomputes the bounding box.
void validate_and_canonicalize(GaussianCloud& cloud);

// Centers the bbox at the origin and scales so the largest extent is 1.
std::pair<GaussianCloud, NormalizeTransform> normalize_cloud(const GaussianCloud& cloud);

}  // namespace sonicgauss::splat
