#include "sonicgauss/splat/gaussian_cloud.hpp"

#include <cmath>
#include <limits>

namespace sonicgauss::splat {

std::array<float, GaussianSplat::kChannels> GaussianSplat::channels() const {
    return {position.x(), position.y(), position.z(), scale.x(),    scale.y(),    scale.z(),    rotation(0),
            rotation(1),  rotation(2),  rotation(3),  opacity,      color.x(),    color.y(),    color.z()};
}

void GaussianCloud::recompute_bbox() {
    if (splats.empty()) {
        bbox_min = bbox_max = Vec3f::Zero();
        return;
    }
    bbox_min = Vec3f::Constant(std::numeric_limits<float>::max());
    bbox_max = Vec3f::Constant(std::numeric_limits<float>::lowest());
    for (const auto& s : splats) {
        bbox_min = bbox_min.cwiseMin(s.position);
        bbox_max = bbox_max.cwiseMax(s.position);
    }
}

CloudValidationError::CloudValidationError(long record, const std::string& field, const std::string& what)
    : Error("invalid_record", "record " + std::to_string(record) + ": field \"" + field + "\" " + what, field),
      record_(record) {}

void validate_and_canonicalize(GaussianCloud& cloud) {
    if (cloud.splats.empty()) {
        throw Error("invalid_cloud", "splat count >= 1 violated", "splats");
    }
    static constexpr const char* kNames[GaussianSplat::kChannels] = {"px", "py", "pz", "sx", "sy", "sz", "qw",
                                                                      "qx", "qy", "qz", "opacity", "r", "g", "b"};
    for (size_t i = 0; i < cloud.splats.size(); ++i) {
        auto& s = cloud.splats[i];
        const long rec = static_cast<long>(i);
        const auto ch = s.channels();
        for (int c = 0; c < GaussianSplat::kChannels; ++c) {
            if (!std::isfinite(ch[static_cast<size_t>(c)])) {
                throw CloudValidationError(rec, kNames[c], "is not finite");
            }
        }
        for (int a = 0; a < 3; ++a) {
            if (!(s.scale(a) > 0.0F)) {
                throw CloudValidationError(rec, kNames[3 + a], "must be strictly positive");
            }
        }
        if (!(s.opacity >= 0.0F && s.opacity < 1.0F)) {
            throw CloudValidationError(rec, "opacity", "must lie in [0, 1)");
        }
        const double norm = s.rotation.cast<double>().norm();
        if (!(norm > 0.0)) {
            throw CloudValidationError(rec, "qw", "quaternion has zero norm");
        }
        if (std::abs(norm - 1.0) > 1e-6) {
            s.rotation = (s.rotation.cast<double>() / norm).cast<float>();
        }
    }
    cloud.recompute_bbox();
}

std::pair<GaussianCloud, NormalizeTransform> normalize_cloud(const GaussianCloud& cloud) {
    if (cloud.splats.empty()) {
        throw Error("invalid_cloud", "splat count >= 1 violated", "splats");
    }
    Vec3d lo = Vec3d::Constant(std::numeric_limits<double>::max());
    Vec3d hi = Vec3d::Constant(std::numeric_limits<double>::lowest());
    for (const auto& s : cloud.splats) {
        lo = lo.cwiseMin(s.position.cast<double>());
        hi = hi.cwiseMax(s.position.cast<double>());
    }
    const double extent = (hi - lo).maxCoeff();
    if (!(extent > 0.0)) {
        throw Error("degenerate_bbox", "cannot normalize a cloud with zero extent on all axes", "bbox");
    }
    NormalizeTransform tf;
    tf.translation = -0.5 * (lo + hi);
    tf.scale = 1.0 / extent;

    GaussianCloud out = cloud;
    for (auto& s : out.splats) {
        s.position = tf.apply(s.position.cast<double>()).cast<float>();
        s.scale = (s.scale.cast<double>() * tf.scale).cast<float>();
    }
    out.recompute_bbox();
    return {std::move(out), tf};
}

}  // namespace sonicgauss::splat
