#include "sonicgauss/splat/orbit.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <fstream>
#include <numbers>

namespace sonicgauss::splat {

namespace {

double radians(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace

Vec3d orbit_position(double distance, double azimuth_deg, double elevation_deg) {
    const double a = radians(azimuth_deg);
    const double e = radians(elevation_deg);
    return distance * Vec3d(std::cos(e) * std::sin(a), std::sin(e), std::cos(e) * std::cos(a));
}

std::vector<CameraPose> orbit_poses(double distance, double azimuth_step_deg, const std::vector<double>& elevations_deg) {
    if (!(distance > 0.0)) {
        throw Error("invalid_argument", "orbit distance must be positive", "distance");
    }
    if (!(azimuth_step_deg > 0.0)) {
        throw Error("invalid_argument", "azimuth step must be positive", "azimuth_step");
    }
    const double steps = 360.0 / azimuth_step_deg;
    const long count = std::lround(steps);
    if (std::abs(steps - static_cast<double>(count)) > 1e-9) {
        throw Error("invalid_argument", "azimuth step must divide 360", "azimuth_step");
    }
    std::vector<CameraPose> poses;
    poses.reserve(static_cast<size_t>(count) * elevations_deg.size());
    for (double el : elevations_deg) {
        for (long i = 0; i < count; ++i) {
            CameraPose pose;
            pose.azimuth_deg = static_cast<double>(i) * azimuth_step_deg;
            pose.elevation_deg = el;
            pose.position = orbit_position(distance, pose.azimuth_deg, el);
            const Vec3d view = (pose.look_at - pose.position).normalized();
            if (view.cross(pose.up).norm() < 1e-9) {
                pose.up = Vec3d::UnitZ();
            }
            poses.push_back(pose);
        }
    }
    return poses;
}

void write_poses_csv(const std::vector<CameraPose>& poses, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error("unwritable_path", "cannot write poses to " + path.string(), "path");
    }
    out.precision(17);
    out << "az_deg,el_deg,px,py,pz\n";
    for (const auto& p : poses) {
        out << p.azimuth_deg << ',' << p.elevation_deg << ',' << p.position.x() << ',' << p.position.y() << ','
            << p.position.z() << '\n';
    }
}

}  // namespace sonicgauss::splat
