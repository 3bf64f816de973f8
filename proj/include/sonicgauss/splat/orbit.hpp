#pragma once

#include "sonicgauss/splat/gaussian_cloud.hpp"

#include <filesystem>
#include <vector>

namespace sonicgauss::splat {

struct CameraPose {
    double azimuth_deg = 0.0;
    double elevation_deg = 0.0;
    Vec3d position = Vec3d::UnitZ();
    Vec3d look_at = Vec3d::Zero();
    Vec3d up = Vec3d::UnitY();
    double vertical_fov_deg = 45.0;
    int image_width = 512;
    int image_height = 512;
};

// Camera on a sphere of radius `distance` around the origin:
// distance * (cos(el) sin(az), sin(el), cos(el) cos(az)).
Vec3d orbit_position(double distance, double azimuth_deg, double elevation_deg);

// One pose per (azimuth, elevation) pair, azimuth-major within each
// elevation level. azimuth_step_deg must divide 360.
std::vector<CameraPose> orbit_poses(double distance, double azimuth_step_deg = 15.0,
                                    const std::vector<double>& elevations_deg = {-45.0, 0.0, 45.0});

// CSV with header az_deg,el_deg,px,py,pz.
void write_poses_csv(const std::vector<CameraPose>& poses, const std::filesystem::path& path);

}  // namespace sonicgauss::splat
