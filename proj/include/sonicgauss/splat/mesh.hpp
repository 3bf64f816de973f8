#pragma once

#include "sonicgauss/splat/gaussian_cloud.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace sonicgauss::splat {

using Vec2d = Eigen::Vector2d;

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<float> rgb;  // row-major, 3 floats per pixel in [0, 1]

    // Bilinear lookup with wrap-around addressing; v = 0 is the top row.
    [[nodiscard]] Vec3d sample(const Vec2d& uv) const;
};

struct TriangleMesh {
    std::vector<Vec3d> vertices;
    std::vector<std::array<int, 3>> faces;
    std::vector<Vec2d> uv;  // empty, or one per vertex
    std::optional<RgbImage> texture;

    // Throws on invalid indices, mismatched uv count or zero total area.
    void validate() const;
    [[nodiscard]] double triangle_area(size_t face) const;
};

// Wavefront OBJ subset: v, vt and f (polygons are fan-triangulated,
// negative indices allowed). Vertices are split per distinct (v, vt) pair.
TriangleMesh load_obj(const std::filesystem::path& path);
void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path);

inline constexpr float kInitialOpacity = 0.9F;

// Area-weighted surface sampling into an initial Gaussian cloud. Each splat
// gets isotropic scale (mean nearest-neighbour distance)/2, identity
// rotation, opacity 0.9 and the texture color at its UV (mid-gray without
// a texture). Deterministic for a given seed.
GaussianCloud sample_mesh_surface(const TriangleMesh& mesh, size_t count, std::uint64_t seed,
                                  std::string object_id = {});

// Surface points only (no splat attributes); shares the triangle sampler.
struct SurfacePoint {
    Vec3d position;
    size_t face;
};
std::vector<SurfacePoint> sample_surface_points(const TriangleMesh& mesh, size_t count, std::uint64_t seed);

// Mean distance from each point to its nearest other point.
double mean_nearest_neighbor_distance(const std::vector<Vec3d>& points);

// Procedural shapes used by the dataset generator; all carry per-vertex UVs.
TriangleMesh make_box(const Vec3d& size);
TriangleMesh make_uv_sphere(double radius, int rings, int segments);
TriangleMesh make_cylinder(double radius, double height, int segments);
// Open hemispherical shell with an inner and outer surface.
TriangleMesh make_bowl(double radius, double thickness, int rings, int segments);

}  // namespace sonicgauss::splat
