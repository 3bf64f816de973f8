#include "sonicgauss/splat/mesh.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <unordered_map>

namespace sonicgauss::splat {

Vec3d RgbImage::sample(const Vec2d& uv) const {
    if (width <= 0 || height <= 0) {
        return Vec3d::Constant(0.5);
    }
    const double fx = (uv.x() - std::floor(uv.x())) * width - 0.5;
    const double fy = (1.0 - (uv.y() - std::floor(uv.y()))) * height - 0.5;
    const int x0 = static_cast<int>(std::floor(fx));
    const int y0 = static_cast<int>(std::floor(fy));
    const double tx = fx - x0;
    const double ty = fy - y0;
    auto texel = [&](int x, int y) {
        x = ((x % width) + width) % width;
        y = ((y % height) + height) % height;
        const size_t i = (static_cast<size_t>(y) * static_cast<size_t>(width) + static_cast<size_t>(x)) * 3;
        return Vec3d(rgb[i], rgb[i + 1], rgb[i + 2]);
    };
    return (1 - ty) * ((1 - tx) * texel(x0, y0) + tx * texel(x0 + 1, y0)) +
           ty * ((1 - tx) * texel(x0, y0 + 1) + tx * texel(x0 + 1, y0 + 1));
}

double TriangleMesh::triangle_area(size_t face) const {
    const auto& f = faces[face];
    const Vec3d e1 = vertices[static_cast<size_t>(f[1])] - vertices[static_cast<size_t>(f[0])];
    const Vec3d e2 = vertices[static_cast<size_t>(f[2])] - vertices[static_cast<size_t>(f[0])];
    return 0.5 * e1.cross(e2).norm();
}

void TriangleMesh::validate() const {
    if (faces.empty() || vertices.empty()) {
        throw Error("empty_mesh", "mesh has no faces", "faces");
    }
    if (!uv.empty() && uv.size() != vertices.size()) {
        throw Error("invalid_mesh", "uv count must match vertex count", "uv");
    }
    if (texture && static_cast<size_t>(texture->width) * static_cast<size_t>(texture->height) * 3 !=
                       texture->rgb.size()) {
        throw Error("invalid_mesh", "texture size mismatch", "texture");
    }
    double total = 0.0;
    for (size_t i = 0; i < faces.size(); ++i) {
        for (int idx : faces[i]) {
            if (idx < 0 || static_cast<size_t>(idx) >= vertices.size()) {
                throw Error("invalid_mesh", "face " + std::to_string(i) + " has an invalid vertex index", "faces");
            }
        }
        total += triangle_area(i);
    }
    if (!(total > 0.0)) {
        throw Error("invalid_mesh", "mesh has zero surface area", "faces");
    }
}

// ---------------------------------------------------------------------------

TriangleMesh load_obj(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("missing_file", "cannot open mesh " + path.string(), "path");
    }
    std::vector<Vec3d> positions;
    std::vector<Vec2d> texcoords;
    TriangleMesh mesh;
    std::map<std::pair<int, int>, int> remap;
    bool any_uv = false;

    auto resolve = [](int idx, size_t size) {
        return idx < 0 ? static_cast<int>(size) + idx : idx - 1;
    };
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "v") {
            Vec3d p;
            if (!(ss >> p.x() >> p.y() >> p.z())) {
                throw Error("malformed_mesh", "bad vertex at line " + std::to_string(line_no), "v");
            }
            positions.push_back(p);
        } else if (tag == "vt") {
            Vec2d t;
            if (!(ss >> t.x() >> t.y())) {
                throw Error("malformed_mesh", "bad texcoord at line " + std::to_string(line_no), "vt");
            }
            texcoords.push_back(t);
        } else if (tag == "f") {
            std::vector<int> poly;
            std::string tok;
            while (ss >> tok) {
                int vi = 0;
                int ti = 0;
                const auto slash = tok.find('/');
                vi = resolve(std::stoi(tok.substr(0, slash)), positions.size());
                if (slash != std::string::npos) {
                    const auto rest = tok.substr(slash + 1);
                    const auto slash2 = rest.find('/');
                    const auto tstr = rest.substr(0, slash2);
                    if (!tstr.empty()) {
                        ti = resolve(std::stoi(tstr), texcoords.size()) + 1;
                        any_uv = true;
                    }
                }
                if (vi < 0 || static_cast<size_t>(vi) >= positions.size()) {
                    throw Error("malformed_mesh", "face index out of range at line " + std::to_string(line_no), "f");
                }
                const auto key = std::make_pair(vi, ti);
                auto it = remap.find(key);
                if (it == remap.end()) {
                    it = remap.emplace(key, static_cast<int>(mesh.vertices.size())).first;
                    mesh.vertices.push_back(positions[static_cast<size_t>(vi)]);
                    mesh.uv.push_back(ti > 0 ? texcoords.at(static_cast<size_t>(ti - 1)) : Vec2d::Zero());
                }
                poly.push_back(it->second);
            }
            for (size_t k = 2; k < poly.size(); ++k) {
                mesh.faces.push_back({poly[0], poly[k - 1], poly[k]});
            }
        }
    }
    if (!any_uv) {
        mesh.uv.clear();
    }
    mesh.validate();
    return mesh;
}

void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error("unwritable_path", "cannot write mesh " + path.string(), "path");
    }
    out.precision(17);
    for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    for (const auto& t : mesh.uv) out << "vt " << t.x() << ' ' << t.y() << '\n';
    const bool with_uv = !mesh.uv.empty();
    for (const auto& f : mesh.faces) {
        out << 'f';
        for (int i : f) {
            out << ' ' << i + 1;
            if (with_uv) out << '/' << i + 1;
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------

std::vector<SurfacePoint> sample_surface_points(const TriangleMesh& mesh, size_t count, std::uint64_t seed) {
    mesh.validate();
    if (count == 0) {
        throw Error("invalid_argument", "sample count must be at least 1", "n");
    }
    std::vector<double> cdf(mesh.faces.size());
    double total = 0.0;
    for (size_t i = 0; i < mesh.faces.size(); ++i) {
        total += mesh.triangle_area(i);
        cdf[i] = total;
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<SurfacePoint> points;
    points.reserve(count);
    for (size_t n = 0; n < count; ++n) {
        const double u = unit(rng) * total;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        size_t face = static_cast<size_t>(std::distance(cdf.begin(), it));
        face = std::min(face, cdf.size() - 1);
        // Skip zero-area faces that share a CDF value with their successor.
        while (face + 1 < cdf.size() && mesh.triangle_area(face) == 0.0) ++face;
        const double r1 = std::sqrt(unit(rng));
        const double r2 = unit(rng);
        const auto& f = mesh.faces[face];
        const Vec3d& a = mesh.vertices[static_cast<size_t>(f[0])];
        const Vec3d& b = mesh.vertices[static_cast<size_t>(f[1])];
        const Vec3d& c = mesh.vertices[static_cast<size_t>(f[2])];
        points.push_back({(1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c, face});
    }
    return points;
}

double mean_nearest_neighbor_distance(const std::vector<Vec3d>& points) {
    if (points.size() < 2) {
        return 0.0;
    }
    Vec3d lo = points.front();
    Vec3d hi = points.front();
    for (const auto& p : points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double extent = std::max((hi - lo).maxCoeff(), 1e-12);
    const double per_axis = std::max(1.0, std::cbrt(static_cast<double>(points.size())));
    const double cell = extent / per_axis;
    const int dims = static_cast<int>(per_axis) + 1;

    auto cell_of = [&](const Vec3d& p) {
        Eigen::Vector3i c = ((p - lo) / cell).array().floor().cast<int>();
        return c.cwiseMax(0).cwiseMin(dims - 1).eval();
    };
    auto key = [dims](int x, int y, int z) {
        return (static_cast<long long>(x) * dims + y) * dims + z;
    };
    std::unordered_map<long long, std::vector<size_t>> grid;
    for (size_t i = 0; i < points.size(); ++i) {
        const auto c = cell_of(points[i]);
        grid[key(c.x(), c.y(), c.z())].push_back(i);
    }

    double total = 0.0;
    for (size_t i = 0; i < points.size(); ++i) {
        const auto c = cell_of(points[i]);
        double best = std::numeric_limits<double>::infinity();
        for (int r = 0; r < dims; ++r) {
            for (int dx = -r; dx <= r; ++dx) {
                for (int dy = -r; dy <= r; ++dy) {
                    for (int dz = -r; dz <= r; ++dz) {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
                        const int x = c.x() + dx, y = c.y() + dy, z = c.z() + dz;
                        if (x < 0 || y < 0 || z < 0 || x >= dims || y >= dims || z >= dims) continue;
                        auto it = grid.find(key(x, y, z));
                        if (it == grid.end()) continue;
                        for (size_t j : it->second) {
                            if (j == i) continue;
                            best = std::min(best, (points[j] - points[i]).squaredNorm());
                        }
                    }
                }
            }
            // Everything outside ring r is at least r cells away.
            if (best <= (r * cell) * (r * cell)) break;
        }
        total += std::sqrt(best);
    }
    return total / static_cast<double>(points.size());
}

GaussianCloud sample_mesh_surface(const TriangleMesh& mesh, size_t count, std::uint64_t seed, std::string object_id) {
    const auto points = sample_surface_points(mesh, count, seed);
    std::vector<Vec3d> positions;
    positions.reserve(points.size());
    for (const auto& p : points) positions.push_back(p.position);
    double scale = 0.5 * mean_nearest_neighbor_distance(positions);
    if (!(scale > 0.0)) {
        scale = 1e-6;
    }

    GaussianCloud cloud;
    cloud.object_id = std::move(object_id);
    cloud.splats.reserve(points.size());
    const bool textured = mesh.texture.has_value() && !mesh.uv.empty();
    for (const auto& p : points) {
        GaussianSplat s;
        s.position = p.position.cast<float>();
        s.scale = Vec3f::Constant(static_cast<float>(scale));
        s.rotation = {1.0F, 0.0F, 0.0F, 0.0F};
        s.opacity = kInitialOpacity;
        if (textured) {
            const auto& f = mesh.faces[p.face];
            const Vec3d& a = mesh.vertices[static_cast<size_t>(f[0])];
            const Vec3d& b = mesh.vertices[static_cast<size_t>(f[1])];
            const Vec3d& c = mesh.vertices[static_cast<size_t>(f[2])];
            // Barycentric coordinates of the sample for UV interpolation.
            const Vec3d v0 = b - a, v1 = c - a, v2 = p.position - a;
            const double d00 = v0.dot(v0), d01 = v0.dot(v1), d11 = v1.dot(v1);
            const double d20 = v2.dot(v0), d21 = v2.dot(v1);
            const double den = d00 * d11 - d01 * d01;
            const double wb = den != 0.0 ? (d11 * d20 - d01 * d21) / den : 0.0;
            const double wc = den != 0.0 ? (d00 * d21 - d01 * d20) / den : 0.0;
            const Vec2d uv = (1.0 - wb - wc) * mesh.uv[static_cast<size_t>(f[0])] +
                             wb * mesh.uv[static_cast<size_t>(f[1])] + wc * mesh.uv[static_cast<size_t>(f[2])];
            s.color = mesh.texture->sample(uv).cast<float>();
        } else {
            s.color = Vec3f::Constant(0.5F);
        }
        cloud.splats.push_back(s);
    }
    cloud.recompute_bbox();
    return cloud;
}

// ---------------------------------------------------------------------------

namespace {

void add_quad(TriangleMesh& m, int a, int b, int c, int d) {
    m.faces.push_back({a, b, c});
    m.faces.push_back({a, c, d});
}

}  // namespace

TriangleMesh make_box(const Vec3d& size) {
    TriangleMesh m;
    const Vec3d h = 0.5 * size;
    // Each face gets its own four vertices so UVs are per-face.
    const std::array<std::array<Vec3d, 4>, 6> quads = {{
        {{{-h.x(), -h.y(), h.z()}, {h.x(), -h.y(), h.z()}, {h.x(), h.y(), h.z()}, {-h.x(), h.y(), h.z()}}},
        {{{h.x(), -h.y(), -h.z()}, {-h.x(), -h.y(), -h.z()}, {-h.x(), h.y(), -h.z()}, {h.x(), h.y(), -h.z()}}},
        {{{h.x(), -h.y(), h.z()}, {h.x(), -h.y(), -h.z()}, {h.x(), h.y(), -h.z()}, {h.x(), h.y(), h.z()}}},
        {{{-h.x(), -h.y(), -h.z()}, {-h.x(), -h.y(), h.z()}, {-h.x(), h.y(), h.z()}, {-h.x(), h.y(), -h.z()}}},
        {{{-h.x(), h.y(), h.z()}, {h.x(), h.y(), h.z()}, {h.x(), h.y(), -h.z()}, {-h.x(), h.y(), -h.z()}}},
        {{{-h.x(), -h.y(), -h.z()}, {h.x(), -h.y(), -h.z()}, {h.x(), -h.y(), h.z()}, {-h.x(), -h.y(), h.z()}}},
    }};
    const std::array<Vec2d, 4> uvs = {Vec2d(0, 0), Vec2d(1, 0), Vec2d(1, 1), Vec2d(0, 1)};
    for (const auto& q : quads) {
        const int base = static_cast<int>(m.vertices.size());
        for (int i = 0; i < 4; ++i) {
            m.vertices.push_back(q[static_cast<size_t>(i)]);
            m.uv.push_back(uvs[static_cast<size_t>(i)]);
        }
        add_quad(m, base, base + 1, base + 2, base + 3);
    }
    return m;
}

namespace {

// Latitude-longitude grid over polar angle [theta0, theta1].
void add_sphere_patch(TriangleMesh& m, double radius, double theta0, double theta1, int rings, int segments,
                      bool flip) {
    const int base = static_cast<int>(m.vertices.size());
    for (int r = 0; r <= rings; ++r) {
        const double theta = theta0 + (theta1 - theta0) * r / rings;
        for (int s = 0; s <= segments; ++s) {
            const double phi = 2.0 * std::numbers::pi * s / segments;
            m.vertices.emplace_back(radius * std::sin(theta) * std::cos(phi), radius * std::cos(theta),
                                    radius * std::sin(theta) * std::sin(phi));
            m.uv.emplace_back(static_cast<double>(s) / segments, 1.0 - static_cast<double>(r) / rings);
        }
    }
    const int stride = segments + 1;
    for (int r = 0; r < rings; ++r) {
        for (int s = 0; s < segments; ++s) {
            const int a = base + r * stride + s;
            const int b = a + 1;
            const int c = a + stride + 1;
            const int d = a + stride;
            if (flip) {
                add_quad(m, a, d, c, b);
            } else {
                add_quad(m, a, b, c, d);
            }
        }
    }
}

}  // namespace

TriangleMesh make_uv_sphere(double radius, int rings, int segments) {
    TriangleMesh m;
    add_sphere_patch(m, radius, 0.0, std::numbers::pi, rings, segments, false);
    return m;
}

TriangleMesh make_cylinder(double radius, double height, int segments) {
    TriangleMesh m;
    const double h = 0.5 * height;
    const int stride = segments + 1;
    for (int ring = 0; ring < 2; ++ring) {
        const double y = ring == 0 ? -h : h;
        for (int s = 0; s <= segments; ++s) {
            const double phi = 2.0 * std::numbers::pi * s / segments;
            m.vertices.emplace_back(radius * std::cos(phi), y, radius * std::sin(phi));
            m.uv.emplace_back(static_cast<double>(s) / segments, ring);
        }
    }
    for (int s = 0; s < segments; ++s) {
        add_quad(m, s, s + 1, stride + s + 1, stride + s);
    }
    for (int cap = 0; cap < 2; ++cap) {
        const double y = cap == 0 ? -h : h;
        const int center = static_cast<int>(m.vertices.size());
        m.vertices.emplace_back(0.0, y, 0.0);
        m.uv.emplace_back(0.5, 0.5);
        const int rim = static_cast<int>(m.vertices.size());
        for (int s = 0; s <= segments; ++s) {
            const double phi = 2.0 * std::numbers::pi * s / segments;
            m.vertices.emplace_back(radius * std::cos(phi), y, radius * std::sin(phi));
            m.uv.emplace_back(0.5 + 0.5 * std::cos(phi), 0.5 + 0.5 * std::sin(phi));
        }
        for (int s = 0; s < segments; ++s) {
            if (cap == 0) {
                m.faces.push_back({center, rim + s, rim + s + 1});
            } else {
                m.faces.push_back({center, rim + s + 1, rim + s});
            }
        }
    }
    return m;
}

TriangleMesh make_bowl(double radius, double thickness, int rings, int segments) {
    TriangleMesh m;
    const double half_pi = 0.5 * std::numbers::pi;
    add_sphere_patch(m, radius, half_pi, std::numbers::pi, rings, segments, false);
    add_sphere_patch(m, radius - thickness, half_pi, std::numbers::pi, rings, segments, true);
    // Rim annulus joining the two shells at the equator.
    const int base = static_cast<int>(m.vertices.size());
    for (int s = 0; s <= segments; ++s) {
        const double phi = 2.0 * std::numbers::pi * s / segments;
        m.vertices.emplace_back(radius * std::cos(phi), 0.0, radius * std::sin(phi));
        m.uv.emplace_back(static_cast<double>(s) / segments, 1.0);
        m.vertices.emplace_back((radius - thickness) * std::cos(phi), 0.0, (radius - thickness) * std::sin(phi));
        m.uv.emplace_back(static_cast<double>(s) / segments, 0.9);
    }
    for (int s = 0; s < segments; ++s) {
        const int o0 = base + 2 * s, i0 = o0 + 1, o1 = o0 + 2, i1 = o0 + 3;
        add_quad(m, o0, i0, i1, o1);
    }
    return m;
}

}  // namespace sonicgauss::splat
