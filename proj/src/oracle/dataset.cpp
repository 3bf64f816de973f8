#include "sonicgauss/oracle/dataset.hpp"

#include "sonicgauss/audio/wav.hpp"
#include "sonicgauss/common/error.hpp"
#include "sonicgauss/common/seed.hpp"
#include "sonicgauss/splat/cloud_io.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace sonicgauss::oracle {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw Error("malformed_manifest", "unknown split: " + s, "split");
}

const DatasetObject& DatasetManifest::object(const std::string& object_id) const {
    for (const auto& o : objects) {
        if (o.object_id == object_id) {
            return o;
        }
    }
    throw Error("unknown_object", "object not in manifest: " + object_id, "object_id");
}

std::vector<DatasetRecord> DatasetManifest::records_in(Split split) const {
    std::vector<DatasetRecord> out;
    std::copy_if(records.begin(), records.end(), std::back_inserter(out),
                 [split](const DatasetRecord& r) { return r.split == split; });
    return out;
}

std::vector<DatasetObject> DatasetManifest::objects_in(Split split) const {
    std::vector<DatasetObject> out;
    std::copy_if(objects.begin(), objects.end(), std::back_inserter(out),
                 [split](const DatasetObject& o) { return o.split == split; });
    return out;
}

Split split_for_object(const DatasetConfig& config, int object_index) {
    const int n = config.objects_per_material;
    const int test = std::min(config.test_objects_per_material, std::max(0, n - 1));
    const int val = std::min(config.val_objects_per_material, std::max(0, n - 1 - test));
    if (object_index >= n - test) {
        return Split::test;
    }
    if (object_index >= n - test - val) {
        return Split::val;
    }
    return Split::train;
}

namespace {

constexpr std::array<const char*, 4> kShapes = {"box", "sphere", "cylinder", "bowl"};

void check_config(const DatasetConfig& c) {
    if (c.materials < 1 || c.objects_per_material < 1 || c.impacts_per_object < 1 || c.splats_per_object < 1) {
        throw Error("invalid_config", "dataset counts must be >= 1", "dataset");
    }
    if (c.impacts_per_object > c.splats_per_object) {
        throw Error("invalid_config", "impacts_per_object exceeds splats_per_object", "impacts_per_object");
    }
}

}  // namespace

splat::TriangleMesh make_object_mesh(const ModalMaterial& material, const std::string& shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
    splat::TriangleMesh mesh;
    if (shape == "box") {
        mesh = splat::make_box({range(0.5, 1.5), range(0.5, 1.5), range(0.5, 1.5)});
    } else if (shape == "sphere") {
        mesh = splat::make_uv_sphere(range(0.4, 0.7), 12, 24);
    } else if (shape == "cylinder") {
        mesh = splat::make_cylinder(range(0.3, 0.6), range(0.6, 1.4), 24);
    } else if (shape == "bowl") {
        mesh = splat::make_bowl(range(0.4, 0.7), 0.05, 8, 24);
    } else {
        throw Error("invalid_config", "unknown shape: " + shape, "shape");
    }
    splat::RgbImage tex;
    tex.width = 8;
    tex.height = 8;
    tex.rgb.resize(static_cast<size_t>(tex.width * tex.height * 3));
    Vec3d tint;
    for (int c = 0; c < 3; ++c) {
        tint(c) = material.albedo(c) + range(-0.03, 0.03);
    }
    for (size_t i = 0; i < tex.rgb.size(); ++i) {
        const double v = tint(static_cast<Eigen::Index>(i % 3)) + range(-0.04, 0.04);
        tex.rgb[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    mesh.texture = std::move(tex);
    return mesh;
}

DatasetManifest generate_dataset(const DatasetConfig& config, const MaterialBank& bank, std::uint64_t seed,
                                 const fs::path& out_dir) {
    check_config(config);
    if (config.materials > static_cast<int>(bank.materials.size())) {
        throw Error("invalid_config", "more materials requested than the bank holds", "materials");
    }
    std::error_code ec;
    for (const char* sub : {"meshes", "clouds", "audio"}) {
        fs::create_directories(out_dir / sub, ec);
        if (ec) {
            throw Error("unwritable_path", "cannot create " + (out_dir / sub).string(), "out_dir");
        }
    }
    DatasetManifest manifest;
    manifest.root = out_dir;
    manifest.config = config;
    manifest.generator_seed = seed;
    manifest.material_bank_hash = bank.hash;

    for (int mi = 0; mi < config.materials; ++mi) {
        const ModalMaterial& material = bank.materials[static_cast<size_t>(mi)];
        for (int oj = 0; oj < config.objects_per_material; ++oj) {
            const auto obj_index = static_cast<std::uint64_t>(mi * config.objects_per_material + oj);
            DatasetObject obj;
            obj.object_id = "obj_" + material.name + "_" + std::to_string(oj);
            obj.material_name = material.name;
            obj.shape = kShapes[static_cast<size_t>(mi + oj) % kShapes.size()];
            obj.split = split_for_object(config, oj);
            obj.mesh_path = "meshes/" + obj.object_id + ".obj";
            obj.cloud_path = "clouds/" + obj.object_id + ".sgs";

            const auto mesh = make_object_mesh(material, obj.shape, derive_seed(seed, {obj_index, 1}));
            splat::save_obj(mesh, out_dir / obj.mesh_path);
            auto raw = splat::sample_mesh_surface(mesh, static_cast<size_t>(config.splats_per_object),
                                                  derive_seed(seed, {obj_index, 2}), obj.object_id);
            auto [cloud, transform] = splat::normalize_cloud(raw);
            cloud.material_label = material.name;
            splat::save_cloud(cloud, out_dir / obj.cloud_path);

            // Impacts land on distinct splat centers, so they lie on the surface
            // and inside the normalized bounding box.
            std::vector<size_t> order(cloud.splats.size());
            std::iota(order.begin(), order.end(), 0);
            std::mt19937_64 pick(derive_seed(seed, {obj_index, 3}));
            std::shuffle(order.begin(), order.end(), pick);
            for (int k = 0; k < config.impacts_per_object; ++k) {
                const auto& sp = cloud.splats[order[static_cast<size_t>(k)]];
                const Vec3d p = sp.position.cast<double>();
                auto sample = synth_impact(material, p, derive_seed(seed, {obj_index, 4, static_cast<std::uint64_t>(k)}));
                DatasetRecord rec;
                rec.path = "audio/" + obj.object_id + "_" + std::to_string(k) + ".wav";
                audio::write_wav(out_dir / rec.path, sample.waveform, kImpactSampleRate);
                rec.object_id = obj.object_id;
                rec.position = p;
                rec.caption = caption_for(material);
                rec.material_name = material.name;
                rec.split = obj.split;
                manifest.records.push_back(std::move(rec));
            }
            manifest.objects.push_back(std::move(obj));
        }
    }
    save_manifest(manifest, out_dir / "manifest.json");
    return manifest;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
    json j;
    j["generator_seed"] = manifest.generator_seed;
    j["material_bank_hash"] = manifest.material_bank_hash;
    const auto& c = manifest.config;
    j["config"] = {{"materials", c.materials},
                   {"objects_per_material", c.objects_per_material},
                   {"impacts_per_object", c.impacts_per_object},
                   {"val_objects_per_material", c.val_objects_per_material},
                   {"test_objects_per_material", c.test_objects_per_material},
                   {"splats_per_object", c.splats_per_object}};
    j["objects"] = json::array();
    for (const auto& o : manifest.objects) {
        j["objects"].push_back({{"object_id", o.object_id},
                                {"material_name", o.material_name},
                                {"shape", o.shape},
                                {"cloud", o.cloud_path},
                                {"mesh", o.mesh_path},
                                {"split", to_string(o.split)}});
    }
    j["records"] = json::array();
    for (const auto& r : manifest.records) {
        j["records"].push_back({{"path", r.path},
                                {"object_id", r.object_id},
                                {"position", {r.position.x(), r.position.y(), r.position.z()}},
                                {"caption", r.caption},
                                {"material_name", r.material_name},
                                {"split", to_string(r.split)}});
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw Error("unwritable_path", "cannot write " + path.string(), "path");
    }
    out << j.dump(1) << '\n';
}

DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("missing_file", "cannot open manifest " + path.string(), "path");
    }
    DatasetManifest m;
    m.root = path.parent_path();
    try {
        const json j = json::parse(in);
        m.generator_seed = j.at("generator_seed").get<std::uint64_t>();
        m.material_bank_hash = j.at("material_bank_hash").get<std::string>();
        const auto& c = j.at("config");
        m.config.materials = c.at("materials").get<int>();
        m.config.objects_per_material = c.at("objects_per_material").get<int>();
        m.config.impacts_per_object = c.at("impacts_per_object").get<int>();
        m.config.val_objects_per_material = c.at("val_objects_per_material").get<int>();
        m.config.test_objects_per_material = c.at("test_objects_per_material").get<int>();
        m.config.splats_per_object = c.at("splats_per_object").get<int>();
        for (const auto& o : j.at("objects")) {
            m.objects.push_back({o.at("object_id").get<std::string>(), o.at("material_name").get<std::string>(),
                                 o.at("shape").get<std::string>(), o.at("cloud").get<std::string>(),
                                 o.at("mesh").get<std::string>(), split_from_string(o.at("split").get<std::string>())});
        }
        for (const auto& r : j.at("records")) {
            DatasetRecord rec;
            rec.path = r.at("path").get<std::string>();
            rec.object_id = r.at("object_id").get<std::string>();
            const auto& p = r.at("position");
            rec.position = Vec3d(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
            rec.caption = r.at("caption").get<std::string>();
            rec.material_name = r.at("material_name").get<std::string>();
            rec.split = split_from_string(r.at("split").get<std::string>());
            m.records.push_back(std::move(rec));
        }
    } catch (const json::exception& e) {
        throw Error("malformed_manifest", std::string("manifest field error: ") + e.what(), "manifest");
    }
    return m;
}

}  // namespace sonicgauss::oracle
