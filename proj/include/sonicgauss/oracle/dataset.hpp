#pragma once

#include "sonicgauss/oracle/modal.hpp"
#include "sonicgauss/splat/gaussian_cloud.hpp"
#include "sonicgauss/splat/mesh.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sonicgauss::oracle {

enum class Split { train, val, test };

std::string to_string(Split split);
Split split_from_string(const std::string& s);

struct DatasetConfig {
    int materials = 8;
    int objects_per_material = 4;
    int impacts_per_object = 36;
    int val_objects_per_material = 1;
    int test_objects_per_material = 1;
    int splats_per_object = 10000;
};

struct DatasetObject {
    std::string object_id;
    std::string material_name;
    std::string shape;
    std::string cloud_path;  // relative to the manifest directory
    std::string mesh_path;
    Split split = Split::train;
};

struct DatasetRecord {
    std::string path;  // WAV, relative to the manifest directory
    std::string object_id;
    Vec3d position = Vec3d::Zero();  // normalized object coordinates
    std::string caption;
    std::string material_name;
    Split split = Split::train;
};

struct DatasetManifest {
    std::filesystem::path root;  // directory holding manifest.json
    DatasetConfig config;
    std::uint64_t generator_seed = 0;
    std::string material_bank_hash;
    std::vector<DatasetObject> objects;
    std::vector<DatasetRecord> records;

    [[nodiscard]] std::filesystem::path resolve(const std::string& relative) const { return root / relative; }
    [[nodiscard]] const DatasetObject& object(const std::string& object_id) const;
    [[nodiscard]] std::vector<DatasetRecord> records_in(Split split) const;
    [[nodiscard]] std::vector<DatasetObject> objects_in(Split split) const;
};

// Split assignment for object index j of a material: the last
// test_objects_per_material go to test, the preceding val ones to val.
Split split_for_object(const DatasetConfig& config, int object_index);

// Procedural mesh for one object; the texture carries the material albedo
// with per-object and per-texel jitter.
splat::TriangleMesh make_object_mesh(const ModalMaterial& material, const std::string& shape, std::uint64_t seed);

// Writes meshes/, clouds/, audio/ and manifest.json under out_dir.
DatasetManifest generate_dataset(const DatasetConfig& config, const MaterialBank& bank, std::uint64_t seed,
                                 const std::filesystem::path& out_dir);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

}  // namespace sonicgauss::oracle
