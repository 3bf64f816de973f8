#pragma once

#include "sonicgauss/pipeline/config.hpp"
#include "sonicgauss/pipeline/train.hpp"

#include "test_support.hpp"

#include <filesystem>

namespace sonicgauss::testing {

// Tiny dataset (2 materials x 3 objects x 4 impacts, 64 splats) and a
// tiny model trained through every stage, built once per process.
struct TinyFixture {
    std::filesystem::path root;
    std::filesystem::path manifest;
    pipeline::RunConfig config;
    std::filesystem::path stage1;
    std::filesystem::path stage2a;
    std::filesystem::path stage2b;
    std::filesystem::path stage3;
};

pipeline::RunConfig tiny_run_config(const std::filesystem::path& manifest);
const TinyFixture& tiny_fixture();

}  // namespace sonicgauss::testing
