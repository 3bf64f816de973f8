#pragma once

#include "sonicgauss/encoders/encoders.hpp"
#include "sonicgauss/flow/flow.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace sonicgauss::pipeline {

// Flat run configuration; every key is optional in the file and defaults
// to the values below.
struct RunConfig {
    std::string stage = "1";
    int epochs = 80;
    int batch_size = 2;
    int batch_size_2a = 8;
    double lr = 1e-4;
    double weight_decay = 0.01;
    double warmup_fraction = 0.05;
    double encoder_lr_scale_stage3 = 0.1;
    std::uint64_t seed = 0;
    std::string dataset;  // manifest.json
    std::string fusion_mode = "cross_attention";
    bool infonce = true;
    int val_max_records = 64;

    int d_joint = 256;
    int d_model = 256;
    int heads = 4;
    int velocity_blocks = 6;
    int velocity_mlp_ratio = 4;
    int encoder_mlp_ratio = 2;
    int gaussian_stages = 4;
    int gaussian_window = 16;
    int gaussian_merge_stride = 4;
    int gaussian_max_tokens = 64;
    int text_blocks = 2;
    int text_max_len = 32;
    int position_hidden1 = 256;
    int position_hidden2 = 512;
    int frames = 188;
    int bins = 64;

    [[nodiscard]] encoders::EncoderConfig encoder_config() const;
    [[nodiscard]] flow::VelocityConfig velocity_config() const;
    [[nodiscard]] flow::FusionMode fusion() const { return flow::fusion_from_string(fusion_mode); }

    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    // Unknown keys are rejected so typos do not silently fall back.
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::filesystem::path& path);
};

bool valid_stage(const std::string& stage);
// The stage whose checkpoint a stage consumes; empty for stage 1.
std::string predecessor_stage(const std::string& stage);

}  // namespace sonicgauss::pipeline
