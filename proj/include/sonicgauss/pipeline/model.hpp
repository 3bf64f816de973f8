#pragma once

#include "sonicgauss/audio/codec.hpp"
#include "sonicgauss/encoders/encoders.hpp"
#include "sonicgauss/flow/flow.hpp"
#include "sonicgauss/nn/optim.hpp"
#include "sonicgauss/pipeline/config.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sonicgauss::pipeline {

struct LossRow {
    int epoch = 0;
    std::string split;  // train | val
    double loss = 0.0;
    double lr = 0.0;
    double tau = 0.0;
};

// Every trainable module of the system plus the data-derived state that
// travels with it (vocabulary, mel statistics, stage tag).
class Model {
public:
    Model(const RunConfig& config, encoders::Vocabulary vocab, audio::MelNormStats stats);

    RunConfig config;
    audio::MelNormStats stats;
    std::string stage;  // "", "stage1", "stage2a", "stage2b", "stage3"
    flow::FusionMode fusion_mode = flow::FusionMode::cross_attention;

    encoders::TextEncoder text;
    encoders::GaussianEncoder gauss;
    encoders::PositionEncoder position;
    flow::Fusion fusion;
    flow::VelocityNet velocity;
    nn::Tensor tau;  // 1 x 1, contrastive temperature

    void set_fusion_mode(flow::FusionMode mode);

    [[nodiscard]] nn::ParameterList text_parameters() const;
    [[nodiscard]] nn::ParameterList gaussian_parameters() const;
    [[nodiscard]] nn::ParameterList position_parameters() const;
    [[nodiscard]] nn::ParameterList fusion_parameters() const;
    [[nodiscard]] nn::ParameterList velocity_parameters() const;
    [[nodiscard]] nn::ParameterList all_parameters() const;

    // Conditioning for each stage's flow objective.
    [[nodiscard]] encoders::FeatureTokens text_condition(const std::string& caption) const;
    [[nodiscard]] encoders::FeatureTokens gaussian_condition(const nn::Matrix& serialized_splats) const;
    [[nodiscard]] encoders::FeatureTokens fused_condition(const nn::Matrix& serialized_splats,
                                                          const Eigen::Vector3d& position) const;
};

struct TrainingState {
    int epochs_completed = 0;
    long optimizer_steps = 0;
    std::optional<double> initial_val_loss;
    std::vector<LossRow> loss_log;
    std::map<std::string, std::pair<nn::Matrix, nn::Matrix>> optimizer_moments;
};

struct Checkpoint {
    Model model;
    TrainingState state;
};

void save_checkpoint(const Model& model, const TrainingState& state, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// "1" -> "stage1" and so on.
std::string stage_tag(const std::string& stage);

void write_loss_csv(const std::vector<LossRow>& rows, const std::filesystem::path& path);

}  // namespace sonicgauss::pipeline
