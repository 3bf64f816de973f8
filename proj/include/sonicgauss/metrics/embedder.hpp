#pragma once

#include "sonicgauss/audio/codec.hpp"
#include "sonicgauss/nn/layers.hpp"
#include "sonicgauss/oracle/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace sonicgauss::metrics {

// Small convolutional material classifier over normalized log-mel inputs:
// four conv3x3 + ReLU + 2x2 max-pool blocks (8, 16, 32, 32 channels),
// global average pool, a 128-d embedding layer and a class head.
class AudioEmbedder {
public:
    static constexpr int kEmbeddingDim = 128;
    static constexpr std::array<int, 4> kChannels = {8, 16, 32, 32};

    AudioEmbedder() = default;
    AudioEmbedder(std::vector<std::string> class_names, audio::MelNormStats stats, nn::Rng& rng);

    struct Output {
        nn::Tensor embedding;  // 1 x 128
        nn::Tensor logits;     // 1 x classes
    };
    Output forward(const nn::Matrix& log_mel_values) const;

    // Inference helpers on raw 16 kHz waveforms; no tape is recorded.
    [[nodiscard]] Eigen::RowVectorXd embed(std::span<const float> wave) const;
    [[nodiscard]] Eigen::RowVectorXd posterior(std::span<const float> wave) const;
    [[nodiscard]] std::pair<Eigen::RowVectorXd, Eigen::RowVectorXd> embed_and_posterior(std::span<const float> wave) const;

    void collect(nn::ParameterList& out) const;
    void save(const std::filesystem::path& path) const;
    static AudioEmbedder load(const std::filesystem::path& path);

    [[nodiscard]] const std::vector<std::string>& class_names() const { return class_names_; }
    [[nodiscard]] const audio::MelNormStats& stats() const { return stats_; }

    std::array<nn::Tensor, 4> conv_weight;
    std::array<nn::Tensor, 4> conv_bias;
    nn::Linear fc_embed;
    nn::Linear fc_out;

private:
    std::vector<std::string> class_names_;
    audio::MelNormStats stats_;
};

struct EmbedderTrainOptions {
    int epochs = 12;
    int batch_size = 8;
    double lr = 1e-3;
    std::uint64_t seed = 0;
};

struct EmbedderTrainResult {
    AudioEmbedder model;
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
};

EmbedderTrainResult train_embedder(const oracle::DatasetManifest& manifest, const EmbedderTrainOptions& options,
                                   const std::function<void(const std::string&)>& log = {});

// The pinned embedder under the asset directory.
std::filesystem::path default_embedder_path();

}  // namespace sonicgauss::metrics
