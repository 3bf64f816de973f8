#pragma once

#include "sonicgauss/nn/layers.hpp"
#include "sonicgauss/splat/gaussian_cloud.hpp"

#include <Eigen/Core>

#include <map>
#include <string>
#include <vector>

namespace sonicgauss::encoders {

using nn::Matrix;
using nn::Tensor;

// Conditioning output: m x d tokens and a 1 x d pooled vector.
struct FeatureTokens {
    Tensor tokens;
    Tensor pooled;
};

struct EncoderConfig {
    int d_joint = 256;
    int heads = 4;
    int mlp_ratio = 2;
    int gaussian_stages = 4;
    int gaussian_window = 16;
    int gaussian_merge_stride = 4;
    int gaussian_max_tokens = 64;
    int text_blocks = 2;
    int text_max_len = 32;
    int position_hidden1 = 256;
    int position_hidden2 = 512;

    // Throws unless d_joint is divisible by heads and all sizes are positive.
    void validate() const;
};

inline constexpr int kFrequencyBands = 10;
inline constexpr int kFreqEncodingDim = 3 * 2 * kFrequencyBands + 3;  // 63

// sin(pi x) and cos(pi x) with exact range reduction, so half-integer
// arguments give exact 0 and +-1.
double sin_pi(double x);
double cos_pi(double x);

// [sin(2^l pi p_c), cos(2^l pi p_c)] for c = x, y, z and l = 0..9
// (coordinate-major, then band), followed by the raw p. 1 x 63.
Matrix freq_encode(const Eigen::Vector3d& p);

class PositionEncoder {
public:
    PositionEncoder() = default;
    PositionEncoder(const EncoderConfig& config, nn::Rng& rng);

    // 1 x d_joint; ReLU between layers, none after the last.
    Tensor operator()(const Eigen::Vector3d& p) const;
    void collect(const std::string& prefix, nn::ParameterList& out) const;

    nn::Linear fc1;
    nn::Linear fc2;
    nn::Linear fc3;
};

// Per-splat 14-channel features sorted by the Morton code of positions
// quantized to 10 bits per axis over [-0.5, 0.5]; ties broken by the full
// feature row so the order depends only on the splat multiset.
Matrix serialize_splats(const splat::GaussianCloud& cloud);
std::uint32_t morton_code(const Eigen::Vector3f& position);

class GaussianEncoder {
public:
    GaussianEncoder() = default;
    GaussianEncoder(const EncoderConfig& config, nn::Rng& rng);

    FeatureTokens operator()(const splat::GaussianCloud& cloud) const;
    FeatureTokens encode_features(const Matrix& serialized) const;
    void collect(const std::string& prefix, nn::ParameterList& out) const;

    nn::Linear embed;
    std::vector<nn::TransformerBlock> blocks;
    nn::LayerNorm final_norm;

private:
    EncoderConfig config_;
};

// Lowercase words split on anything that is not a letter or digit.
std::vector<std::string> tokenize(const std::string& caption);

class Vocabulary {
public:
    static constexpr int kUnknown = 0;
    static constexpr const char* kUnknownToken = "<unk>";

    Vocabulary();
    static Vocabulary build(const std::vector<std::string>& captions);
    static Vocabulary from_words(const std::vector<std::string>& words);

    [[nodiscard]] int id(const std::string& word) const;
    // Word ids of a caption; a caption with no words yields one unknown id.
    [[nodiscard]] std::vector<int> encode(const std::string& caption) const;
    [[nodiscard]] int size() const { return static_cast<int>(words_.size()); }
    [[nodiscard]] const std::vector<std::string>& words() const { return words_; }

private:
    std::vector<std::string> words_;
    std::map<std::string, int> index_;
};

class TextEncoder {
public:
    TextEncoder() = default;
    TextEncoder(const EncoderConfig& config, Vocabulary vocab, nn::Rng& rng);

    // tokens: one row per word (truncated to text_max_len); pooled: mean.
    FeatureTokens operator()(const std::string& caption) const;
    void collect(const std::string& prefix, nn::ParameterList& out) const;
    [[nodiscard]] const Vocabulary& vocabulary() const { return vocab_; }

    Tensor embedding;  // vocab x d_joint
    Tensor positional;  // text_max_len x d_joint
    std::vector<nn::TransformerBlock> blocks;
    nn::LayerNorm final_norm;

private:
    EncoderConfig config_;
    Vocabulary vocab_;
};

}  // namespace sonicgauss::encoders
