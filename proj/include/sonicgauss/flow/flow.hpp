#pragma once

#include "sonicgauss/encoders/encoders.hpp"
#include "sonicgauss/nn/layers.hpp"

#include <cstdint>
#include <functional>
#include <string>

namespace sonicgauss::flow {

using encoders::FeatureTokens;
using nn::Matrix;
using nn::Tensor;

// x_t = t x0 + (1 - t) eps; throws for t outside [0, 1].
Matrix interpolate(const Matrix& x0, const Matrix& eps, double t);
// d x_t / dt = x0 - eps, constant along the path.
Matrix target_velocity(const Matrix& x0, const Matrix& eps);

// Conditioning context for the velocity network: pooled row, then tokens.
Tensor conditioning_sequence(const FeatureTokens& cond);

struct VelocityConfig {
    int frames = 188;
    int bins = 64;
    int d_model = 256;
    int blocks = 6;
    int heads = 4;
    int mlp_ratio = 4;
    int cond_dim = 256;
    bool zero_init_head = false;

    void validate() const;
};

class VelocityNet {
public:
    VelocityNet() = default;
    VelocityNet(const VelocityConfig& config, nn::Rng& rng);

    // x_t is frames x bins, context is m x cond_dim; returns frames x bins.
    Tensor operator()(const Tensor& x_t, double t, const Tensor& context) const;
    void collect(const std::string& prefix, nn::ParameterList& out) const;
    [[nodiscard]] const VelocityConfig& config() const { return config_; }

    nn::Linear patch;
    nn::Linear time_fc1;
    nn::Linear time_fc2;
    nn::Linear cond_proj;
    std::vector<nn::TransformerBlock> blocks;
    nn::LayerNorm final_norm;
    nn::Linear head;

private:
    VelocityConfig config_;
    Matrix frame_table_;
};

using VelocityFn = std::function<Tensor(const Tensor& x_t, double t)>;

// Flow-matching loss at a given (eps, t): mean squared error between the
// predicted velocity at x_t and x0 - eps.
Tensor flow_loss_at(const Matrix& x0, const Matrix& eps, double t, const VelocityFn& velocity);
// Draws t ~ U(0, 1) then eps ~ N(0, I) from rng, in that order.
Tensor flow_loss(const Matrix& x0, const VelocityFn& velocity, nn::Rng& rng);

// Mean over rows of -log softmax_j(cos(g_i, t_j) / tau)[i].
Tensor infonce(const Tensor& g, const Tensor& t, const Tensor& tau);
double infonce(const Matrix& g, const Matrix& t, double tau);

inline constexpr double kTauInit = 0.07;
inline constexpr double kTauMin = 0.01;
inline constexpr double kTauMax = 1.0;

enum class FusionMode { concat_baseline, cross_attention };

std::string to_string(FusionMode mode);
FusionMode fusion_from_string(const std::string& s);

class Fusion {
public:
    Fusion() = default;
    Fusion(int d_joint, int heads, FusionMode mode, nn::Rng& rng);

    // cross_attention: [G; attn(G -> pos)], 2m tokens. concat_baseline:
    // [G; pos], m + 1 tokens. The pooled vector is the Gaussian one.
    FeatureTokens operator()(const FeatureTokens& gauss, const Tensor& pos) const;
    void collect(const std::string& prefix, nn::ParameterList& out) const;
    [[nodiscard]] FusionMode mode() const { return mode_; }
    // Re-wires the module; attention weights are kept.
    void set_mode(FusionMode mode) { mode_ = mode; }

    nn::MultiHeadAttention attn;

private:
    FusionMode mode_ = FusionMode::cross_attention;
    int d_joint_ = 0;
};

using SampleVelocityFn = std::function<Matrix(const Matrix& x, double t)>;

// Euler integration from seeded noise, t = 0 -> 1 in `steps` equal steps.
Matrix sample(const SampleVelocityFn& velocity, Eigen::Index rows, Eigen::Index cols, int steps,
              std::uint64_t seed);
Matrix sample(const VelocityNet& net, const Tensor& context, int steps, std::uint64_t seed);

// Standard-normal matrix from a seeded generator.
Matrix gaussian_noise(Eigen::Index rows, Eigen::Index cols, nn::Rng& rng);

}  // namespace sonicgauss::flow
