#include "sonicgauss/flow/flow.hpp"

#include "sonicgauss/common/error.hpp"

#include <cmath>
#include <numeric>
#include <random>

namespace sonicgauss::flow {

Matrix interpolate(const Matrix& x0, const Matrix& eps, double t) {
    if (!(t >= 0.0 && t <= 1.0)) {
        throw Error("invalid_argument", "t must lie in [0, 1]", "t");
    }
    if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) {
        throw Error("invalid_argument", "x0 and eps shapes differ", "eps");
    }
    if (t == 0.0) {
        return eps;
    }
    if (t == 1.0) {
        return x0;
    }
    return t * x0 + (1.0 - t) * eps;
}

Matrix target_velocity(const Matrix& x0, const Matrix& eps) {
    if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) {
        throw Error("invalid_argument", "x0 and eps shapes differ", "eps");
    }
    return x0 - eps;
}

Tensor conditioning_sequence(const FeatureTokens& cond) { return nn::concat_rows(cond.pooled, cond.tokens); }

void VelocityConfig::validate() const {
    if (frames <= 0 || bins <= 0 || d_model <= 0 || blocks < 0 || heads <= 0 || d_model % heads != 0 ||
        mlp_ratio <= 0 || cond_dim <= 0) {
        throw Error("invalid_config", "velocity network sizes must be positive with d_model % heads == 0",
                    "d_model");
    }
}

VelocityNet::VelocityNet(const VelocityConfig& config, nn::Rng& rng)
    : patch(config.bins, config.d_model, rng),
      time_fc1(config.d_model, config.d_model, rng),
      time_fc2(config.d_model, config.d_model, rng),
      cond_proj(config.cond_dim, config.d_model, rng),
      final_norm(config.d_model),
      head(config.d_model, config.bins, rng),
      config_(config) {
    config.validate();
    for (int i = 0; i < config.blocks; ++i) {
        blocks.emplace_back(config.d_model, config.heads, config.d_model * config.mlp_ratio, rng, config.d_model);
    }
    if (config.zero_init_head) {
        head.zero_init();
    }
    std::vector<nn::Scalar> positions(static_cast<size_t>(config.frames));
    std::iota(positions.begin(), positions.end(), 0.0);
    frame_table_ = nn::sinusoidal_table(positions, config.d_model);
}

Tensor VelocityNet::operator()(const Tensor& x_t, double t, const Tensor& context) const {
    if (x_t.rows() != config_.frames || x_t.cols() != config_.bins) {
        throw Error("invalid_latent", "latent shape does not match the velocity network", "latent");
    }
    if (context.rows() < 1 || context.cols() != config_.cond_dim) {
        throw Error("invalid_condition", "conditioning must be nonempty with width cond_dim", "cond");
    }
    const nn::Scalar tv = t * 1000.0;
    const Tensor t_emb = time_fc2(nn::silu(time_fc1(Tensor::constant(nn::sinusoidal_table({&tv, 1}, config_.d_model)))));
    Tensor h = nn::add_rowwise(patch(x_t) + Tensor::constant(frame_table_), t_emb);
    const Tensor ctx = cond_proj(context);
    for (const auto& block : blocks) {
        h = block(h, &ctx);
    }
    return head(final_norm(h));
}

void VelocityNet::collect(const std::string& prefix, nn::ParameterList& out) const {
    patch.collect(prefix + ".patch", out);
    time_fc1.collect(prefix + ".time_fc1", out);
    time_fc2.collect(prefix + ".time_fc2", out);
    cond_proj.collect(prefix + ".cond_proj", out);
    for (size_t i = 0; i < blocks.size(); ++i) {
        blocks[i].collect(prefix + ".blocks." + std::to_string(i), out);
    }
    final_norm.collect(prefix + ".final_norm", out);
    head.collect(prefix + ".head", out);
}

Matrix gaussian_noise(Eigen::Index rows, Eigen::Index cols, nn::Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            m(i, j) = normal(rng);
        }
    }
    return m;
}

Tensor flow_loss_at(const Matrix& x0, const Matrix& eps, double t, const VelocityFn& velocity) {
    const Tensor x_t = Tensor::constant(interpolate(x0, eps, t));
    return nn::mse(velocity(x_t, t), target_velocity(x0, eps));
}

Tensor flow_loss(const Matrix& x0, const VelocityFn& velocity, nn::Rng& rng) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double t = uniform(rng);
    const Matrix eps = gaussian_noise(x0.rows(), x0.cols(), rng);
    return flow_loss_at(x0, eps, t, velocity);
}

Tensor infonce(const Tensor& g, const Tensor& t, const Tensor& tau) {
    if (g.rows() < 2 || g.rows() != t.rows() || g.cols() != t.cols()) {
        throw Error("invalid_argument", "infonce needs matching N x d inputs with N >= 2", "embeddings");
    }
    if ((g.value().rowwise().norm().array() <= 0.0).any() || (t.value().rowwise().norm().array() <= 0.0).any()) {
        throw Error("invalid_argument", "infonce embeddings must have nonzero rows", "embeddings");
    }
    const Tensor sims = nn::matmul_nt(nn::normalize_rows(g), nn::normalize_rows(t));
    std::vector<int> labels(static_cast<size_t>(g.rows()));
    std::iota(labels.begin(), labels.end(), 0);
    return nn::cross_entropy(nn::div_scalar(sims, tau), labels);
}

double infonce(const Matrix& g, const Matrix& t, double tau) {
    nn::NoGradGuard guard;
    return infonce(Tensor::constant(g), Tensor::constant(t), Tensor::scalar(tau)).item();
}

std::string to_string(FusionMode mode) {
    return mode == FusionMode::cross_attention ? "cross_attention" : "concat_baseline";
}

FusionMode fusion_from_string(const std::string& s) {
    if (s == "cross_attention") return FusionMode::cross_attention;
    if (s == "concat_baseline") return FusionMode::concat_baseline;
    throw Error("invalid_config", "unknown fusion mode: " + s, "fusion_mode");
}

Fusion::Fusion(int d_joint, int heads, FusionMode mode, nn::Rng& rng)
    : attn(d_joint, d_joint, heads, rng), mode_(mode), d_joint_(d_joint) {}

FeatureTokens Fusion::operator()(const FeatureTokens& gauss, const Tensor& pos) const {
    if (gauss.tokens.cols() != d_joint_ || pos.cols() != d_joint_ || pos.rows() != 1) {
        throw Error("invalid_argument", "fusion inputs must have width d_joint", "d_joint");
    }
    FeatureTokens out;
    out.pooled = gauss.pooled;
    if (mode_ == FusionMode::cross_attention) {
        out.tokens = nn::concat_rows(gauss.tokens, attn(gauss.tokens, pos));
    } else {
        out.tokens = nn::concat_rows(gauss.tokens, pos);
    }
    return out;
}

void Fusion::collect(const std::string& prefix, nn::ParameterList& out) const {
    if (mode_ == FusionMode::cross_attention) {
        attn.collect(prefix + ".attn", out);
    }
}

Matrix sample(const SampleVelocityFn& velocity, Eigen::Index rows, Eigen::Index cols, int steps,
              std::uint64_t seed) {
    if (steps < 1) {
        throw Error("invalid_argument", "steps must be >= 1", "steps");
    }
    nn::Rng rng(seed);
    Matrix x = gaussian_noise(rows, cols, rng);
    const double dt = 1.0 / steps;
    for (int i = 0; i < steps; ++i) {
        x += dt * velocity(x, static_cast<double>(i) * dt);
    }
    return x;
}

Matrix sample(const VelocityNet& net, const Tensor& context, int steps, std::uint64_t seed) {
    nn::NoGradGuard guard;
    return sample([&](const Matrix& x, double t) { return net(Tensor::constant(x), t, context).value(); },
                  net.config().frames, net.config().bins, steps, seed);
}

}  // namespace sonicgauss::flow
