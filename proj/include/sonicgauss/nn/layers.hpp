#pragma once

#include "sonicgauss/nn/tensor.hpp"

#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace sonicgauss::nn {

using Rng = std::mt19937_64;
using ParameterList = std::vector<std::pair<std::string, Tensor>>;

Matrix randn(Eigen::Index rows, Eigen::Index cols, Scalar stddev, Rng& rng);

// Standard transformer sinusoidal table: row i encodes position values[i].
Matrix sinusoidal_table(std::span<const Scalar> values, int dim, Scalar max_period = 10000.0);

// Total number of scalars across a parameter list.
size_t parameter_count(const ParameterList& params);

// Copies parameter values into / out of a name-keyed table. Import throws
// on a missing name or a shape mismatch.
void export_parameters(const ParameterList& params, std::map<std::string, Matrix>& out);
void import_parameters(const ParameterList& params, const std::map<std::string, Matrix>& in);

class Linear {
public:
    Linear() = default;
    Linear(int in_features, int out_features, Rng& rng);

    Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
    void collect(const std::string& prefix, ParameterList& out) const;
    void zero_init();

    Tensor weight;  // in x out
    Tensor bias;    // 1 x out
};

class LayerNorm {
public:
    LayerNorm() = default;
    explicit LayerNorm(int dim);

    Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
    void collect(const std::string& prefix, ParameterList& out) const;

    Tensor gamma;
    Tensor beta;
};

class MultiHeadAttention {
public:
    MultiHeadAttention() = default;
    MultiHeadAttention(int dim, int context_dim, int heads, Rng& rng);

    Tensor operator()(const Tensor& x, const Tensor& context, int window = 0) const;
    void collect(const std::string& prefix, ParameterList& out) const;

    Linear query;
    Linear key;
    Linear value;
    Linear output;
    int heads = 1;
};

class FeedForward {
public:
    FeedForward() = default;
    FeedForward(int dim, int hidden, Rng& rng);

    Tensor operator()(const Tensor& x) const { return down(gelu(up(x))); }
    void collect(const std::string& prefix, ParameterList& out) const;

    Linear up;
    Linear down;
};

// Pre-norm block: self-attention, optional cross-attention to a context
// sequence, then a feed-forward layer, each with a residual connection.
class TransformerBlock {
public:
    TransformerBlock() = default;
    TransformerBlock(int dim, int heads, int mlp_hidden, Rng& rng, int context_dim = 0);

    Tensor operator()(const Tensor& x, const Tensor* context = nullptr, int window = 0) const;
    void collect(const std::string& prefix, ParameterList& out) const;
    [[nodiscard]] bool has_cross() const { return has_cross_; }

    LayerNorm norm_self;
    MultiHeadAttention self_attn;
    LayerNorm norm_cross;
    MultiHeadAttention cross_attn;
    LayerNorm norm_ff;
    FeedForward ff;

private:
    bool has_cross_ = false;
};

}  // namespace sonicgauss::nn
