#include "sonicgauss/nn/layers.hpp"

#include "sonicgauss/common/error.hpp"

#include <cmath>
#include <stdexcept>

namespace sonicgauss::nn {

Matrix randn(Eigen::Index rows, Eigen::Index cols, Scalar stddev, Rng& rng) {
    std::normal_distribution<Scalar> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = dist(rng);
    }
    return m;
}

Matrix sinusoidal_table(std::span<const Scalar> values, int dim, Scalar max_period) {
    const int half = dim / 2;
    Matrix table = Matrix::Zero(static_cast<Eigen::Index>(values.size()), dim);
    for (size_t i = 0; i < values.size(); ++i) {
        for (int j = 0; j < half; ++j) {
            const Scalar freq = std::exp(-std::log(max_period) * j / std::max(1, half));
            const Scalar a = values[i] * freq;
            table(static_cast<Eigen::Index>(i), j) = std::sin(a);
            table(static_cast<Eigen::Index>(i), half + j) = std::cos(a);
        }
    }
    return table;
}

size_t parameter_count(const ParameterList& params) {
    size_t n = 0;
    for (const auto& [name, t] : params) {
        n += static_cast<size_t>(t.value().size());
    }
    return n;
}

Linear::Linear(int in_features, int out_features, Rng& rng)
    : weight(Tensor::parameter(randn(in_features, out_features, 1.0 / std::sqrt(static_cast<Scalar>(in_features)), rng))),
      bias(Tensor::parameter(Matrix::Zero(1, out_features))) {}

void Linear::collect(const std::string& prefix, ParameterList& out) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
}

void Linear::zero_init() {
    weight.mutable_value().setZero();
    bias.mutable_value().setZero();
}

LayerNorm::LayerNorm(int dim)
    : gamma(Tensor::parameter(Matrix::Ones(1, dim))), beta(Tensor::parameter(Matrix::Zero(1, dim))) {}

void LayerNorm::collect(const std::string& prefix, ParameterList& out) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
}

MultiHeadAttention::MultiHeadAttention(int dim, int context_dim, int heads_, Rng& rng)
    : query(dim, dim, rng), key(context_dim, dim, rng), value(context_dim, dim, rng), output(dim, dim, rng),
      heads(heads_) {
    if (dim % heads_ != 0) {
        throw std::invalid_argument("attention width must be divisible by the head count");
    }
}

Tensor MultiHeadAttention::operator()(const Tensor& x, const Tensor& context, int window) const {
    return output(attention(query(x), key(context), value(context), heads, window));
}

void MultiHeadAttention::collect(const std::string& prefix, ParameterList& out) const {
    query.collect(prefix + ".query", out);
    key.collect(prefix + ".key", out);
    value.collect(prefix + ".value", out);
    output.collect(prefix + ".output", out);
}

FeedForward::FeedForward(int dim, int hidden, Rng& rng) : up(dim, hidden, rng), down(hidden, dim, rng) {}

void FeedForward::collect(const std::string& prefix, ParameterList& out) const {
    up.collect(prefix + ".up", out);
    down.collect(prefix + ".down", out);
}

TransformerBlock::TransformerBlock(int dim, int heads, int mlp_hidden, Rng& rng, int context_dim)
    : norm_self(dim), self_attn(dim, dim, heads, rng), norm_ff(dim), ff(dim, mlp_hidden, rng),
      has_cross_(context_dim > 0) {
    if (has_cross_) {
        norm_cross = LayerNorm(dim);
        cross_attn = MultiHeadAttention(dim, context_dim, heads, rng);
    }
}

Tensor TransformerBlock::operator()(const Tensor& x, const Tensor* context, int window) const {
    Tensor h = norm_self(x);
    Tensor y = x + self_attn(h, h, window);
    if (has_cross_) {
        if (context == nullptr) {
            throw std::invalid_argument("transformer block expects a context sequence");
        }
        y = y + cross_attn(norm_cross(y), *context);
    }
    return y + ff(norm_ff(y));
}

void TransformerBlock::collect(const std::string& prefix, ParameterList& out) const {
    norm_self.collect(prefix + ".norm_self", out);
    self_attn.collect(prefix + ".self_attn", out);
    if (has_cross_) {
        norm_cross.collect(prefix + ".norm_cross", out);
        cross_attn.collect(prefix + ".cross_attn", out);
    }
    norm_ff.collect(prefix + ".norm_ff", out);
    ff.collect(prefix + ".ff", out);
}

void export_parameters(const ParameterList& params, std::map<std::string, Matrix>& out) {
    for (const auto& [name, t] : params) {
        out[name] = t.value();
    }
}

void import_parameters(const ParameterList& params, const std::map<std::string, Matrix>& in) {
    for (const auto& [name, t] : params) {
        auto it = in.find(name);
        if (it == in.end()) {
            throw Error("malformed_checkpoint", "checkpoint lacks parameter " + name, name);
        }
        if (it->second.rows() != t.rows() || it->second.cols() != t.cols()) {
            throw Error("malformed_checkpoint", "checkpoint shape mismatch for " + name, name);
        }
        Tensor handle = t;
        handle.mutable_value() = it->second;
    }
}

}  // namespace sonicgauss::nn
