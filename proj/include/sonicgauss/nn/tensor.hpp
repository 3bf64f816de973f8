#pragma once

#include "sonicgauss/common/matrix.hpp"

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace sonicgauss::nn {

using Scalar = double;
using sonicgauss::Matrix;
using sonicgauss::RowVector;

struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this->grad and accumulates into the inputs.
    std::function<void(const Matrix&)> backward_fn;

    void accumulate(const Matrix& g);
};

// A 2-D value with an optional reverse-mode tape. Rows are tokens / samples,
// columns are features; every model in the project is expressed this way.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Matrix value, bool requires_grad = false);

    static Tensor parameter(Matrix value) { return Tensor(std::move(value), true); }
    static Tensor constant(Matrix value) { return Tensor(std::move(value), false); }
    static Tensor scalar(Scalar v);

    [[nodiscard]] bool defined() const { return node_ != nullptr; }
    [[nodiscard]] const Matrix& value() const { return node_->value; }
    [[nodiscard]] Matrix& mutable_value() { return node_->value; }
    [[nodiscard]] const Matrix& grad() const { return node_->grad; }
    [[nodiscard]] Matrix& mutable_grad() { return node_->grad; }
    [[nodiscard]] bool requires_grad() const { return node_ && node_->requires_grad; }
    [[nodiscard]] Eigen::Index rows() const { return node_->value.rows(); }
    [[nodiscard]] Eigen::Index cols() const { return node_->value.cols(); }
    [[nodiscard]] Scalar item() const { return node_->value(0, 0); }

    void zero_grad();
    // Seeds d(self)/d(self) = 1; self must be 1x1.
    void backward() const;

    [[nodiscard]] const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

// Disables tape recording on this thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

[[nodiscard]] bool grad_enabled();

// ---- algebra --------------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// x * w + bias (bias is 1 x out, broadcast over rows)
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_rowwise(const Tensor& a, const Tensor& row);
Tensor scale(const Tensor& a, Scalar s);
// a / s where s is a 1x1 tensor
Tensor div_scalar(const Tensor& a, const Tensor& s);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }

// ---- pointwise ------------------------------------------------------------
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor silu(const Tensor& a);

// ---- normalization / attention ---------------------------------------------
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Scalar eps = 1e-5);
// L2-normalizes each row; throws on a zero-norm row.
Tensor normalize_rows(const Tensor& x);
// Multi-head scaled dot-product attention. q is (n x d), k/v are (m x d).
// window > 0 restricts attention to aligned blocks of `window` rows and
// requires n == m.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads, int window = 0);

// ---- shape ----------------------------------------------------------------
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor broadcast_rows(const Tensor& row, Eigen::Index n);
Tensor gather_rows(const Tensor& table, std::span<const int> ids);

// ---- reductions -----------------------------------------------------------
Tensor row_mean(const Tensor& a);
Tensor row_max(const Tensor& a);
// Max over consecutive groups of `group` rows (last group may be short).
Tensor group_max_rows(const Tensor& a, int group);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mse(const Tensor& prediction, const Matrix& target);
// Mean over rows of -log softmax(logits)[row, label[row]].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

// ---- convolution ------------------------------------------------------------
// x is (channels x height*width), row-major spatial layout. weight is
// (out_channels x in_channels*9); 3x3 kernel, stride 1, zero padding 1.
Tensor conv3x3(const Tensor& x, const Tensor& weight, const Tensor& bias, int height, int width);
// 2x2 max pool with stride 2 (floor on odd sizes).
Tensor max_pool2x2(const Tensor& x, int height, int width);

}  // namespace sonicgauss::nn
