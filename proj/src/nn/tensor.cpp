#include "sonicgauss/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace sonicgauss::nn {

namespace {

thread_local bool g_grad_enabled = true;

using NodePtr = std::shared_ptr<Node>;

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
    if (!g_grad_enabled) {
        return false;
    }
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

void attach(Tensor& out, std::vector<NodePtr> inputs, std::function<void(const Matrix&)> fn) {
    const auto& node = out.node();
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward_fn = std::move(fn);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()) + ")");
    }
}

}  // namespace

void Node::accumulate(const Matrix& g) {
    if (!requires_grad) {
        return;
    }
    if (grad.size() == 0) {
        grad = g;
    } else {
        grad += g;
    }
}

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(Scalar v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return Tensor(std::move(m));
}

void Tensor::zero_grad() {
    if (node_) {
        node_->grad.resize(0, 0);
    }
}

void Tensor::backward() const {
    if (!node_ || node_->value.size() != 1) {
        throw std::logic_error("backward() requires a 1x1 tensor");
    }
    if (!node_->requires_grad) {
        return;
    }
    // Iterative post-order DFS gives a topological order of the tape.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) {
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    node_->accumulate(Matrix::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.size() != 0) {
            n->backward_fn(n->grad);
        }
    }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimension mismatch");
    }
    Tensor out(a.value() * b.value());
    if (any_requires_grad({&a, &b})) {
        attach(out, {a.node(), b.node()}, [an = a.node(), bn = b.node()](const Matrix& g) {
            if (an->requires_grad) an->accumulate(g * bn->value.transpose());
            if (bn->requires_grad) bn->accumulate(an->value.transpose() * g);
        });
    }
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) {
        throw std::invalid_argument("matmul_nt: inner dimension mismatch");
    }
    Tensor out(a.value() * b.value().transpose());
    if (any_requires_grad({&a, &b})) {
        attach(out, {a.node(), b.node()}, [an = a.node(), bn = b.node()](const Matrix& g) {
            if (an->requires_grad) an->accumulate(g * bn->value);
            if (bn->requires_grad) bn->accumulate(g.transpose() * an->value);
        });
    }
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    if (x.cols() != w.rows() || bias.rows() != 1 || bias.cols() != w.cols()) {
        throw std::invalid_argument("linear: shape mismatch");
    }
    Matrix y = x.value() * w.value();
    y.rowwise() += bias.value().row(0);
    Tensor out(std::move(y));
    if (any_requires_grad({&x, &w, &bias})) {
        attach(out, {x.node(), w.node(), bias.node()},
               [xn = x.node(), wn = w.node(), bn = bias.node()](const Matrix& g) {
                   if (xn->requires_grad) xn->accumulate(g * wn->value.transpose());
                   if (wn->requires_grad) wn->accumulate(xn->value.transpose() * g);
                   if (bn->requires_grad) bn->accumulate(g.colwise().sum());
               });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out(a.value() + b.value());
    if (any_requires_grad({&a, &b})) {
        attach(out, {a.node(), b.node()}, [an = a.node(), bn = b.node()](const Matrix& g) {
            an->accumulate(g);
            bn->accumulate(g);
        });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a.value() - b.value());
    if (any_requires_grad({&a, &b})) {
        attach(out, {a.node(), b.node()}, [an = a.node(), bn = b.node()](const Matrix& g) {
            an->accumulate(g);
            if (bn->requires_grad) bn->accumulate(-g);
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a.value().cwiseProduct(b.value()));
    if (any_requires_grad({&a, &b})) {
        attach(out, {a.node(), b.node()}, [an = a.node(), bn = b.node()](const Matrix& g) {
            if (an->requires_grad) an->accumulate(g.cwiseProduct(bn->value));
            if (bn->requires_grad) bn->accumulate(g.cwiseProduct(an->value));
        });
    }
    return out;
}

Tensor add_rowwise(const Tensor& a, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) {
        throw std::invalid_argument("add_rowwise: shape mismatch");
    }
    Matrix y = a.value();
    y.rowwise() += row.value().row(0);
    Tensor out(std::move(y));
    if (any_requires_grad({&a, &row})) {
        attach(out, {a.node(), row.node()}, [an = a.node(), rn = row.node()](const Matrix& g) {
            an->accumulate(g);
            if (rn->requires_grad) rn->accumulate(g.colwise().sum());
        });
    }
    return out;
}

Tensor scale(const Tensor& a, Scalar s) {
    Tensor out(a.value() * s);
    if (any_requires_grad({&a})) {
        attach(out, {a.node()}, [an = a.node(), s](const Matrix& g) { an->accumulate(g * s); });
    }
    return out;
}

Tensor div_scalar(const Tensor& a, const Tensor& s) {
    if (s.rows() != 1 || s.cols() != 1) {
        throw std::invalid_argument("div_scalar: divisor must be 1x1");
    }
    const Scalar d = s.item();
    Tensor out(a.value() / d);
    if (any_requires_grad({&a, &s})) {
        attach(out, {a.node(), s.node()}, [an = a.node(), sn = s.node()](const Matrix& g) {
            const Scalar dv = sn->value(0, 0);
            if (an->requires_grad) an->accumulate(g / dv);
            if (sn->requires_grad) {
                Matrix gs(1, 1);
                gs(0, 0) = -g.cwiseProduct(an->value).sum() / (dv * dv);
                sn->accumulate(gs);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------

Tensor relu(const Tensor& a) {
    Tensor out(a.value().cwiseMax(0.0));
    if (any_requires_grad({&a})) {
        attach(out, {a.node()}, [an = a.node()](const Matrix& g) {
            an->accumulate((an->value.array() > 0.0).select(g, 0.0));
        });
    }
    return out;
}

Tensor gelu(const Tensor& a) {
    static constexpr Scalar c = 0.7978845608028654;  // sqrt(2/pi)
    static constexpr Scalar k = 0.044715;
    const auto& x = a.value();
    Matrix t = (c * (x.array() + k * x.array().cube())).tanh().matrix();
    Tensor out((0.5 * x.array() * (1.0 + t.array())).matrix());
    if (any_requires_grad({&a})) {
        attach(out, {a.node()}, [an = a.node(), t = std::move(t)](const Matrix& g) {
            const auto& xv = an->value.array();
            auto d = 0.5 * (1.0 + t.array()) +
                     0.5 * xv * (1.0 - t.array().square()) * c * (1.0 + 3.0 * k * xv.square());
            an->accumulate((g.array() * d).matrix());
        });
    }
    return out;
}

Tensor silu(const Tensor& a) {
    Matrix sig = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
    Tensor out(a.value().cwiseProduct(sig));
    if (any_requires_grad({&a})) {
        attach(out, {a.node()}, [an = a.node(), sig = std::move(sig)](const Matrix& g) {
            auto d = sig.array() * (1.0 + an->value.array() * (1.0 - sig.array()));
            an->accumulate((g.array() * d).matrix());
        });
    }
    return out;
}

// ---------------------------------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Scalar eps) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d) {
        throw std::invalid_argument("layer_norm: parameter shape mismatch");
    }
    Matrix xhat(n, d);
    Eigen::VectorXd inv_std(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto row = x.value().row(i);
        const Scalar mu = row.mean();
        const Scalar var = (row.array() - mu).square().mean();
        inv_std(i) = 1.0 / std::sqrt(var + eps);
        xhat.row(i) = (row.array() - mu) * inv_std(i);
    }
    Matrix y = xhat.array().rowwise() * gamma.value().row(0).array();
    y.rowwise() += beta.value().row(0);
    Tensor out(std::move(y));
    if (any_requires_grad({&x, &gamma, &beta})) {
        attach(out, {x.node(), gamma.node(), beta.node()},
               [xn = x.node(), gn = gamma.node(), bn = beta.node(), xhat = std::move(xhat),
                inv_std = std::move(inv_std)](const Matrix& g) {
                   if (gn->requires_grad) gn->accumulate(g.cwiseProduct(xhat).colwise().sum());
                   if (bn->requires_grad) bn->accumulate(g.colwise().sum());
                   if (xn->requires_grad) {
                       Matrix dxhat = g.array().rowwise() * gn->value.row(0).array();
                       Matrix dx(dxhat.rows(), dxhat.cols());
                       for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
                           const Scalar m1 = dxhat.row(i).mean();
                           const Scalar m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
                           dx.row(i) = inv_std(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
                       }
                       xn->accumulate(dx);
                   }
               });
    }
    return out;
}

Tensor normalize_rows(const Tensor& x) {
    Eigen::VectorXd norms = x.value().rowwise().norm();
    for (Eigen::Index i = 0; i < norms.size(); ++i) {
        if (!(norms(i) > 0.0)) {
            throw std::invalid_argument("normalize_rows: zero-norm row " + std::to_string(i));
        }
    }
    Matrix y = x.value().array().colwise() / norms.array();
    Tensor out(y);
    if (any_requires_grad({&x})) {
        attach(out, {x.node()}, [xn = x.node(), y = std::move(y), norms = std::move(norms)](const Matrix& g) {
            Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
            Matrix dx = (g - (y.array().colwise() * dots.array()).matrix()).array().colwise() / norms.array();
            xn->accumulate(dx);
        });
    }
    return out;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads, int window) {
    const Eigen::Index n = q.rows();
    const Eigen::Index m = k.rows();
    const Eigen::Index d = q.cols();
    if (heads <= 0 || d % heads != 0 || k.cols() != d || v.cols() != d || v.rows() != m) {
        throw std::invalid_argument("attention: shape mismatch");
    }
    if (window > 0 && n != m) {
        throw std::invalid_argument("attention: windowed attention needs equal query/key lengths");
    }
    const Eigen::Index dh = d / heads;
    const Scalar s = 1.0 / std::sqrt(static_cast<Scalar>(dh));

    struct Block {
        Eigen::Index q0, nq, k0, nk;
    };
    std::vector<Block> blocks;
    if (window > 0) {
        for (Eigen::Index r = 0; r < n; r += window) {
            const Eigen::Index len = std::min<Eigen::Index>(window, n - r);
            blocks.push_back({r, len, r, len});
        }
    } else {
        blocks.push_back({0, n, 0, m});
    }

    Matrix out_value(n, d);
    const bool need_grad = any_requires_grad({&q, &k, &v});
    std::vector<Matrix> probs;
    if (need_grad) {
        probs.reserve(blocks.size() * static_cast<size_t>(heads));
    }
    const auto& Q = q.value();
    const auto& K = k.value();
    const auto& V = v.value();
    for (const auto& blk : blocks) {
        for (int h = 0; h < heads; ++h) {
            const Eigen::Index c0 = h * dh;
            Matrix p = s * (Q.block(blk.q0, c0, blk.nq, dh) * K.block(blk.k0, c0, blk.nk, dh).transpose());
            for (Eigen::Index i = 0; i < p.rows(); ++i) {
                const Scalar mx = p.row(i).maxCoeff();
                p.row(i) = (p.row(i).array() - mx).exp();
                p.row(i) /= p.row(i).sum();
            }
            out_value.block(blk.q0, c0, blk.nq, dh).noalias() = p * V.block(blk.k0, c0, blk.nk, dh);
            if (need_grad) {
                probs.push_back(std::move(p));
            }
        }
    }
    Tensor out(std::move(out_value));
    if (need_grad) {
        attach(out, {q.node(), k.node(), v.node()},
               [qn = q.node(), kn = k.node(), vn = v.node(), blocks = std::move(blocks), probs = std::move(probs),
                heads, dh, s](const Matrix& g) {
                   const auto& Qv = qn->value;
                   const auto& Kv = kn->value;
                   const auto& Vv = vn->value;
                   Matrix dq = Matrix::Zero(Qv.rows(), Qv.cols());
                   Matrix dk = Matrix::Zero(Kv.rows(), Kv.cols());
                   Matrix dv = Matrix::Zero(Vv.rows(), Vv.cols());
                   size_t idx = 0;
                   for (const auto& blk : blocks) {
                       for (int h = 0; h < heads; ++h, ++idx) {
                           const Eigen::Index c0 = h * dh;
                           const Matrix& p = probs[idx];
                           const auto go = g.block(blk.q0, c0, blk.nq, dh);
                           dv.block(blk.k0, c0, blk.nk, dh).noalias() += p.transpose() * go;
                           Matrix dp = go * Vv.block(blk.k0, c0, blk.nk, dh).transpose();
                           Eigen::VectorXd rs = dp.cwiseProduct(p).rowwise().sum();
                           Matrix ds = p.cwiseProduct((dp.array().colwise() - rs.array()).matrix());
                           dq.block(blk.q0, c0, blk.nq, dh).noalias() += s * (ds * Kv.block(blk.k0, c0, blk.nk, dh));
                           dk.block(blk.k0, c0, blk.nk, dh).noalias() +=
                               s * (ds.transpose() * Qv.block(blk.q0, c0, blk.nq, dh));
                       }
                   }
                   qn->accumulate(dq);
                   kn->accumulate(dk);
                   vn->accumulate(dv);
               });
    }
    return out;
}

// ---------------------------------------------------------------------------

Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) {
        throw std::invalid_argument("concat_rows: no inputs");
    }
    const Eigen::Index d = parts.front().cols();
    Eigen::Index total = 0;
    for (const auto& p : parts) {
        if (p.cols() != d) {
            throw std::invalid_argument("concat_rows: width mismatch");
        }
        total += p.rows();
    }
    Matrix y(total, d);
    Eigen::Index r = 0;
    for (const auto& p : parts) {
        y.middleRows(r, p.rows()) = p.value();
        r += p.rows();
    }
    Tensor out(std::move(y));
    bool need = false;
    if (g_grad_enabled) {
        for (const auto& p : parts) need = need || p.requires_grad();
    }
    if (need) {
        std::vector<NodePtr> nodes;
        std::vector<Eigen::Index> offsets;
        Eigen::Index off = 0;
        for (const auto& p : parts) {
            nodes.push_back(p.node());
            offsets.push_back(off);
            off += p.rows();
        }
        auto captured = nodes;
        attach(out, std::move(nodes), [captured = std::move(captured), offsets = std::move(offsets)](const Matrix& g) {
            for (size_t i = 0; i < captured.size(); ++i) {
                if (captured[i]->requires_grad) {
                    captured[i]->accumulate(g.middleRows(offsets[i], captured[i]->value.rows()));
                }
            }
        });
    }
    return out;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    const Tensor parts[] = {a, b};
    return concat_rows(std::span<const Tensor>(parts));
}

Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.rows()) {
        throw std::out_of_range("slice_rows: range out of bounds");
    }
    Tensor out(a.value().middleRows(start, count));
    if (any_requires_grad({&a})) {
        attach(out, {a.node()}, [an = a.node(), start, count](const Matrix& g) {
            Matrix full = Matrix::Zero(an->value.rows(), an->value.cols());
            full.middleRows(start, count) = g;
            an->accumulate(full);
        });
    }
    return out;
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) {
        throw std::out_of_range("slice_cols: range out of bounds");
    }
    Tensor out(a.value().middleCols(start, count));
    if (any_requires_grad({&a})) {
        attach(out, {a.node()}, [an = a.node(), start, count](const Matrix& g) {
            Matrix full = Matrix::Zero(an->value.rows(), an->value.cols());
            full.middleCols(start, count) = g;
            an->accumulate(full);
        });
    }
    return out;
}

Tensor broadcast_rows(const Tensor& row, Eigen::Index n) {
    if (row.rows() != 1) {
        throw std::invalid_argument("broadcast_rows: expected a single row");
    }
    Tensor out(row.value().replicate(n, 1));
    if (any_requires_grad({&row})) {
        attach(out, {row.node()}, [rn = row.node()](const Matrix& g) { rn->accumulate(g.colwise().sum()); });
    }
    return out;
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
    Matrix y(static_cast<Eigen::Index>(ids.size()), table.cols());
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= table.rows()) {
            throw std::out_of_range("gather_rows: index out of range");
        }
        y.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
    }
    Tensor out(std::move(y));
    if (any_requires_grad({&table})) {
        attach(out, {table.node()}, [tn = table.node(), ids = std::vector<int>(ids.begin(), ids.end())](const Matrix& g) {
            Matrix full = Matrix::Zero(tn->value.rows(), tn->value.cols());
            for (size_t i = 0; i < ids.size(); ++i) {
                full.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
            }
            tn->accumulate(full);
        });
    }
    return out;
}

// ---------------------------------------------------------------------------

Tensor row_mean(const Tensor& a) {
    Tensor out(a.value().colwise().mean());
    if (any_requires_grad({&a})) {
        attach(out, {a.node()}, [an = a.node()](const Matrix& g) {
            const auto n = static_cast<Scalar>(an->value.rows());
            an->accumulate(g.replicate(an->value.rows(), 1) / n);
        });
    }
    return out;
}

Tensor group_max_rows(const Tensor& a, int group) {
    if (group <= 0) {
        throw std::invalid_argument("group_max_rows: group must be positive");
    }
    const Eigen::Index n = a.rows();
    const Eigen::Index d = a.cols();
    if (n == 0) {
        throw std::invalid_argument("group_max_rows: empty input");
    }
    const Eigen::Index groups = (n + group - 1) / group;
    Matrix y(groups, d);
    std::vector<Eigen::Index> arg(static_cast<size_t>(groups * d));
    const auto& x = a.value();
    for (Eigen::Index gi = 0; gi < groups; ++gi) {
        const Eigen::Index r0 = gi * group;
        const Eigen::Index r1 = std::min<Eigen::Index>(n, r0 + group);
        for (Eigen::Index c = 0; c < d; ++c) {
            Eigen::Index best = r0;
            for (Eigen::Index r = r0 + 1; r < r1; ++r) {
                if (x(r, c) > x(best, c)) best = r;
            }
            y(gi, c) = x(best, c);
            arg[static_cast<size_t>(gi * d + c)] = best;
        }
    }
    Tensor out(std::move(y));
    if (any_requires_grad({&a})) {
        attach(out, {a.node()}, [an = a.node(), arg = std::move(arg), d](const Matrix& g) {
            Matrix full = Matrix::Zero(an->value.rows(), an->value.cols());
            for (Eigen::Index gi = 0; gi < g.rows(); ++gi) {
                for (Eigen::Index c = 0; c < d; ++c) {
                    full(arg[static_cast<size_t>(gi * d + c)], c) += g(gi, c);
                }
            }
            an->accumulate(full);
        });
    }
    return out;
}

Tensor row_max(const Tensor& a) { return group_max_rows(a, static_cast<int>(a.rows())); }

Tensor sum(const Tensor& a) {
    Tensor out = Tensor::scalar(a.value().sum());
    if (any_requires_grad({&a})) {
        attach(out, {a.node()}, [an = a.node()](const Matrix& g) {
            an->accumulate(Matrix::Constant(an->value.rows(), an->value.cols(), g(0, 0)));
        });
    }
    return out;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<Scalar>(a.value().size())); }

Tensor mse(const Tensor& prediction, const Matrix& target) {
    if (prediction.rows() != target.rows() || prediction.cols() != target.cols()) {
        throw std::invalid_argument("mse: shape mismatch");
    }
    Matrix diff = prediction.value() - target;
    const auto count = static_cast<Scalar>(diff.size());
    Tensor out = Tensor::scalar(diff.squaredNorm() / count);
    if (any_requires_grad({&prediction})) {
        attach(out, {prediction.node()}, [pn = prediction.node(), diff = std::move(diff), count](const Matrix& g) {
            pn->accumulate(diff * (2.0 * g(0, 0) / count));
        });
    }
    return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
    const Eigen::Index n = logits.rows();
    if (static_cast<Eigen::Index>(labels.size()) != n || n == 0) {
        throw std::invalid_argument("cross_entropy: label count mismatch");
    }
    Matrix p(n, logits.cols());
    Scalar total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int label = labels[static_cast<size_t>(i)];
        if (label < 0 || label >= logits.cols()) {
            throw std::out_of_range("cross_entropy: label out of range");
        }
        const auto row = logits.value().row(i);
        const Scalar mx = row.maxCoeff();
        p.row(i) = (row.array() - mx).exp();
        const Scalar z = p.row(i).sum();
        p.row(i) /= z;
        total += -(row(label) - mx - std::log(z));
    }
    Tensor out = Tensor::scalar(total / static_cast<Scalar>(n));
    if (any_requires_grad({&logits})) {
        attach(out, {logits.node()},
               [ln = logits.node(), p = std::move(p), labels = std::vector<int>(labels.begin(), labels.end())](
                   const Matrix& g) {
                   Matrix d = p;
                   for (size_t i = 0; i < labels.size(); ++i) {
                       d(static_cast<Eigen::Index>(i), labels[i]) -= 1.0;
                   }
                   ln->accumulate(d * (g(0, 0) / static_cast<Scalar>(labels.size())));
               });
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

Matrix im2col3x3(const Matrix& x, int height, int width) {
    const Eigen::Index channels = x.rows();
    Matrix cols = Matrix::Zero(channels * 9, static_cast<Eigen::Index>(height) * width);
    for (Eigen::Index c = 0; c < channels; ++c) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const Eigen::Index row = c * 9 + ky * 3 + kx;
                for (int y = 0; y < height; ++y) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= height) continue;
                    for (int xx = 0; xx < width; ++xx) {
                        const int sx = xx + kx - 1;
                        if (sx < 0 || sx >= width) continue;
                        cols(row, y * width + xx) = x(c, sy * width + sx);
                    }
                }
            }
        }
    }
    return cols;
}

Matrix col2im3x3(const Matrix& cols, Eigen::Index channels, int height, int width) {
    Matrix x = Matrix::Zero(channels, static_cast<Eigen::Index>(height) * width);
    for (Eigen::Index c = 0; c < channels; ++c) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const Eigen::Index row = c * 9 + ky * 3 + kx;
                for (int y = 0; y < height; ++y) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= height) continue;
                    for (int xx = 0; xx < width; ++xx) {
                        const int sx = xx + kx - 1;
                        if (sx < 0 || sx >= width) continue;
                        x(c, sy * width + sx) += cols(row, y * width + xx);
                    }
                }
            }
        }
    }
    return x;
}

}  // namespace

Tensor conv3x3(const Tensor& x, const Tensor& weight, const Tensor& bias, int height, int width) {
    if (x.cols() != static_cast<Eigen::Index>(height) * width || weight.cols() != x.rows() * 9 ||
        bias.rows() != 1 || bias.cols() != weight.rows()) {
        throw std::invalid_argument("conv3x3: shape mismatch");
    }
    Matrix cols = im2col3x3(x.value(), height, width);
    Matrix y = weight.value() * cols;
    y.colwise() += bias.value().row(0).transpose();
    Tensor out(std::move(y));
    if (any_requires_grad({&x, &weight, &bias})) {
        attach(out, {x.node(), weight.node(), bias.node()},
               [xn = x.node(), wn = weight.node(), bn = bias.node(), cols = std::move(cols), height,
                width](const Matrix& g) {
                   if (wn->requires_grad) wn->accumulate(g * cols.transpose());
                   if (bn->requires_grad) bn->accumulate(g.rowwise().sum().transpose());
                   if (xn->requires_grad) {
                       Matrix dcols = wn->value.transpose() * g;
                       xn->accumulate(col2im3x3(dcols, xn->value.rows(), height, width));
                   }
               });
    }
    return out;
}

Tensor max_pool2x2(const Tensor& x, int height, int width) {
    if (x.cols() != static_cast<Eigen::Index>(height) * width || height < 2 || width < 2) {
        throw std::invalid_argument("max_pool2x2: shape mismatch");
    }
    const int oh = height / 2;
    const int ow = width / 2;
    const Eigen::Index channels = x.rows();
    Matrix y(channels, static_cast<Eigen::Index>(oh) * ow);
    std::vector<Eigen::Index> arg(static_cast<size_t>(y.size()));
    const auto& xv = x.value();
    for (Eigen::Index c = 0; c < channels; ++c) {
        for (int py = 0; py < oh; ++py) {
            for (int px = 0; px < ow; ++px) {
                Eigen::Index best = (2 * py) * width + 2 * px;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const Eigen::Index idx = (2 * py + dy) * width + 2 * px + dx;
                        if (xv(c, idx) > xv(c, best)) best = idx;
                    }
                }
                const Eigen::Index o = py * ow + px;
                y(c, o) = xv(c, best);
                arg[static_cast<size_t>(c * y.cols() + o)] = best;
            }
        }
    }
    Tensor out(std::move(y));
    if (any_requires_grad({&x})) {
        attach(out, {x.node()}, [xn = x.node(), arg = std::move(arg)](const Matrix& g) {
            Matrix full = Matrix::Zero(xn->value.rows(), xn->value.cols());
            for (Eigen::Index c = 0; c < g.rows(); ++c) {
                for (Eigen::Index o = 0; o < g.cols(); ++o) {
                    full(c, arg[static_cast<size_t>(c * g.cols() + o)]) += g(c, o);
                }
            }
            xn->accumulate(full);
        });
    }
    return out;
}

}  // namespace sonicgauss::nn
