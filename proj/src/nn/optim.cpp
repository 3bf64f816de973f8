#include "sonicgauss/nn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sonicgauss::nn {

void AdamW::add_group(const ParameterList& params, Scalar lr_scale) {
    for (const auto& [name, t] : params) {
        if (!t.requires_grad()) {
            throw std::invalid_argument("optimizer parameter does not require grad: " + name);
        }
        params_.emplace_back(name, t);
        lr_scales_.push_back(lr_scale);
        m_.push_back(Matrix::Zero(t.rows(), t.cols()));
        v_.push_back(Matrix::Zero(t.rows(), t.cols()));
    }
}

void AdamW::zero_grad() {
    for (auto& [name, t] : params_) {
        t.zero_grad();
    }
}

void AdamW::step(Scalar base_lr) {
    ++steps_;
    const Scalar bc1 = 1.0 - std::pow(options_.beta1, static_cast<Scalar>(steps_));
    const Scalar bc2 = 1.0 - std::pow(options_.beta2, static_cast<Scalar>(steps_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i].second;
        const Scalar lr = base_lr * lr_scales_[i];
        Matrix& value = p.mutable_value();
        if (options_.weight_decay > 0.0 && value.rows() > 1 && value.cols() > 1) {
            value *= (1.0 - lr * options_.weight_decay);
        }
        const Matrix& g = p.grad();
        if (g.size() == 0) {
            continue;
        }
        m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * g;
        v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * g.cwiseProduct(g);
        value.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + options_.eps);
    }
}

std::map<std::string, std::pair<Matrix, Matrix>> AdamW::export_state() const {
    std::map<std::string, std::pair<Matrix, Matrix>> state;
    for (size_t i = 0; i < params_.size(); ++i) {
        state.emplace(params_[i].first, std::make_pair(m_[i], v_[i]));
    }
    return state;
}

void AdamW::import_state(const std::map<std::string, std::pair<Matrix, Matrix>>& state, long steps) {
    for (size_t i = 0; i < params_.size(); ++i) {
        auto it = state.find(params_[i].first);
        if (it == state.end()) {
            throw std::runtime_error("optimizer state missing for " + params_[i].first);
        }
        m_[i] = it->second.first;
        v_[i] = it->second.second;
    }
    steps_ = steps;
}

Scalar cosine_warmup_lr(Scalar base_lr, long step, long total_steps, Scalar warmup_fraction) {
    if (total_steps <= 0) {
        return base_lr;
    }
    const long warmup = std::max<long>(1, std::lround(warmup_fraction * static_cast<Scalar>(total_steps)));
    if (step < warmup) {
        return base_lr * static_cast<Scalar>(step + 1) / static_cast<Scalar>(warmup);
    }
    const long span = std::max<long>(1, total_steps - warmup);
    const Scalar progress = std::min<Scalar>(1.0, static_cast<Scalar>(step - warmup) / static_cast<Scalar>(span));
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace sonicgauss::nn
