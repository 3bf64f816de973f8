#pragma once

#include "sonicgauss/nn/layers.hpp"

#include <map>
#include <string>

namespace sonicgauss::nn {

struct AdamWOptions {
    Scalar beta1 = 0.9;
    Scalar beta2 = 0.999;
    Scalar eps = 1e-8;
    Scalar weight_decay = 0.01;
};

// Adam with decoupled weight decay. Decay applies only to matrices
// (both dimensions > 1); biases, norms and scalars are not decayed.
class AdamW {
public:
    explicit AdamW(AdamWOptions options = {}) : options_(options) {}

    // Registers parameters whose learning rate is base_lr * lr_scale.
    void add_group(const ParameterList& params, Scalar lr_scale = 1.0);
    void zero_grad();
    void step(Scalar base_lr);

    [[nodiscard]] long step_count() const { return steps_; }
    [[nodiscard]] const ParameterList& parameters() const { return params_; }

    // Moment buffers keyed by parameter name, used for checkpoint resume.
    [[nodiscard]] std::map<std::string, std::pair<Matrix, Matrix>> export_state() const;
    void import_state(const std::map<std::string, std::pair<Matrix, Matrix>>& state, long steps);

private:
    AdamWOptions options_;
    ParameterList params_;
    std::vector<Scalar> lr_scales_;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    long steps_ = 0;
};

// Linear warmup over the first warmup_fraction of total_steps, then cosine
// decay to zero. `step` is the zero-based index of the update being taken.
Scalar cosine_warmup_lr(Scalar base_lr, long step, long total_steps, Scalar warmup_fraction);

}  // namespace sonicgauss::nn
