#pragma once

#include "sonicgauss/common/matrix.hpp"
#include "sonicgauss/oracle/modal.hpp"

#include "json.hpp"

#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace sonicgauss::metrics {

inline constexpr double kCovarianceShrinkage = 1e-6;

// Frechet distance between Gaussians with the given moments.
double frechet_distance(const Eigen::VectorXd& mu1, const Matrix& sigma1, const Eigen::VectorXd& mu2,
                        const Matrix& sigma2);
// Frechet distance between Gaussians fitted to two N x D embedding sets.
// Sets with fewer than D + 1 rows get 1e-6 added to the covariance diagonal.
double fad(const Matrix& ref_embeddings, const Matrix& gen_embeddings);

// Softmax over bands of the per-band mean log-mel.
Eigen::VectorXd band_distribution(const Matrix& log_mel_values);
double kl_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q);
// sigmoid(mean_i KL(p_i || q_i)) - 0.5.
double kl_sigmoid_from_distributions(std::span<const Eigen::VectorXd> ref, std::span<const Eigen::VectorXd> gen);
double kl_sigmoid(std::span<const Matrix> ref_log_mels, std::span<const Matrix> gen_log_mels);

struct InceptionScore {
    double mean = 0.0;
    double stddev = 0.0;
};

// Posteriors are N x C rows summing to 1; contiguous near-equal folds.
InceptionScore inception_score(const Matrix& posteriors, int folds = 5);

// Per-mode amplitudes estimated from the mel energy within +-1 band of each
// mode, corrected for the mode's decay over the clip.
Eigen::VectorXd mode_amplitudes(const Matrix& mel_magnitude, const oracle::ModalMaterial& material);
double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);
int position_consistency(std::span<const float> gen_wav, const oracle::ModalMaterial& material,
                         const Eigen::Vector3d& p_true, const Eigen::Vector3d& p_far);

struct MetricsReport {
    std::optional<double> fad;
    std::optional<double> kl_sigmoid;
    std::optional<double> is_mean;
    std::optional<double> is_std;
    std::optional<double> position_consistency;
    int n = 0;

    [[nodiscard]] nlohmann::json to_json() const;
};

}  // namespace sonicgauss::metrics
