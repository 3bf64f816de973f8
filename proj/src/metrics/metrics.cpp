#include "sonicgauss/metrics/metrics.hpp"

#include "sonicgauss/audio/codec.hpp"
#include "sonicgauss/common/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace sonicgauss::metrics {

namespace {

Matrix psd_sqrt(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

std::pair<Eigen::VectorXd, Matrix> moments(const Matrix& x) {
    const Eigen::VectorXd mu = x.colwise().mean().transpose();
    Matrix sigma = Matrix::Zero(x.cols(), x.cols());
    if (x.rows() > 1) {
        const Matrix centered = x.rowwise() - mu.transpose();
        sigma = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
    }
    if (x.rows() < x.cols() + 1) {
        sigma.diagonal().array() += kCovarianceShrinkage;
    }
    return {mu, sigma};
}

}  // namespace

double frechet_distance(const Eigen::VectorXd& mu1, const Matrix& sigma1, const Eigen::VectorXd& mu2,
                        const Matrix& sigma2) {
    if (mu1.size() != mu2.size() || sigma1.rows() != mu1.size() || sigma2.rows() != mu2.size()) {
        throw Error("invalid_argument", "moment dimensions differ", "embeddings");
    }
    const Matrix root1 = psd_sqrt(sigma1);
    const Matrix cross = psd_sqrt(root1 * sigma2 * root1);
    const double d = (mu1 - mu2).squaredNorm() + sigma1.trace() + sigma2.trace() - 2.0 * cross.trace();
    return std::max(d, 0.0);
}

double fad(const Matrix& ref_embeddings, const Matrix& gen_embeddings) {
    if (ref_embeddings.rows() == 0 || gen_embeddings.rows() == 0) {
        throw Error("invalid_argument", "fad needs nonempty embedding sets", "embeddings");
    }
    if (ref_embeddings.cols() != gen_embeddings.cols()) {
        throw Error("invalid_argument", "embedding widths differ", "embeddings");
    }
    const auto [mu_r, sigma_r] = moments(ref_embeddings);
    const auto [mu_g, sigma_g] = moments(gen_embeddings);
    return frechet_distance(mu_r, sigma_r, mu_g, sigma_g);
}

Eigen::VectorXd band_distribution(const Matrix& log_mel_values) {
    const Eigen::VectorXd mean = log_mel_values.colwise().mean().transpose();
    const Eigen::VectorXd e = (mean.array() - mean.maxCoeff()).exp();
    return e / e.sum();
}

double kl_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
    if (p.size() != q.size()) {
        throw Error("invalid_argument", "distribution sizes differ", "distribution");
    }
    double kl = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p(i) > 0.0) {
            kl += p(i) * std::log(p(i) / q(i));
        }
    }
    return std::max(kl, 0.0);
}

double kl_sigmoid_from_distributions(std::span<const Eigen::VectorXd> ref, std::span<const Eigen::VectorXd> gen) {
    if (ref.size() != gen.size() || ref.empty()) {
        throw Error("invalid_argument", "kl_sigmoid needs equally long nonempty lists", "gen");
    }
    double total = 0.0;
    for (size_t i = 0; i < ref.size(); ++i) {
        total += kl_divergence(ref[i], gen[i]);
    }
    const double mean = total / static_cast<double>(ref.size());
    return 1.0 / (1.0 + std::exp(-mean)) - 0.5;
}

double kl_sigmoid(std::span<const Matrix> ref_log_mels, std::span<const Matrix> gen_log_mels) {
    if (ref_log_mels.size() != gen_log_mels.size()) {
        throw Error("invalid_argument", "kl_sigmoid needs paired lists of equal length", "gen");
    }
    std::vector<Eigen::VectorXd> p, q;
    for (size_t i = 0; i < ref_log_mels.size(); ++i) {
        p.push_back(band_distribution(ref_log_mels[i]));
        q.push_back(band_distribution(gen_log_mels[i]));
    }
    return kl_sigmoid_from_distributions(p, q);
}

InceptionScore inception_score(const Matrix& posteriors, int folds) {
    const auto n = posteriors.rows();
    if (folds < 1 || n < folds) {
        throw Error("invalid_argument", "inception score needs at least as many samples as folds", "gen");
    }
    std::vector<double> scores;
    for (int f = 0; f < folds; ++f) {
        const Eigen::Index begin = n * f / folds;
        const Eigen::Index end = n * (f + 1) / folds;
        const Matrix part = posteriors.middleRows(begin, end - begin);
        const Eigen::VectorXd marginal = part.colwise().mean().transpose();
        double kl = 0.0;
        for (Eigen::Index i = 0; i < part.rows(); ++i) {
            kl += kl_divergence(part.row(i).transpose(), marginal);
        }
        scores.push_back(std::exp(kl / static_cast<double>(part.rows())));
    }
    InceptionScore is;
    for (double s : scores) {
        is.mean += s;
    }
    is.mean /= static_cast<double>(scores.size());
    for (double s : scores) {
        is.stddev += (s - is.mean) * (s - is.mean);
    }
    is.stddev = std::sqrt(is.stddev / static_cast<double>(scores.size()));
    return is;
}

Eigen::VectorXd mode_amplitudes(const Matrix& mel_magnitude, const oracle::ModalMaterial& material) {
    const double duration = static_cast<double>(audio::kNumSamples) / audio::kSampleRate;
    Eigen::VectorXd a(static_cast<Eigen::Index>(material.modes.size()));
    for (size_t k = 0; k < material.modes.size(); ++k) {
        const auto& mode = material.modes[k];
        if (mode.frequency_hz <= 0.0 || mode.frequency_hz >= audio::kMelMaxHz) {
            throw Error("invalid_material", "mode frequency outside the mel range", "frequency_hz");
        }
        const int b = audio::nearest_mel_band(mode.frequency_hz);
        const int lo = std::max(0, b - 1);
        const int hi = std::min(audio::kMelBins - 1, b + 1);
        const double energy = mel_magnitude.middleCols(lo, hi - lo + 1).squaredNorm();
        const double two_d = 2.0 * mode.damping_per_s;
        a(static_cast<Eigen::Index>(k)) = std::sqrt(energy * two_d / (1.0 - std::exp(-two_d * duration)));
    }
    return a;
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return a.dot(b) / (na * nb);
}

int position_consistency(std::span<const float> gen_wav, const oracle::ModalMaterial& material,
                         const Eigen::Vector3d& p_true, const Eigen::Vector3d& p_far) {
    const Eigen::VectorXd a = mode_amplitudes(audio::mel_spectrogram(gen_wav), material);
    const double near = cosine(a, oracle::mode_gains(material, p_true));
    const double far = cosine(a, oracle::mode_gains(material, p_far));
    return near > far ? 1 : 0;
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j;
    auto put = [&](const char* key, const std::optional<double>& v) {
        if (v) {
            j[key] = *v;
        }
    };
    put("fad", fad);
    put("kl_sigmoid", kl_sigmoid);
    put("is_mean", is_mean);
    put("is_std", is_std);
    put("position_consistency", position_consistency);
    j["n"] = n;
    return j;
}

}  // namespace sonicgauss::metrics
