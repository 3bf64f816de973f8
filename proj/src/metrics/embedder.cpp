#include "sonicgauss/metrics/embedder.hpp"

#include "sonicgauss/audio/wav.hpp"
#include "sonicgauss/common/archive.hpp"
#include "sonicgauss/common/error.hpp"
#include "sonicgauss/common/seed.hpp"
#include "sonicgauss/nn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace sonicgauss::metrics {

using nn::Matrix;
using nn::Tensor;

AudioEmbedder::AudioEmbedder(std::vector<std::string> class_names, audio::MelNormStats stats, nn::Rng& rng)
    : class_names_(std::move(class_names)), stats_(stats) {
    if (class_names_.size() < 2) {
        throw Error("invalid_config", "embedder needs at least two classes", "classes");
    }
    int in = 1;
    for (size_t i = 0; i < kChannels.size(); ++i) {
        const int out = kChannels[i];
        conv_weight[i] = Tensor::parameter(nn::randn(out, in * 9, std::sqrt(2.0 / (in * 9)), rng));
        conv_bias[i] = Tensor::parameter(Matrix::Zero(1, out));
        in = out;
    }
    fc_embed = nn::Linear(kChannels.back(), kEmbeddingDim, rng);
    fc_out = nn::Linear(kEmbeddingDim, static_cast<int>(class_names_.size()), rng);
}

AudioEmbedder::Output AudioEmbedder::forward(const Matrix& log_mel_values) const {
    int h = static_cast<int>(log_mel_values.rows());
    int w = static_cast<int>(log_mel_values.cols());
    const Matrix normalized = (log_mel_values.array() - stats_.mean) / stats_.stddev;
    Tensor x = Tensor::constant(Eigen::Map<const Matrix>(normalized.data(), 1, static_cast<Eigen::Index>(h) * w));
    for (size_t i = 0; i < kChannels.size(); ++i) {
        x = nn::relu(nn::conv3x3(x, conv_weight[i], conv_bias[i], h, w));
        x = nn::max_pool2x2(x, h, w);
        h /= 2;
        w /= 2;
    }
    // Channels are rows, so the spatial average is a per-row mean; transpose
    // to a 1 x C feature through a matmul with a constant averaging vector.
    const Tensor avg = Tensor::constant(Matrix::Constant(1, static_cast<Eigen::Index>(h) * w, 1.0 / (h * w)));
    const Tensor pooled = nn::matmul_nt(avg, x);
    Output out;
    out.embedding = fc_embed(pooled);
    out.logits = fc_out(nn::relu(out.embedding));
    return out;
}

std::pair<Eigen::RowVectorXd, Eigen::RowVectorXd> AudioEmbedder::embed_and_posterior(std::span<const float> wave) const {
    nn::NoGradGuard guard;
    const Output o = forward(audio::log_mel(wave));
    const Eigen::RowVectorXd logits = o.logits.value().row(0);
    Eigen::RowVectorXd p = (logits.array() - logits.maxCoeff()).exp();
    p /= p.sum();
    return {o.embedding.value().row(0), p};
}

Eigen::RowVectorXd AudioEmbedder::embed(std::span<const float> wave) const { return embed_and_posterior(wave).first; }

Eigen::RowVectorXd AudioEmbedder::posterior(std::span<const float> wave) const {
    return embed_and_posterior(wave).second;
}

void AudioEmbedder::collect(nn::ParameterList& out) const {
    for (size_t i = 0; i < kChannels.size(); ++i) {
        out.emplace_back("conv" + std::to_string(i) + ".weight", conv_weight[i]);
        out.emplace_back("conv" + std::to_string(i) + ".bias", conv_bias[i]);
    }
    fc_embed.collect("fc_embed", out);
    fc_out.collect("fc_out", out);
}

void AudioEmbedder::save(const std::filesystem::path& path) const {
    Archive a;
    a.header["kind"] = "audio_embedder";
    a.header["classes"] = class_names_;
    a.header["norm_mean"] = stats_.mean;
    a.header["norm_std"] = stats_.stddev;
    nn::ParameterList params;
    collect(params);
    nn::export_parameters(params, a.tensors);
    save_archive(a, path);
}

AudioEmbedder AudioEmbedder::load(const std::filesystem::path& path) {
    const Archive a = load_archive(path);
    if (a.header.value("kind", "") != "audio_embedder") {
        throw Error("malformed_checkpoint", "not an audio embedder archive: " + path.string(), "path");
    }
    audio::MelNormStats stats{a.header.at("norm_mean").get<double>(), a.header.at("norm_std").get<double>()};
    nn::Rng rng(0);
    AudioEmbedder e(a.header.at("classes").get<std::vector<std::string>>(), stats, rng);
    nn::ParameterList params;
    e.collect(params);
    nn::import_parameters(params, a.tensors);
    return e;
}

std::filesystem::path default_embedder_path() {
    if (const char* env = std::getenv("SONICGAUSS_ASSET_DIR")) {
        return std::filesystem::path(env) / "audio_embedder.ckpt";
    }
    return std::filesystem::path(SONICGAUSS_ASSET_DIR) / "audio_embedder.ckpt";
}

namespace {

struct LabeledMel {
    Matrix log_mel;
    int label;
};

std::vector<LabeledMel> load_split(const oracle::DatasetManifest& manifest, oracle::Split split,
                                   const std::vector<std::string>& classes) {
    std::vector<LabeledMel> out;
    for (const auto& r : manifest.records_in(split)) {
        const auto wav = audio::read_wav(manifest.resolve(r.path));
        const auto std_wave = audio::standardize(wav.samples, wav.sample_rate);
        const auto it = std::find(classes.begin(), classes.end(), r.material_name);
        out.push_back({audio::log_mel(std_wave), static_cast<int>(it - classes.begin())});
    }
    return out;
}

double accuracy(const AudioEmbedder& model, const std::vector<LabeledMel>& data) {
    if (data.empty()) {
        return 0.0;
    }
    nn::NoGradGuard guard;
    int correct = 0;
    for (const auto& d : data) {
        const Matrix logits = model.forward(d.log_mel).logits.value();
        Eigen::Index arg = 0;
        logits.row(0).maxCoeff(&arg);
        correct += static_cast<int>(arg) == d.label ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace

EmbedderTrainResult train_embedder(const oracle::DatasetManifest& manifest, const EmbedderTrainOptions& options,
                                   const std::function<void(const std::string&)>& log) {
    std::vector<std::string> classes;
    for (const auto& o : manifest.objects) {
        if (std::find(classes.begin(), classes.end(), o.material_name) == classes.end()) {
            classes.push_back(o.material_name);
        }
    }
    const auto train = load_split(manifest, oracle::Split::train, classes);
    const auto val = load_split(manifest, oracle::Split::val, classes);
    if (train.empty()) {
        throw Error("invalid_dataset", "no training records for the embedder", "records");
    }
    std::vector<Matrix> mels;
    for (const auto& d : train) {
        mels.push_back(d.log_mel);
    }
    nn::Rng rng(derive_seed(options.seed, {0xE3BEDULL}));
    EmbedderTrainResult result{AudioEmbedder(classes, audio::compute_norm_stats(mels), rng)};
    AudioEmbedder& model = result.model;

    nn::ParameterList params;
    model.collect(params);
    nn::AdamW opt;
    opt.add_group(params);
    const long batches = static_cast<long>((train.size() + options.batch_size - 1) / options.batch_size);
    const long total = batches * options.epochs;
    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        nn::Rng shuffle(derive_seed(options.seed, {0xE3BEDULL, static_cast<std::uint64_t>(epoch)}));
        std::shuffle(order.begin(), order.end(), shuffle);
        double epoch_loss = 0.0;
        for (long b = 0; b < batches; ++b) {
            opt.zero_grad();
            const size_t begin = static_cast<size_t>(b) * options.batch_size;
            const size_t end = std::min(order.size(), begin + options.batch_size);
            for (size_t i = begin; i < end; ++i) {
                const auto& d = train[order[i]];
                const int label = d.label;
                Tensor loss = nn::scale(nn::cross_entropy(model.forward(d.log_mel).logits, {&label, 1}),
                                        1.0 / static_cast<double>(end - begin));
                loss.backward();
                epoch_loss += loss.item();
            }
            opt.step(nn::cosine_warmup_lr(options.lr, opt.step_count(), total, 0.05));
        }
        if (log) {
            std::ostringstream ss;
            ss << "embedder epoch " << epoch + 1 << " loss " << epoch_loss / static_cast<double>(batches);
            log(ss.str());
        }
    }
    result.train_accuracy = accuracy(model, train);
    result.val_accuracy = accuracy(model, val);
    return result;
}

}  // namespace sonicgauss::metrics
