#include "sonicgauss/encoders/encoders.hpp"

#include "sonicgauss/common/error.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <numbers>
#include <numeric>

namespace sonicgauss::encoders {

void EncoderConfig::validate() const {
    if (d_joint <= 0 || heads <= 0 || d_joint % heads != 0) {
        throw Error("invalid_config", "d_joint must be a positive multiple of the head count", "d_joint");
    }
    if (mlp_ratio <= 0 || gaussian_stages <= 0 || gaussian_window <= 0 || gaussian_merge_stride < 2 ||
        gaussian_max_tokens <= 0 || text_blocks < 0 || text_max_len <= 0 || position_hidden1 <= 0 ||
        position_hidden2 <= 0) {
        throw Error("invalid_config", "encoder sizes must be positive (merge stride >= 2)", "encoder");
    }
}

double sin_pi(double x) {
    double r = std::remainder(x, 2.0);  // exact, in [-1, 1]
    if (r == 0.0 || std::abs(r) == 1.0) {
        return 0.0;
    }
    if (std::abs(r) == 0.5) {
        return r > 0.0 ? 1.0 : -1.0;
    }
    if (r > 0.5) {
        r = 1.0 - r;
    } else if (r < -0.5) {
        r = -1.0 - r;
    }
    return std::sin(std::numbers::pi * r);
}

double cos_pi(double x) {
    const double a = std::abs(std::remainder(x, 2.0));  // in [0, 1]
    if (a == 0.0) {
        return 1.0;
    }
    if (a == 0.5) {
        return 0.0;
    }
    if (a == 1.0) {
        return -1.0;
    }
    return a < 0.5 ? std::cos(std::numbers::pi * a) : -std::cos(std::numbers::pi * (1.0 - a));
}

Matrix freq_encode(const Eigen::Vector3d& p) {
    Matrix out(1, kFreqEncodingDim);
    Eigen::Index col = 0;
    for (int c = 0; c < 3; ++c) {
        double scaled = p(c);
        for (int l = 0; l < kFrequencyBands; ++l) {
            out(0, col++) = sin_pi(scaled);
            out(0, col++) = cos_pi(scaled);
            scaled *= 2.0;
        }
    }
    for (int c = 0; c < 3; ++c) {
        out(0, col++) = p(c);
    }
    return out;
}

PositionEncoder::PositionEncoder(const EncoderConfig& config, nn::Rng& rng)
    : fc1(kFreqEncodingDim, config.position_hidden1, rng),
      fc2(config.position_hidden1, config.position_hidden2, rng),
      fc3(config.position_hidden2, config.d_joint, rng) {
    config.validate();
}

Tensor PositionEncoder::operator()(const Eigen::Vector3d& p) const {
    if (!p.allFinite()) {
        throw Error("invalid_position", "position must be finite", "position");
    }
    const Tensor x = Tensor::constant(freq_encode(p));
    return fc3(nn::relu(fc2(nn::relu(fc1(x)))));
}

void PositionEncoder::collect(const std::string& prefix, nn::ParameterList& out) const {
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
    fc3.collect(prefix + ".fc3", out);
}

namespace {

std::uint32_t spread_bits(std::uint32_t v) {
    v &= 0x3ffU;
    v = (v | (v << 16)) & 0x030000ffU;
    v = (v | (v << 8)) & 0x0300f00fU;
    v = (v | (v << 4)) & 0x030c30c3U;
    v = (v | (v << 2)) & 0x09249249U;
    return v;
}

std::uint32_t quantize(float c) {
    const double q = std::floor((static_cast<double>(c) + 0.5) * 1024.0);
    return static_cast<std::uint32_t>(std::clamp(q, 0.0, 1023.0));
}

}  // namespace

std::uint32_t morton_code(const Eigen::Vector3f& position) {
    return spread_bits(quantize(position.x())) | (spread_bits(quantize(position.y())) << 1) |
           (spread_bits(quantize(position.z())) << 2);
}

Matrix serialize_splats(const splat::GaussianCloud& cloud) {
    if (cloud.splats.empty()) {
        throw Error("invalid_cloud", "splat count >= 1 violated", "splats");
    }
    using Row = std::array<float, splat::GaussianSplat::kChannels>;
    std::vector<std::pair<std::uint32_t, Row>> keyed;
    keyed.reserve(cloud.splats.size());
    for (const auto& s : cloud.splats) {
        keyed.emplace_back(morton_code(s.position), s.channels());
    }
    std::sort(keyed.begin(), keyed.end());
    Matrix out(static_cast<Eigen::Index>(keyed.size()), splat::GaussianSplat::kChannels);
    for (size_t i = 0; i < keyed.size(); ++i) {
        for (int c = 0; c < splat::GaussianSplat::kChannels; ++c) {
            out(static_cast<Eigen::Index>(i), c) = keyed[i].second[static_cast<size_t>(c)];
        }
    }
    return out;
}

GaussianEncoder::GaussianEncoder(const EncoderConfig& config, nn::Rng& rng)
    : embed(splat::GaussianSplat::kChannels, config.d_joint, rng), final_norm(config.d_joint), config_(config) {
    config.validate();
    for (int i = 0; i < config.gaussian_stages; ++i) {
        blocks.emplace_back(config.d_joint, config.heads, config.d_joint * config.mlp_ratio, rng);
    }
}

FeatureTokens GaussianEncoder::operator()(const splat::GaussianCloud& cloud) const {
    return encode_features(serialize_splats(cloud));
}

FeatureTokens GaussianEncoder::encode_features(const Matrix& serialized) const {
    if (serialized.rows() < 1 || serialized.cols() != splat::GaussianSplat::kChannels) {
        throw Error("invalid_cloud", "expected n x 14 splat features with n >= 1", "splats");
    }
    const int limit = config_.gaussian_max_tokens;
    Tensor x = embed(Tensor::constant(serialized));
    for (const auto& block : blocks) {
        x = block(x, nullptr, config_.gaussian_window);
        if (x.rows() > limit) {
            x = nn::group_max_rows(x, config_.gaussian_merge_stride);
        }
    }
    if (x.rows() > limit) {
        const auto group = static_cast<int>((x.rows() + limit - 1) / limit);
        x = nn::group_max_rows(x, group);
    }
    FeatureTokens out;
    out.tokens = final_norm(x);
    out.pooled = nn::row_max(out.tokens);
    return out;
}

void GaussianEncoder::collect(const std::string& prefix, nn::ParameterList& out) const {
    embed.collect(prefix + ".embed", out);
    for (size_t i = 0; i < blocks.size(); ++i) {
        blocks[i].collect(prefix + ".blocks." + std::to_string(i), out);
    }
    final_norm.collect(prefix + ".final_norm", out);
}

std::vector<std::string> tokenize(const std::string& caption) {
    std::vector<std::string> words;
    std::string cur;
    for (unsigned char ch : caption) {
        if (std::isalnum(ch) != 0) {
            cur.push_back(static_cast<char>(std::tolower(ch)));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) {
        words.push_back(std::move(cur));
    }
    return words;
}

Vocabulary::Vocabulary() : words_{kUnknownToken} { index_[kUnknownToken] = kUnknown; }

Vocabulary Vocabulary::build(const std::vector<std::string>& captions) {
    std::vector<std::string> words;
    for (const auto& c : captions) {
        for (auto& w : tokenize(c)) {
            words.push_back(std::move(w));
        }
    }
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    std::vector<std::string> ordered{kUnknownToken};
    ordered.insert(ordered.end(), words.begin(), words.end());
    return from_words(ordered);
}

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words) {
    if (words.empty() || words.front() != kUnknownToken) {
        throw Error("invalid_vocabulary", "vocabulary must start with <unk>", "vocab");
    }
    Vocabulary v;
    v.words_ = words;
    v.index_.clear();
    for (size_t i = 0; i < words.size(); ++i) {
        if (!v.index_.emplace(words[i], static_cast<int>(i)).second) {
            throw Error("invalid_vocabulary", "duplicate vocabulary word: " + words[i], "vocab");
        }
    }
    return v;
}

int Vocabulary::id(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? kUnknown : it->second;
}

std::vector<int> Vocabulary::encode(const std::string& caption) const {
    std::vector<int> ids;
    for (const auto& w : tokenize(caption)) {
        ids.push_back(id(w));
    }
    if (ids.empty()) {
        ids.push_back(kUnknown);
    }
    return ids;
}

TextEncoder::TextEncoder(const EncoderConfig& config, Vocabulary vocab, nn::Rng& rng)
    : final_norm(config.d_joint), config_(config), vocab_(std::move(vocab)) {
    config.validate();
    embedding = Tensor::parameter(nn::randn(vocab_.size(), config.d_joint, 1.0, rng));
    positional = Tensor::parameter(nn::randn(config.text_max_len, config.d_joint, 0.02, rng));
    for (int i = 0; i < config.text_blocks; ++i) {
        blocks.emplace_back(config.d_joint, config.heads, config.d_joint * config.mlp_ratio, rng);
    }
}

FeatureTokens TextEncoder::operator()(const std::string& caption) const {
    std::vector<int> ids = vocab_.encode(caption);
    if (static_cast<int>(ids.size()) > config_.text_max_len) {
        ids.resize(static_cast<size_t>(config_.text_max_len));
    }
    const auto n = static_cast<Eigen::Index>(ids.size());
    Tensor x = nn::gather_rows(embedding, ids) + nn::slice_rows(positional, 0, n);
    for (const auto& block : blocks) {
        x = block(x);
    }
    FeatureTokens out;
    out.tokens = final_norm(x);
    out.pooled = nn::row_mean(out.tokens);
    return out;
}

void TextEncoder::collect(const std::string& prefix, nn::ParameterList& out) const {
    out.emplace_back(prefix + ".embedding", embedding);
    out.emplace_back(prefix + ".positional", positional);
    for (size_t i = 0; i < blocks.size(); ++i) {
        blocks[i].collect(prefix + ".blocks." + std::to_string(i), out);
    }
    final_norm.collect(prefix + ".final_norm", out);
}

}  // namespace sonicgauss::encoders
