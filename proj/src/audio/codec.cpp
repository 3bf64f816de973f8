#include "sonicgauss/audio/codec.hpp"

#include "sonicgauss/audio/fft.hpp"
#include "sonicgauss/common/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace sonicgauss::audio {

namespace {

constexpr double kPi = std::numbers::pi;

double sinc(double x) {
    if (std::abs(x) < 1e-12) {
        return 1.0;
    }
    return std::sin(kPi * x) / (kPi * x);
}

const std::vector<double>& hann_window() {
    static const std::vector<double> w = [] {
        std::vector<double> v(kFftSize);
        for (int n = 0; n < kFftSize; ++n) {
            v[n] = 0.5 - 0.5 * std::cos(2.0 * kPi * n / kFftSize);
        }
        return v;
    }();
    return w;
}

int frame_count(size_t length) { return 1 + static_cast<int>(length) / kHop; }

// Zero-padded by n_fft/2 on both sides, long enough for every frame.
std::vector<double> pad_signal(std::span<const double> x) {
    const int frames = frame_count(x.size());
    const size_t total = static_cast<size_t>((frames - 1) * kHop + kFftSize);
    std::vector<double> padded(std::max(total, x.size() + kFftSize), 0.0);
    std::copy(x.begin(), x.end(), padded.begin() + kFftSize / 2);
    return padded;
}

std::vector<std::vector<Complex>> stft(std::span<const double> x) {
    const auto padded = pad_signal(x);
    const int frames = frame_count(x.size());
    const auto& w = hann_window();
    std::vector<std::vector<Complex>> out(frames);
    std::vector<double> buf(kFftSize);
    for (int m = 0; m < frames; ++m) {
        const size_t start = static_cast<size_t>(m) * kHop;
        for (int n = 0; n < kFftSize; ++n) {
            buf[n] = padded[start + n] * w[n];
        }
        out[m] = rfft(buf);
    }
    return out;
}

// Least-squares inverse STFT onto signals of `length` samples that are zero
// in the padding; per sample this is the window-weighted mean of the frames.
std::vector<double> istft(const std::vector<std::vector<Complex>>& spec, size_t length) {
    const int frames = static_cast<int>(spec.size());
    const size_t padded_len = static_cast<size_t>((frames - 1) * kHop + kFftSize);
    const auto& w = hann_window();
    std::vector<double> num(padded_len, 0.0);
    std::vector<double> den(padded_len, 0.0);
    for (int m = 0; m < frames; ++m) {
        const auto frame = irfft(spec[m], kFftSize);
        const size_t start = static_cast<size_t>(m) * kHop;
        for (int n = 0; n < kFftSize; ++n) {
            num[start + n] += w[n] * frame[n];
            den[start + n] += w[n] * w[n];
        }
    }
    std::vector<double> x(length, 0.0);
    for (size_t i = 0; i < length; ++i) {
        const size_t j = i + kFftSize / 2;
        if (j < padded_len && den[j] > 1e-12) {
            x[i] = num[j] / den[j];
        }
    }
    return x;
}

std::vector<double> to_double(std::span<const float> x) { return {x.begin(), x.end()}; }

Matrix magnitude_of(const std::vector<std::vector<Complex>>& spec) {
    Matrix mag(static_cast<Eigen::Index>(spec.size()), kFftBins);
    for (size_t m = 0; m < spec.size(); ++m) {
        for (int k = 0; k < kFftBins; ++k) {
            mag(static_cast<Eigen::Index>(m), k) = std::abs(spec[m][k]);
        }
    }
    return mag;
}

}  // namespace

std::vector<float> resample(std::span<const float> wave, int from_rate, int to_rate) {
    if (from_rate <= 0 || to_rate <= 0) {
        throw Error("invalid_audio", "sample rate must be positive", "sample_rate");
    }
    if (from_rate == to_rate) {
        return {wave.begin(), wave.end()};
    }
    const double ratio = static_cast<double>(to_rate) / from_rate;
    const double cutoff = 0.95 * std::min(1.0, ratio);
    const double half_width = 16.0 / cutoff;
    const auto out_len = static_cast<size_t>(std::llround(static_cast<double>(wave.size()) * ratio));
    const auto in_len = static_cast<long>(wave.size());
    std::vector<float> out(out_len);
    for (size_t n = 0; n < out_len; ++n) {
        const double u = static_cast<double>(n) / ratio;
        const long lo = std::max<long>(0, static_cast<long>(std::ceil(u - half_width)));
        const long hi = std::min<long>(in_len - 1, static_cast<long>(std::floor(u + half_width)));
        double acc = 0.0;
        for (long k = lo; k <= hi; ++k) {
            const double t = u - static_cast<double>(k);
            const double window = 0.5 * (1.0 + std::cos(kPi * t / half_width));
            acc += wave[static_cast<size_t>(k)] * cutoff * sinc(cutoff * t) * window;
        }
        out[n] = static_cast<float>(acc);
    }
    return out;
}

std::vector<float> standardize(std::span<const float> wave, int sample_rate) {
    if (wave.empty()) {
        throw Error("invalid_audio", "waveform is empty", "waveform");
    }
    if (sample_rate <= 0) {
        throw Error("invalid_audio", "sample rate must be positive", "sample_rate");
    }
    for (float s : wave) {
        if (!std::isfinite(s)) {
            throw Error("invalid_audio", "waveform contains non-finite samples", "waveform");
        }
    }
    std::vector<float> out = resample(wave, sample_rate, kSampleRate);
    out.resize(kNumSamples, 0.0F);
    float peak = 0.0F;
    for (float s : out) {
        peak = std::max(peak, std::abs(s));
    }
    if (peak > 1.0F) {
        const float g = 0.95F / peak;
        for (float& s : out) {
            s *= g;
        }
    }
    return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

std::vector<double> mel_edges_hz() {
    std::vector<double> edges(kMelBins + 2);
    const double top = hz_to_mel(kMelMaxHz);
    for (int i = 0; i < kMelBins + 2; ++i) {
        edges[i] = mel_to_hz(top * i / (kMelBins + 1));
    }
    return edges;
}

}  // namespace

const Matrix& mel_filterbank() {
    static const Matrix fb = [] {
        const auto edges = mel_edges_hz();
        Matrix f = Matrix::Zero(kMelBins, kFftBins);
        for (int b = 0; b < kMelBins; ++b) {
            const double lo = edges[b], mid = edges[b + 1], hi = edges[b + 2];
            for (int k = 0; k < kFftBins; ++k) {
                const double hz = static_cast<double>(k) * kSampleRate / kFftSize;
                double v = 0.0;
                if (hz > lo && hz <= mid) {
                    v = (hz - lo) / (mid - lo);
                } else if (hz > mid && hz < hi) {
                    v = (hi - hz) / (hi - mid);
                }
                f(b, k) = v;
            }
        }
        return f;
    }();
    return fb;
}

int nearest_mel_band(double hz) {
    const auto edges = mel_edges_hz();
    int best = 0;
    for (int b = 1; b < kMelBins; ++b) {
        if (std::abs(edges[b + 1] - hz) < std::abs(edges[best + 1] - hz)) {
            best = b;
        }
    }
    return best;
}

Matrix stft_magnitude(std::span<const float> wave) {
    const auto x = to_double(wave);
    return magnitude_of(stft(x));
}

Matrix mel_spectrogram(std::span<const float> wave) { return stft_magnitude(wave) * mel_filterbank().transpose(); }

Matrix log_mel(std::span<const float> wave) {
    return mel_spectrogram(wave).array().max(kMelFloor).log().matrix();
}

MelNormStats compute_norm_stats(std::span<const Matrix> log_mels) {
    if (log_mels.empty()) {
        throw Error("invalid_dataset", "cannot compute mel statistics of an empty set", "records");
    }
    double sum = 0.0, sq = 0.0, count = 0.0;
    for (const auto& m : log_mels) {
        sum += m.sum();
        sq += m.squaredNorm();
        count += static_cast<double>(m.size());
    }
    MelNormStats stats;
    stats.mean = sum / count;
    stats.stddev = std::sqrt(std::max(sq / count - stats.mean * stats.mean, 0.0));
    if (stats.stddev < 1e-8) {
        stats.stddev = 1.0;
    }
    return stats;
}

MelLatent normalize_log_mel(const Matrix& log_mel_values, const MelNormStats& stats) {
    MelLatent latent;
    latent.values = (log_mel_values.array() - stats.mean) / stats.stddev;
    latent.stats = stats;
    return latent;
}

MelLatent encode_mel(std::span<const float> wave, const MelNormStats& stats) {
    return normalize_log_mel(log_mel(wave), stats);
}

Matrix denormalize(const MelLatent& latent) {
    return (latent.values.array() * latent.stats.stddev + latent.stats.mean).matrix();
}

Matrix mel_to_linear_magnitude(const Matrix& log_mel_values, int iters) {
    const Matrix& fb = mel_filterbank();
    const Matrix mel = log_mel_values.array().exp().matrix();
    const Matrix numerator = mel * fb;
    const Eigen::RowVectorXd column_sums = fb.colwise().sum();
    Matrix s = numerator;
    for (Eigen::Index k = 0; k < s.cols(); ++k) {
        s.col(k) /= std::max(column_sums(k), 1e-8);
    }
    s = s.array().max(1e-12).matrix();
    const Matrix gram = fb.transpose() * fb;
    for (int i = 0; i < iters; ++i) {
        const Matrix denominator = s * gram;
        s = (s.array() * numerator.array() / (denominator.array() + 1e-30)).matrix();
    }
    return s;
}

std::vector<double> griffin_lim(const Matrix& magnitude, int iters, std::uint64_t seed, size_t length) {
    if (iters < 1) {
        throw Error("invalid_argument", "griffin_lim_iters must be >= 1", "griffin_lim_iters");
    }
    if (magnitude.cols() != kFftBins || magnitude.rows() < 1) {
        throw Error("invalid_argument", "magnitude must have 513 columns", "magnitude");
    }
    const auto frames = static_cast<int>(magnitude.rows());
    if (frame_count(length) != frames) {
        throw Error("invalid_argument", "signal length does not match the frame count", "length");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
    std::vector<std::vector<Complex>> spec(frames, std::vector<Complex>(kFftBins));
    for (int m = 0; m < frames; ++m) {
        for (int k = 0; k < kFftBins; ++k) {
            // DC and Nyquist stay real so every iterate is a real signal.
            const bool edge = k == 0 || k == kFftBins - 1;
            spec[m][k] = edge ? Complex(magnitude(m, k), 0.0) : std::polar(magnitude(m, k), phase(rng));
        }
    }
    std::vector<double> x = istft(spec, length);
    for (int it = 0; it < iters; ++it) {
        const auto est = stft(x);
        for (int m = 0; m < frames; ++m) {
            for (int k = 0; k < kFftBins; ++k) {
                const double r = std::abs(est[m][k]);
                const Complex unit = r > 0.0 ? est[m][k] / r : Complex(1.0, 0.0);
                spec[m][k] = magnitude(m, k) * unit;
            }
        }
        x = istft(spec, length);
    }
    return x;
}

double stft_magnitude_error(const Matrix& target_magnitude, std::span<const double> signal) {
    const Matrix mag = magnitude_of(stft(signal));
    if (mag.rows() != target_magnitude.rows() || mag.cols() != target_magnitude.cols()) {
        throw Error("invalid_argument", "signal and target magnitude disagree in frame count", "signal");
    }
    double err = 0.0;
    for (Eigen::Index m = 0; m < mag.rows(); ++m) {
        for (Eigen::Index k = 0; k < mag.cols(); ++k) {
            const double weight = (k == 0 || k == kFftBins - 1) ? 1.0 : 2.0;
            const double d = mag(m, k) - target_magnitude(m, k);
            err += weight * d * d;
        }
    }
    return err;
}

std::vector<float> decode_mel(const MelLatent& latent, int griffin_lim_iters, std::uint64_t seed) {
    if (griffin_lim_iters < 1) {
        throw Error("invalid_argument", "griffin_lim_iters must be >= 1", "griffin_lim_iters");
    }
    if (latent.values.rows() != kFrames || latent.values.cols() != kMelBins) {
        throw Error("invalid_latent", "latent must be 188 x 64", "latent");
    }
    if (!latent.values.allFinite()) {
        throw Error("invalid_latent", "latent contains non-finite values", "latent");
    }
    const Matrix mag = mel_to_linear_magnitude(denormalize(latent));
    const auto x = griffin_lim(mag, griffin_lim_iters, seed);
    std::vector<float> out(kNumSamples, 0.0F);
    for (size_t i = 0; i < out.size() && i < x.size(); ++i) {
        out[i] = static_cast<float>(std::clamp(x[i], -1.0, 1.0));
    }
    return out;
}

double mel_distance(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols() || a.size() == 0) {
        throw Error("invalid_argument", "mel_distance needs equally shaped nonempty inputs", "latent");
    }
    return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

}  // namespace sonicgauss::audio
