#pragma once

#include "sonicgauss/common/matrix.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace sonicgauss::audio {

inline constexpr int kSampleRate = 16000;
inline constexpr int kNumSamples = 48000;
inline constexpr int kFftSize = 1024;
inline constexpr int kHop = 256;
inline constexpr int kFftBins = kFftSize / 2 + 1;
inline constexpr int kFrames = 1 + kNumSamples / kHop;  // center padded: 188
inline constexpr int kMelBins = 64;
inline constexpr double kMelMaxHz = 8000.0;
inline constexpr double kMelFloor = 1e-5;

// Windowed-sinc resampling between arbitrary integer rates.
std::vector<float> resample(std::span<const float> wave, int from_rate, int to_rate);

// Resamples to 16 kHz, fits to exactly 48000 samples and rescales to a
// 0.95 peak only when the input peak exceeds 1.
std::vector<float> standardize(std::span<const float> wave, int sample_rate);

double hz_to_mel(double hz);
double mel_to_hz(double mel);
// 64 x 513 triangular HTK-mel filters over 0..8000 Hz with unit peaks.
const Matrix& mel_filterbank();
// Mel band whose center frequency is closest to hz.
int nearest_mel_band(double hz);

// Periodic Hann STFT magnitude, frames x 513, zero-padded centering.
Matrix stft_magnitude(std::span<const float> wave);
// Mel-filtered magnitude, frames x 64.
Matrix mel_spectrogram(std::span<const float> wave);
// log(max(mel, 1e-5)), frames x 64, before normalization.
Matrix log_mel(std::span<const float> wave);

struct MelNormStats {
    double mean = 0.0;
    double stddev = 1.0;
};

// Scalar statistics over every entry of the given log-mel matrices.
MelNormStats compute_norm_stats(std::span<const Matrix> log_mels);

struct MelLatent {
    Matrix values;  // kFrames x kMelBins, z-normalized
    MelNormStats stats;
};

MelLatent encode_mel(std::span<const float> wave, const MelNormStats& stats);
MelLatent normalize_log_mel(const Matrix& log_mel_values, const MelNormStats& stats);
Matrix denormalize(const MelLatent& latent);

// Inverts a latent to a 48000-sample waveform: non-negative least squares
// against the filterbank, then Griffin-Lim phase recovery.
std::vector<float> decode_mel(const MelLatent& latent, int griffin_lim_iters = 60, std::uint64_t seed = 0);

inline constexpr int kMelInverseIters = 100;

// Frames x 513 magnitude S >= 0 minimizing ||S F^T - mel||, by
// multiplicative updates started from the column-renormalized transpose.
Matrix mel_to_linear_magnitude(const Matrix& log_mel_values, int iters = kMelInverseIters);

// Griffin-Lim on a frames x 513 target magnitude for a signal of `length`
// samples (1 + length / hop must equal frames). The iterate sequence depends
// only on seed, so more iterations never increase stft_magnitude_error.
std::vector<double> griffin_lim(const Matrix& magnitude, int iters, std::uint64_t seed, size_t length = kNumSamples);

// Squared distance between |STFT(signal)| and target, with each one-sided
// bin weighted by its multiplicity in the full spectrum.
double stft_magnitude_error(const Matrix& target_magnitude, std::span<const double> signal);

// Root-mean-square difference between equally shaped matrices.
double mel_distance(const Matrix& a, const Matrix& b);

}  // namespace sonicgauss::audio
