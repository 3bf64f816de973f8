#include "doctest.h"

#include "sonicgauss/audio/codec.hpp"
#include "sonicgauss/audio/fft.hpp"
#include "sonicgauss/audio/wav.hpp"
#include "sonicgauss/common/error.hpp"
#include "test_support.hpp"

#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

using namespace sonicgauss;
using namespace sonicgauss::audio;
using testing::TempDir;
using testing::dft_peak_hz;
using testing::naive_dft;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<float> sine(double hz, double rate, size_t n, double amp = 0.5) {
    std::vector<float> out(n);
    for (size_t i = 0; i < n; ++i) {
        out[i] = static_cast<float>(amp * std::sin(2.0 * kPi * hz * static_cast<double>(i) / rate));
    }
    return out;
}

std::vector<float> decaying(double hz, double damping, double rate = kSampleRate) {
    std::vector<float> out(kNumSamples);
    for (size_t i = 0; i < out.size(); ++i) {
        const double t = static_cast<double>(i) / rate;
        out[i] = static_cast<float>(0.8 * std::exp(-damping * t) * std::sin(2.0 * kPi * hz * t));
    }
    return out;
}

constexpr double kBin1024 = static_cast<double>(kSampleRate) / 1024.0;

}  // namespace

TEST_CASE("rfft matches a naive DFT and irfft inverts it") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    for (size_t n : {8UL, 64UL, 1000UL, 1024UL}) {
        std::vector<double> x(n);
        for (auto& v : x) v = g(rng);
        const auto fast = rfft(x);
        const auto slow = naive_dft(x);
        REQUIRE(fast.size() == n / 2 + 1);
        double err = 0.0;
        for (size_t k = 0; k < fast.size(); ++k) err = std::max(err, std::abs(fast[k] - slow[k]));
        CHECK(err < 1e-9);
        const auto back = irfft(fast, static_cast<int>(n));
        for (size_t i = 0; i < n; ++i) CHECK(back[i] == doctest::Approx(x[i]).epsilon(1e-12));
    }
}

TEST_CASE("standardize") {
    SUBCASE("canonical input passes through unchanged") {
        auto x = sine(440.0, kSampleRate, kNumSamples, 0.5);
        CHECK(standardize(x, kSampleRate) == x);
    }
    SUBCASE("32 kHz input yields 48000 samples") {
        auto x = sine(440.0, 32000.0, 96000);
        CHECK(standardize(x, 32000).size() == kNumSamples);
    }
    SUBCASE("short input is zero padded, long input truncated") {
        auto s = standardize(sine(440.0, kSampleRate, 100), kSampleRate);
        REQUIRE(s.size() == kNumSamples);
        CHECK(s[200] == 0.0F);
        CHECK(standardize(sine(440.0, kSampleRate, 60000), kSampleRate).size() == kNumSamples);
    }
    SUBCASE("clipping input is rescaled to 0.95 peak") {
        auto s = standardize(sine(440.0, kSampleRate, kNumSamples, 2.0), kSampleRate);
        float peak = 0.0F;
        for (float v : s) peak = std::max(peak, std::abs(v));
        CHECK(peak == doctest::Approx(0.95F));
    }
    SUBCASE("invalid input is rejected") {
        std::vector<float> bad(10, 0.0F);
        bad[3] = std::nanf("");
        CHECK_THROWS_AS(standardize(bad, kSampleRate), Error);
        CHECK_THROWS_AS(standardize({}, kSampleRate), Error);
    }
}

TEST_CASE("resampling preserves a tone's frequency") {
    const auto x = sine(440.0, 48000.0, 48000 * 2);
    const auto y = resample(x, 48000, kSampleRate);
    CHECK(y.size() == 32000);
    CHECK(std::abs(dft_peak_hz(y, 8000, 1024, kSampleRate) - 440.0) <= kBin1024);
    const auto up = resample(sine(1000.0, 8000.0, 8000), 8000, kSampleRate);
    CHECK(up.size() == 16000);
    CHECK(std::abs(dft_peak_hz(up, 4000, 1024, kSampleRate) - 1000.0) <= kBin1024);
}

TEST_CASE("HTK mel scale and filterbank") {
    for (double hz : {0.0, 100.0, 700.0, 1000.0, 8000.0}) {
        const double expected = 2595.0 * std::log10(1.0 + hz / 700.0);
        CHECK(hz_to_mel(hz) == doctest::Approx(expected).epsilon(1e-12));
        CHECK(mel_to_hz(hz_to_mel(hz)) == doctest::Approx(hz).epsilon(1e-9));
    }
    const Matrix& fb = mel_filterbank();
    REQUIRE(fb.rows() == kMelBins);
    REQUIRE(fb.cols() == kFftBins);
    CHECK(fb.minCoeff() >= 0.0);
    Eigen::Index prev = -1;
    for (Eigen::Index b = 0; b < fb.rows(); ++b) {
        Eigen::Index arg = 0;
        const double peak = fb.row(b).maxCoeff(&arg);
        CHECK(peak <= 1.0 + 1e-12);
        CHECK(peak > 0.0);
        CHECK(arg >= prev);
        prev = arg;
    }
    const double step = (hz_to_mel(kMelMaxHz)) / (kMelBins + 1);
    CHECK(nearest_mel_band(mel_to_hz(step * 10.0)) == 9);
}

TEST_CASE("log-mel shape and floor") {
    const std::vector<float> zeros(kNumSamples, 0.0F);
    const Matrix lm = log_mel(zeros);
    REQUIRE(lm.rows() == kFrames);
    REQUIRE(lm.cols() == kMelBins);
    CHECK(kFrames == 188);
    CHECK(lm.maxCoeff() == doctest::Approx(std::log(kMelFloor)));
    CHECK(lm.minCoeff() == doctest::Approx(std::log(kMelFloor)));
    const auto stats = compute_norm_stats(std::vector<Matrix>{lm, Matrix::Constant(kFrames, kMelBins, 1.0)});
    const MelLatent z = normalize_log_mel(lm, stats);
    CHECK(z.values.maxCoeff() == doctest::Approx(z.values.minCoeff()));
}

TEST_CASE("standardized input of any length or rate encodes to 188 x 64") {
    for (auto [n, rate] : std::vector<std::pair<size_t, int>>{{1000, 16000}, {70000, 16000}, {44100, 44100}, {5, 8000}}) {
        const auto latent = encode_mel(standardize(sine(300.0, rate, n), rate), MelNormStats{});
        CHECK(latent.values.rows() == kFrames);
        CHECK(latent.values.cols() == kMelBins);
        CHECK(latent.values.allFinite());
    }
    const auto x = standardize(sine(300.0, 22050, 30000), 22050);
    CHECK(encode_mel(x, {1.0, 2.0}).values == encode_mel(x, {1.0, 2.0}).values);
}

TEST_CASE("a 1 kHz tone stays in one mel band across interior frames") {
    const Matrix m = mel_spectrogram(sine(1000.0, kSampleRate, kNumSamples));
    const int band = nearest_mel_band(1000.0);
    for (Eigen::Index f = 4; f < m.rows() - 4; ++f) {
        Eigen::Index arg = 0;
        m.row(f).maxCoeff(&arg);
        CHECK(std::abs(static_cast<int>(arg) - band) <= 1);
        Eigen::Index first = 0;
        m.row(4).maxCoeff(&first);
        CHECK(arg == first);
    }
}

TEST_CASE("stft magnitude frames agree with a windowed naive DFT") {
    const auto x = sine(700.0, kSampleRate, kNumSamples);
    const Matrix mag = stft_magnitude(x);
    REQUIRE(mag.rows() == kFrames);
    REQUIRE(mag.cols() == kFftBins);
    const size_t frame = 10;
    const size_t start = frame * kHop - kFftSize / 2;
    std::vector<double> seg(kFftSize);
    for (size_t i = 0; i < seg.size(); ++i) {
        const double w = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / kFftSize);
        seg[i] = w * x[start + i];
    }
    const auto spec = naive_dft(seg);
    for (size_t k = 0; k < spec.size(); k += 7) {
        CHECK(mag(static_cast<Eigen::Index>(frame), static_cast<Eigen::Index>(k)) ==
              doctest::Approx(std::abs(spec[k])).epsilon(1e-9).scale(1.0));
    }
}

TEST_CASE("norm stats are the scalar mean and deviation") {
    Matrix a(2, 2);
    a << 1, 2, 3, 4;
    Matrix b(1, 2);
    b << 5, 6;
    const auto s = compute_norm_stats(std::vector<Matrix>{a, b});
    CHECK(s.mean == doctest::Approx(3.5));
    CHECK(s.stddev == doctest::Approx(std::sqrt(17.5 / 6.0)));
    const MelLatent z = normalize_log_mel(a, s);
    CHECK((denormalize(z) - a).norm() < 1e-12);
}

TEST_CASE("decode inverts encode for a modal tone") {
    const auto x = decaying(440.0, 3.0);
    const auto stats = compute_norm_stats(std::vector<Matrix>{log_mel(x)});
    const auto latent = encode_mel(x, stats);
    const auto y = decode_mel(latent, 60, 3);
    REQUIRE(y.size() == kNumSamples);
    CHECK(std::abs(dft_peak_hz(y, 2000, 1024, kSampleRate) - 440.0) <= kBin1024);
    CHECK(mel_distance(log_mel(y), log_mel(x)) < 0.25 * (log_mel(x).array() - log_mel(x).mean()).matrix().norm() /
                                                      std::sqrt(static_cast<double>(kFrames * kMelBins)));
    CHECK(decode_mel(latent, 60, 3) == y);
    for (float v : y) CHECK(std::abs(v) <= 1.0F);
}

TEST_CASE("a floor latent decodes to near silence") {
    MelNormStats s{-5.0, 2.0};
    MelLatent floor_latent{Matrix::Constant(kFrames, kMelBins, (std::log(kMelFloor) - s.mean) / s.stddev), s};
    const auto y = decode_mel(floor_latent, 30, 0);
    float peak = 0.0F;
    for (float v : y) peak = std::max(peak, std::abs(v));
    CHECK(peak < 0.01F);
}

TEST_CASE("decode rejects malformed latents") {
    MelLatent wrong{Matrix::Zero(10, kMelBins), {}};
    CHECK_THROWS_AS(decode_mel(wrong), Error);
    MelLatent nan{Matrix::Zero(kFrames, kMelBins), {}};
    nan.values(3, 3) = std::nan("");
    CHECK_THROWS_AS(decode_mel(nan), Error);
    CHECK_THROWS_AS(griffin_lim(Matrix::Zero(kFrames, kFftBins), 0, 0), Error);
}

TEST_CASE("Griffin-Lim error never increases with more iterations") {
    const std::vector<std::vector<float>> fixtures{decaying(440.0, 3.0), decaying(1500.0, 20.0), decaying(300.0, 60.0),
                                                   sine(2500.0, kSampleRate, kNumSamples, 0.3),
                                                   decaying(5000.0, 8.0)};
    for (size_t f = 0; f < fixtures.size(); ++f) {
        const Matrix target = stft_magnitude(fixtures[f]);
        double prev = std::numeric_limits<double>::infinity();
        for (int iters = 1; iters <= 32; iters *= 2) {
            const auto sig = griffin_lim(target, iters, 7 + f);
            const double err = stft_magnitude_error(target, sig);
            CHECK(err <= prev * (1.0 + 1e-12));
            prev = err;
        }
    }
}

TEST_CASE("WAV encode and parse") {
    TempDir dir("wav");
    const auto x = sine(440.0, kSampleRate, 1000, 0.7);
    write_wav(dir.path() / "a.wav", x, kSampleRate);
    const auto w = read_wav(dir.path() / "a.wav");
    CHECK(w.sample_rate == kSampleRate);
    REQUIRE(w.samples.size() == x.size());
    for (size_t i = 0; i < x.size(); ++i) CHECK(std::abs(w.samples[i] - x[i]) <= 1.5F / 32767.0F);
    const auto bytes = encode_wav(x, kSampleRate);
    CHECK(bytes.size() == 44 + 2 * x.size());

    SUBCASE("float32 stereo files are averaged to mono") {
        const std::vector<float> frames{0.5F, -0.5F, 1.0F, 0.0F};
        std::vector<unsigned char> b;
        auto put = [&](const void* p, size_t n) {
            const auto* c = static_cast<const unsigned char*>(p);
            b.insert(b.end(), c, c + n);
        };
        auto u32 = [&](std::uint32_t v) { put(&v, 4); };
        auto u16 = [&](std::uint16_t v) { put(&v, 2); };
        put("RIFF", 4);
        u32(36 + 16);
        put("WAVE", 4);
        put("fmt ", 4);
        u32(16);
        u16(3);
        u16(2);
        u32(22050);
        u32(22050 * 8);
        u16(8);
        u16(32);
        put("data", 4);
        u32(16);
        put(frames.data(), 16);
        const auto parsed = parse_wav(b);
        CHECK(parsed.sample_rate == 22050);
        REQUIRE(parsed.samples.size() == 2);
        CHECK(parsed.samples[0] == 0.0F);
        CHECK(parsed.samples[1] == 0.5F);
    }
    SUBCASE("malformed bytes are rejected") {
        std::vector<unsigned char> junk(20, 0);
        CHECK_THROWS_AS(parse_wav(junk), Error);
        CHECK_THROWS_AS(read_wav(dir.path() / "missing.wav"), Error);
    }
}
