#include "doctest.h"

#include "sonicgauss/audio/codec.hpp"
#include "sonicgauss/audio/wav.hpp"
#include "sonicgauss/oracle/dataset.hpp"
#include "sonicgauss/oracle/modal.hpp"
#include "test_support.hpp"

#include "json.hpp"

#include <fstream>
#include <numbers>
#include <random>
#include <set>

using namespace sonicgauss;
using namespace sonicgauss::oracle;
using testing::TempDir;

namespace {

const MaterialBank& bank() {
    static const MaterialBank b = load_material_bank(default_material_bank_path());
    return b;
}

ModalMaterial single_mode(double hz, double damping, double phase = std::numbers::pi / 2) {
    ModalMaterial m;
    m.name = "test";
    m.caption_template = "Test.";
    Mode mode;
    mode.frequency_hz = hz;
    mode.damping_per_s = damping;
    mode.base_gain = 0.8;
    mode.gain_direction = Vec3d::UnitX();
    mode.gain_phase = phase;
    m.modes.push_back(mode);
    return m;
}

// Least-squares slope of log short-time energy over [t0, t1] seconds.
double log_energy_slope(std::span<const float> x, double t0, double t1) {
    const size_t window = 1600;
    std::vector<double> ts;
    std::vector<double> ls;
    for (size_t s = static_cast<size_t>(t0 * kImpactSampleRate); s + window <= static_cast<size_t>(t1 * kImpactSampleRate);
         s += window) {
        double e = 0.0;
        for (size_t i = s; i < s + window; ++i) e += static_cast<double>(x[i]) * x[i];
        ts.push_back((static_cast<double>(s) + window / 2.0) / kImpactSampleRate);
        ls.push_back(std::log(e));
    }
    const double n = static_cast<double>(ts.size());
    double st = 0, sl = 0, stt = 0, stl = 0;
    for (size_t i = 0; i < ts.size(); ++i) {
        st += ts[i];
        sl += ls[i];
        stt += ts[i] * ts[i];
        stl += ts[i] * ls[i];
    }
    return (n * stl - st * sl) / (n * stt - st * st);
}

std::string file_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("mode gains at the origin follow the phase") {
    const auto peak = single_mode(440.0, 5.0, std::numbers::pi / 2);
    CHECK(mode_gains(peak, Vec3d::Zero())(0) == doctest::Approx(0.8));
    const auto floor = single_mode(440.0, 5.0, 0.0);
    CHECK(mode_gains(floor, Vec3d::Zero())(0) == doctest::Approx(0.8 * 0.2));
}

TEST_CASE("antipodal positions change gains unless orthogonal to the direction") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (const auto& m : bank().materials) {
        const Vec3d p(u(rng), u(rng), u(rng));
        const auto a = mode_gains(m, p);
        const auto b = mode_gains(m, -p);
        for (size_t k = 0; k < m.modes.size(); ++k) {
            const auto& mode = m.modes[k];
            const double sa = std::abs(std::sin(std::numbers::pi * mode.gain_direction.dot(p) + mode.gain_phase));
            const double sb = std::abs(std::sin(-std::numbers::pi * mode.gain_direction.dot(p) + mode.gain_phase));
            const auto i = static_cast<Eigen::Index>(k);
            CHECK(a(i) == doctest::Approx(mode.base_gain * (0.2 + 0.8 * sa)));
            if (std::abs(sa - sb) > 1e-9) {
                CHECK(a(i) != b(i));
            }
            CHECK(a(i) > 0.0);
            CHECK(a(i) <= 1.0);
        }
    }
}

TEST_CASE("mode gains are Lipschitz in position") {
    const double h = 1e-6;
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-0.49, 0.49);
    for (const auto& m : bank().materials) {
        for (int trial = 0; trial < 20; ++trial) {
            const Vec3d p(u(rng), u(rng), u(rng));
            for (int axis = 0; axis < 3; ++axis) {
                const Vec3d d = Vec3d::Unit(axis) * h;
                const Eigen::VectorXd fd = (mode_gains(m, p + d) - mode_gains(m, p - d)) / (2 * h);
                for (size_t k = 0; k < m.modes.size(); ++k) {
                    const double bound = std::numbers::pi * 0.8 * m.modes[k].gain_direction.norm() * m.modes[k].base_gain;
                    CHECK(std::abs(fd(static_cast<Eigen::Index>(k))) <= bound + 1e-4);
                }
            }
        }
    }
}

TEST_CASE("impact waveform contract") {
    const auto& metal = bank().by_name("metal");
    const Vec3d p(0.1, -0.2, 0.3);
    CHECK(modal_response(metal, p)[0] == 0.0);
    const auto s = synth_impact(metal, p, 9);
    REQUIRE(s.waveform.size() == static_cast<size_t>(kImpactSamples));
    CHECK(std::abs(s.waveform[0]) <= 0.01F);
    float peak = 0.0F;
    for (float v : s.waveform) peak = std::max(peak, std::abs(v));
    CHECK(peak <= 1.0F);
    CHECK(peak == doctest::Approx(0.9F).epsilon(0.02));
    const auto again = synth_impact(metal, p, 9);
    CHECK(again.waveform == s.waveform);
    CHECK(synth_impact(metal, p, 10).waveform != s.waveform);
    CHECK(s.caption.value() == "Metallic, hollow, resonant.");
}

TEST_CASE("single mode spectrum peaks at its frequency") {
    const auto s = synth_impact(single_mode(440.0, 5.0), Vec3d::Zero(), 1);
    const double bin = static_cast<double>(kImpactSampleRate) / 1024.0;
    CHECK(std::abs(testing::dft_peak_hz(s.waveform, 1000, 1024, kImpactSampleRate) - 440.0) <= bin);
}

TEST_CASE("single mode energy decays at twice the damping") {
    for (double d : {1.0, 5.0, 12.0}) {
        const auto s = synth_impact(single_mode(440.0, d), Vec3d::Zero(), 2);
        const double slope = log_energy_slope(s.waveform, 0.2, 1.0);
        CHECK(slope == doctest::Approx(-2.0 * d).epsilon(0.05));
    }
}

TEST_CASE("bank spectra peak at each audible mode") {
    const double bin = static_cast<double>(kImpactSampleRate) / 1024.0;
    for (const auto& m : bank().materials) {
        const Vec3d p(0.2, 0.1, -0.3);
        const auto s = synth_impact(m, p, 5);
        const auto mag = testing::windowed_dft_magnitude(s.waveform, 0, 1024);
        const auto gains = mode_gains(m, p);
        for (size_t k = 0; k < m.modes.size(); ++k) {
            if (gains(static_cast<Eigen::Index>(k)) <= 0.05) continue;
            const double f = m.modes[k].frequency_hz;
            const auto centre = static_cast<long>(std::lround(f / bin));
            long best = centre;
            for (long b = centre - 2; b <= centre + 2; ++b) {
                if (mag[static_cast<size_t>(b)] > mag[static_cast<size_t>(best)]) best = b;
            }
            CHECK(std::abs(static_cast<double>(best) * bin - f) <= bin);
            CHECK(mag[static_cast<size_t>(best)] > mag[static_cast<size_t>(best - 4)]);
            CHECK(mag[static_cast<size_t>(best)] > mag[static_cast<size_t>(best + 4)]);
        }
    }
}

TEST_CASE("material bank contents and captions") {
    const auto& b = bank();
    const std::vector<std::string> names{"metal", "ceramic", "glass", "wood", "plastic-hard", "plastic-soft", "stone",
                                         "cardboard"};
    REQUIRE(b.materials.size() == names.size());
    std::set<std::string> captions;
    for (size_t i = 0; i < names.size(); ++i) {
        CHECK(b.materials[i].name == names[i]);
        CHECK_NOTHROW(b.materials[i].validate());
        captions.insert(caption_for(b.materials[i]));
        for (const auto& mode : b.materials[i].modes) {
            CHECK(mode.frequency_hz < 8000.0);
        }
    }
    CHECK(captions.size() == names.size());
    CHECK(caption_for(b.by_name("metal")) == "Metallic, hollow, resonant.");
    CHECK(caption_for(b.by_name("ceramic")) == "Ceramic, hard, glazed, bright ringing.");
    CHECK(b.hash.size() == 64);
    CHECK_THROWS_AS(b.by_name("unobtainium"), Error);
}

TEST_CASE("material bank parsing rejects invalid entries") {
    const auto base = nlohmann::json::parse(file_text(default_material_bank_path()));
    auto with = [&](auto mutate) {
        auto j = base;
        mutate(j);
        return j.dump();
    };
    CHECK_NOTHROW(parse_material_bank(base.dump()));
    CHECK_THROWS_AS(parse_material_bank("{not json"), Error);
    CHECK_THROWS_AS(parse_material_bank(with([](auto& j) { j["materials"][0]["modes"][0]["frequency_hz"] = 9000.0; })),
                    Error);
    CHECK_THROWS_AS(parse_material_bank(with([](auto& j) { j["materials"][0]["modes"][0]["damping_per_s"] = 0.0; })),
                    Error);
    CHECK_THROWS_AS(parse_material_bank(with([](auto& j) { j["materials"][0]["modes"] = nlohmann::json::array(); })),
                    Error);
    CHECK_THROWS_AS(
        parse_material_bank(with([](auto& j) { j["materials"][1]["caption_template"] = j["materials"][0]["caption_template"]; })),
        Error);
    CHECK_THROWS_AS(load_material_bank("/nonexistent/bank.json"), Error);
}

TEST_CASE("codec error is small against material separation") {
    std::vector<Matrix> originals;
    std::vector<Matrix> mels;
    const Vec3d p(0.1, 0.2, -0.1);
    for (const auto& m : bank().materials) {
        mels.push_back(audio::log_mel(synth_impact(m, p, 1).waveform));
    }
    const auto stats = audio::compute_norm_stats(mels);
    std::vector<Matrix> latents;
    double round_trip = 0.0;
    for (const auto& m : bank().materials) {
        const auto x = synth_impact(m, p, 1).waveform;
        const auto z = audio::encode_mel(x, stats);
        const auto z2 = audio::encode_mel(audio::decode_mel(z), stats);
        round_trip += audio::mel_distance(z.values, z2.values);
        latents.push_back(z.values);
    }
    round_trip /= static_cast<double>(latents.size());
    double between = 0.0;
    int pairs = 0;
    for (size_t i = 0; i < latents.size(); ++i) {
        for (size_t j = i + 1; j < latents.size(); ++j) {
            between += audio::mel_distance(latents[i], latents[j]);
            ++pairs;
        }
    }
    between /= pairs;
    CHECK(round_trip < 0.15 * between);
}

TEST_CASE("split rule assigns the last objects to test and val") {
    DatasetConfig c;
    CHECK(split_for_object(c, 0) == Split::train);
    CHECK(split_for_object(c, 1) == Split::train);
    CHECK(split_for_object(c, 2) == Split::val);
    CHECK(split_for_object(c, 3) == Split::test);
    CHECK(split_from_string(to_string(Split::val)) == Split::val);
    CHECK_THROWS_AS(split_from_string("holdout"), Error);
}

TEST_CASE("dataset generation") {
    TempDir dir("dataset");
    DatasetConfig c;
    c.impacts_per_object = 2;
    c.splats_per_object = 16;
    const auto m = generate_dataset(c, bank(), 3, dir.path() / "a");
    CHECK(m.objects.size() == 32);
    CHECK(m.records.size() == 64);
    CHECK(m.material_bank_hash == bank().hash);
    std::map<std::string, Split> split_of;
    for (const auto& o : m.objects) {
        CHECK(std::filesystem::exists(m.resolve(o.cloud_path)));
        CHECK(std::filesystem::exists(m.resolve(o.mesh_path)));
        split_of[o.object_id] = o.split;
    }
    CHECK(split_of.size() == 32);
    std::set<std::string> record_paths;
    for (const auto& r : m.records) {
        CHECK(std::filesystem::exists(m.resolve(r.path)));
        record_paths.insert(r.path);
        CHECK(r.split == split_of.at(r.object_id));
        CHECK(r.caption == caption_for(bank().by_name(r.material_name)));
        CHECK(r.position.cwiseAbs().maxCoeff() <= 0.5 + 1e-6);
        const auto wav = audio::read_wav(m.resolve(r.path));
        CHECK(wav.samples.size() == static_cast<size_t>(kImpactSamples));
        CHECK(wav.sample_rate == kImpactSampleRate);
    }
    CHECK(record_paths.size() == m.records.size());
    CHECK(m.objects_in(Split::test).size() == 8);
    CHECK(m.objects_in(Split::val).size() == 8);
    CHECK(m.objects_in(Split::train).size() == 16);

    const auto loaded = load_manifest(dir.path() / "a" / "manifest.json");
    CHECK(loaded.records.size() == m.records.size());
    CHECK(loaded.generator_seed == 3);
    CHECK((loaded.records[5].position - m.records[5].position).norm() < 1e-12);

    SUBCASE("same seed gives identical files") {
        DatasetConfig small;
        small.materials = 2;
        small.objects_per_material = 2;
        small.impacts_per_object = 3;
        small.splats_per_object = 32;
        const auto x = generate_dataset(small, bank(), 8, dir.path() / "x");
        const auto y = generate_dataset(small, bank(), 8, dir.path() / "y");
        CHECK(file_text(dir.path() / "x" / "manifest.json") == file_text(dir.path() / "y" / "manifest.json"));
        for (const auto& r : x.records) {
            CHECK(file_text(x.resolve(r.path)) == file_text(y.resolve(r.path)));
        }
        for (const auto& o : x.objects) {
            CHECK(file_text(x.resolve(o.cloud_path)) == file_text(y.resolve(o.cloud_path)));
        }
    }
    SUBCASE("one impact per object") {
        DatasetConfig one;
        one.materials = 3;
        one.objects_per_material = 2;
        one.impacts_per_object = 1;
        one.splats_per_object = 8;
        const auto d = generate_dataset(one, bank(), 1, dir.path() / "one");
        std::map<std::string, int> per_object;
        for (const auto& r : d.records) per_object[r.object_id]++;
        CHECK(per_object.size() == 6);
        for (const auto& [id, n] : per_object) CHECK(n == 1);
    }
}
