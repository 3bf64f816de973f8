#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sonicgauss::oracle {

using Vec3d = Eigen::Vector3d;

struct Mode {
    double frequency_hz = 440.0;
    double damping_per_s = 5.0;
    double base_gain = 1.0;
    Vec3d gain_direction = Vec3d::UnitX();
    double gain_phase = 0.0;
};

struct ModalMaterial {
    std::string name;
    std::vector<Mode> modes;
    std::string caption_template;
    Vec3d albedo = Vec3d::Constant(0.5);  // surface color given to the object's texture

    // Throws on an empty mode list, out-of-range frequency, non-positive
    // damping, gain outside (0, 1] or a non-unit direction.
    void validate() const;
};

struct MaterialBank {
    std::vector<ModalMaterial> materials;
    std::string hash;  // SHA-256 of the canonical JSON

    [[nodiscard]] const ModalMaterial& by_name(const std::string& name) const;
    [[nodiscard]] int index_of(const std::string& name) const;
};

MaterialBank load_material_bank(const std::filesystem::path& path);
MaterialBank parse_material_bank(const std::string& json_text);
// The checked-in bank under the asset directory.
std::filesystem::path default_material_bank_path();

inline constexpr int kImpactSampleRate = 16000;
inline constexpr int kImpactSamples = 48000;
inline constexpr int kTransientSamples = 80;  // 5 ms
inline constexpr double kTransientAmplitude = 0.01;
inline constexpr double kPeakLevel = 0.9;
inline constexpr double kGainFloor = 0.2;

struct ImpactSample {
    std::string object_id;
    Vec3d position = Vec3d::Zero();
    std::vector<float> waveform;
    std::optional<std::string> caption;
    std::string material_name;
};

// gain_k = base_k * (0.2 + 0.8 |sin(pi w_k.p + phi_k)|)
Eigen::VectorXd mode_gains(const ModalMaterial& material, const Vec3d& p);

// Sum of damped sinusoids before normalization and transient.
std::vector<double> modal_response(const ModalMaterial& material, const Vec3d& p);

// Peak-normalized modal response plus a seeded onset noise burst.
ImpactSample synth_impact(const ModalMaterial& material, const Vec3d& p, std::uint64_t seed);

const std::string& caption_for(const ModalMaterial& material);

}  // namespace sonicgauss::oracle
