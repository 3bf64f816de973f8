#include "sonicgauss/oracle/modal.hpp"

#include "sonicgauss/common/error.hpp"
#include "sonicgauss/common/hash.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace sonicgauss::oracle {

using nlohmann::json;

void ModalMaterial::validate() const {
    if (modes.empty()) {
        throw Error("invalid_material", "material " + name + " has no modes", "modes");
    }
    for (const auto& m : modes) {
        if (!(m.frequency_hz >= 120.0 && m.frequency_hz <= 6000.0)) {
            throw Error("invalid_material", "material " + name + ": frequency outside [120, 6000] Hz",
                        "frequency_hz");
        }
        if (!(m.damping_per_s > 0.0)) {
            throw Error("invalid_material", "material " + name + ": damping must be positive", "damping_per_s");
        }
        if (!(m.base_gain > 0.0 && m.base_gain <= 1.0)) {
            throw Error("invalid_material", "material " + name + ": base gain outside (0, 1]", "base_gain");
        }
        if (std::abs(m.gain_direction.norm() - 1.0) > 1e-6) {
            throw Error("invalid_material", "material " + name + ": gain direction is not unit length",
                        "gain_direction");
        }
    }
}

const ModalMaterial& MaterialBank::by_name(const std::string& name) const {
    return materials.at(static_cast<size_t>(index_of(name)));
}

int MaterialBank::index_of(const std::string& name) const {
    for (size_t i = 0; i < materials.size(); ++i) {
        if (materials[i].name == name) {
            return static_cast<int>(i);
        }
    }
    throw Error("unknown_material", "material not in bank: " + name, "material_name");
}

namespace {

Vec3d vec3(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

}  // namespace

MaterialBank parse_material_bank(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw Error("malformed_bank", std::string("material bank is not valid JSON: ") + e.what(), "bank");
    }
    MaterialBank bank;
    try {
        for (const auto& jm : doc.at("materials")) {
            ModalMaterial m;
            m.name = jm.at("name").get<std::string>();
            m.caption_template = jm.at("caption_template").get<std::string>();
            m.albedo = vec3(jm.at("albedo"));
            for (const auto& jk : jm.at("modes")) {
                Mode mode;
                mode.frequency_hz = jk.at("frequency_hz").get<double>();
                mode.damping_per_s = jk.at("damping_per_s").get<double>();
                mode.base_gain = jk.at("base_gain").get<double>();
                mode.gain_direction = vec3(jk.at("gain_direction"));
                mode.gain_phase = jk.at("gain_phase").get<double>();
                m.modes.push_back(mode);
            }
            m.validate();
            bank.materials.push_back(std::move(m));
        }
    } catch (const json::exception& e) {
        throw Error("malformed_bank", std::string("material bank field error: ") + e.what(), "bank");
    }
    if (bank.materials.empty()) {
        throw Error("malformed_bank", "material bank is empty", "materials");
    }
    for (size_t i = 0; i < bank.materials.size(); ++i) {
        for (size_t j = i + 1; j < bank.materials.size(); ++j) {
            if (bank.materials[i].name == bank.materials[j].name ||
                bank.materials[i].caption_template == bank.materials[j].caption_template) {
                throw Error("malformed_bank", "material names and captions must be unique", "materials");
            }
        }
    }
    bank.hash = sha256_hex(doc.dump());
    return bank;
}

MaterialBank load_material_bank(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("missing_file", "cannot open material bank " + path.string(), "path");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_material_bank(ss.str());
}

std::filesystem::path default_material_bank_path() {
    if (const char* env = std::getenv("SONICGAUSS_ASSET_DIR")) {
        return std::filesystem::path(env) / "material_bank.json";
    }
    return std::filesystem::path(SONICGAUSS_ASSET_DIR) / "material_bank.json";
}

Eigen::VectorXd mode_gains(const ModalMaterial& material, const Vec3d& p) {
    Eigen::VectorXd g(static_cast<Eigen::Index>(material.modes.size()));
    for (size_t k = 0; k < material.modes.size(); ++k) {
        const Mode& m = material.modes[k];
        const double s = std::sin(std::numbers::pi * m.gain_direction.dot(p) + m.gain_phase);
        g(static_cast<Eigen::Index>(k)) = m.base_gain * (kGainFloor + (1.0 - kGainFloor) * std::abs(s));
    }
    return g;
}

std::vector<double> modal_response(const ModalMaterial& material, const Vec3d& p) {
    const Eigen::VectorXd gains = mode_gains(material, p);
    std::vector<double> y(kImpactSamples, 0.0);
    for (size_t k = 0; k < material.modes.size(); ++k) {
        const Mode& m = material.modes[k];
        const double w = 2.0 * std::numbers::pi * m.frequency_hz;
        for (int i = 0; i < kImpactSamples; ++i) {
            const double t = static_cast<double>(i) / kImpactSampleRate;
            y[static_cast<size_t>(i)] += gains(static_cast<Eigen::Index>(k)) * std::exp(-m.damping_per_s * t) *
                                         std::sin(w * t);
        }
    }
    return y;
}

ImpactSample synth_impact(const ModalMaterial& material, const Vec3d& p, std::uint64_t seed) {
    std::vector<double> y = modal_response(material, p);
    double peak = 0.0;
    for (double v : y) {
        peak = std::max(peak, std::abs(v));
    }
    const double g = peak > 0.0 ? kPeakLevel / peak : 0.0;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < kTransientSamples; ++i) {
        const double fade = 1.0 - static_cast<double>(i) / kTransientSamples;
        const double n = std::clamp(normal(rng), -1.0, 1.0);
        y[static_cast<size_t>(i)] = y[static_cast<size_t>(i)] * g + kTransientAmplitude * fade * n;
    }
    for (size_t i = kTransientSamples; i < y.size(); ++i) {
        y[i] *= g;
    }
    ImpactSample s;
    s.position = p;
    s.material_name = material.name;
    s.caption = material.caption_template;
    s.waveform.assign(y.begin(), y.end());
    return s;
}

const std::string& caption_for(const ModalMaterial& material) { return material.caption_template; }

}  // namespace sonicgauss::oracle
