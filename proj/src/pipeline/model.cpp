#include "sonicgauss/pipeline/model.hpp"

#include "sonicgauss/common/archive.hpp"
#include "sonicgauss/common/error.hpp"
#include "sonicgauss/common/seed.hpp"

#include <fstream>
#include <iomanip>

namespace sonicgauss::pipeline {

using nlohmann::json;

namespace {

// Each module draws from its own stream so adding one never shifts another.
nn::Rng module_rng(std::uint64_t seed, std::uint64_t module) { return nn::Rng(derive_seed(seed, {0x30DE1ULL, module})); }

encoders::TextEncoder make_text(const RunConfig& c, encoders::Vocabulary vocab) {
    auto rng = module_rng(c.seed, 1);
    return {c.encoder_config(), std::move(vocab), rng};
}
encoders::GaussianEncoder make_gauss(const RunConfig& c) {
    auto rng = module_rng(c.seed, 2);
    return {c.encoder_config(), rng};
}
encoders::PositionEncoder make_position(const RunConfig& c) {
    auto rng = module_rng(c.seed, 3);
    return {c.encoder_config(), rng};
}
flow::Fusion make_fusion(const RunConfig& c) {
    auto rng = module_rng(c.seed, 4);
    return {c.d_joint, c.heads, c.fusion(), rng};
}
flow::VelocityNet make_velocity(const RunConfig& c) {
    auto rng = module_rng(c.seed, 5);
    return {c.velocity_config(), rng};
}

}  // namespace

Model::Model(const RunConfig& cfg, encoders::Vocabulary vocab, audio::MelNormStats mel_stats)
    : config(cfg),
      stats(mel_stats),
      fusion_mode(cfg.fusion()),
      text(make_text(cfg, std::move(vocab))),
      gauss(make_gauss(cfg)),
      position(make_position(cfg)),
      fusion(make_fusion(cfg)),
      velocity(make_velocity(cfg)),
      tau(nn::Tensor::parameter(nn::Matrix::Constant(1, 1, flow::kTauInit))) {}

void Model::set_fusion_mode(flow::FusionMode mode) {
    fusion.set_mode(mode);
    fusion_mode = mode;
}

nn::ParameterList Model::text_parameters() const {
    nn::ParameterList p;
    text.collect("text", p);
    return p;
}

nn::ParameterList Model::gaussian_parameters() const {
    nn::ParameterList p;
    gauss.collect("gauss", p);
    return p;
}

nn::ParameterList Model::position_parameters() const {
    nn::ParameterList p;
    position.collect("position", p);
    return p;
}

nn::ParameterList Model::fusion_parameters() const {
    nn::ParameterList p;
    fusion.collect("fusion", p);
    return p;
}

nn::ParameterList Model::velocity_parameters() const {
    nn::ParameterList p;
    velocity.collect("velocity", p);
    return p;
}

nn::ParameterList Model::all_parameters() const {
    nn::ParameterList p = text_parameters();
    gauss.collect("gauss", p);
    position.collect("position", p);
    // Attention weights are stored whatever the mode so a checkpoint can be
    // re-wired between fusion arms.
    fusion.attn.collect("fusion.attn", p);
    velocity.collect("velocity", p);
    p.emplace_back("tau", tau);
    return p;
}

encoders::FeatureTokens Model::text_condition(const std::string& caption) const { return text(caption); }

encoders::FeatureTokens Model::gaussian_condition(const nn::Matrix& serialized_splats) const {
    return gauss.encode_features(serialized_splats);
}

encoders::FeatureTokens Model::fused_condition(const nn::Matrix& serialized_splats,
                                               const Eigen::Vector3d& p) const {
    return fusion(gauss.encode_features(serialized_splats), position(p));
}

std::string stage_tag(const std::string& stage) { return stage.empty() ? std::string{} : "stage" + stage; }

void save_checkpoint(const Model& model, const TrainingState& state, const std::filesystem::path& path) {
    Archive a;
    a.header["kind"] = "sonicgauss_model";
    a.header["stage"] = model.stage;
    a.header["config"] = model.config.to_json();
    a.header["vocab"] = model.text.vocabulary().words();
    a.header["norm_mean"] = model.stats.mean;
    a.header["norm_std"] = model.stats.stddev;
    a.header["fusion_mode"] = flow::to_string(model.fusion_mode);
    a.header["epochs_completed"] = state.epochs_completed;
    a.header["optimizer_steps"] = state.optimizer_steps;
    if (state.initial_val_loss) {
        a.header["initial_val_loss"] = *state.initial_val_loss;
    }
    json log = json::array();
    for (const auto& r : state.loss_log) {
        log.push_back({r.epoch, r.split, r.loss, r.lr, r.tau});
    }
    a.header["loss_log"] = log;
    nn::export_parameters(model.all_parameters(), a.tensors);
    for (const auto& [name, mv] : state.optimizer_moments) {
        a.tensors["adam_m/" + name] = mv.first;
        a.tensors["adam_v/" + name] = mv.second;
    }
    save_archive(a, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    Archive a = load_archive(path);
    if (a.header.value("kind", "") != "sonicgauss_model") {
        throw Error("malformed_checkpoint", "not a model checkpoint: " + path.string(), "checkpoint");
    }
    try {
        RunConfig config = RunConfig::from_json(a.header.at("config"));
        auto vocab = encoders::Vocabulary::from_words(a.header.at("vocab").get<std::vector<std::string>>());
        audio::MelNormStats stats{a.header.at("norm_mean").get<double>(), a.header.at("norm_std").get<double>()};
        Checkpoint ck{Model(config, std::move(vocab), stats), {}};
        ck.model.stage = a.header.at("stage").get<std::string>();
        ck.model.set_fusion_mode(flow::fusion_from_string(a.header.at("fusion_mode").get<std::string>()));
        nn::import_parameters(ck.model.all_parameters(), a.tensors);
        ck.state.epochs_completed = a.header.at("epochs_completed").get<int>();
        ck.state.optimizer_steps = a.header.at("optimizer_steps").get<long>();
        if (a.header.contains("initial_val_loss")) {
            ck.state.initial_val_loss = a.header.at("initial_val_loss").get<double>();
        }
        for (const auto& r : a.header.at("loss_log")) {
            ck.state.loss_log.push_back({r.at(0).get<int>(), r.at(1).get<std::string>(), r.at(2).get<double>(),
                                         r.at(3).get<double>(), r.at(4).get<double>()});
        }
        for (const auto& [name, m] : a.tensors) {
            if (name.rfind("adam_m/", 0) == 0) {
                const std::string key = name.substr(7);
                auto v = a.tensors.find("adam_v/" + key);
                if (v == a.tensors.end()) {
                    throw Error("malformed_checkpoint", "optimizer state incomplete for " + key, key);
                }
                ck.state.optimizer_moments.emplace(key, std::make_pair(m, v->second));
            }
        }
        return ck;
    } catch (const json::exception& e) {
        throw Error("malformed_checkpoint", std::string("checkpoint header error: ") + e.what(), "checkpoint");
    }
}

void write_loss_csv(const std::vector<LossRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw Error("unwritable_path", "cannot write " + path.string(), "path");
    }
    out << "epoch,split,loss,lr,tau\n" << std::setprecision(10);
    for (const auto& r : rows) {
        out << r.epoch << ',' << r.split << ',' << r.loss << ',' << r.lr << ',' << r.tau << '\n';
    }
}

}  // namespace sonicgauss::pipeline
