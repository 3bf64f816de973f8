#include "sonicgauss/pipeline/config.hpp"

#include "sonicgauss/common/error.hpp"

#include <fstream>

namespace sonicgauss::pipeline {

using nlohmann::json;

bool valid_stage(const std::string& stage) {
    return stage == "1" || stage == "2a" || stage == "2b" || stage == "3";
}

std::string predecessor_stage(const std::string& stage) {
    if (stage == "2a") return "1";
    if (stage == "2b") return "2a";
    if (stage == "3") return "2b";
    return {};
}

encoders::EncoderConfig RunConfig::encoder_config() const {
    encoders::EncoderConfig c;
    c.d_joint = d_joint;
    c.heads = heads;
    c.mlp_ratio = encoder_mlp_ratio;
    c.gaussian_stages = gaussian_stages;
    c.gaussian_window = gaussian_window;
    c.gaussian_merge_stride = gaussian_merge_stride;
    c.gaussian_max_tokens = gaussian_max_tokens;
    c.text_blocks = text_blocks;
    c.text_max_len = text_max_len;
    c.position_hidden1 = position_hidden1;
    c.position_hidden2 = position_hidden2;
    return c;
}

flow::VelocityConfig RunConfig::velocity_config() const {
    flow::VelocityConfig c;
    c.frames = frames;
    c.bins = bins;
    c.d_model = d_model;
    c.blocks = velocity_blocks;
    c.heads = heads;
    c.mlp_ratio = velocity_mlp_ratio;
    c.cond_dim = d_joint;
    return c;
}

void RunConfig::validate() const {
    if (!valid_stage(stage)) {
        throw Error("invalid_config", "stage must be one of 1, 2a, 2b, 3", "stage");
    }
    if (epochs < 1) {
        throw Error("invalid_config", "epochs must be >= 1", "epochs");
    }
    if (batch_size < 1) {
        throw Error("invalid_config", "batch_size must be >= 1", "batch_size");
    }
    if (batch_size_2a < 2) {
        throw Error("invalid_config", "stage 2a batch must hold at least 2 pairs", "batch_size_2a");
    }
    if (!(lr > 0.0)) {
        throw Error("invalid_config", "lr must be positive", "lr");
    }
    if (val_max_records < 1) {
        throw Error("invalid_config", "val_max_records must be >= 1", "val_max_records");
    }
    (void)fusion();
    encoder_config().validate();
    velocity_config().validate();
}

json RunConfig::to_json() const {
    return json{{"stage", stage},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"batch_size_2a", batch_size_2a},
                {"lr", lr},
                {"weight_decay", weight_decay},
                {"warmup_fraction", warmup_fraction},
                {"encoder_lr_scale_stage3", encoder_lr_scale_stage3},
                {"seed", seed},
                {"dataset", dataset},
                {"fusion_mode", fusion_mode},
                {"infonce", infonce},
                {"val_max_records", val_max_records},
                {"d_joint", d_joint},
                {"d_model", d_model},
                {"heads", heads},
                {"velocity_blocks", velocity_blocks},
                {"velocity_mlp_ratio", velocity_mlp_ratio},
                {"encoder_mlp_ratio", encoder_mlp_ratio},
                {"gaussian_stages", gaussian_stages},
                {"gaussian_window", gaussian_window},
                {"gaussian_merge_stride", gaussian_merge_stride},
                {"gaussian_max_tokens", gaussian_max_tokens},
                {"text_blocks", text_blocks},
                {"text_max_len", text_max_len},
                {"position_hidden1", position_hidden1},
                {"position_hidden2", position_hidden2},
                {"frames", frames},
                {"bins", bins}};
}

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c;
    const json defaults = c.to_json();
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!defaults.contains(it.key())) {
            throw Error("invalid_config", "unknown config key: " + it.key(), it.key());
        }
    }
    json merged = defaults;
    merged.update(j);
    try {
        if (merged.at("stage").is_number_integer()) {
            merged["stage"] = std::to_string(merged.at("stage").get<int>());
        }
        c.stage = merged.at("stage").get<std::string>();
        c.epochs = merged.at("epochs").get<int>();
        c.batch_size = merged.at("batch_size").get<int>();
        c.batch_size_2a = merged.at("batch_size_2a").get<int>();
        c.lr = merged.at("lr").get<double>();
        c.weight_decay = merged.at("weight_decay").get<double>();
        c.warmup_fraction = merged.at("warmup_fraction").get<double>();
        c.encoder_lr_scale_stage3 = merged.at("encoder_lr_scale_stage3").get<double>();
        c.seed = merged.at("seed").get<std::uint64_t>();
        c.dataset = merged.at("dataset").get<std::string>();
        c.fusion_mode = merged.at("fusion_mode").get<std::string>();
        c.infonce = merged.at("infonce").get<bool>();
        c.val_max_records = merged.at("val_max_records").get<int>();
        c.d_joint = merged.at("d_joint").get<int>();
        c.d_model = merged.at("d_model").get<int>();
        c.heads = merged.at("heads").get<int>();
        c.velocity_blocks = merged.at("velocity_blocks").get<int>();
        c.velocity_mlp_ratio = merged.at("velocity_mlp_ratio").get<int>();
        c.encoder_mlp_ratio = merged.at("encoder_mlp_ratio").get<int>();
        c.gaussian_stages = merged.at("gaussian_stages").get<int>();
        c.gaussian_window = merged.at("gaussian_window").get<int>();
        c.gaussian_merge_stride = merged.at("gaussian_merge_stride").get<int>();
        c.gaussian_max_tokens = merged.at("gaussian_max_tokens").get<int>();
        c.text_blocks = merged.at("text_blocks").get<int>();
        c.text_max_len = merged.at("text_max_len").get<int>();
        c.position_hidden1 = merged.at("position_hidden1").get<int>();
        c.position_hidden2 = merged.at("position_hidden2").get<int>();
        c.frames = merged.at("frames").get<int>();
        c.bins = merged.at("bins").get<int>();
    } catch (const json::exception& e) {
        throw Error("invalid_config", std::string("config value has the wrong type: ") + e.what(), "config");
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("missing_file", "cannot open config " + path.string(), "config");
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error("invalid_config", std::string("config is not valid JSON: ") + e.what(), "config");
    }
    return from_json(j);
}

}  // namespace sonicgauss::pipeline
