// Command-line entry points for data generation, training, synthesis,
// evaluation and the HTTP service.

#include "sonicgauss/audio/codec.hpp"
#include "sonicgauss/audio/wav.hpp"
#include "sonicgauss/common/error.hpp"
#include "sonicgauss/metrics/embedder.hpp"
#include "sonicgauss/oracle/dataset.hpp"
#include "sonicgauss/oracle/modal.hpp"
#include "sonicgauss/pipeline/evaluate.hpp"
#include "sonicgauss/pipeline/train.hpp"
#include "sonicgauss/serve/service.hpp"

#include "CLI11.hpp"

#include <csignal>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace sonicgauss;

namespace {

void log_line(const std::string& msg) { std::cerr << msg << std::endl; }

oracle::MaterialBank bank_from(const std::string& path) {
    return oracle::load_material_bank(path.empty() ? oracle::default_material_bank_path() : fs::path(path));
}

// Manifest for a checkpoint: explicit flag first, then the training config.
fs::path manifest_for(const std::string& flag, const pipeline::Model& model) {
    if (!flag.empty()) {
        return flag;
    }
    if (model.config.dataset.empty()) {
        throw Error("invalid_argument", "no --dataset given and the checkpoint names none", "dataset");
    }
    return model.config.dataset;
}

pipeline::Model load_model(const std::string& flag) {
    const fs::path path = serve::checkpoint_path(flag);
    if (path.empty()) {
        throw Error("invalid_argument", "no checkpoint: pass --checkpoint or set SONICGAUSS_CHECKPOINT", "checkpoint");
    }
    return pipeline::load_checkpoint(path).model;
}

serve::HttpServer* g_server = nullptr;

void on_signal(int /*sig*/) {
    if (g_server != nullptr) {
        g_server->stop();
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sonicgauss: position-aware impact sound synthesis from Gaussian splats"};
    app.require_subcommand(1);

    // gen-data
    auto* gen_data = app.add_subcommand("gen-data", "Generate the oracle dataset");
    std::string gd_out;
    std::string gd_bank;
    std::uint64_t gd_seed = 0;
    oracle::DatasetConfig gd_config;
    gen_data->add_option("--out", gd_out, "Output directory")->required();
    gen_data->add_option("--seed", gd_seed, "Generator seed");
    gen_data->add_option("--bank", gd_bank, "Material bank JSON");
    gen_data->add_option("--materials", gd_config.materials)->check(CLI::Range(1, 64));
    gen_data->add_option("--objects-per-material", gd_config.objects_per_material)->check(CLI::Range(1, 1000));
    gen_data->add_option("--impacts-per-object", gd_config.impacts_per_object)->check(CLI::Range(1, 100000));
    gen_data->add_option("--splats", gd_config.splats_per_object, "Splats per object")->check(CLI::Range(1, 10000000));

    // preprocess
    auto* preprocess = app.add_subcommand("preprocess", "Cache log-mels and write orbit poses");
    std::string pp_dataset;
    double pp_distance = 2.0;
    preprocess->add_option("--dataset", pp_dataset, "manifest.json")->required();
    preprocess->add_option("--orbit-distance", pp_distance)->check(CLI::PositiveNumber);

    // train
    auto* train = app.add_subcommand("train", "Run one training stage");
    std::string tr_stage;
    std::string tr_config;
    std::string tr_dataset;
    std::string tr_in;
    std::string tr_out;
    std::string tr_resume;
    int tr_stop = 0;
    train->add_option("--stage", tr_stage, "1 | 2a | 2b | 3")->required()->check(CLI::IsMember({"1", "2a", "2b", "3"}));
    train->add_option("--config", tr_config, "Run config JSON");
    train->add_option("--dataset", tr_dataset, "manifest.json (overrides the config)");
    train->add_option("--checkpoint-in", tr_in, "Predecessor stage checkpoint");
    train->add_option("--out", tr_out, "Output checkpoint")->required();
    train->add_option("--resume", tr_resume, "Same-stage checkpoint to continue");
    train->add_option("--stop-after-epoch", tr_stop)->check(CLI::PositiveNumber);

    // synth
    auto* synth = app.add_subcommand("synth", "Synthesize one impact sound");
    std::string sy_checkpoint;
    std::string sy_dataset;
    std::string sy_object;
    std::vector<double> sy_position;
    std::string sy_out;
    int sy_steps = serve::kDefaultSteps;
    std::uint64_t sy_seed = serve::kDefaultSeed;
    synth->add_option("--checkpoint", sy_checkpoint, "Model checkpoint (SONICGAUSS_CHECKPOINT overrides)");
    synth->add_option("--dataset", sy_dataset, "manifest.json (default: from the checkpoint)");
    synth->add_option("--object", sy_object)->required();
    synth->add_option("--position", sy_position, "x,y,z")->required()->delimiter(',')->expected(3);
    synth->add_option("--out", sy_out)->required();
    synth->add_option("--steps", sy_steps)->check(CLI::Range(1, serve::kMaxSteps));
    synth->add_option("--seed", sy_seed);

    // generate
    auto* generate = app.add_subcommand("generate", "Synthesize held-out test impacts for evaluation");
    std::string ge_checkpoint;
    std::string ge_dataset;
    std::string ge_out;
    int ge_per_object = 8;
    int ge_steps = serve::kDefaultSteps;
    std::uint64_t ge_seed = 0;
    generate->add_option("--checkpoint", ge_checkpoint);
    generate->add_option("--dataset", ge_dataset);
    generate->add_option("--out", ge_out, "Directory for gen/, ref/ and index.json")->required();
    generate->add_option("--per-object", ge_per_object)->check(CLI::PositiveNumber);
    generate->add_option("--steps", ge_steps)->check(CLI::Range(1, serve::kMaxSteps));
    generate->add_option("--seed", ge_seed);

    // eval
    auto* eval = app.add_subcommand("eval", "Compute metrics over generated audio");
    std::string ev_metrics;
    std::string ev_gen;
    std::string ev_ref;
    std::string ev_index;
    std::string ev_embedder;
    std::string ev_bank;
    std::string ev_out;
    eval->add_option("--metrics", ev_metrics, "Comma list of fad,kl,is,pos")->required();
    eval->add_option("--gen", ev_gen, "Directory of generated WAVs")->required();
    eval->add_option("--ref", ev_ref, "Directory of reference WAVs (paired by name)");
    eval->add_option("--index", ev_index, "index.json with material and positions (pos)");
    eval->add_option("--embedder", ev_embedder, "Audio embedder checkpoint");
    eval->add_option("--bank", ev_bank, "Material bank JSON");
    eval->add_option("--out", ev_out, "Also write the JSON report here");

    // serve
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP inference service");
    std::string sv_checkpoint;
    std::string sv_dataset;
    std::string sv_host = "127.0.0.1";
    int sv_port = 8080;
    serve_cmd->add_option("--checkpoint", sv_checkpoint);
    serve_cmd->add_option("--dataset", sv_dataset);
    serve_cmd->add_option("--host", sv_host);
    serve_cmd->add_option("--port", sv_port)->check(CLI::Range(0, 65535));

    // train-embedder
    auto* train_emb = app.add_subcommand("train-embedder", "Train the metric audio embedder");
    std::string te_dataset;
    std::string te_out;
    metrics::EmbedderTrainOptions te_options;
    train_emb->add_option("--dataset", te_dataset)->required();
    train_emb->add_option("--out", te_out)->required();
    train_emb->add_option("--epochs", te_options.epochs)->check(CLI::PositiveNumber);
    train_emb->add_option("--seed", te_options.seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << std::flush;
        return 2;
    }

    try {
        if (gen_data->parsed()) {
            const auto manifest = oracle::generate_dataset(gd_config, bank_from(gd_bank), gd_seed, gd_out);
            std::cout << (fs::path(gd_out) / "manifest.json").string() << " (" << manifest.objects.size()
                      << " objects, " << manifest.records.size() << " records)\n";
        } else if (preprocess->parsed()) {
            pipeline::preprocess_dataset(pp_dataset, pp_distance);
        } else if (train->parsed()) {
            auto config = tr_config.empty() ? pipeline::RunConfig{} : pipeline::RunConfig::load(tr_config);
            config.stage = tr_stage;
            if (!tr_dataset.empty()) {
                config.dataset = tr_dataset;
            }
            if (config.dataset.empty()) {
                throw Error("invalid_argument", "no dataset: pass --dataset or set it in the config", "dataset");
            }
            config.validate();
            const auto data = pipeline::prepare_data(config.dataset);
            pipeline::TrainOptions options;
            options.log = log_line;
            if (tr_stop > 0) {
                options.stop_after_epoch = tr_stop;
            }
            if (!tr_resume.empty()) {
                options.resume = tr_resume;
            }
            std::optional<fs::path> predecessor;
            if (!tr_in.empty()) {
                predecessor = tr_in;
            }
            pipeline::train_stage(config, data, predecessor, tr_out, options);
        } else if (synth->parsed()) {
            auto model = load_model(sy_checkpoint);
            const fs::path manifest = manifest_for(sy_dataset, model);
            const serve::Service service(std::move(model), serve::Catalog::from_manifest(manifest));
            serve::SynthesisRequest request;
            request.object_id = sy_object;
            request.position = {sy_position[0], sy_position[1], sy_position[2]};
            request.steps = sy_steps;
            request.seed = sy_seed;
            const auto response = service.synthesize(request);
            std::ofstream out(sy_out, std::ios::binary);
            if (!out) {
                throw Error("unwritable_path", "cannot write " + sy_out, "out");
            }
            out.write(response.wav.data(), static_cast<std::streamsize>(response.wav.size()));
            if (!out) {
                throw Error("unwritable_path", "cannot write " + sy_out, "out");
            }
            if (response.position_unused) {
                log_line("note: stage2b checkpoint, position ignored");
            }
        } else if (generate->parsed()) {
            const auto model = load_model(ge_checkpoint);
            const auto data = pipeline::prepare_data(manifest_for(ge_dataset, model));
            const auto set = pipeline::generate_held_out(model, data, ge_per_object, ge_steps, ge_seed);
            pipeline::write_held_out(set, data, ge_out);
            std::cout << set.impacts.size() << " impacts written to " << ge_out << "\n";
        } else if (eval->parsed()) {
            pipeline::EvalInputs inputs;
            inputs.metrics = pipeline::parse_metric_list(ev_metrics);
            inputs.gen_dir = ev_gen;
            if (!ev_ref.empty()) {
                inputs.ref_dir = ev_ref;
            }
            if (!ev_index.empty()) {
                inputs.index = ev_index;
            }
            std::optional<metrics::AudioEmbedder> embedder;
            if (inputs.metrics.contains("fad") || inputs.metrics.contains("is")) {
                embedder = metrics::AudioEmbedder::load(ev_embedder.empty() ? metrics::default_embedder_path()
                                                                            : fs::path(ev_embedder));
            }
            std::optional<oracle::MaterialBank> bank;
            if (inputs.metrics.contains("pos")) {
                bank = bank_from(ev_bank);
            }
            const auto report = pipeline::evaluate(inputs, embedder ? &*embedder : nullptr, bank ? &*bank : nullptr)
                                    .to_json();
            std::cout << report.dump(2) << "\n";
            if (!ev_out.empty()) {
                std::ofstream out(ev_out);
                out << report.dump(2) << "\n";
                if (!out) {
                    throw Error("unwritable_path", "cannot write " + ev_out, "out");
                }
            }
        } else if (serve_cmd->parsed()) {
            auto model = load_model(sv_checkpoint);
            const fs::path manifest = manifest_for(sv_dataset, model);
            auto service = std::make_shared<const serve::Service>(std::move(model), serve::Catalog::from_manifest(manifest));
            serve::HttpServer server(service);
            const int port = server.bind(sv_host, sv_port);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cout << "listening on http://" << sv_host << ":" << port << std::endl;
            server.listen();
            g_server = nullptr;
        } else if (train_emb->parsed()) {
            const auto result = metrics::train_embedder(oracle::load_manifest(te_dataset), te_options, log_line);
            result.model.save(te_out);
            std::cout << "train_acc " << result.train_accuracy << " val_acc " << result.val_accuracy << "\n";
        }
    } catch (const Error& e) {
        std::cerr << "error [" << e.code() << "]" << (e.field().empty() ? "" : " (" + e.field() + ")") << ": "
                  << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
