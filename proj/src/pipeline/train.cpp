#include "sonicgauss/pipeline/train.hpp"

#include "sonicgauss/audio/wav.hpp"
#include "sonicgauss/common/archive.hpp"
#include "sonicgauss/common/error.hpp"
#include "sonicgauss/common/seed.hpp"
#include "sonicgauss/metrics/metrics.hpp"
#include "sonicgauss/splat/cloud_io.hpp"
#include "sonicgauss/splat/orbit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace sonicgauss::pipeline {

using nn::Matrix;
using nn::Tensor;
using oracle::DatasetRecord;
using oracle::Split;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kValStream = 0x7A1ULL;

std::uint64_t stage_code(const std::string& stage) {
    if (stage == "1") return 1;
    if (stage == "2a") return 2;
    if (stage == "2b") return 3;
    return 4;
}

void say(const TrainOptions& o, const std::string& msg) {
    if (o.log) {
        o.log(msg);
    }
}

const fs::path kCacheName = "preprocessed.sgck";

Matrix decode_record(const oracle::DatasetManifest& m, const DatasetRecord& r) {
    const auto wav = audio::read_wav(m.resolve(r.path));
    return audio::log_mel(audio::standardize(wav.samples, wav.sample_rate));
}

}  // namespace

Matrix PreparedData::latent(const DatasetRecord& r, const audio::MelNormStats& s) const {
    auto it = log_mels.find(r.path);
    if (it == log_mels.end()) {
        throw Error("invalid_dataset", "record not decoded: " + r.path, "records");
    }
    return audio::normalize_log_mel(it->second, s).values;
}

const Matrix& PreparedData::object_splats(const std::string& object_id) const {
    auto it = splats.find(object_id);
    if (it == splats.end()) {
        throw Error("unknown_object", "object not in dataset: " + object_id, "object_id");
    }
    return it->second;
}

PreparedData prepare_data(const fs::path& manifest_path) {
    PreparedData d;
    d.manifest = oracle::load_manifest(manifest_path);
    const fs::path cache = d.manifest.root / kCacheName;
    bool cached = false;
    if (fs::exists(cache)) {
        const Archive a = load_archive(cache);
        if (a.header.value("generator_seed", std::uint64_t{0}) == d.manifest.generator_seed &&
            a.header.value("material_bank_hash", std::string{}) == d.manifest.material_bank_hash &&
            a.header.value("records", std::size_t{0}) == d.manifest.records.size()) {
            cached = true;
            for (const auto& r : d.manifest.records) {
                auto it = a.tensors.find("mel/" + r.path);
                if (it == a.tensors.end()) {
                    cached = false;
                    break;
                }
                d.log_mels[r.path] = it->second;
            }
        }
    }
    if (!cached) {
        d.log_mels.clear();
        for (const auto& r : d.manifest.records) {
            d.log_mels[r.path] = decode_record(d.manifest, r);
        }
    }
    for (const auto& o : d.manifest.objects) {
        d.splats[o.object_id] = encoders::serialize_splats(splat::load_cloud(d.manifest.resolve(o.cloud_path)));
    }
    std::vector<Matrix> train_mels;
    std::vector<std::string> captions;
    for (const auto& r : d.manifest.records_in(Split::train)) {
        train_mels.push_back(d.log_mels.at(r.path));
        captions.push_back(r.caption);
    }
    if (train_mels.empty()) {
        throw Error("invalid_dataset", "dataset has no training records", "records");
    }
    d.stats = audio::compute_norm_stats(train_mels);
    d.vocab = encoders::Vocabulary::build(captions);
    return d;
}

void preprocess_dataset(const fs::path& manifest_path, double orbit_distance) {
    const auto m = oracle::load_manifest(manifest_path);
    Archive a;
    a.header["kind"] = "preprocessed";
    a.header["generator_seed"] = m.generator_seed;
    a.header["material_bank_hash"] = m.material_bank_hash;
    a.header["records"] = m.records.size();
    for (const auto& r : m.records) {
        a.tensors["mel/" + r.path] = decode_record(m, r);
    }
    save_archive(a, m.root / kCacheName);
    splat::write_poses_csv(splat::orbit_poses(orbit_distance), m.root / "poses.csv");
}

namespace {

nlohmann::json architecture(const RunConfig& c) {
    nlohmann::json j = c.to_json();
    for (const char* key : {"stage", "epochs", "batch_size", "batch_size_2a", "lr", "weight_decay",
                            "warmup_fraction", "encoder_lr_scale_stage3", "seed", "dataset", "fusion_mode",
                            "infonce", "val_max_records"}) {
        j.erase(key);
    }
    return j;
}

enum class CondSource { text, gaussian, fused };

CondSource source_for(const std::string& stage_tag_value) {
    if (stage_tag_value == "stage1") return CondSource::text;
    if (stage_tag_value == "stage3") return CondSource::fused;
    return CondSource::gaussian;
}

encoders::FeatureTokens condition(const Model& model, const PreparedData& data, const DatasetRecord& r,
                                  CondSource source) {
    switch (source) {
        case CondSource::text: return model.text_condition(r.caption);
        case CondSource::gaussian: return model.gaussian_condition(data.object_splats(r.object_id));
        case CondSource::fused: return model.fused_condition(data.object_splats(r.object_id), r.position);
    }
    throw Error("invalid_argument", "unknown conditioning source", "stage");
}

std::vector<DatasetRecord> validation_subset(const PreparedData& data, int cap) {
    const auto all = data.records(Split::val);
    const size_t k = std::min(all.size(), static_cast<size_t>(cap));
    std::vector<DatasetRecord> out;
    for (size_t i = 0; i < k; ++i) {
        out.push_back(all[i * all.size() / k]);
    }
    return out;
}

Tensor record_flow_loss(const Model& model, const PreparedData& data, const DatasetRecord& r, CondSource source,
                        nn::Rng& rng) {
    const Matrix x0 = data.latent(r, model.stats);
    const Tensor ctx = flow::conditioning_sequence(condition(model, data, r, source));
    return flow::flow_loss(
        x0, [&](const Tensor& x, double t) { return model.velocity(x, t, ctx); }, rng);
}

struct Run {
    Model model;
    TrainingState state;
};

void check_predecessor(const Checkpoint& prev, const std::string& stage) {
    const std::string want = stage_tag(predecessor_stage(stage));
    if (prev.model.stage != want) {
        throw Error("stage_mismatch",
                    "stage " + stage + " needs a " + want + " checkpoint, got '" + prev.model.stage + "'",
                    "checkpoint");
    }
    if (prev.state.epochs_completed < prev.model.config.epochs) {
        throw Error("stage_mismatch", "predecessor checkpoint is incomplete", "checkpoint");
    }
}

Run start_run(const RunConfig& config, const PreparedData& data, const std::optional<fs::path>& predecessor,
              const TrainOptions& options) {
    config.validate();
    const std::string tag = stage_tag(config.stage);
    if (options.resume) {
        Checkpoint ck = load_checkpoint(*options.resume);
        if (ck.model.stage != tag) {
            throw Error("stage_mismatch", "resume checkpoint is tagged '" + ck.model.stage + "', expected " + tag,
                        "checkpoint");
        }
        if (architecture(ck.model.config) != architecture(config)) {
            throw Error("config_mismatch", "resume checkpoint architecture differs from the config", "config");
        }
        ck.model.config = config;
        return {std::move(ck.model), std::move(ck.state)};
    }
    if (config.stage == "1") {
        Model m(config, data.vocab, data.stats);
        m.stage = tag;
        return {std::move(m), {}};
    }
    if (!predecessor) {
        throw Error("stage_mismatch", "stage " + config.stage + " needs a predecessor checkpoint", "checkpoint");
    }
    Checkpoint prev = load_checkpoint(*predecessor);
    check_predecessor(prev, config.stage);
    if (architecture(prev.model.config) != architecture(config)) {
        throw Error("config_mismatch", "predecessor checkpoint architecture differs from the config", "config");
    }
    prev.model.config = config;
    prev.model.stage = tag;
    return {std::move(prev.model), {}};
}

struct Group {
    nn::ParameterList params;
    double lr_scale;
};

nn::AdamW make_optimizer(const RunConfig& config, const std::vector<Group>& groups, const TrainingState& state) {
    nn::AdamWOptions o;
    o.weight_decay = config.weight_decay;
    nn::AdamW opt(o);
    for (const auto& g : groups) {
        if (!g.params.empty()) {
            opt.add_group(g.params, g.lr_scale);
        }
    }
    if (!state.optimizer_moments.empty()) {
        opt.import_state(state.optimizer_moments, state.optimizer_steps);
    }
    return opt;
}

void finish_epoch(Run& run, nn::AdamW& opt, int epoch, double train_loss, double val_loss, double lr,
                  const fs::path& out, const TrainOptions& options) {
    const double tau = run.model.tau.item();
    run.state.loss_log.push_back({epoch, "train", train_loss, lr, tau});
    run.state.loss_log.push_back({epoch, "val", val_loss, lr, tau});
    run.state.epochs_completed = epoch;
    run.state.optimizer_steps = opt.step_count();
    run.state.optimizer_moments = opt.export_state();
    save_checkpoint(run.model, run.state, out);
    fs::path csv = out;
    csv.replace_extension(".csv");
    write_loss_csv(run.state.loss_log, csv);
    std::ostringstream ss;
    ss << run.model.stage << " epoch " << epoch << " train " << train_loss << " val " << val_loss << " lr " << lr
       << " tau " << tau;
    say(options, ss.str());
}

Checkpoint finish_run(Run& run) { return {std::move(run.model), std::move(run.state)}; }

Checkpoint train_flow(Run run, const PreparedData& data, const std::vector<Group>& groups, const fs::path& out,
                      const TrainOptions& options) {
    const RunConfig& config = run.model.config;
    const CondSource source = source_for(run.model.stage);
    const auto records = data.records(Split::train);
    if (records.empty()) {
        throw Error("invalid_dataset", "no training records", "records");
    }
    if (source == CondSource::text) {
        for (const auto& r : records) {
            if (r.caption.empty()) {
                throw Error("invalid_dataset", "stage 1 needs captions; missing for " + r.path, "caption");
            }
        }
    }
    if (!run.state.initial_val_loss) {
        run.state.initial_val_loss = validation_flow_loss(run.model, data);
        say(options, run.model.stage + " initial val " + std::to_string(*run.state.initial_val_loss));
    }
    nn::AdamW opt = make_optimizer(config, groups, run.state);
    const auto batch = static_cast<size_t>(config.batch_size);
    const long batches = static_cast<long>((records.size() + batch - 1) / batch);
    const long total = batches * config.epochs;
    const int last = options.stop_after_epoch ? std::min(*options.stop_after_epoch, config.epochs) : config.epochs;
    for (int epoch = run.state.epochs_completed + 1; epoch <= last; ++epoch) {
        nn::Rng rng(derive_seed(config.seed, {stage_code(config.stage), static_cast<std::uint64_t>(epoch)}));
        std::vector<size_t> order(records.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        double lr = 0.0;
        for (long b = 0; b < batches; ++b) {
            opt.zero_grad();
            const size_t begin = static_cast<size_t>(b) * batch;
            const size_t end = std::min(records.size(), begin + batch);
            for (size_t i = begin; i < end; ++i) {
                Tensor loss = nn::scale(record_flow_loss(run.model, data, records[order[i]], source, rng),
                                        1.0 / static_cast<double>(end - begin));
                loss.backward();
                epoch_loss += loss.item();
            }
            lr = nn::cosine_warmup_lr(config.lr, opt.step_count(), total, config.warmup_fraction);
            opt.step(lr);
        }
        finish_epoch(run, opt, epoch, epoch_loss / static_cast<double>(batches), validation_flow_loss(run.model, data),
                     lr, out, options);
    }
    return finish_run(run);
}

// Batches of records whose captions are pairwise distinct whenever enough
// distinct captions remain; every batch but the last is full.
std::vector<std::vector<size_t>> contrastive_batches(const std::vector<DatasetRecord>& records, size_t batch,
                                                     nn::Rng& rng) {
    std::vector<size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::map<std::string, std::vector<size_t>> queues;
    for (size_t i : order) {
        queues[records[i].caption].push_back(i);
    }
    std::vector<std::vector<size_t>*> lanes;
    for (auto& [caption, q] : queues) {
        std::reverse(q.begin(), q.end());  // pop_back yields shuffled order
        lanes.push_back(&q);
    }
    std::vector<std::vector<size_t>> out;
    size_t remaining = records.size();
    while (remaining > 0) {
        std::vector<size_t> current;
        std::shuffle(lanes.begin(), lanes.end(), rng);
        while (current.size() < batch && remaining > 0) {
            for (auto* lane : lanes) {
                if (current.size() == batch) {
                    break;
                }
                if (!lane->empty()) {
                    current.push_back(lane->back());
                    lane->pop_back();
                    --remaining;
                }
            }
        }
        out.push_back(std::move(current));
    }
    return out;
}

Checkpoint train_contrastive(Run run, const PreparedData& data, const fs::path& out, const TrainOptions& options) {
    const RunConfig& config = run.model.config;
    const auto records = data.records(Split::train);
    const auto batch = static_cast<size_t>(config.batch_size_2a);
    if (records.size() < 2) {
        throw Error("invalid_dataset", "stage 2a needs at least two training pairs", "records");
    }
    std::map<std::string, Eigen::RowVectorXd> caption_embedding;
    {
        nn::NoGradGuard guard;
        for (const auto& r : records) {
            if (!caption_embedding.contains(r.caption)) {
                caption_embedding[r.caption] = run.model.text_condition(r.caption).pooled.value().row(0);
            }
        }
    }
    if (!run.state.initial_val_loss) {
        run.state.initial_val_loss = validation_infonce(run.model, data);
        say(options, "stage2a initial val " + std::to_string(*run.state.initial_val_loss));
    }
    if (!config.infonce) {
        // Ablation arm: the Gaussian encoder keeps its initialization.
        say(options, "stage2a contrastive training disabled (infonce=false)");
        run.state.epochs_completed = config.epochs;
        save_checkpoint(run.model, run.state, out);
        return finish_run(run);
    }
    nn::ParameterList tau_param{{"tau", run.model.tau}};
    nn::AdamW opt = make_optimizer(config, {{run.model.gaussian_parameters(), 1.0}, {tau_param, 1.0}}, run.state);
    const long batches = static_cast<long>((records.size() + batch - 1) / batch);
    const long total = batches * config.epochs;
    const int last = options.stop_after_epoch ? std::min(*options.stop_after_epoch, config.epochs) : config.epochs;
    for (int epoch = run.state.epochs_completed + 1; epoch <= last; ++epoch) {
        nn::Rng rng(derive_seed(config.seed, {stage_code(config.stage), static_cast<std::uint64_t>(epoch)}));
        const auto plan = contrastive_batches(records, batch, rng);
        double epoch_loss = 0.0;
        double lr = 0.0;
        for (const auto& ids : plan) {
            if (ids.size() < 2) {
                continue;
            }
            opt.zero_grad();
            std::vector<Tensor> g_rows;
            Matrix t_rows(static_cast<Eigen::Index>(ids.size()), config.d_joint);
            for (size_t i = 0; i < ids.size(); ++i) {
                const auto& r = records[ids[i]];
                g_rows.push_back(run.model.gaussian_condition(data.object_splats(r.object_id)).pooled);
                t_rows.row(static_cast<Eigen::Index>(i)) = caption_embedding.at(r.caption);
            }
            Tensor loss = flow::infonce(nn::concat_rows(g_rows), Tensor::constant(t_rows), run.model.tau);
            loss.backward();
            epoch_loss += loss.item();
            lr = nn::cosine_warmup_lr(config.lr, opt.step_count(), total, config.warmup_fraction);
            opt.step(lr);
            auto& tau = run.model.tau.mutable_value()(0, 0);
            tau = std::clamp(tau, flow::kTauMin, flow::kTauMax);
        }
        finish_epoch(run, opt, epoch, epoch_loss / static_cast<double>(plan.size()), validation_infonce(run.model, data),
                     lr, out, options);
    }
    return finish_run(run);
}

}  // namespace

double validation_flow_loss(const Model& model, const PreparedData& data) {
    nn::NoGradGuard guard;
    const auto subset = validation_subset(data, model.config.val_max_records);
    if (subset.empty()) {
        throw Error("invalid_dataset", "no validation records", "records");
    }
    const CondSource source = source_for(model.stage);
    double total = 0.0;
    for (size_t i = 0; i < subset.size(); ++i) {
        nn::Rng rng(derive_seed(model.config.seed, {kValStream, static_cast<std::uint64_t>(i)}));
        total += record_flow_loss(model, data, subset[i], source, rng).item();
    }
    return total / static_cast<double>(subset.size());
}

double validation_infonce(const Model& model, const PreparedData& data) {
    nn::NoGradGuard guard;
    const auto objects = data.manifest.objects_in(Split::val);
    if (objects.size() < 2) {
        return std::nan("");
    }
    std::map<std::string, std::string> caption_of;
    for (const auto& r : data.manifest.records) {
        caption_of.emplace(r.object_id, r.caption);
    }
    Matrix g(static_cast<Eigen::Index>(objects.size()), model.config.d_joint);
    Matrix t(static_cast<Eigen::Index>(objects.size()), model.config.d_joint);
    for (size_t i = 0; i < objects.size(); ++i) {
        const auto idx = static_cast<Eigen::Index>(i);
        g.row(idx) = model.gaussian_condition(data.object_splats(objects[i].object_id)).pooled.value().row(0);
        t.row(idx) = model.text_condition(caption_of.at(objects[i].object_id)).pooled.value().row(0);
    }
    return flow::infonce(g, t, model.tau.item());
}

double retrieval_accuracy(const Model& model, const PreparedData& data, Split split) {
    nn::NoGradGuard guard;
    std::set<std::string> caption_set;
    std::map<std::string, std::string> caption_of;
    for (const auto& r : data.manifest.records) {
        caption_set.insert(r.caption);
        caption_of.emplace(r.object_id, r.caption);
    }
    const std::vector<std::string> captions(caption_set.begin(), caption_set.end());
    std::vector<Eigen::VectorXd> text;
    for (const auto& c : captions) {
        text.push_back(model.text_condition(c).pooled.value().row(0).transpose());
    }
    const auto objects = data.manifest.objects_in(split);
    if (objects.empty()) {
        throw Error("invalid_dataset", "split has no objects", "split");
    }
    int correct = 0;
    for (const auto& o : objects) {
        const Eigen::VectorXd g = model.gaussian_condition(data.object_splats(o.object_id)).pooled.value().row(0).transpose();
        size_t best = 0;
        double best_sim = -2.0;
        for (size_t c = 0; c < captions.size(); ++c) {
            const double s = metrics::cosine(g, text[c]);
            if (s > best_sim) {
                best_sim = s;
                best = c;
            }
        }
        correct += captions[best] == caption_of.at(o.object_id) ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(objects.size());
}

Checkpoint train_stage1(const RunConfig& config, const PreparedData& data, const fs::path& out,
                        const TrainOptions& options) {
    Run run = start_run(config, data, std::nullopt, options);
    const std::vector<Group> groups{{run.model.text_parameters(), 1.0}, {run.model.velocity_parameters(), 1.0}};
    return train_flow(std::move(run), data, groups, out, options);
}

Checkpoint train_stage2a(const RunConfig& config, const PreparedData& data, const fs::path& stage1,
                         const fs::path& out, const TrainOptions& options) {
    return train_contrastive(start_run(config, data, stage1, options), data, out, options);
}

Checkpoint train_stage2b(const RunConfig& config, const PreparedData& data, const fs::path& stage2a,
                         const fs::path& out, const TrainOptions& options) {
    Run run = start_run(config, data, stage2a, options);
    const std::vector<Group> groups{{run.model.gaussian_parameters(), 1.0}, {run.model.velocity_parameters(), 1.0}};
    return train_flow(std::move(run), data, groups, out, options);
}

Checkpoint train_stage3(const RunConfig& config, const PreparedData& data, const fs::path& stage2b,
                        const fs::path& out, const TrainOptions& options) {
    Run run = start_run(config, data, stage2b, options);
    run.model.set_fusion_mode(config.fusion());
    for (const auto& r : data.records(Split::train)) {
        if (!r.position.allFinite()) {
            throw Error("invalid_dataset", "stage 3 needs impact positions; missing for " + r.path, "position");
        }
    }
    const std::vector<Group> groups{{run.model.position_parameters(), 1.0},
                                    {run.model.fusion_parameters(), 1.0},
                                    {run.model.velocity_parameters(), 1.0},
                                    {run.model.gaussian_parameters(), config.encoder_lr_scale_stage3}};
    return train_flow(std::move(run), data, groups, out, options);
}

Checkpoint train_stage(const RunConfig& config, const PreparedData& data, const std::optional<fs::path>& predecessor,
                       const fs::path& out, const TrainOptions& options) {
    if (config.stage == "1") return train_stage1(config, data, out, options);
    const fs::path prev = predecessor.value_or(fs::path{});
    if (!options.resume && !predecessor) {
        throw Error("stage_mismatch", "stage " + config.stage + " needs a predecessor checkpoint", "checkpoint");
    }
    if (config.stage == "2a") return train_stage2a(config, data, prev, out, options);
    if (config.stage == "2b") return train_stage2b(config, data, prev, out, options);
    if (config.stage == "3") return train_stage3(config, data, prev, out, options);
    throw Error("invalid_config", "stage must be one of 1, 2a, 2b, 3", "stage");
}

encoders::FeatureTokens synthesis_condition(const Model& model, const Matrix& serialized_splats,
                                            const Eigen::Vector3d& position) {
    if (model.stage == "stage3") {
        return model.fused_condition(serialized_splats, position);
    }
    if (model.stage == "stage2b") {
        return model.gaussian_condition(serialized_splats);
    }
    throw Error("stage_mismatch", "synthesis needs a stage2b or stage3 checkpoint, got '" + model.stage + "'",
                "checkpoint");
}

Matrix generate_latent(const Model& model, const Matrix& serialized_splats, const Eigen::Vector3d& position,
                       int steps, std::uint64_t seed) {
    nn::NoGradGuard guard;
    const Tensor ctx = flow::conditioning_sequence(synthesis_condition(model, serialized_splats, position));
    return flow::sample(model.velocity, ctx, steps, seed);
}

std::vector<float> generate_waveform(const Model& model, const Matrix& serialized_splats,
                                     const Eigen::Vector3d& position, int steps, std::uint64_t seed,
                                     int griffin_lim_iters) {
    audio::MelLatent latent{generate_latent(model, serialized_splats, position, steps, seed), model.stats};
    return audio::decode_mel(latent, griffin_lim_iters, seed);
}

std::vector<HeldOutImpact> held_out_impacts(const PreparedData& data, int per_object) {
    std::vector<HeldOutImpact> out;
    for (const auto& o : data.manifest.objects_in(Split::test)) {
        std::vector<DatasetRecord> recs;
        for (const auto& r : data.manifest.records) {
            if (r.object_id == o.object_id) {
                recs.push_back(r);
            }
        }
        if (recs.size() < 2) {
            continue;
        }
        const size_t k = std::min(recs.size(), static_cast<size_t>(std::max(per_object, 1)));
        for (size_t i = 0; i < k; ++i) {
            const auto& r = recs[i * recs.size() / k];
            Eigen::Vector3d far = r.position;
            double best = -1.0;
            for (const auto& other : recs) {
                const double dist = (other.position - r.position).norm();
                if (dist > best) {
                    best = dist;
                    far = other.position;
                }
            }
            out.push_back({r, far});
        }
    }
    return out;
}

GeneratedSet generate_held_out(const Model& model, const PreparedData& data, int per_object, int steps,
                               std::uint64_t seed) {
    GeneratedSet set;
    set.impacts = held_out_impacts(data, per_object);
    for (size_t i = 0; i < set.impacts.size(); ++i) {
        const auto& r = set.impacts[i].record;
        set.waves.push_back(generate_waveform(model, data.object_splats(r.object_id), r.position, steps,
                                              derive_seed(seed, {static_cast<std::uint64_t>(i)})));
    }
    return set;
}

double mean_position_consistency(const GeneratedSet& set, const oracle::MaterialBank& bank) {
    if (set.impacts.empty()) {
        throw Error("invalid_dataset", "no held-out impacts", "records");
    }
    double total = 0.0;
    for (size_t i = 0; i < set.impacts.size(); ++i) {
        const auto& imp = set.impacts[i];
        total += metrics::position_consistency(set.waves[i], bank.by_name(imp.record.material_name),
                                               imp.record.position, imp.p_far);
    }
    return total / static_cast<double>(set.impacts.size());
}

}  // namespace sonicgauss::pipeline
