#pragma once

#include "sonicgauss/oracle/dataset.hpp"
#include "sonicgauss/pipeline/model.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sonicgauss::pipeline {

// Decoded dataset: log-mels per record, serialized splats per object, and
// the training-split vocabulary and mel statistics.
struct PreparedData {
    oracle::DatasetManifest manifest;
    std::map<std::string, nn::Matrix> log_mels;  // keyed by record path
    std::map<std::string, nn::Matrix> splats;    // keyed by object id
    audio::MelNormStats stats;
    encoders::Vocabulary vocab;

    [[nodiscard]] std::vector<oracle::DatasetRecord> records(oracle::Split split) const {
        return manifest.records_in(split);
    }
    [[nodiscard]] nn::Matrix latent(const oracle::DatasetRecord& r, const audio::MelNormStats& s) const;
    [[nodiscard]] const nn::Matrix& object_splats(const std::string& object_id) const;
};

// Loads the manifest and decodes audio and clouds. Uses the preprocess
// cache next to the manifest when present and matching.
PreparedData prepare_data(const std::filesystem::path& manifest_path);

// Writes the decoded log-mels to <root>/preprocessed.sgck and orbit camera
// poses to <root>/poses.csv.
void preprocess_dataset(const std::filesystem::path& manifest_path, double orbit_distance = 2.0);

struct TrainOptions {
    // Stop after this epoch even if config.epochs is larger (resume tests).
    std::optional<int> stop_after_epoch;
    // Continue a same-stage checkpoint instead of starting from the predecessor.
    std::optional<std::filesystem::path> resume;
    std::function<void(const std::string&)> log;
};

// Runs config.stage. Stage 1 starts from scratch; later stages require the
// predecessor's completed checkpoint. Writes `out` after every epoch and
// `out` with extension .csv for the loss log.
Checkpoint train_stage(const RunConfig& config, const PreparedData& data,
                       const std::optional<std::filesystem::path>& predecessor, const std::filesystem::path& out,
                       const TrainOptions& options = {});

Checkpoint train_stage1(const RunConfig& config, const PreparedData& data, const std::filesystem::path& out,
                        const TrainOptions& options = {});
Checkpoint train_stage2a(const RunConfig& config, const PreparedData& data, const std::filesystem::path& stage1,
                         const std::filesystem::path& out, const TrainOptions& options = {});
Checkpoint train_stage2b(const RunConfig& config, const PreparedData& data, const std::filesystem::path& stage2a,
                         const std::filesystem::path& out, const TrainOptions& options = {});
Checkpoint train_stage3(const RunConfig& config, const PreparedData& data, const std::filesystem::path& stage2b,
                        const std::filesystem::path& out, const TrainOptions& options = {});

// Flow loss on the capped validation subset with fixed per-record noise.
// The conditioning source follows the model's stage.
double validation_flow_loss(const Model& model, const PreparedData& data);
// InfoNCE on one record per validation object against its caption.
double validation_infonce(const Model& model, const PreparedData& data);

// Top-1 gaussian -> caption retrieval over the objects of a split, against
// the distinct captions of the whole dataset.
double retrieval_accuracy(const Model& model, const PreparedData& data, oracle::Split split);

// Conditioning for synthesis according to the model's stage: stage3 fuses
// the position, stage2b ignores it.
encoders::FeatureTokens synthesis_condition(const Model& model, const nn::Matrix& serialized_splats,
                                            const Eigen::Vector3d& position);
nn::Matrix generate_latent(const Model& model, const nn::Matrix& serialized_splats, const Eigen::Vector3d& position,
                           int steps, std::uint64_t seed);
std::vector<float> generate_waveform(const Model& model, const nn::Matrix& serialized_splats,
                                     const Eigen::Vector3d& position, int steps, std::uint64_t seed,
                                     int griffin_lim_iters = 60);

struct HeldOutImpact {
    oracle::DatasetRecord record;
    Eigen::Vector3d p_far;
};

// Up to per_object test impacts per held-out object (evenly strided), each
// paired with the farthest test position on the same object.
std::vector<HeldOutImpact> held_out_impacts(const PreparedData& data, int per_object);

struct GeneratedSet {
    std::vector<HeldOutImpact> impacts;
    std::vector<std::vector<float>> waves;
};

GeneratedSet generate_held_out(const Model& model, const PreparedData& data, int per_object, int steps,
                               std::uint64_t seed);

double mean_position_consistency(const GeneratedSet& set, const oracle::MaterialBank& bank);

}  // namespace sonicgauss::pipeline
