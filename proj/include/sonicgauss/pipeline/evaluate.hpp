#pragma once

#include "sonicgauss/metrics/embedder.hpp"
#include "sonicgauss/metrics/metrics.hpp"
#include "sonicgauss/oracle/modal.hpp"
#include "sonicgauss/pipeline/train.hpp"

#include <filesystem>
#include <optional>
#include <set>
#include <string>

namespace sonicgauss::pipeline {

// Metric names accepted by evaluate: fad, kl, is, pos.
std::set<std::string> parse_metric_list(const std::string& csv);

// Writes gen/<name>.wav, ref/<name>.wav (the oracle recording) and
// index.json describing material, p_true and p_far per file.
void write_held_out(const GeneratedSet& set, const PreparedData& data, const std::filesystem::path& out_dir);

struct EvalInputs {
    std::filesystem::path gen_dir;
    std::optional<std::filesystem::path> ref_dir;  // fad, kl
    std::optional<std::filesystem::path> index;    // pos
    std::set<std::string> metrics;
};

// Gen and ref files are paired by file name. The embedder is needed for fad
// and is, the bank for pos; either may be null otherwise.
metrics::MetricsReport evaluate(const EvalInputs& inputs, const metrics::AudioEmbedder* embedder,
                                const oracle::MaterialBank* bank);

}  // namespace sonicgauss::pipeline
