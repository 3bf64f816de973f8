#include "sonicgauss/pipeline/evaluate.hpp"

#include "sonicgauss/audio/codec.hpp"
#include "sonicgauss/audio/wav.hpp"
#include "sonicgauss/common/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace sonicgauss::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

std::set<std::string> parse_metric_list(const std::string& csv) {
    std::set<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) {
            continue;
        }
        if (item != "fad" && item != "kl" && item != "is" && item != "pos") {
            throw Error("invalid_argument", "unknown metric '" + item + "' (expected fad, kl, is, pos)", "metrics");
        }
        out.insert(item);
    }
    if (out.empty()) {
        throw Error("invalid_argument", "no metrics requested", "metrics");
    }
    return out;
}

namespace {

std::string item_name(size_t i) {
    std::ostringstream ss;
    ss << "item_" << std::setw(4) << std::setfill('0') << i << ".wav";
    return ss.str();
}

json vec_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec_from(const json& j, const std::string& field) {
    if (!j.is_array() || j.size() != 3) {
        throw Error("invalid_index", "expected a 3-vector", field);
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::vector<fs::path> wav_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw Error("missing_file", "not a directory: " + dir.string(), "dir");
    }
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".wav") {
            out.push_back(e.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<float> load_standard(const fs::path& p) {
    const auto w = audio::read_wav(p);
    return audio::standardize(w.samples, w.sample_rate);
}

Matrix stack(const std::vector<Eigen::RowVectorXd>& rows) {
    Matrix m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : rows.front().size());
    for (size_t i = 0; i < rows.size(); ++i) {
        m.row(static_cast<Eigen::Index>(i)) = rows[i];
    }
    return m;
}

}  // namespace

void write_held_out(const GeneratedSet& set, const PreparedData& data, const fs::path& out_dir) {
    fs::create_directories(out_dir / "gen");
    fs::create_directories(out_dir / "ref");
    json items = json::array();
    for (size_t i = 0; i < set.impacts.size(); ++i) {
        const auto& imp = set.impacts[i];
        const std::string name = item_name(i);
        audio::write_wav(out_dir / "gen" / name, set.waves[i], audio::kSampleRate);
        fs::copy_file(data.manifest.resolve(imp.record.path), out_dir / "ref" / name,
                      fs::copy_options::overwrite_existing);
        items.push_back({{"file", name},
                         {"object_id", imp.record.object_id},
                         {"material", imp.record.material_name},
                         {"position", vec_json(imp.record.position)},
                         {"p_far", vec_json(imp.p_far)}});
    }
    std::ofstream out(out_dir / "index.json");
    if (!out) {
        throw Error("unwritable_path", "cannot write " + (out_dir / "index.json").string(), "out");
    }
    out << json{{"items", items}}.dump(2) << "\n";
}

metrics::MetricsReport evaluate(const EvalInputs& inputs, const metrics::AudioEmbedder* embedder,
                                const oracle::MaterialBank* bank) {
    metrics::MetricsReport report;
    const auto gen_files = wav_files(inputs.gen_dir);
    if (gen_files.empty()) {
        throw Error("invalid_argument", "no WAV files in " + inputs.gen_dir.string(), "gen");
    }
    report.n = static_cast<int>(gen_files.size());
    std::vector<std::vector<float>> gen;
    for (const auto& p : gen_files) {
        gen.push_back(load_standard(p));
    }
    const bool need_ref = inputs.metrics.contains("fad") || inputs.metrics.contains("kl");
    std::vector<std::vector<float>> ref;
    if (need_ref) {
        if (!inputs.ref_dir) {
            throw Error("invalid_argument", "fad and kl need a reference directory", "ref");
        }
        const auto ref_files = wav_files(*inputs.ref_dir);
        if (ref_files.size() != gen_files.size()) {
            throw Error("length_mismatch", "gen and ref directories hold different numbers of files", "ref");
        }
        for (size_t i = 0; i < ref_files.size(); ++i) {
            if (ref_files[i].filename() != gen_files[i].filename()) {
                throw Error("length_mismatch", "unpaired file " + gen_files[i].filename().string(), "ref");
            }
            ref.push_back(load_standard(ref_files[i]));
        }
    }
    if (inputs.metrics.contains("fad") || inputs.metrics.contains("is")) {
        if (embedder == nullptr) {
            throw Error("invalid_argument", "fad and is need an audio embedder", "embedder");
        }
        std::vector<Eigen::RowVectorXd> gen_emb;
        std::vector<Eigen::RowVectorXd> gen_post;
        for (const auto& w : gen) {
            auto [e, p] = embedder->embed_and_posterior(w);
            gen_emb.push_back(e);
            gen_post.push_back(p);
        }
        if (inputs.metrics.contains("fad")) {
            std::vector<Eigen::RowVectorXd> ref_emb;
            for (const auto& w : ref) {
                ref_emb.push_back(embedder->embed(w));
            }
            report.fad = metrics::fad(stack(ref_emb), stack(gen_emb));
        }
        if (inputs.metrics.contains("is")) {
            const auto is = metrics::inception_score(stack(gen_post));
            report.is_mean = is.mean;
            report.is_std = is.stddev;
        }
    }
    if (inputs.metrics.contains("kl")) {
        std::vector<Matrix> r;
        std::vector<Matrix> g;
        for (size_t i = 0; i < gen.size(); ++i) {
            r.push_back(audio::log_mel(ref[i]));
            g.push_back(audio::log_mel(gen[i]));
        }
        report.kl_sigmoid = metrics::kl_sigmoid(r, g);
    }
    if (inputs.metrics.contains("pos")) {
        if (!inputs.index || bank == nullptr) {
            throw Error("invalid_argument", "pos needs an index file and a material bank", "index");
        }
        std::ifstream in(*inputs.index);
        if (!in) {
            throw Error("missing_file", "cannot read " + inputs.index->string(), "index");
        }
        json doc;
        try {
            doc = json::parse(in);
        } catch (const json::parse_error& e) {
            throw Error("invalid_index", e.what(), "index");
        }
        std::map<std::string, json> by_file;
        for (const auto& item : doc.at("items")) {
            by_file[item.at("file").get<std::string>()] = item;
        }
        double total = 0.0;
        for (size_t i = 0; i < gen_files.size(); ++i) {
            auto it = by_file.find(gen_files[i].filename().string());
            if (it == by_file.end()) {
                throw Error("invalid_index", "index has no entry for " + gen_files[i].filename().string(), "index");
            }
            const auto& item = it->second;
            total += metrics::position_consistency(gen[i], bank->by_name(item.at("material").get<std::string>()),
                                                   vec_from(item.at("position"), "position"),
                                                   vec_from(item.at("p_far"), "p_far"));
        }
        report.position_consistency = total / static_cast<double>(gen_files.size());
    }
    return report;
}

}  // namespace sonicgauss::pipeline
