#include "doctest.h"

#include "sonicgauss/oracle/modal.hpp"
#include "sonicgauss/pipeline/config.hpp"
#include "sonicgauss/pipeline/model.hpp"
#include "sonicgauss/pipeline/train.hpp"
#include "tiny_fixture.hpp"

#include <cmath>
#include <fstream>

using namespace sonicgauss;
using namespace sonicgauss::pipeline;
using testing::TempDir;
using testing::tiny_fixture;

namespace {

const PreparedData& tiny_data() {
    static const PreparedData d = prepare_data(tiny_fixture().manifest);
    return d;
}

RunConfig tiny_config(const std::string& stage) {
    auto c = tiny_fixture().config;
    c.stage = stage;
    return c;
}

std::string error_code(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

size_t line_count(const std::filesystem::path& p) {
    std::ifstream in(p);
    size_t n = 0;
    for (std::string line; std::getline(in, line);) ++n;
    return n;
}

bool same_values(const nn::ParameterList& a, const nn::ParameterList& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i].first != b[i].first || a[i].second.value() != b[i].second.value()) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("run config defaults and validation") {
    RunConfig c;
    CHECK(c.epochs == 80);
    CHECK(c.batch_size == 2);
    CHECK(c.batch_size_2a == 8);
    CHECK(c.lr == 1e-4);
    CHECK(c.weight_decay == 0.01);
    CHECK(c.warmup_fraction == 0.05);
    CHECK(c.d_joint == 256);
    CHECK_NOTHROW(c.validate());

    auto bad = c;
    bad.stage = "4";
    CHECK(error_code([&] { bad.validate(); }) == "invalid_config");
    bad = c;
    bad.batch_size_2a = 1;
    CHECK(error_code([&] { bad.validate(); }) == "invalid_config");
    bad = c;
    bad.epochs = 0;
    CHECK(error_code([&] { bad.validate(); }) == "invalid_config");

    const auto round = RunConfig::from_json(c.to_json());
    CHECK(round.to_json() == c.to_json());
    CHECK(error_code([] { RunConfig::from_json({{"epoch", 3}}); }) == "invalid_config");
    CHECK(error_code([] { RunConfig::from_json({{"epochs", "many"}}); }) == "invalid_config");
    CHECK(RunConfig::from_json({{"epochs", 8}}).epochs == 8);
    CHECK(error_code([] { RunConfig::load("/nonexistent/config.json"); }) == "missing_file");
}

TEST_CASE("stage names and predecessors") {
    for (const char* s : {"1", "2a", "2b", "3"}) CHECK(valid_stage(s));
    CHECK_FALSE(valid_stage("2"));
    CHECK(predecessor_stage("1").empty());
    CHECK(predecessor_stage("2a") == "1");
    CHECK(predecessor_stage("2b") == "2a");
    CHECK(predecessor_stage("3") == "2b");
    CHECK(stage_tag("2b") == "stage2b");
}

TEST_CASE("each stage writes a tagged checkpoint and a one-epoch loss log") {
    const auto& f = tiny_fixture();
    const std::vector<std::pair<std::filesystem::path, std::string>> runs{
        {f.stage1, "stage1"}, {f.stage2a, "stage2a"}, {f.stage2b, "stage2b"}, {f.stage3, "stage3"}};
    for (const auto& [path, tag] : runs) {
        const auto ck = load_checkpoint(path);
        CHECK(ck.model.stage == tag);
        CHECK(ck.state.epochs_completed == 1);
        REQUIRE(ck.state.loss_log.size() == 2);
        CHECK(ck.state.loss_log[0].epoch == 1);
        CHECK(ck.state.loss_log[0].split == "train");
        CHECK(ck.state.loss_log[1].split == "val");
        CHECK(ck.state.initial_val_loss.has_value());
        auto csv = path;
        csv.replace_extension(".csv");
        CHECK(line_count(csv) == 3);
    }
}

TEST_CASE("optimizer steps equal epochs times batches") {
    const auto& data = tiny_data();
    const auto train = data.records(oracle::Split::train).size();
    const auto ck = load_checkpoint(tiny_fixture().stage1);
    const auto batch = static_cast<size_t>(ck.model.config.batch_size);
    CHECK(ck.state.optimizer_steps == static_cast<long>((train + batch - 1) / batch));
}

TEST_CASE("stage chain refuses the wrong predecessor") {
    const auto& f = tiny_fixture();
    const auto& data = tiny_data();
    TempDir dir("chain");
    CHECK(error_code([&] { train_stage3(tiny_config("3"), data, f.stage1, dir.path() / "x.ckpt"); }) ==
          "stage_mismatch");
    CHECK(error_code([&] { train_stage2b(tiny_config("2b"), data, f.stage2b, dir.path() / "x.ckpt"); }) ==
          "stage_mismatch");
    CHECK(error_code([&] { train_stage(tiny_config("2a"), data, std::nullopt, dir.path() / "x.ckpt"); }) ==
          "stage_mismatch");
    auto wide = tiny_config("2a");
    wide.d_joint = 16;
    CHECK(error_code([&] { train_stage2a(wide, data, f.stage1, dir.path() / "x.ckpt"); }) == "config_mismatch");
    CHECK_FALSE(std::filesystem::exists(dir.path() / "x.ckpt"));
}

TEST_CASE("stage 1 requires captions") {
    auto data = tiny_data();
    for (auto& r : data.manifest.records) r.caption.clear();
    TempDir dir("captions");
    CHECK(error_code([&] { train_stage1(tiny_config("1"), data, dir.path() / "s1.ckpt"); }) == "invalid_dataset");
}

TEST_CASE("resumed training matches an uninterrupted run") {
    const auto& data = tiny_data();
    TempDir dir("resume");
    auto c = tiny_config("1");
    c.epochs = 2;
    const auto full = train_stage1(c, data, dir.path() / "full.ckpt");
    TrainOptions stop;
    stop.stop_after_epoch = 1;
    const auto half = train_stage1(c, data, dir.path() / "half.ckpt", stop);
    CHECK(half.state.epochs_completed == 1);
    TrainOptions resume;
    resume.resume = dir.path() / "half.ckpt";
    const auto resumed = train_stage1(c, data, dir.path() / "resumed.ckpt", resume);
    REQUIRE(resumed.state.loss_log.size() == full.state.loss_log.size());
    for (size_t i = 0; i < full.state.loss_log.size(); ++i) {
        CHECK(resumed.state.loss_log[i].loss == full.state.loss_log[i].loss);
        CHECK(resumed.state.loss_log[i].lr == full.state.loss_log[i].lr);
    }
    CHECK(same_values(resumed.model.all_parameters(), full.model.all_parameters()));
    CHECK(resumed.state.optimizer_steps == full.state.optimizer_steps);
}

TEST_CASE("fixed seed training is reproducible") {
    const auto& data = tiny_data();
    TempDir dir("repro");
    const auto again = train_stage1(tiny_config("1"), data, dir.path() / "s1.ckpt");
    const auto original = load_checkpoint(tiny_fixture().stage1);
    CHECK(again.state.loss_log[0].loss == original.state.loss_log[0].loss);
    CHECK(again.state.loss_log[1].loss == original.state.loss_log[1].loss);
}

TEST_CASE("stage 2a keeps tau clamped and starts near uniform similarity") {
    const auto ck = load_checkpoint(tiny_fixture().stage2a);
    const double tau = ck.model.tau.value()(0, 0);
    CHECK(tau >= flow::kTauMin);
    CHECK(tau <= flow::kTauMax);
    for (const auto& row : ck.state.loss_log) {
        CHECK(row.tau >= flow::kTauMin);
        CHECK(row.tau <= flow::kTauMax);
    }
    // Text encoder and velocity network are frozen during alignment.
    const auto s1 = load_checkpoint(tiny_fixture().stage1);
    CHECK(same_values(ck.model.text_parameters(), s1.model.text_parameters()));
    CHECK(same_values(ck.model.velocity_parameters(), s1.model.velocity_parameters()));
}

TEST_CASE("untrained encoders give InfoNCE near ln 8") {
    const auto bank = oracle::load_material_bank(oracle::default_material_bank_path());
    std::vector<std::string> captions;
    for (const auto& m : bank.materials) captions.push_back(oracle::caption_for(m));
    RunConfig c;
    c.velocity_blocks = 1;
    Model model(c, encoders::Vocabulary::build(captions), audio::MelNormStats{});
    nn::NoGradGuard guard;
    std::vector<nn::Tensor> g;
    std::vector<nn::Tensor> t;
    for (size_t i = 0; i < captions.size(); ++i) {
        const auto cloud = splat::normalize_cloud(testing::random_cloud(64, 100 + i)).first;
        g.push_back(model.gaussian_condition(encoders::serialize_splats(cloud)).pooled);
        t.push_back(model.text_condition(captions[i]).pooled);
    }
    const double loss = flow::infonce(nn::concat_rows(g).value(), nn::concat_rows(t).value(), flow::kTauInit);
    CHECK(std::abs(loss - std::log(8.0)) <= 0.5);
}

TEST_CASE("stage 2a ablation arm leaves the Gaussian encoder untouched") {
    const auto& data = tiny_data();
    TempDir dir("noinfo");
    auto c = tiny_config("2a");
    c.infonce = false;
    const auto ck = train_stage2a(c, data, tiny_fixture().stage1, dir.path() / "s2a.ckpt");
    CHECK(ck.model.stage == "stage2a");
    CHECK(ck.state.epochs_completed == c.epochs);
    const auto s1 = load_checkpoint(tiny_fixture().stage1);
    CHECK(same_values(ck.model.gaussian_parameters(), s1.model.gaussian_parameters()));
}

TEST_CASE("stage 2b conditioning sends no gradient to the text encoder") {
    const auto ck = load_checkpoint(tiny_fixture().stage2b);
    const auto& data = tiny_data();
    const auto record = data.records(oracle::Split::train).front();
    for (auto& [name, p] : ck.model.all_parameters()) {
        auto t = p;
        t.zero_grad();
    }
    nn::Rng rng(1);
    const auto cond = flow::conditioning_sequence(ck.model.gaussian_condition(data.object_splats(record.object_id)));
    auto loss = flow::flow_loss(data.latent(record, ck.model.stats),
                                [&](const nn::Tensor& x, double t) { return ck.model.velocity(x, t, cond); }, rng);
    loss.backward();
    for (const auto& [name, p] : ck.model.text_parameters()) {
        CHECK((p.grad().size() == 0 || p.grad().isZero(0.0)));
    }
    double gauss_grad = 0.0;
    for (const auto& [name, p] : ck.model.gaussian_parameters()) {
        if (p.grad().size() != 0) gauss_grad += p.grad().squaredNorm();
    }
    CHECK(gauss_grad > 0.0);
    const auto s2a = load_checkpoint(tiny_fixture().stage2a);
    CHECK(same_values(ck.model.text_parameters(), s2a.model.text_parameters()));
}

TEST_CASE("stage 3 records the fusion mode") {
    const auto& data = tiny_data();
    TempDir dir("concat");
    auto c = tiny_config("3");
    c.fusion_mode = "concat_baseline";
    train_stage3(c, data, tiny_fixture().stage2b, dir.path() / "s3.ckpt");
    const auto ck = load_checkpoint(dir.path() / "s3.ckpt");
    CHECK(ck.model.fusion_mode == flow::FusionMode::concat_baseline);
    CHECK(load_checkpoint(tiny_fixture().stage3).model.fusion_mode == flow::FusionMode::cross_attention);
}

TEST_CASE("stage 3 requires impact positions") {
    auto data = tiny_data();
    for (auto& r : data.manifest.records) r.position = Eigen::Vector3d::Constant(std::nan(""));
    TempDir dir("positions");
    CHECK(error_code([&] { train_stage3(tiny_config("3"), data, tiny_fixture().stage2b, dir.path() / "s3.ckpt"); }) ==
          "invalid_dataset");
}

TEST_CASE("synthesis needs a stage 2b or stage 3 model") {
    const auto& data = tiny_data();
    const auto& splats = data.object_splats(data.manifest.objects.front().object_id);
    const auto s1 = load_checkpoint(tiny_fixture().stage1);
    CHECK(error_code([&] { synthesis_condition(s1.model, splats, Eigen::Vector3d::Zero()); }) == "stage_mismatch");
    const auto s3 = load_checkpoint(tiny_fixture().stage3);
    const auto a = generate_waveform(s3.model, splats, Eigen::Vector3d(0.1, 0.0, 0.0), 4, 7, 4);
    CHECK(a.size() == static_cast<size_t>(audio::kNumSamples));
    CHECK(a == generate_waveform(s3.model, splats, Eigen::Vector3d(0.1, 0.0, 0.0), 4, 7, 4));
    const auto latent = generate_latent(s3.model, splats, Eigen::Vector3d::Zero(), 3, 1);
    CHECK(latent.rows() == 188);
    CHECK(latent.cols() == 64);
}

TEST_CASE("held-out impacts pair each record with the farthest test position") {
    const auto& data = tiny_data();
    const auto impacts = held_out_impacts(data, 2);
    CHECK(impacts.size() == 2 * data.manifest.objects_in(oracle::Split::test).size());
    for (const auto& h : impacts) {
        CHECK(h.record.split == oracle::Split::test);
        double best = 0.0;
        for (const auto& r : data.records(oracle::Split::test)) {
            if (r.object_id == h.record.object_id) best = std::max(best, (r.position - h.record.position).norm());
        }
        CHECK((h.p_far - h.record.position).norm() == doctest::Approx(best));
    }
}

TEST_CASE("retrieval accuracy is a fraction") {
    const auto ck = load_checkpoint(tiny_fixture().stage2a);
    const double acc = retrieval_accuracy(ck.model, tiny_data(), oracle::Split::test);
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
}

TEST_CASE("preprocess cache matches direct decoding") {
    TempDir dir("cache");
    std::filesystem::copy(tiny_fixture().manifest.parent_path(), dir.path() / "data",
                          std::filesystem::copy_options::recursive);
    const auto manifest = dir.path() / "data" / "manifest.json";
    const auto direct = prepare_data(manifest);
    preprocess_dataset(manifest, 2.0);
    CHECK(std::filesystem::exists(dir.path() / "data" / "preprocessed.sgck"));
    CHECK(line_count(dir.path() / "data" / "poses.csv") == 73);
    const auto cached = prepare_data(manifest);
    CHECK(cached.log_mels == direct.log_mels);
    CHECK(cached.splats == direct.splats);
    CHECK(cached.stats.mean == direct.stats.mean);
    CHECK(cached.vocab.words() == direct.vocab.words());
}
