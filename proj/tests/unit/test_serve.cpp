#include "doctest.h"

#include "sonicgauss/audio/wav.hpp"
#include "sonicgauss/serve/service.hpp"
#include "sonicgauss/splat/cloud_io.hpp"
#include "tiny_fixture.hpp"

#include "httplib.h"

#include <cstdlib>
#include <cstring>
#include <thread>

using namespace sonicgauss;
using namespace sonicgauss::serve;
using nlohmann::json;
using testing::tiny_fixture;

namespace {

constexpr int kTestGriffinLim = 4;

std::shared_ptr<const Service> service_for(const std::filesystem::path& checkpoint) {
    return std::make_shared<const Service>(pipeline::load_checkpoint(checkpoint).model,
                                           Catalog::from_manifest(tiny_fixture().manifest), kTestGriffinLim);
}

const Service& stage3_service() {
    static const auto s = service_for(tiny_fixture().stage3);
    return *s;
}

std::string first_object() { return stage3_service().list_objects().at(0).at("object_id").get<std::string>(); }

json request(const std::string& object_id, const std::vector<double>& p, int steps = 3, std::uint64_t seed = 5) {
    return {{"object_id", object_id}, {"position", p}, {"steps", steps}, {"seed", seed}};
}

json error_of(const HttpReply& r) { return json::parse(r.body); }

}  // namespace

TEST_CASE("object listing matches the catalog") {
    const auto& f = tiny_fixture();
    const auto manifest = oracle::load_manifest(f.manifest);
    const auto objects = stage3_service().list_objects();
    REQUIRE(objects.size() == manifest.objects.size());
    for (const auto& o : objects) {
        const auto id = o.at("object_id").get<std::string>();
        const auto& obj = *std::find_if(manifest.objects.begin(), manifest.objects.end(),
                                        [&](const auto& x) { return x.object_id == id; });
        const auto cloud = splat::load_cloud(manifest.resolve(obj.cloud_path));
        CHECK(o.at("splat_count") == cloud.splats.size());
        CHECK(o.at("material_label") == obj.material_name);
        for (int a = 0; a < 3; ++a) {
            CHECK(o["bbox"]["min"][a].get<double>() == doctest::Approx(cloud.bbox_min[a]));
            CHECK(o["bbox"]["max"][a].get<double>() == doctest::Approx(cloud.bbox_max[a]));
        }
    }
}

TEST_CASE("splat stream layout") {
    const auto id = first_object();
    const auto catalog = Catalog::from_manifest(tiny_fixture().manifest);
    const auto& entry = catalog.at(id);
    const auto bytes = stage3_service().splats_binary(id);
    const auto n = entry.cloud.splats.size();
    REQUIRE(bytes.size() == 4 + n * kSplatRecordBytes);
    std::uint32_t count = 0;
    std::memcpy(&count, bytes.data(), 4);
    CHECK(count == n);
    float x = 0.0F;
    std::memcpy(&x, bytes.data() + 4, 4);
    CHECK(x == entry.cloud.splats[0].position.x());
    float size = 0.0F;
    std::memcpy(&size, bytes.data() + 4 + 15, 4);
    CHECK(size == doctest::Approx(entry.cloud.splats[0].scale.mean()));
    CHECK_THROWS_AS(static_cast<void>(stage3_service().splats_binary("nope")), Error);
}

TEST_CASE("synthesis is byte-deterministic for a fixed seed") {
    const auto id = first_object();
    const auto body = request(id, {0.1, 0.0, -0.1}).dump();
    const auto a = route(stage3_service(), "POST", "/synthesize", body);
    const auto b = route(stage3_service(), "POST", "/synthesize", body);
    REQUIRE(a.status == 200);
    const auto ja = json::parse(a.body);
    const auto jb = json::parse(b.body);
    CHECK(ja["audio"] == jb["audio"]);
    CHECK(ja["mel_png"] == jb["mel_png"]);
    CHECK(ja["stage"] == "stage3");
    CHECK(ja["position_unused"] == false);
    CHECK(ja["latency_ms"].get<double>() >= 0.0);

    const auto wav_bytes = base64_decode(ja["audio"].get<std::string>());
    const auto wav = audio::parse_wav({reinterpret_cast<const unsigned char*>(wav_bytes.data()), wav_bytes.size()});
    CHECK(wav.samples.size() == 48000);
    CHECK(wav.sample_rate == 16000);
    const auto png = base64_decode(ja["mel_png"].get<std::string>());
    CHECK(png.substr(0, 8) == std::string("\x89PNG\r\n\x1a\n", 8));
    // Frames run left to right, bands bottom to top.
    CHECK(static_cast<unsigned char>(png[19]) == 188);
    CHECK(static_cast<unsigned char>(png[23]) == 64);

    const auto other = json::parse(route(stage3_service(), "POST", "/synthesize", request(id, {0.1, 0.0, -0.1}, 3, 6).dump()).body);
    CHECK(other["audio"] != ja["audio"]);
}

TEST_CASE("synthesis errors are structured") {
    const auto id = first_object();
    struct Case {
        json body;
        int status;
        std::string code;
        std::string field;
    };
    const std::vector<Case> cases{
        {request("obj_missing", {0, 0, 0}), 404, "unknown_object", "object_id"},
        {request(id, {0, 0}), 400, "invalid_position", "position"},
        {{{"object_id", id}, {"position", {0, "a", 0}}}, 400, "invalid_position", "position"},
        {request(id, {0.9, 0, 0}), 400, "position_out_of_bounds", "position"},
        {request(id, {0, 0, 0}, 0), 400, "invalid_steps", "steps"},
        {request(id, {0, 0, 0}, 501), 400, "invalid_steps", "steps"},
        {{{"object_id", id}, {"position", {0, 0, 0}}, {"seed", -1}}, 400, "invalid_seed", "seed"},
        {{{"object_id", id}, {"position", {0, 0, 0}}, {"colour", 1}}, 400, "unknown_field", "colour"},
        {{{"position", {0, 0, 0}}}, 400, "invalid_object_id", "object_id"},
        {json::array(), 400, "malformed_request", "body"},
    };
    for (const auto& c : cases) {
        CAPTURE(c.body.dump());
        const auto r = route(stage3_service(), "POST", "/synthesize", c.body.dump());
        CHECK(r.status == c.status);
        CHECK(r.content_type == "application/json");
        const auto e = error_of(r);
        CHECK(e["code"] == c.code);
        CHECK(e["field"] == c.field);
        CHECK_FALSE(e["message"].get<std::string>().empty());
    }
    const auto bad_json = route(stage3_service(), "POST", "/synthesize", "{oops");
    CHECK(bad_json.status == 400);
    CHECK(error_of(bad_json)["code"] == "malformed_request");
}

TEST_CASE("routing of paths and methods") {
    CHECK(route(stage3_service(), "GET", "/objects", "").status == 200);
    const auto health = json::parse(route(stage3_service(), "GET", "/healthz", "").body);
    CHECK(health["status"] == "ok");
    CHECK(health["stage"] == "stage3");
    const auto missing = route(stage3_service(), "GET", "/nowhere", "");
    CHECK(missing.status == 404);
    CHECK(error_of(missing)["field"] == "path");
    const auto wrong = route(stage3_service(), "GET", "/synthesize", "");
    CHECK(wrong.status == 405);
    CHECK(error_of(wrong)["code"] == "method_not_allowed");
    CHECK(route(stage3_service(), "POST", "/objects", "").status == 405);
    const auto splats = route(stage3_service(), "GET", "/objects/" + first_object() + "/splats", "");
    CHECK(splats.status == 200);
    CHECK(splats.content_type == "application/octet-stream");
    const auto no_obj = route(stage3_service(), "GET", "/objects/ghost/splats", "");
    CHECK(no_obj.status == 404);
    CHECK(error_of(no_obj)["code"] == "unknown_object");
}

TEST_CASE("request order does not change responses") {
    const auto id = first_object();
    const auto a = request(id, {0.1, 0.1, 0.0}).dump();
    const auto b = request(id, {-0.2, 0.0, 0.1}).dump();
    const auto a1 = route(stage3_service(), "POST", "/synthesize", a);
    const auto b1 = route(stage3_service(), "POST", "/synthesize", b);
    const auto b2 = route(stage3_service(), "POST", "/synthesize", b);
    const auto a2 = route(stage3_service(), "POST", "/synthesize", a);
    CHECK(json::parse(a1.body)["audio"] == json::parse(a2.body)["audio"]);
    CHECK(json::parse(b1.body)["audio"] == json::parse(b2.body)["audio"]);
}

TEST_CASE("stage 2b service flags the position as unused") {
    const auto s = service_for(tiny_fixture().stage2b);
    const auto r = json::parse(route(*s, "POST", "/synthesize", request(first_object(), {0, 0, 0}).dump()).body);
    CHECK(r["stage"] == "stage2b");
    CHECK(r["position_unused"] == true);
    CHECK_THROWS_AS(service_for(tiny_fixture().stage1), Error);
}

TEST_CASE("base64 round trip") {
    for (const std::string& s : std::vector<std::string>{"", "a", "ab", "abc", "abcd", std::string("\0\xff\x10", 3)}) {
        CHECK(base64_decode(base64_encode(s)) == s);
    }
    CHECK(base64_encode("Man") == "TWFu");
    CHECK(base64_encode("Ma") == "TWE=");
}

TEST_CASE("mel image dimensions") {
    const auto png = mel_png(nn::Matrix::Zero(64, 188));
    REQUIRE(png.size() > 24);
    auto be32 = [&](size_t off) {
        return (static_cast<std::uint32_t>(static_cast<unsigned char>(png[off])) << 24) |
               (static_cast<std::uint32_t>(static_cast<unsigned char>(png[off + 1])) << 16) |
               (static_cast<std::uint32_t>(static_cast<unsigned char>(png[off + 2])) << 8) |
               static_cast<std::uint32_t>(static_cast<unsigned char>(png[off + 3]));
    };
    CHECK(png.substr(12, 4) == "IHDR");
    CHECK(be32(16) == 188);
    CHECK(be32(20) == 64);
}

TEST_CASE("HTTP status mapping") {
    CHECK(http_status("unknown_object") == 404);
    CHECK(http_status("invalid_position") == 400);
    CHECK(http_status("method_not_allowed") == 405);
    CHECK(http_status("internal_error") == 500);
}

TEST_CASE("HTTP server answers over a socket") {
    HttpServer server(service_for(tiny_fixture().stage3));
    const int port = server.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    std::thread th([&] { server.listen(); });
    httplib::Client client("127.0.0.1", port);
    client.set_read_timeout(120, 0);
    auto objects = client.Get("/objects");
    REQUIRE(objects);
    CHECK(objects->status == 200);
    CHECK(json::parse(objects->body).size() == stage3_service().list_objects().size());
    auto synth = client.Post("/synthesize", request(first_object(), {0, 0, 0}).dump(), "application/json");
    REQUIRE(synth);
    CHECK(synth->status == 200);
    CHECK(json::parse(synth->body)["audio"] ==
          json::parse(route(stage3_service(), "POST", "/synthesize", request(first_object(), {0, 0, 0}).dump()).body)["audio"]);
    auto bad = client.Post("/synthesize", "[]", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    auto del = client.Delete("/objects");
    REQUIRE(del);
    CHECK(del->status == 405);
    server.stop();
    th.join();
}

TEST_CASE("checkpoint path honours the environment") {
    ::unsetenv("SONICGAUSS_CHECKPOINT");
    CHECK(checkpoint_path("a.ckpt") == "a.ckpt");
    ::setenv("SONICGAUSS_CHECKPOINT", "/tmp/b.ckpt", 1);
    CHECK(checkpoint_path("a.ckpt") == "/tmp/b.ckpt");
    ::unsetenv("SONICGAUSS_CHECKPOINT");
}
