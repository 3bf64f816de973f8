#include "sonicgauss/serve/service.hpp"

#include "sonicgauss/audio/codec.hpp"
#include "sonicgauss/audio/wav.hpp"
#include "sonicgauss/common/error.hpp"
#include "sonicgauss/oracle/dataset.hpp"
#include "sonicgauss/pipeline/train.hpp"
#include "sonicgauss/splat/cloud_io.hpp"

#include "httplib.h"

#include <png.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <regex>

namespace sonicgauss::serve {

using nlohmann::json;
namespace fs = std::filesystem;

Catalog Catalog::from_manifest(const fs::path& manifest_path) {
    const auto manifest = oracle::load_manifest(manifest_path);
    Catalog c;
    for (const auto& o : manifest.objects) {
        CatalogEntry e;
        e.object_id = o.object_id;
        e.cloud = splat::load_cloud(manifest.resolve(o.cloud_path));
        e.material_label = e.cloud.material_label.value_or(o.material_name);
        e.serialized = encoders::serialize_splats(e.cloud);
        c.add(std::move(e));
    }
    return c;
}

void Catalog::add(CatalogEntry entry) {
    const std::string id = entry.object_id;
    entries_.insert_or_assign(id, std::move(entry));
}

const CatalogEntry& Catalog::at(const std::string& object_id) const {
    auto it = entries_.find(object_id);
    if (it == entries_.end()) {
        throw Error("unknown_object", "unknown object: " + object_id, "object_id");
    }
    return it->second;
}

SynthesisRequest SynthesisRequest::from_json(const json& j) {
    if (!j.is_object()) {
        throw Error("malformed_request", "request body must be a JSON object", "body");
    }
    for (const auto& [key, value] : j.items()) {
        if (key != "object_id" && key != "position" && key != "steps" && key != "seed") {
            throw Error("unknown_field", "unknown request field: " + key, key);
        }
    }
    SynthesisRequest r;
    if (!j.contains("object_id") || !j["object_id"].is_string()) {
        throw Error("invalid_object_id", "object_id must be a string", "object_id");
    }
    r.object_id = j["object_id"].get<std::string>();
    if (!j.contains("position") || !j["position"].is_array() || j["position"].size() != 3) {
        throw Error("invalid_position", "position must be an array of 3 numbers", "position");
    }
    for (int i = 0; i < 3; ++i) {
        const auto& v = j["position"][static_cast<size_t>(i)];
        if (!v.is_number() || !std::isfinite(v.get<double>())) {
            throw Error("invalid_position", "position entries must be finite numbers", "position");
        }
        r.position[i] = v.get<double>();
    }
    if (j.contains("steps")) {
        const auto& s = j["steps"];
        if (!s.is_number_integer() || s.get<long long>() < 1 || s.get<long long>() > kMaxSteps) {
            throw Error("invalid_steps", "steps must be an integer in [1, 500]", "steps");
        }
        r.steps = s.get<int>();
    }
    if (j.contains("seed") && !j["seed"].is_null()) {
        const auto& s = j["seed"];
        if (s.is_number_unsigned()) {
            r.seed = s.get<std::uint64_t>();
        } else if (s.is_number_integer() && s.get<long long>() >= 0) {
            r.seed = static_cast<std::uint64_t>(s.get<long long>());
        } else {
            throw Error("invalid_seed", "seed must be a non-negative integer", "seed");
        }
    }
    return r;
}

json SynthesisResponse::to_json() const {
    json j;
    j["audio"] = base64_encode(wav);
    j["mel_png"] = base64_encode(mel_png);
    j["latency_ms"] = latency_ms;
    j["stage"] = stage;
    j["position_unused"] = position_unused;
    return j;
}

Service::Service(pipeline::Model model, Catalog catalog, int griffin_lim_iters)
    : model_(std::move(model)), catalog_(std::move(catalog)), griffin_lim_iters_(griffin_lim_iters) {
    if (model_.stage != "stage3" && model_.stage != "stage2b") {
        throw Error("stage_mismatch", "service needs a stage3 or stage2b checkpoint, got '" + model_.stage + "'",
                    "checkpoint");
    }
}

json Service::list_objects() const {
    json out = json::array();
    for (const auto& [id, e] : catalog_.entries()) {
        const auto& c = e.cloud;
        out.push_back({{"object_id", id},
                       {"material_label", e.material_label},
                       {"splat_count", c.splats.size()},
                       {"bbox",
                        {{"min", {c.bbox_min.x(), c.bbox_min.y(), c.bbox_min.z()}},
                         {"max", {c.bbox_max.x(), c.bbox_max.y(), c.bbox_max.z()}}}}});
    }
    return out;
}

namespace {

template <typename T>
void put_le(std::string& out, T value) {
    static_assert(std::endian::native == std::endian::little);
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

std::uint8_t to_byte(float c) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0F, 1.0F) * 255.0F));
}

}  // namespace

std::string Service::splats_binary(const std::string& object_id) const {
    const auto& splats = catalog_.at(object_id).cloud.splats;
    std::string out;
    out.reserve(4 + splats.size() * kSplatRecordBytes);
    put_le(out, static_cast<std::uint32_t>(splats.size()));
    for (const auto& s : splats) {
        for (int i = 0; i < 3; ++i) {
            put_le(out, s.position[i]);
        }
        for (int i = 0; i < 3; ++i) {
            out.push_back(static_cast<char>(to_byte(s.color[i])));
        }
        put_le(out, s.scale.mean());
    }
    return out;
}

SynthesisResponse Service::synthesize(const SynthesisRequest& request) const {
    const auto start = std::chrono::steady_clock::now();
    const auto& entry = catalog_.at(request.object_id);
    if (request.steps < 1 || request.steps > kMaxSteps) {
        throw Error("invalid_steps", "steps must be an integer in [1, 500]", "steps");
    }
    const auto lo = entry.cloud.bbox_min.cast<double>().array() - kBoundsTolerance;
    const auto hi = entry.cloud.bbox_max.cast<double>().array() + kBoundsTolerance;
    if ((request.position.array() < lo).any() || (request.position.array() > hi).any()) {
        throw Error("position_out_of_bounds", "position lies outside the object bounding box", "position");
    }
    const auto wave = pipeline::generate_waveform(model_, entry.serialized, request.position, request.steps,
                                                  request.seed.value_or(kDefaultSeed), griffin_lim_iters_);
    SynthesisResponse r;
    const auto bytes = audio::encode_wav(wave, audio::kSampleRate);
    r.wav.assign(bytes.begin(), bytes.end());
    r.mel_png = mel_png(audio::log_mel(wave).transpose());
    r.stage = model_.stage;
    r.position_unused = model_.stage == "stage2b";
    r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return r;
}

json Service::health() const {
    return {{"status", "ok"}, {"stage", model_.stage}, {"objects", catalog_.entries().size()}};
}

namespace {

void png_append(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), length);
}

void png_flush(png_structp /*png*/) {}

}  // namespace

std::string mel_png(const nn::Matrix& log_mel) {
    const auto height = static_cast<png_uint_32>(log_mel.rows());
    const auto width = static_cast<png_uint_32>(log_mel.cols());
    if (height == 0 || width == 0 || !log_mel.allFinite()) {
        throw Error("invalid_latent", "log-mel must be non-empty and finite", "mel");
    }
    const double lo = log_mel.minCoeff();
    const double span = std::max(log_mel.maxCoeff() - lo, 1e-12);
    std::vector<png_byte> pixels(static_cast<size_t>(height) * width);
    for (png_uint_32 y = 0; y < height; ++y) {
        const auto band = static_cast<Eigen::Index>(height - 1 - y);
        for (png_uint_32 x = 0; x < width; ++x) {
            const double v = (log_mel(band, static_cast<Eigen::Index>(x)) - lo) / span;
            pixels[static_cast<size_t>(y) * width + x] = static_cast<png_byte>(std::lround(v * 255.0));
        }
    }
    std::string out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error("encode_failed", "could not allocate PNG writer", "mel_png");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("encode_failed", "PNG encoding failed", "mel_png");
    }
    png_set_write_fn(png, &out, png_append, png_flush);
    png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (png_uint_32 y = 0; y < height; ++y) {
        png_write_row(png, &pixels[static_cast<size_t>(y) * width]);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

std::string base64_encode(const std::string& bytes) { return httplib::detail::base64_encode(bytes); }

std::string base64_decode(const std::string& text) {
    auto value = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    std::string out;
    unsigned buffer = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=') {
            break;
        }
        const int v = value(c);
        if (v < 0) {
            throw Error("malformed_request", "invalid base64 character", "base64");
        }
        buffer = (buffer << 6) | static_cast<unsigned>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<char>((buffer >> bits) & 0xFF));
        }
    }
    return out;
}

int http_status(const std::string& code) {
    if (code == "unknown_object" || code == "not_found") return 404;
    if (code == "method_not_allowed") return 405;
    if (code == "internal_error" || code == "encode_failed") return 500;
    return 400;
}

json error_body(const Error& e) { return {{"code", e.code()}, {"field", e.field()}, {"message", e.what()}}; }

HttpReply route(const Service& service, const std::string& method, const std::string& path, const std::string& body) {
    static const std::regex splats_path(R"(^/objects/([^/]+)/splats$)");
    auto reply_json = [](int status, const json& j) { return HttpReply{status, "application/json", j.dump()}; };
    try {
        std::smatch m;
        const bool known = path == "/objects" || path == "/synthesize" || path == "/healthz" ||
                           std::regex_match(path, m, splats_path);
        if (!known) {
            throw Error("not_found", "no route for " + path, "path");
        }
        const std::string want = path == "/synthesize" ? "POST" : "GET";
        if (method != want) {
            throw Error("method_not_allowed", method + " not allowed on " + path, "method");
        }
        if (path == "/objects") {
            return reply_json(200, service.list_objects());
        }
        if (path == "/healthz") {
            return reply_json(200, service.health());
        }
        if (path == "/synthesize") {
            json j;
            try {
                j = json::parse(body);
            } catch (const json::parse_error&) {
                throw Error("malformed_request", "request body is not valid JSON", "body");
            }
            return reply_json(200, service.synthesize(SynthesisRequest::from_json(j)).to_json());
        }
        return {200, "application/octet-stream", service.splats_binary(m[1].str())};
    } catch (const Error& e) {
        return reply_json(http_status(e.code()), error_body(e));
    } catch (const std::exception& e) {
        return reply_json(500, error_body(Error("internal_error", e.what())));
    }
}

struct HttpServer::Impl {
    std::shared_ptr<const Service> service;
    httplib::Server server;
};

HttpServer::HttpServer(std::shared_ptr<const Service> service) : impl_(std::make_unique<Impl>()) {
    impl_->service = std::move(service);
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
        const HttpReply r = route(*impl_->service, req.method, req.path, req.body);
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    const std::string any = R"(/.*)";
    impl_->server.Get(any, handler);
    impl_->server.Post(any, handler);
    impl_->server.Put(any, handler);
    impl_->server.Delete(any, handler);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host);
        if (bound < 0) {
            throw Error("bind_failed", "could not bind " + host, "port");
        }
        return bound;
    }
    if (!impl_->server.bind_to_port(host, port)) {
        throw Error("bind_failed", "could not bind " + host + ":" + std::to_string(port), "port");
    }
    return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
    if (impl_) {
        impl_->server.stop();
    }
}

fs::path checkpoint_path(const fs::path& fallback) {
    if (const char* env = std::getenv("SONICGAUSS_CHECKPOINT"); env != nullptr && *env != '\0') {
        return env;
    }
    return fallback;
}

}  // namespace sonicgauss::serve
