#pragma once

#include "sonicgauss/pipeline/model.hpp"
#include "sonicgauss/splat/gaussian_cloud.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

namespace sonicgauss::serve {

struct CatalogEntry {
    std::string object_id;
    std::string material_label;
    splat::GaussianCloud cloud;  // normalized object coordinates
    nn::Matrix serialized;       // encoder input rows
};

// Objects the service can synthesize for, loaded from a dataset manifest.
class Catalog {
public:
    static Catalog from_manifest(const std::filesystem::path& manifest_path);
    void add(CatalogEntry entry);

    [[nodiscard]] const CatalogEntry& at(const std::string& object_id) const;
    [[nodiscard]] const std::map<std::string, CatalogEntry>& entries() const { return entries_; }

private:
    std::map<std::string, CatalogEntry> entries_;
};

constexpr int kDefaultSteps = 50;
constexpr int kMaxSteps = 500;
constexpr double kBoundsTolerance = 0.05;
constexpr std::uint64_t kDefaultSeed = 0;
// Per splat: 3 x f32 position, 3 x u8 color, f32 size.
constexpr std::size_t kSplatRecordBytes = 3 * 4 + 3 + 4;

struct SynthesisRequest {
    std::string object_id;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    int steps = kDefaultSteps;
    std::optional<std::uint64_t> seed;

    // Shape checks only; bounds depend on the catalog.
    static SynthesisRequest from_json(const nlohmann::json& j);
};

struct SynthesisResponse {
    std::string wav;  // raw bytes
    std::string mel_png;
    double latency_ms = 0.0;
    std::string stage;
    bool position_unused = false;

    [[nodiscard]] nlohmann::json to_json() const;
};

// Inference over an immutable model and catalog; safe to call concurrently.
class Service {
public:
    Service(pipeline::Model model, Catalog catalog, int griffin_lim_iters = 60);

    [[nodiscard]] nlohmann::json list_objects() const;
    [[nodiscard]] std::string splats_binary(const std::string& object_id) const;
    [[nodiscard]] SynthesisResponse synthesize(const SynthesisRequest& request) const;
    [[nodiscard]] nlohmann::json health() const;

    [[nodiscard]] const pipeline::Model& model() const { return model_; }

private:
    pipeline::Model model_;
    Catalog catalog_;
    int griffin_lim_iters_;
};

// 8-bit grayscale PNG of a log-mel (bins x frames), high bands at the top.
std::string mel_png(const nn::Matrix& log_mel);
std::string base64_encode(const std::string& bytes);
std::string base64_decode(const std::string& text);

// HTTP status for a service error code.
int http_status(const std::string& code);
nlohmann::json error_body(const Error& e);

struct HttpReply {
    int status = 200;
    std::string content_type;
    std::string body;
};

// Routes one request without sockets; the server and tests share it.
HttpReply route(const Service& service, const std::string& method, const std::string& path, const std::string& body);

class HttpServer {
public:
    explicit HttpServer(std::shared_ptr<const Service> service);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    // Binds (port 0 picks a free port) and returns the bound port.
    int bind(const std::string& host, int port);
    // Blocks until stop().
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Checkpoint path from SONICGAUSS_CHECKPOINT when set, else `fallback`.
std::filesystem::path checkpoint_path(const std::filesystem::path& fallback);

}  // namespace sonicgauss::serve
