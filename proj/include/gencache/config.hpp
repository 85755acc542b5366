#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gencache/adaptive_policy.hpp"
#include "gencache/cost_model.hpp"
#include "gencache/llm_gateway.hpp"
#include "gencache/semantic_cache.hpp"

namespace gencache {

struct TierConfig {
    std::string id = "local";
    Tier role = Tier::l1;
    std::optional<std::string> upstream;  // base URL of this L1's L2
    std::vector<std::string> peers;       // L2 only
    std::size_t max_peer_fanout = 3;
    std::chrono::milliseconds peer_timeout{1000};
    std::chrono::milliseconds upstream_timeout{2500};
    bool inclusion = false;
};

struct ProviderConfig {
    std::string id;
    std::string kind = "mock";  // "mock" or "http"
    std::vector<std::string> models;
    std::chrono::milliseconds timeout{30'000};
    // mock
    std::string mode = "echo";
    std::chrono::milliseconds latency{0};
    double failure_rate = 0.0;
    std::uint64_t seed = 42;
    std::optional<std::string> canned_file;
    // http
    std::string base_url;
    std::string path = "/v1/completions";
    std::string auth_header;
};

struct EmbedderConfig {
    std::string kind = "deterministic";  // or "external"
    std::size_t dim = kDefaultEmbeddingDim;
    std::string base_url;
    std::string path = "/embed";
    std::chrono::milliseconds timeout{5000};
};

struct LookupDefaults {
    double single_margin = 0.20;    // t_single = t_s - single_margin
    double combined_margin = 0.40;  // t_combined = t_s + combined_margin
    GenMode gen_mode = GenMode::secondary;
    std::size_t max_components = kDefaultMaxComponents;

    LookupPolicy policy_for(double t_s) const {
        return LookupPolicy::around(t_s, single_margin, combined_margin, gen_mode, max_components);
    }
};

// Parameters adjustable at run time through GET/PUT /v1/config. Serialized as
// one flat JSON object.
struct RuntimeConfig {
    PolicyParams policy;
    LookupDefaults lookup;

    void validate() const;
    nlohmann::json to_json() const;
    // Returns a copy with `patch` applied; throws Error(invalid_argument) naming
    // the first bad field and leaves *this untouched.
    RuntimeConfig patched(const nlohmann::json& patch) const;
};

struct ServiceConfig {
    TierConfig tier;
    std::vector<ProviderConfig> providers;
    std::vector<ModelPricing> pricing = default_pricing();
    RuntimeConfig runtime;
    LadderParams ladder;
    std::size_t capacity = 100'000;
    EmbedderConfig embedder;
    std::optional<std::string> snapshot_path;
    std::optional<std::string> static_dir;

    static ServiceConfig from_json(const nlohmann::json& j);
    // Throws Error(io) when unreadable, Error(invalid_argument) on bad content.
    static ServiceConfig load(const std::filesystem::path& path);
};

std::shared_ptr<Embedder> make_embedder(const EmbedderConfig& config);
std::shared_ptr<Provider> make_provider(const ProviderConfig& config);

}  // namespace gencache
