#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "gencache/adaptive_policy.hpp"
#include "gencache/config.hpp"
#include "gencache/cost_model.hpp"
#include "gencache/hierarchy.hpp"
#include "gencache/llm_gateway.hpp"
#include "gencache/semantic_cache.hpp"
#include "gencache/wire.hpp"

namespace httplib {
class Server;
}

namespace gencache {

// An Error raised while serving a query, with the resolution trace so far.
class TracedError : public Error {
public:
    TracedError(const Error& cause, std::vector<wire::TraceHop> trace)
        : Error(cause.code(), cause.what()), trace_(std::move(trace)) {}
    const std::vector<wire::TraceHop>& trace() const noexcept { return trace_; }

private:
    std::vector<wire::TraceHop> trace_;
};

struct ServiceParts {
    // Replace the configured providers / embedder / tier transport (tests).
    std::vector<std::shared_ptr<Provider>> providers;
    std::shared_ptr<Embedder> embedder;
    TierClientFactory tier_clients;
};

class Service {
public:
    explicit Service(ServiceConfig config, ServiceParts parts = {});

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Throws Error(invalid_argument|not_found) before any counting for bad
    // requests; TracedError when serving fails.
    wire::QueryResponse query(const wire::QueryRequest& request);
    wire::FeedbackAck feedback(const wire::FeedbackRequest& request);
    wire::StatsSnapshot stats() const;

    nlohmann::json config() const;
    // Applies all fields or none; throws Error(invalid_argument) naming the field.
    nlohmann::json put_config(const nlohmann::json& patch);

    wire::CountResponse snapshot(const std::filesystem::path& path);
    // Missing file is Error(not_found).
    wire::CountResponse warm(const std::filesystem::path& path);

    wire::LookupResponse cache_lookup(const wire::LookupRequest& request, bool peer_hop);
    wire::InsertResponse cache_insert(const wire::InsertRequest& request);

    const ServiceConfig& service_config() const noexcept { return config_; }
    SemanticCache& cache() noexcept { return *cache_; }
    Gateway& gateway() noexcept { return *gateway_; }
    AdaptivePolicy& policy() noexcept { return *policy_; }
    Hierarchy& hierarchy() noexcept { return *hierarchy_; }
    CostModel& cost_model() noexcept { return *cost_model_; }

private:
    struct Served {
        std::string provider_id;
        std::string model_id;
    };

    LookupDefaults lookup_defaults() const;
    std::string remember_hit(const std::optional<EntryId>& entry, Served served);
    void count_hit(wire::Source source, double charged);

    ServiceConfig config_;
    std::shared_ptr<CostModel> cost_model_;
    std::shared_ptr<Gateway> gateway_;
    std::shared_ptr<AdaptivePolicy> policy_;
    std::shared_ptr<SemanticCache> cache_;
    std::unique_ptr<Hierarchy> hierarchy_;

    mutable std::mutex config_mutex_;
    LookupDefaults lookup_;

    mutable std::mutex stats_mutex_;
    std::uint64_t total_ = 0;
    wire::HitCounts hits_;
    std::uint64_t llm_served_ = 0;
    std::uint64_t errors_ = 0;
    double charged_sum_ = 0.0;
    std::unordered_map<std::string, Served> served_hits_;
    std::uint64_t next_ephemeral_ = 1;
};

// REST frontend over a Service.
class HttpFrontend {
public:
    explicit HttpFrontend(Service& service, std::optional<std::string> static_dir = std::nullopt);
    ~HttpFrontend();

    HttpFrontend(const HttpFrontend&) = delete;
    HttpFrontend& operator=(const HttpFrontend&) = delete;

    // Returns false when the address cannot be bound. Port 0 picks a free port.
    bool bind(const std::string& host, int port);
    int port() const noexcept { return port_; }
    // Blocks until stop().
    void run();
    void stop();

private:
    void install_routes();

    Service& service_;
    std::unique_ptr<httplib::Server> server_;
    int port_ = -1;
};

// Body and status for an exception escaping a handler.
std::pair<int, wire::ErrorBody> error_response(const std::exception& e);

}  // namespace gencache
