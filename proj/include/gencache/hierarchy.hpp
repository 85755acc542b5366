#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "gencache/config.hpp"
#include "gencache/semantic_cache.hpp"
#include "gencache/wire.hpp"

namespace gencache {

// Header marking a lookup issued by an L2 to one of its peers; the receiver
// answers from its own store only.
inline constexpr const char* kHopHeader = "X-Gencache-Hop";
inline constexpr const char* kHopPeer = "peer";

// Transport to one remote tier. Implementations throw Error (unavailable,
// timeout, schema) on failure.
class TierClient {
public:
    virtual ~TierClient() = default;
    virtual const std::string& address() const noexcept = 0;
    virtual wire::LookupResponse lookup(const wire::LookupRequest& request, bool peer_hop,
                                        std::chrono::milliseconds timeout) = 0;
    virtual wire::InsertResponse insert(const wire::InsertRequest& request, std::chrono::milliseconds timeout) = 0;
};

class HttpTierClient final : public TierClient {
public:
    explicit HttpTierClient(std::string base_url);
    const std::string& address() const noexcept override { return base_url_; }
    wire::LookupResponse lookup(const wire::LookupRequest& request, bool peer_hop,
                                std::chrono::milliseconds timeout) override;
    wire::InsertResponse insert(const wire::InsertRequest& request, std::chrono::milliseconds timeout) override;

private:
    std::string base_url_;
};

using TierClientFactory = std::function<std::shared_ptr<TierClient>(const std::string& address)>;

struct ResolveContext {
    LookupPolicy policy;  // carries the effective threshold to every hop
    CacheScope scope;
    LookupOptions options;

    double effective_ts() const noexcept { return policy.t_s(); }
};

struct Resolution {
    LookupOutcome outcome;
    wire::Source source = wire::Source::llm;  // meaningful only on a hit
    std::vector<wire::TraceHop> trace;
    // Entry in this tier that now holds the served answer (the hit itself, or
    // the promoted copy of a remote hit).
    std::optional<EntryId> local_entry;
    std::string served_by;  // "l1", "l2" or "peer:<address>"
};

// One tier's view of the cache hierarchy: its own store plus, for an L1, the
// upstream L2 and, for an L2, its peers.
class Hierarchy {
public:
    Hierarchy(TierConfig config, std::shared_ptr<SemanticCache> local, TierClientFactory factory = {});
    ~Hierarchy();

    Hierarchy(const Hierarchy&) = delete;
    Hierarchy& operator=(const Hierarchy&) = delete;

    const TierConfig& config() const noexcept { return config_; }
    SemanticCache& local() noexcept { return *local_; }

    // Local store, then upstream (L1) or peers (L2). Remote failures count as
    // misses at that hop and never propagate.
    Resolution resolve(std::string_view query_text, const ResolveContext& ctx);

    // Handler for POST /v1/cache/lookup. With peer_hop the peers are not consulted.
    wire::LookupResponse serve_lookup(const wire::LookupRequest& request, bool peer_hop);
    // Handler for POST /v1/cache/insert: local store only.
    wire::InsertResponse serve_insert(const wire::InsertRequest& request);

    // Stores an answer produced at this tier, forwarding it upstream when the
    // scope allows an L2 copy.
    std::optional<EntryId> store_response(std::string_view query_text, const ResponseRecord& record,
                                          CacheScope scope);
    std::optional<EntryId> store_synthesized(std::string_view query_text, std::string_view answer, CacheScope scope);

    std::uint64_t wire_calls() const noexcept { return wire_calls_.load(); }
    std::size_t pending_retries() const;
    // Blocks until the retry queue is empty (tests, shutdown).
    void drain_retries();

private:
    struct Pending {
        wire::InsertRequest request;
        std::chrono::steady_clock::time_point due;
    };

    wire::LookupResponse cascade_local_then_peers(const wire::LookupRequest& request, bool consult_peers,
                                                  const LookupOptions& options);
    std::vector<std::optional<wire::LookupResponse>> fan_out(const wire::LookupRequest& request);
    std::optional<EntryId> promote(std::string_view query_text, const wire::LookupResponse& remote, CacheScope scope,
                                   const std::string& origin);
    void push_upstream(wire::InsertRequest request);
    void retry_loop();

    TierConfig config_;
    std::shared_ptr<SemanticCache> local_;
    std::shared_ptr<TierClient> upstream_;
    std::vector<std::shared_ptr<TierClient>> peers_;
    std::atomic<std::uint64_t> wire_calls_{0};

    mutable std::mutex retry_mutex_;
    std::condition_variable retry_cv_;
    std::deque<Pending> retry_queue_;
    std::size_t in_flight_ = 0;
    bool stopping_ = false;
    std::thread retry_thread_;
};

}  // namespace gencache
