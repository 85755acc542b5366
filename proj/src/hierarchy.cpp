#include "gencache/hierarchy.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "gencache/error.hpp"

namespace gencache {

namespace {

constexpr auto kRetryDelay = std::chrono::milliseconds(200);

void set_timeouts(httplib::Client& client, std::chrono::milliseconds timeout) {
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
}

std::string post_json(const std::string& base_url, const char* path, const std::string& body,
                      const httplib::Headers& headers, std::chrono::milliseconds timeout) {
    httplib::Client client(base_url);
    set_timeouts(client, timeout);
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
        const auto err = res.error();
        const auto code = err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout
                              ? ErrorCode::timeout
                              : ErrorCode::unavailable;
        throw Error(code, base_url + path + ": " + httplib::to_string(err));
    }
    if (res->status != 200) {
        throw Error(ErrorCode::unavailable, base_url + path + ": HTTP " + std::to_string(res->status));
    }
    return res->body;
}

ResponseRecord promoted_record(const wire::LookupResponse& remote) {
    ResponseRecord rec;
    rec.text = remote.answer.value_or("");
    rec.created_at = now_ms();
    return rec;
}

}  // namespace

HttpTierClient::HttpTierClient(std::string base_url) : base_url_(std::move(base_url)) {}

wire::LookupResponse HttpTierClient::lookup(const wire::LookupRequest& request, bool peer_hop,
                                            std::chrono::milliseconds timeout) {
    httplib::Headers headers;
    if (peer_hop) headers.emplace(kHopHeader, kHopPeer);
    const auto body = post_json(base_url_, "/v1/cache/lookup", wire::encode(request).dump(), headers, timeout);
    return wire::decode_text<wire::LookupResponse>(body);
}

wire::InsertResponse HttpTierClient::insert(const wire::InsertRequest& request, std::chrono::milliseconds timeout) {
    const auto body = post_json(base_url_, "/v1/cache/insert", wire::encode(request).dump(), {}, timeout);
    return wire::decode_text<wire::InsertResponse>(body);
}

Hierarchy::Hierarchy(TierConfig config, std::shared_ptr<SemanticCache> local, TierClientFactory factory)
    : config_(std::move(config)), local_(std::move(local)) {
    if (!local_) throw Error(ErrorCode::invalid_argument, "hierarchy needs a local cache");
    if (config_.role == Tier::l1 && !config_.peers.empty()) {
        throw Error(ErrorCode::invalid_argument, "tier.peers: an l1 tier has no peers");
    }
    if (config_.peers.size() > config_.max_peer_fanout) {
        throw Error(ErrorCode::invalid_argument, "tier.peers: more peers than max_peer_fanout");
    }
    if (!factory) {
        factory = [](const std::string& address) { return std::make_shared<HttpTierClient>(address); };
    }
    if (config_.role == Tier::l1 && config_.upstream) upstream_ = factory(*config_.upstream);
    for (const auto& address : config_.peers) peers_.push_back(factory(address));
    if (upstream_) retry_thread_ = std::thread([this] { retry_loop(); });
}

Hierarchy::~Hierarchy() {
    {
        std::lock_guard lock(retry_mutex_);
        stopping_ = true;
    }
    retry_cv_.notify_all();
    if (retry_thread_.joinable()) retry_thread_.join();
}

Resolution Hierarchy::resolve(std::string_view query_text, const ResolveContext& ctx) {
    const double ts = ctx.effective_ts();
    Resolution res;
    res.outcome = local_->lookup(query_text, ctx.policy, ctx.options);
    res.trace.push_back({std::string(to_string(config_.role)), res.outcome.kind, ts, true});
    if (res.outcome.hit()) {
        res.served_by = std::string(to_string(config_.role));
        res.source = res.outcome.kind == OutcomeKind::generative_hit
                         ? wire::Source::generative
                         : (config_.role == Tier::l1 ? wire::Source::l1 : wire::Source::l2);
        if (res.outcome.kind == OutcomeKind::standard_hit) res.local_entry = res.outcome.components.front().entry_id;
        return res;
    }

    wire::LookupRequest request{std::string(query_text), ctx.policy, ctx.scope};
    std::optional<wire::LookupResponse> remote;
    std::string origin;
    if (upstream_) {
        ++wire_calls_;
        try {
            remote = upstream_->lookup(request, false, config_.upstream_timeout);
            for (const auto& hop : remote->trace) res.trace.push_back(hop);
            if (remote->trace.empty()) res.trace.push_back({"l2", remote->kind, ts, true});
        } catch (const Error& e) {
            spdlog::debug("upstream lookup failed: {}", e.what());
            res.trace.push_back({"l2", OutcomeKind::miss, ts, false});
            remote.reset();
        }
        origin = remote && remote->served_by ? *remote->served_by : "l2";
    } else if (!peers_.empty()) {
        auto results = fan_out(request);
        for (std::size_t i = 0; i < results.size(); ++i) {
            const auto& r = results[i];
            res.trace.push_back({"peer:" + peers_[i]->address(), r ? r->kind : OutcomeKind::miss, ts, r.has_value()});
            if (!remote && r && r->kind != OutcomeKind::miss) {
                remote = *r;
                origin = "peer:" + peers_[i]->address();
            }
        }
    }
    if (!remote || remote->kind == OutcomeKind::miss) {
        res.outcome = LookupOutcome{};
        return res;
    }

    res.outcome = wire::from_wire(*remote);
    res.served_by = origin;
    if (remote->kind == OutcomeKind::generative_hit) {
        res.source = wire::Source::generative;
    } else {
        res.source = origin.rfind("peer", 0) == 0 ? wire::Source::peer : wire::Source::l2;
    }
    res.local_entry = promote(query_text, *remote, ctx.scope, origin);
    return res;
}

wire::LookupResponse Hierarchy::serve_lookup(const wire::LookupRequest& request, bool peer_hop) {
    const double ts = request.policy.t_s();
    const std::string self(to_string(config_.role));
    const auto outcome = local_->lookup(request.query, request.policy);
    auto response = wire::to_wire(outcome);
    response.trace.push_back({self, outcome.kind, ts, true});
    if (outcome.hit()) {
        response.served_by = self;
        return response;
    }
    if (peer_hop || peers_.empty()) return response;

    auto results = fan_out(request);
    std::optional<std::size_t> winner;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        response.trace.push_back({"peer:" + peers_[i]->address(), r ? r->kind : OutcomeKind::miss, ts, r.has_value()});
        if (!winner && r && r->kind != OutcomeKind::miss) winner = i;
    }
    if (!winner) return response;

    const auto& hit = *results[*winner];
    const std::string origin = "peer:" + peers_[*winner]->address();
    response.kind = hit.kind;
    response.components = hit.components;
    response.answer = hit.answer;
    response.served_by = origin;
    promote(request.query, hit, request.scope, origin);
    return response;
}

wire::InsertResponse Hierarchy::serve_insert(const wire::InsertRequest& request) {
    std::optional<EntryId> id;
    if (request.response.synthesized) {
        id = local_->store_synthesized(request.query, request.response.text, request.scope);
    } else {
        id = local_->insert(request.query, request.response, request.scope, "remote");
    }
    return wire::InsertResponse{id ? std::optional<std::string>(id->str()) : std::nullopt};
}

std::vector<std::optional<wire::LookupResponse>> Hierarchy::fan_out(const wire::LookupRequest& request) {
    struct Shared {
        std::mutex mutex;
        std::condition_variable cv;
        std::vector<std::optional<wire::LookupResponse>> results;
        std::size_t remaining = 0;
    };
    const std::size_t n = std::min(peers_.size(), config_.max_peer_fanout);
    auto shared = std::make_shared<Shared>();
    shared->results.resize(n);
    shared->remaining = n;
    const auto timeout = config_.peer_timeout;
    for (std::size_t i = 0; i < n; ++i) {
        ++wire_calls_;
        std::thread([shared, client = peers_[i], request, timeout, i] {
            std::optional<wire::LookupResponse> result;
            try {
                result = client->lookup(request, true, timeout);
            } catch (const Error& e) {
                spdlog::debug("peer lookup {} failed: {}", client->address(), e.what());
            }
            std::lock_guard lock(shared->mutex);
            shared->results[i] = std::move(result);
            --shared->remaining;
            shared->cv.notify_all();
        }).detach();
    }
    std::unique_lock lock(shared->mutex);
    shared->cv.wait_until(lock, std::chrono::steady_clock::now() + timeout, [&] { return shared->remaining == 0; });
    return shared->results;
}

std::optional<EntryId> Hierarchy::promote(std::string_view query_text, const wire::LookupResponse& remote,
                                          CacheScope scope, const std::string& origin) {
    if (!scope.allows(local_->tier()) || !remote.answer) return std::nullopt;
    if (remote.kind == OutcomeKind::generative_hit) {
        return local_->store_synthesized(query_text, *remote.answer, scope);
    }
    const std::string key = remote.components.empty() ? std::string(query_text) : remote.components.front().query_text;
    return local_->insert(key.empty() ? std::string(query_text) : key, promoted_record(remote), scope, origin);
}

std::optional<EntryId> Hierarchy::store_response(std::string_view query_text, const ResponseRecord& record,
                                                 CacheScope scope) {
    auto id = local_->insert(query_text, record, scope, "local");
    if (upstream_ && scope.allow_l2) push_upstream(wire::InsertRequest{std::string(query_text), record, scope});
    return id;
}

std::optional<EntryId> Hierarchy::store_synthesized(std::string_view query_text, std::string_view answer,
                                                    CacheScope scope) {
    auto id = local_->store_synthesized(query_text, answer, scope);
    if (upstream_ && config_.inclusion && scope.allow_l2) {
        ResponseRecord rec;
        rec.text = std::string(answer);
        rec.created_at = now_ms();
        rec.synthesized = true;
        push_upstream(wire::InsertRequest{std::string(query_text), std::move(rec), scope});
    }
    return id;
}

void Hierarchy::push_upstream(wire::InsertRequest request) {
    ++wire_calls_;
    try {
        upstream_->insert(request, config_.upstream_timeout);
    } catch (const Error& e) {
        spdlog::debug("upstream insert failed, queued for retry: {}", e.what());
        std::lock_guard lock(retry_mutex_);
        retry_queue_.push_back({std::move(request), std::chrono::steady_clock::now() + kRetryDelay});
        retry_cv_.notify_all();
    }
}

void Hierarchy::retry_loop() {
    std::unique_lock lock(retry_mutex_);
    while (true) {
        retry_cv_.wait(lock, [&] { return stopping_ || !retry_queue_.empty(); });
        if (stopping_) {
            for (const auto& p : retry_queue_) {
                spdlog::warn("dropping upstream insert for \"{}\" at shutdown", p.request.query);
            }
            retry_queue_.clear();
            retry_cv_.notify_all();
            return;
        }
        const auto due = retry_queue_.front().due;
        if (retry_cv_.wait_until(lock, due, [&] { return stopping_; })) continue;
        Pending item = std::move(retry_queue_.front());
        retry_queue_.pop_front();
        ++in_flight_;
        lock.unlock();
        ++wire_calls_;
        try {
            upstream_->insert(item.request, config_.upstream_timeout);
        } catch (const Error& e) {
            spdlog::warn("dropping upstream insert for \"{}\" after retry: {}", item.request.query, e.what());
        }
        lock.lock();
        --in_flight_;
        retry_cv_.notify_all();
    }
}

std::size_t Hierarchy::pending_retries() const {
    std::lock_guard lock(retry_mutex_);
    return retry_queue_.size() + in_flight_;
}

void Hierarchy::drain_retries() {
    std::unique_lock lock(retry_mutex_);
    retry_cv_.wait(lock, [&] { return retry_queue_.empty() && in_flight_ == 0; });
}

}  // namespace gencache
