#include "gencache/service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <regex>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "gencache/error.hpp"

namespace gencache {

using nlohmann::json;

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

Service::Service(ServiceConfig config, ServiceParts parts) : config_(std::move(config)) {
    config_.runtime.validate();
    cost_model_ = std::make_shared<CostModel>(config_.pricing);
    gateway_ = std::make_shared<Gateway>(cost_model_, config_.ladder);
    if (parts.providers.empty()) {
        for (const auto& pc : config_.providers) gateway_->add_provider(make_provider(pc));
    } else {
        for (auto& p : parts.providers) gateway_->add_provider(std::move(p));
    }
    policy_ = std::make_shared<AdaptivePolicy>(config_.runtime.policy);
    lookup_ = config_.runtime.lookup;

    std::shared_ptr<Embedder> embedder = parts.embedder ? parts.embedder : make_embedder(config_.embedder);
    CacheOptions copts;
    copts.capacity = config_.capacity;
    copts.tier = config_.tier.role;
    cache_ = std::make_shared<SemanticCache>(std::move(embedder), copts);
    hierarchy_ = std::make_unique<Hierarchy>(config_.tier, cache_, parts.tier_clients);

    if (config_.snapshot_path && std::filesystem::exists(*config_.snapshot_path)) {
        const auto n = cache_->warm_load(*config_.snapshot_path);
        spdlog::info("warm start: {} entries from {}", n, *config_.snapshot_path);
    }
}

LookupDefaults Service::lookup_defaults() const {
    std::lock_guard lock(config_mutex_);
    return lookup_;
}

std::string Service::remember_hit(const std::optional<EntryId>& entry, Served served) {
    std::lock_guard lock(stats_mutex_);
    const std::string id = entry ? entry->str() : "hit-" + std::to_string(next_ephemeral_++);
    served_hits_[id] = std::move(served);
    return id;
}

void Service::count_hit(wire::Source source, double charged) {
    std::lock_guard lock(stats_mutex_);
    switch (source) {
        case wire::Source::l1: ++hits_.l1; break;
        case wire::Source::l2: ++hits_.l2; break;
        case wire::Source::peer: ++hits_.peer; break;
        case wire::Source::generative: ++hits_.generative; break;
        case wire::Source::llm: break;
    }
    charged_sum_ += charged;
}

wire::QueryResponse Service::query(const wire::QueryRequest& request) {
    const auto started = std::chrono::steady_clock::now();
    if (request.query.empty() || is_blank(request.query)) {
        throw Error(ErrorCode::invalid_argument, "query: must not be empty");
    }
    if (request.max_tokens == 0) throw Error(ErrorCode::invalid_argument, "max_tokens: must be positive");
    if (!std::isfinite(request.temperature) || request.temperature < 0.0) {
        throw Error(ErrorCode::invalid_argument, "temperature: must be a nonnegative number");
    }
    if (request.ts_override && !(*request.ts_override >= 0.0 && *request.ts_override <= 1.0)) {
        throw Error(ErrorCode::invalid_argument, "ts_override: must be in [0,1]");
    }
    std::vector<std::string> chain;
    if (request.provider_id) {
        const auto known = gateway_->provider_ids();
        if (std::find(known.begin(), known.end(), *request.provider_id) == known.end()) {
            throw Error(ErrorCode::invalid_argument, "provider_id: unknown provider " + *request.provider_id);
        }
        chain.push_back(*request.provider_id);
    } else {
        chain = gateway_->provider_ids();
    }
    if (chain.empty()) throw Error(ErrorCode::unavailable, "no providers configured");
    if (request.model_id && !cost_model_->has_model(*request.model_id)) {
        throw Error(ErrorCode::invalid_argument, "model_id: unknown model " + *request.model_id);
    }

    {
        std::lock_guard lock(stats_mutex_);
        ++total_;
    }

    std::vector<wire::TraceHop> trace;
    try {
        const std::string estimate_model = request.model_id ? *request.model_id : gateway_->select_model(chain.front());
        ThresholdInputs in;
        in.content_class = classify_content(request.query);
        in.estimated_cost = cost_model_->estimate(request.query, request.max_tokens, estimate_model);
        in.cheapest_monetary = cost_model_->cheapest_monetary(request.query, request.max_tokens);
        in.provider_healthy = gateway_->healthy(chain.front());
        in.user_override = request.ts_override;
        const double ts = policy_->effective_threshold(in);
        const auto defaults = lookup_defaults();

        wire::QueryResponse out;
        out.effective_ts = ts;
        out.cost.estimated = in.estimated_cost.monetary;

        if (!request.fresh) {
            GatewaySummarizer summarizer(*gateway_, chain, std::max<std::uint64_t>(request.max_tokens, 2048));
            ResolveContext ctx{defaults.policy_for(ts), request.cache_control, {}};
            if (request.summarize) ctx.options.summarizer = &summarizer;
            ctx.options.preferred_model = request.model_id;
            auto res = hierarchy_->resolve(request.query, ctx);
            trace = res.trace;
            if (res.outcome.hit()) {
                std::optional<EntryId> entry = res.local_entry;
                Served served;
                if (res.outcome.kind == OutcomeKind::generative_hit) {
                    if (!entry) entry = hierarchy_->store_synthesized(request.query, *res.outcome.answer,
                                                                      request.cache_control);
                    std::vector<wire::ComponentView> comps;
                    for (const auto& c : res.outcome.components) {
                        comps.push_back({c.entry_id.str(), c.query_text, c.score});
                    }
                    out.components = std::move(comps);
                } else {
                    const auto& c = res.outcome.components.front();
                    served.model_id = c.model_id;
                    if (auto e = cache_->find(c.entry_id); e && res.source == wire::Source::l1) {
                        for (const auto& r : e->responses) {
                            if (r.model_id == c.model_id) served.provider_id = r.provider_id;
                        }
                    }
                }
                out.answer = res.outcome.answer.value_or("");
                out.source = res.source;
                out.similarity = res.outcome.best_score;
                out.model_id = served.model_id.empty() ? std::nullopt : std::optional(served.model_id);
                out.entry_id = remember_hit(entry, std::move(served));
                out.trace = std::move(trace);
                out.latency_ms = elapsed_ms(started);
                count_hit(out.source, 0.0);
                std::optional<double> c2;
                if (cost_model_->observation_count() > 0) c2 = cost_model_->mean_uncached_cost();
                policy_->on_request_completed(true, c2);
                return out;
            }
        }

        LlmRequest llm{request.query, request.model_id.value_or(""), request.max_tokens, request.temperature};
        const auto reply = gateway_->query_with_fallback(chain, llm);
        ResponseRecord record{reply.text,          reply.model_id, reply.provider_id, reply.monetary_cost,
                              reply.latency_ms,    now_ms(),       false};
        const auto entry = hierarchy_->store_response(request.query, record, request.cache_control);

        out.answer = reply.text;
        out.source = wire::Source::llm;
        out.cost.charged = reply.monetary_cost;
        out.model_id = reply.model_id;
        out.entry_id = entry ? entry->str() : "";
        out.trace = std::move(trace);
        out.latency_ms = elapsed_ms(started);
        {
            std::lock_guard lock(stats_mutex_);
            ++llm_served_;
            charged_sum_ += reply.monetary_cost;
        }
        policy_->on_request_completed(false, cost_model_->mean_uncached_cost());
        return out;
    } catch (const Error& e) {
        {
            std::lock_guard lock(stats_mutex_);
            ++errors_;
        }
        throw TracedError(e, std::move(trace));
    }
}

wire::FeedbackAck Service::feedback(const wire::FeedbackRequest& request) {
    Served served;
    {
        std::lock_guard lock(stats_mutex_);
        auto it = served_hits_.find(request.entry_id);
        if (it == served_hits_.end()) {
            throw Error(ErrorCode::not_found, "entry_id: no cache hit was served as " + request.entry_id);
        }
        served = it->second;
    }
    policy_->record_feedback(request.verdict);
    if (policy_->params().quality_enabled) policy_->adjust_for_quality();
    const auto known = gateway_->provider_ids();
    if (!served.model_id.empty() && std::find(known.begin(), known.end(), served.provider_id) != known.end()) {
        gateway_->record_verdict(served.provider_id, served.model_id, request.verdict);
    }
    return wire::FeedbackAck{true, policy_->quality_rate(), policy_->base_ts()};
}

wire::StatsSnapshot Service::stats() const {
    wire::StatsSnapshot s;
    {
        std::lock_guard lock(stats_mutex_);
        s.total_requests = total_;
        s.cache_hits = hits_;
        s.llm_served = llm_served_;
        s.errors = errors_;
        s.mean_cost_per_request = total_ ? charged_sum_ / static_cast<double>(total_) : 0.0;
    }
    s.hit_rate = s.total_requests ? static_cast<double>(s.cache_hits.total()) / static_cast<double>(s.total_requests)
                                  : 0.0;
    s.quality_rate = policy_->quality_rate();
    s.base_ts = policy_->base_ts();
    for (const auto& p : gateway_->stats()) {
        s.providers.push_back({p.provider_id, p.mean_latency_ms, p.health, gateway_->select_model(p.provider_id)});
        s.gateway_calls += p.calls;
    }
    if (cost_model_->observation_count() > 0) s.mean_uncached_cost = cost_model_->mean_uncached_cost();
    s.entry_count = cache_->size();
    s.wire_calls = hierarchy_->wire_calls();
    return s;
}

json Service::config() const {
    std::lock_guard lock(config_mutex_);
    RuntimeConfig rc{policy_->params(), lookup_};
    return rc.to_json();
}

json Service::put_config(const json& patch) {
    std::lock_guard lock(config_mutex_);
    RuntimeConfig current{policy_->params(), lookup_};
    const auto next = current.patched(patch);
    policy_->set_params(next.policy);
    lookup_ = next.lookup;
    return RuntimeConfig{policy_->params(), lookup_}.to_json();
}

wire::CountResponse Service::snapshot(const std::filesystem::path& path) {
    if (path.empty()) throw Error(ErrorCode::invalid_argument, "path: must not be empty");
    return wire::CountResponse{cache_->snapshot_save(path), path.string()};
}

wire::CountResponse Service::warm(const std::filesystem::path& path) {
    if (path.empty()) throw Error(ErrorCode::invalid_argument, "path: must not be empty");
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::not_found, "path: no such file " + path.string());
    return wire::CountResponse{cache_->warm_load(path), path.string()};
}

wire::LookupResponse Service::cache_lookup(const wire::LookupRequest& request, bool peer_hop) {
    return hierarchy_->serve_lookup(request, peer_hop);
}

wire::InsertResponse Service::cache_insert(const wire::InsertRequest& request) {
    if (request.query.empty()) throw Error(ErrorCode::invalid_argument, "query: must not be empty");
    return hierarchy_->serve_insert(request);
}

std::pair<int, wire::ErrorBody> error_response(const std::exception& e) {
    wire::ErrorBody body;
    int status = 500;
    body.message = e.what();
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
        status = http_status(err->code());
        body.error = std::string(to_string(err->code()));
        static const std::regex quoted(R"re(field "([^"]+)")re");
        static const std::regex prefixed(R"(^([A-Za-z_][A-Za-z0-9_.\[\]]*): )");
        std::smatch m;
        const std::string msg = err->what();
        if (std::regex_search(msg, m, quoted) || std::regex_search(msg, m, prefixed)) body.field = m[1].str();
        if (const auto* traced = dynamic_cast<const TracedError*>(&e)) body.trace = traced->trace();
    } else {
        body.error = "internal";
    }
    return {status, std::move(body)};
}

HttpFrontend::HttpFrontend(Service& service, std::optional<std::string> static_dir)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
    server_->set_socket_options([](socket_t sock) {
        int yes = 1;
        ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
    });
    install_routes();
    if (static_dir && !server_->set_mount_point("/", *static_dir)) {
        spdlog::warn("static_dir {} is not a directory; not mounted", *static_dir);
    }
}

HttpFrontend::~HttpFrontend() { stop(); }

bool HttpFrontend::bind(const std::string& host, int port) {
    if (port == 0) {
        port_ = server_->bind_to_any_port(host);
        return port_ > 0;
    }
    if (!server_->bind_to_port(host, port)) return false;
    port_ = port;
    return true;
}

void HttpFrontend::run() { server_->listen_after_bind(); }

void HttpFrontend::stop() {
    if (server_) server_->stop();
}

void HttpFrontend::install_routes() {
    using httplib::Request;
    using httplib::Response;
    auto reply = [](Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    };
    auto guarded = [reply](auto fn) {
        return [reply, fn](const Request& req, Response& res) {
            try {
                reply(res, 200, fn(req));
            } catch (const std::exception& e) {
                auto [status, body] = error_response(e);
                reply(res, status, wire::encode(body));
            }
        };
    };
    auto body_json = [](const Request& req) {
        try {
            return json::parse(req.body);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::schema, std::string("malformed JSON: ") + e.what());
        }
    };

    server_->Post("/v1/query", guarded([this](const Request& req) {
                      return wire::encode(service_.query(wire::decode_text<wire::QueryRequest>(req.body)));
                  }));
    server_->Post("/v1/feedback", guarded([this](const Request& req) {
                      return wire::encode(service_.feedback(wire::decode_text<wire::FeedbackRequest>(req.body)));
                  }));
    server_->Get("/v1/stats", guarded([this](const Request&) { return wire::encode(service_.stats()); }));
    server_->Get("/v1/config", guarded([this](const Request&) { return service_.config(); }));
    server_->Put("/v1/config",
                 guarded([this, body_json](const Request& req) { return service_.put_config(body_json(req)); }));
    server_->Post("/v1/snapshot", guarded([this](const Request& req) {
                      return wire::encode(service_.snapshot(wire::decode_text<wire::PathRequest>(req.body).path));
                  }));
    server_->Post("/v1/warm", guarded([this](const Request& req) {
                      return wire::encode(service_.warm(wire::decode_text<wire::PathRequest>(req.body).path));
                  }));
    server_->Post("/v1/cache/lookup", guarded([this](const Request& req) {
                      const bool peer_hop = req.get_header_value(kHopHeader) == kHopPeer;
                      return wire::encode(
                          service_.cache_lookup(wire::decode_text<wire::LookupRequest>(req.body), peer_hop));
                  }));
    server_->Post("/v1/cache/insert", guarded([this](const Request& req) {
                      return wire::encode(service_.cache_insert(wire::decode_text<wire::InsertRequest>(req.body)));
                  }));
}

}  // namespace gencache
