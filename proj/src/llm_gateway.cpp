#include "gencache/llm_gateway.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <future>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace gencache {

using nlohmann::json;

namespace {

// Truncates to at most `max_bytes` without splitting a UTF-8 sequence.
std::string truncate_utf8(std::string text, std::size_t max_bytes) {
    if (text.size() <= max_bytes) return text;
    std::size_t cut = max_bytes;
    while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
    text.resize(cut);
    return text;
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

const LlmResponse& LlmResult::value() const {
    if (!ok()) throw std::get<Error>(value_);
    return std::get<LlmResponse>(value_);
}

MockProviderOptions::Mode mock_mode_from_string(std::string_view name) {
    if (name == "echo") return MockProviderOptions::Mode::echo;
    if (name == "canned") return MockProviderOptions::Mode::canned;
    if (name == "transform") return MockProviderOptions::Mode::transform;
    throw Error(ErrorCode::invalid_argument, "mock mode must be echo, canned or transform");
}

std::map<std::string, std::string> load_canned_fixture(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, "cannot open canned fixture: " + path.string());
    try {
        return json::parse(in).get<std::map<std::string, std::string>>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::format, "canned fixture " + path.string() + ": " + e.what());
    }
}

MockProvider::MockProvider(MockProviderOptions options) : options_(std::move(options)), rng_(options_.seed) {
    if (options_.models.empty()) throw Error(ErrorCode::invalid_argument, "provider needs at least one model");
}

std::vector<std::string> MockProvider::call_log() const {
    std::lock_guard lock(mutex_);
    return log_;
}

LlmResponse MockProvider::complete(const LlmRequest& request, std::chrono::milliseconds timeout) {
    ++calls_;
    bool fail = false;
    {
        std::lock_guard lock(mutex_);
        log_.push_back(request.prompt);
        if (options_.failure_rate > 0.0) {
            fail = std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < options_.failure_rate;
        }
    }
    if (options_.latency > timeout) {
        std::this_thread::sleep_for(timeout);
        throw Error(ErrorCode::timeout, options_.id + ": timed out after " + std::to_string(timeout.count()) + " ms");
    }
    if (options_.latency.count() > 0) std::this_thread::sleep_for(options_.latency);
    if (fail) throw Error(ErrorCode::unavailable, options_.id + ": simulated failure");

    std::string text;
    switch (options_.mode) {
        case MockProviderOptions::Mode::echo: text = "echo: " + request.prompt; break;
        case MockProviderOptions::Mode::transform:
            text = request.prompt;
            std::transform(text.begin(), text.end(), text.begin(),
                           [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
            break;
        case MockProviderOptions::Mode::canned: {
            auto it = options_.canned.find(request.prompt);
            text = it != options_.canned.end() ? it->second : options_.canned_default;
            break;
        }
    }
    LlmResponse response;
    response.text = truncate_utf8(std::move(text), request.max_tokens * 4);
    response.input_tokens = estimate_tokens(request.prompt);
    response.output_tokens = estimate_tokens(response.text);
    response.provider_id = options_.id;
    response.model_id = request.model_id;
    return response;
}

HttpProvider::HttpProvider(HttpProviderOptions options) : options_(std::move(options)) {
    if (options_.models.empty()) throw Error(ErrorCode::invalid_argument, "provider needs at least one model");
}

LlmResponse HttpProvider::complete(const LlmRequest& request, std::chrono::milliseconds timeout) {
    httplib::Client client(options_.base_url);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!options_.auth_header.empty()) headers.emplace("Authorization", options_.auth_header);
    const json body = {{"model", request.model_id},
                       {"prompt", request.prompt},
                       {"max_tokens", request.max_tokens},
                       {"temperature", request.temperature}};
    auto res = client.Post(options_.path, headers, body.dump(), "application/json");
    if (!res) {
        const auto err = res.error();
        if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) {
            throw Error(ErrorCode::timeout, options_.id + ": " + httplib::to_string(err));
        }
        throw Error(ErrorCode::unavailable, options_.id + ": " + httplib::to_string(err));
    }
    if (res->status == 429) throw Error(ErrorCode::rate_limited, options_.id + ": rate limited");
    if (res->status != 200) {
        throw Error(ErrorCode::unavailable, options_.id + ": HTTP " + std::to_string(res->status));
    }
    try {
        const json reply = json::parse(res->body);
        LlmResponse out;
        out.text = reply.at("text").get<std::string>();
        out.input_tokens = reply.value("input_tokens", estimate_tokens(request.prompt));
        out.output_tokens = reply.value("output_tokens", estimate_tokens(out.text));
        out.provider_id = options_.id;
        out.model_id = request.model_id;
        return out;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::unavailable, options_.id + ": malformed reply: " + e.what());
    }
}

Gateway::Gateway(std::shared_ptr<CostModel> cost_model, LadderParams ladder)
    : cost_model_(std::move(cost_model)), ladder_(ladder) {}

void Gateway::add_provider(std::shared_ptr<Provider> provider) {
    if (!provider || provider->models().empty()) {
        throw Error(ErrorCode::invalid_argument, "provider needs at least one model");
    }
    for (const auto& model : provider->models()) {
        if (!cost_model_->has_model(model)) {
            spdlog::debug("no pricing for model {}; registering at zero cost", model);
            cost_model_->set_pricing(ModelPricing{model, 0.0, 0.0, 0.0});
        }
    }
    std::lock_guard lock(mutex_);
    const std::string id = provider->id();
    if (providers_.contains(id)) throw Error(ErrorCode::conflict, "duplicate provider id: " + id);
    State state;
    state.provider = std::move(provider);
    providers_.emplace(id, std::move(state));
    order_.push_back(id);
}

Gateway::State& Gateway::state_locked(std::string_view id) {
    auto it = providers_.find(id);
    if (it == providers_.end()) throw Error(ErrorCode::not_found, "unknown provider: " + std::string(id));
    return it->second;
}

const Gateway::State& Gateway::state_locked(std::string_view id) const {
    auto it = providers_.find(id);
    if (it == providers_.end()) throw Error(ErrorCode::not_found, "unknown provider: " + std::string(id));
    return it->second;
}

std::shared_ptr<Provider> Gateway::provider(std::string_view id) const {
    std::lock_guard lock(mutex_);
    return state_locked(id).provider;
}

std::vector<std::string> Gateway::provider_ids() const {
    std::lock_guard lock(mutex_);
    return order_;
}

LlmResult Gateway::query_one(std::string_view provider_id, const LlmRequest& request) {
    std::shared_ptr<Provider> p;
    LlmRequest req = request;
    try {
        if (req.max_tokens == 0) throw Error(ErrorCode::invalid_argument, "max_tokens must be >= 1");
        p = provider(provider_id);
        if (req.model_id.empty()) req.model_id = select_model(provider_id);
        const auto& models = p->models();
        if (std::find(models.begin(), models.end(), req.model_id) == models.end()) {
            throw Error(ErrorCode::invalid_argument,
                        "model " + req.model_id + " is not offered by provider " + std::string(provider_id));
        }
    } catch (const Error& e) {
        return e;
    }

    const auto start = std::chrono::steady_clock::now();
    try {
        LlmResponse response = p->complete(req, p->timeout());
        response.latency_ms = elapsed_ms(start);
        response.provider_id = p->id();
        response.model_id = req.model_id;
        if (response.output_tokens > req.max_tokens) response.output_tokens = req.max_tokens;
        response.monetary_cost = cost_model_->charge(req.model_id, response.input_tokens, response.output_tokens);
        cost_model_->record_observation(req.model_id, response.input_tokens, response.output_tokens,
                                        response.latency_ms, response.monetary_cost);
        std::lock_guard lock(mutex_);
        auto& st = state_locked(provider_id);
        st.health = (1.0 - kHealthEwmaAlpha) * st.health;
        ++st.calls;
        ++st.successes;
        st.latency_sum_ms += response.latency_ms;
        return response;
    } catch (const std::exception& e) {
        std::lock_guard lock(mutex_);
        auto& st = state_locked(provider_id);
        st.health = (1.0 - kHealthEwmaAlpha) * st.health + kHealthEwmaAlpha;
        ++st.calls;
        ++st.failures;
        if (const auto* err = dynamic_cast<const Error*>(&e)) return *err;
        return Error(ErrorCode::unavailable, std::string(provider_id) + ": " + e.what());
    }
}

std::vector<LlmResult> Gateway::query_parallel(const std::vector<std::pair<std::string, LlmRequest>>& requests) {
    if (requests.empty()) throw Error(ErrorCode::invalid_argument, "query_parallel needs at least one request");
    std::vector<std::future<LlmResult>> inflight;
    inflight.reserve(requests.size());
    for (const auto& [provider_id, request] : requests) {
        inflight.push_back(std::async(std::launch::async, [this, provider_id = provider_id, request = request] {
            return query_one(provider_id, request);
        }));
    }
    std::vector<LlmResult> results;
    results.reserve(requests.size());
    for (auto& f : inflight) results.push_back(f.get());
    return results;
}

LlmResponse Gateway::query_with_fallback(const std::vector<std::string>& provider_ids, const LlmRequest& request) {
    if (provider_ids.empty()) throw Error(ErrorCode::invalid_argument, "fallback chain is empty");
    std::string attempts;
    for (const auto& id : provider_ids) {
        LlmRequest req = request;
        // An explicit model applies only to the provider that offers it.
        if (!req.model_id.empty()) {
            try {
                const auto& models = provider(id)->models();
                if (std::find(models.begin(), models.end(), req.model_id) == models.end()) req.model_id.clear();
            } catch (const Error&) {
            }
        }
        auto result = query_one(id, req);
        if (result.ok()) return result.value();
        if (!attempts.empty()) attempts += "; ";
        attempts += id + " (" + std::string(to_string(result.error().code())) + "): " + result.error().what();
    }
    throw Error(ErrorCode::all_failed, "all providers failed: " + attempts);
}

std::string Gateway::select_model(std::string_view provider_id) const {
    std::lock_guard lock(mutex_);
    const auto& st = state_locked(provider_id);
    return st.provider->models().at(st.rung);
}

void Gateway::record_verdict(std::string_view provider_id, std::string_view model_id, Verdict verdict) {
    std::lock_guard lock(mutex_);
    auto& st = state_locked(provider_id);
    const auto& models = st.provider->models();
    if (models.at(st.rung) != model_id) return;
    if (verdict == Verdict::low) {
        st.consecutive_high = 0;
        if (++st.consecutive_low >= ladder_.consecutive_low_to_upgrade) {
            if (st.rung + 1 < models.size()) ++st.rung;
            st.consecutive_low = 0;
        }
    } else {
        st.consecutive_low = 0;
        if (++st.consecutive_high >= ladder_.consecutive_high_to_downgrade) {
            if (st.rung > 0) --st.rung;
            st.consecutive_high = 0;
        }
    }
}

double Gateway::health(std::string_view provider_id) const {
    std::lock_guard lock(mutex_);
    return state_locked(provider_id).health;
}

bool Gateway::healthy(std::string_view provider_id) const { return health(provider_id) <= kUnhealthyFailureRate; }

std::vector<ProviderStats> Gateway::stats() const {
    std::lock_guard lock(mutex_);
    std::vector<ProviderStats> out;
    for (const auto& id : order_) {
        const auto& st = providers_.at(id);
        ProviderStats s;
        s.provider_id = id;
        s.health = st.health;
        s.calls = st.calls;
        s.failures = st.failures;
        s.mean_latency_ms = st.successes ? st.latency_sum_ms / static_cast<double>(st.successes) : 0.0;
        s.ladder_rung = st.rung;
        out.push_back(s);
    }
    return out;
}

GatewaySummarizer::GatewaySummarizer(Gateway& gateway, std::vector<std::string> provider_ids, std::uint64_t max_tokens)
    : gateway_(gateway), provider_ids_(std::move(provider_ids)), max_tokens_(max_tokens) {}

std::string GatewaySummarizer::summarize(const std::string& prompt) {
    LlmRequest req;
    req.prompt = prompt;
    req.max_tokens = max_tokens_;
    req.temperature = 0.0;
    return gateway_.query_with_fallback(provider_ids_, req).text;
}

}  // namespace gencache
