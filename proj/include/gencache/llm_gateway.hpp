#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "gencache/adaptive_policy.hpp"
#include "gencache/cost_model.hpp"
#include "gencache/error.hpp"
#include "gencache/semantic_cache.hpp"

namespace gencache {

struct LlmRequest {
    std::string prompt;
    std::string model_id;
    std::uint64_t max_tokens = 512;
    double temperature = 0.7;
};

struct LlmResponse {
    std::string text;
    std::uint64_t input_tokens = 0;
    std::uint64_t output_tokens = 0;
    double latency_ms = 0.0;
    double monetary_cost = 0.0;
    std::string provider_id;
    std::string model_id;
};

// Result of one provider call: a response or the error that prevented it.
class LlmResult {
public:
    LlmResult(LlmResponse response) : value_(std::move(response)) {}  // NOLINT(implicit)
    LlmResult(Error error) : value_(std::move(error)) {}               // NOLINT(implicit)

    bool ok() const noexcept { return std::holds_alternative<LlmResponse>(value_); }
    const LlmResponse& value() const;  // throws the stored error when !ok()
    const Error& error() const { return std::get<Error>(value_); }

private:
    std::variant<LlmResponse, Error> value_;
};

// One LLM backend. Implementations throw Error with code timeout, unavailable
// or rate_limited; token counts and text are filled in, cost and latency are
// measured by the gateway.
class Provider {
public:
    virtual ~Provider() = default;
    virtual const std::string& id() const noexcept = 0;
    // Cheapest first.
    virtual const std::vector<std::string>& models() const noexcept = 0;
    virtual std::chrono::milliseconds timeout() const noexcept = 0;
    virtual LlmResponse complete(const LlmRequest& request, std::chrono::milliseconds timeout) = 0;
};

struct MockProviderOptions {
    enum class Mode { echo, canned, transform };

    std::string id = "mock";
    std::vector<std::string> models{"mock-small", "mock-large"};
    Mode mode = Mode::echo;
    std::chrono::milliseconds latency{0};
    std::chrono::milliseconds timeout{30'000};
    double failure_rate = 0.0;
    std::uint64_t seed = 42;
    std::map<std::string, std::string> canned;  // prompt -> reply
    std::string canned_default = "no canned response";
};

MockProviderOptions::Mode mock_mode_from_string(std::string_view name);
// Loads {"prompt": "reply", ...} from a JSON file for canned mode.
std::map<std::string, std::string> load_canned_fixture(const std::filesystem::path& path);

// Deterministic stand-in: echo returns "echo: " + prompt truncated to
// max_tokens * 4 characters, transform uppercases, canned looks the prompt up.
class MockProvider final : public Provider {
public:
    explicit MockProvider(MockProviderOptions options);

    const std::string& id() const noexcept override { return options_.id; }
    const std::vector<std::string>& models() const noexcept override { return options_.models; }
    std::chrono::milliseconds timeout() const noexcept override { return options_.timeout; }
    LlmResponse complete(const LlmRequest& request, std::chrono::milliseconds timeout) override;

    std::uint64_t call_count() const noexcept { return calls_.load(); }
    std::vector<std::string> call_log() const;

private:
    MockProviderOptions options_;
    std::atomic<std::uint64_t> calls_{0};
    mutable std::mutex mutex_;
    std::mt19937_64 rng_;
    std::vector<std::string> log_;
};

struct HttpProviderOptions {
    std::string id;
    std::vector<std::string> models;
    std::string base_url;  // e.g. http://127.0.0.1:9000
    std::string path = "/v1/completions";
    std::string auth_header;  // sent verbatim as Authorization when non-empty
    std::chrono::milliseconds timeout{60'000};
};

// Generic JSON completion endpoint:
// POST {"model","prompt","max_tokens","temperature"} -> {"text","input_tokens","output_tokens"}.
class HttpProvider final : public Provider {
public:
    explicit HttpProvider(HttpProviderOptions options);

    const std::string& id() const noexcept override { return options_.id; }
    const std::vector<std::string>& models() const noexcept override { return options_.models; }
    std::chrono::milliseconds timeout() const noexcept override { return options_.timeout; }
    LlmResponse complete(const LlmRequest& request, std::chrono::milliseconds timeout) override;

private:
    HttpProviderOptions options_;
};

inline constexpr double kHealthEwmaAlpha = 0.2;
inline constexpr double kUnhealthyFailureRate = 0.5;

struct LadderParams {
    std::size_t consecutive_low_to_upgrade = 2;
    std::size_t consecutive_high_to_downgrade = 10;
};

struct ProviderStats {
    std::string provider_id;
    double health = 0.0;  // failure-rate EWMA
    std::uint64_t calls = 0;
    std::uint64_t failures = 0;
    double mean_latency_ms = 0.0;
    std::size_t ladder_rung = 0;
};

// Provider registry with health tracking, cost observation, parallel fan-out,
// ordered fallback and per-provider model ladders. Safe to share across threads.
class Gateway {
public:
    Gateway(std::shared_ptr<CostModel> cost_model, LadderParams ladder = {});

    // Models without configured pricing are registered at zero cost.
    void add_provider(std::shared_ptr<Provider> provider);
    std::shared_ptr<Provider> provider(std::string_view id) const;
    std::vector<std::string> provider_ids() const;
    CostModel& cost_model() noexcept { return *cost_model_; }

    LlmResult query_one(std::string_view provider_id, const LlmRequest& request);
    std::vector<LlmResult> query_parallel(const std::vector<std::pair<std::string, LlmRequest>>& requests);
    // Tries providers in order; request.model_id empty means "pick by ladder".
    // Throws Error(all_failed) naming each attempt.
    LlmResponse query_with_fallback(const std::vector<std::string>& provider_ids, const LlmRequest& request);

    std::string select_model(std::string_view provider_id) const;
    // Verdict on a cached answer that originated from `model_id` of this provider;
    // only verdicts at the current rung move the ladder.
    void record_verdict(std::string_view provider_id, std::string_view model_id, Verdict verdict);

    double health(std::string_view provider_id) const;
    bool healthy(std::string_view provider_id) const;
    std::vector<ProviderStats> stats() const;

private:
    struct State {
        std::shared_ptr<Provider> provider;
        double health = 0.0;
        std::uint64_t calls = 0;
        std::uint64_t failures = 0;
        double latency_sum_ms = 0.0;
        std::uint64_t successes = 0;
        std::size_t rung = 0;
        std::size_t consecutive_low = 0;
        std::size_t consecutive_high = 0;
    };

    State& state_locked(std::string_view id);
    const State& state_locked(std::string_view id) const;

    std::shared_ptr<CostModel> cost_model_;
    LadderParams ladder_;
    mutable std::mutex mutex_;
    std::map<std::string, State, std::less<>> providers_;
    std::vector<std::string> order_;
};

// Summarizes through the gateway using the fallback chain.
class GatewaySummarizer final : public Summarizer {
public:
    GatewaySummarizer(Gateway& gateway, std::vector<std::string> provider_ids, std::uint64_t max_tokens = 512);
    std::string summarize(const std::string& prompt) override;

private:
    Gateway& gateway_;
    std::vector<std::string> provider_ids_;
    std::uint64_t max_tokens_;
};

}  // namespace gencache
