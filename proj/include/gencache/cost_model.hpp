#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gencache {

struct ModelPricing {
    std::string model_id;
    double input_per_million = 0.0;   // currency per 1M input tokens
    double output_per_million = 0.0;  // currency per 1M output tokens
    double expected_latency_ms = 0.0;
};

struct CostEstimate {
    double monetary = 0.0;
    double expected_latency_ms = 0.0;
};

// ceil(code points / 4); 0 for empty text.
std::uint64_t estimate_tokens(std::string_view text);

CostEstimate estimate_cost(std::string_view query_text, std::uint64_t max_tokens, const ModelPricing& pricing);

// Prices as of May 13, 2024 for the two OpenAI models used as the default fixture.
std::vector<ModelPricing> default_pricing();

inline constexpr double kLatencyEwmaAlpha = 0.2;

// Pricing table plus observed latency (EWMA) and per-request cost (running mean).
class CostModel {
public:
    CostModel() = default;
    explicit CostModel(const std::vector<ModelPricing>& pricing);

    void set_pricing(const ModelPricing& pricing);
    bool has_model(std::string_view model_id) const;
    // Throws Error(not_found).
    ModelPricing pricing(std::string_view model_id) const;
    std::vector<ModelPricing> all_pricing() const;

    // Throws Error(not_found) for an unknown model; Error(invalid_argument) when max_tokens == 0.
    CostEstimate estimate(std::string_view query_text, std::uint64_t max_tokens, std::string_view model_id) const;

    // Lowest monetary estimate over all configured models (nullopt when none).
    std::optional<double> cheapest_monetary(std::string_view query_text, std::uint64_t max_tokens) const;

    // Monetary cost of a completed call from actual token counts.
    double charge(std::string_view model_id, std::uint64_t input_tokens, std::uint64_t output_tokens) const;

    void record_observation(std::string_view model_id, std::uint64_t input_tokens, std::uint64_t output_tokens,
                            double latency_ms, double monetary);

    // Mean cost of requests that went to an LLM (c2). Throws Error(unavailable) before any observation.
    double mean_uncached_cost() const;
    std::uint64_t observation_count() const;

private:
    struct ModelState {
        ModelPricing pricing;
        std::uint64_t observations = 0;
    };

    mutable std::mutex mutex_;
    std::map<std::string, ModelState, std::less<>> models_;
    double cost_sum_ = 0.0;
    std::uint64_t cost_count_ = 0;
};

}  // namespace gencache
