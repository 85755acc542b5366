#include "gencache/cost_model.hpp"

#include <limits>

#include "gencache/error.hpp"

namespace gencache {

std::uint64_t estimate_tokens(std::string_view text) {
    std::uint64_t code_points = 0;
    for (char c : text) {
        // Count every byte that is not a UTF-8 continuation byte.
        if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++code_points;
    }
    return (code_points + 3) / 4;
}

CostEstimate estimate_cost(std::string_view query_text, std::uint64_t max_tokens, const ModelPricing& pricing) {
    if (max_tokens == 0) throw Error(ErrorCode::invalid_argument, "max_tokens must be >= 1");
    const double input = static_cast<double>(estimate_tokens(query_text)) * pricing.input_per_million / 1e6;
    const double output = static_cast<double>(max_tokens) * pricing.output_per_million / 1e6;
    return CostEstimate{input + output, pricing.expected_latency_ms};
}

std::vector<ModelPricing> default_pricing() {
    return {
        ModelPricing{"gpt-3.5-turbo-0125", 0.50, 1.50, 1500.0},
        ModelPricing{"gpt-4-32k", 60.0, 120.0, 8000.0},
    };
}

CostModel::CostModel(const std::vector<ModelPricing>& pricing) {
    for (const auto& p : pricing) set_pricing(p);
}

void CostModel::set_pricing(const ModelPricing& pricing) {
    if (pricing.input_per_million < 0 || pricing.output_per_million < 0 || pricing.expected_latency_ms < 0) {
        throw Error(ErrorCode::invalid_argument, "pricing for " + pricing.model_id + " must be nonnegative");
    }
    std::lock_guard lock(mutex_);
    auto& state = models_[pricing.model_id];
    state.pricing = pricing;
}

bool CostModel::has_model(std::string_view model_id) const {
    std::lock_guard lock(mutex_);
    return models_.find(model_id) != models_.end();
}

ModelPricing CostModel::pricing(std::string_view model_id) const {
    std::lock_guard lock(mutex_);
    auto it = models_.find(model_id);
    if (it == models_.end()) throw Error(ErrorCode::not_found, "unknown model: " + std::string(model_id));
    return it->second.pricing;
}

std::vector<ModelPricing> CostModel::all_pricing() const {
    std::lock_guard lock(mutex_);
    std::vector<ModelPricing> out;
    for (const auto& [_, state] : models_) out.push_back(state.pricing);
    return out;
}

CostEstimate CostModel::estimate(std::string_view query_text, std::uint64_t max_tokens,
                                 std::string_view model_id) const {
    return estimate_cost(query_text, max_tokens, pricing(model_id));
}

std::optional<double> CostModel::cheapest_monetary(std::string_view query_text, std::uint64_t max_tokens) const {
    std::lock_guard lock(mutex_);
    std::optional<double> best;
    for (const auto& [_, state] : models_) {
        const double m = estimate_cost(query_text, max_tokens, state.pricing).monetary;
        if (!best || m < *best) best = m;
    }
    return best;
}

double CostModel::charge(std::string_view model_id, std::uint64_t input_tokens, std::uint64_t output_tokens) const {
    const auto p = pricing(model_id);
    return static_cast<double>(input_tokens) * p.input_per_million / 1e6 +
           static_cast<double>(output_tokens) * p.output_per_million / 1e6;
}

void CostModel::record_observation(std::string_view model_id, std::uint64_t /*input_tokens*/,
                                   std::uint64_t /*output_tokens*/, double latency_ms, double monetary) {
    std::lock_guard lock(mutex_);
    auto it = models_.find(model_id);
    if (it == models_.end()) throw Error(ErrorCode::not_found, "unknown model: " + std::string(model_id));
    auto& state = it->second;
    if (state.observations == 0) {
        state.pricing.expected_latency_ms = latency_ms;
    } else {
        state.pricing.expected_latency_ms =
            (1.0 - kLatencyEwmaAlpha) * state.pricing.expected_latency_ms + kLatencyEwmaAlpha * latency_ms;
    }
    ++state.observations;
    cost_sum_ += monetary;
    ++cost_count_;
}

double CostModel::mean_uncached_cost() const {
    std::lock_guard lock(mutex_);
    if (cost_count_ == 0) throw Error(ErrorCode::unavailable, "no cost observations yet");
    return cost_sum_ / static_cast<double>(cost_count_);
}

std::uint64_t CostModel::observation_count() const {
    std::lock_guard lock(mutex_);
    return cost_count_;
}

}  // namespace gencache
