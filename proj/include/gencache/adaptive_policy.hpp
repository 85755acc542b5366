#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gencache/cost_model.hpp"

namespace gencache {

enum class ContentClass { text, code };
std::string_view to_string(ContentClass cls);
ContentClass content_class_from_string(std::string_view name);

enum class Verdict { high, low };
std::string_view to_string(Verdict v);
Verdict verdict_from_string(std::string_view name);

struct PolicyParams {
    double base_ts = 0.80;
    double ts_min = 0.50;
    double ts_max = 0.99;
    double step = 0.01;         // controller step
    double hysteresis = 0.05;   // dead band around each target
    double t4 = 0.80;           // target quality rate
    double code_offset = 0.07;
    double text_offset = 0.0;
    double connectivity_offset_unhealthy = -0.05;
    double high_cost_offset = -0.03;
    double high_cost_factor = 10.0;      // cutoff relative to the cheapest model
    double high_latency_ms = 10000.0;
    double preferred_cost_c1 = 0.0;
    bool cost_target_enabled = false;
    bool quality_enabled = true;
    std::uint64_t cost_cadence = 50;     // requests per cost-controller window

    // Throws Error(invalid_argument) naming the offending field.
    void validate() const;
};

// (c2 - c1) / c2, capped at 0.99 as an operational target.
// Throws Error(invalid_argument) unless c2 > c1 >= 0.
double cost_target_hit_rate(double c1, double c2);
inline constexpr double kMaxTargetHitRate = 0.99;

struct CodeHeuristic {
    std::vector<std::string> phrases{"write code", "implement a function", "in code", "```"};
    std::vector<std::string> symbol_tokens{"{", "}", ";", "()"};
    std::size_t min_symbol_hits = 2;
};

ContentClass classify_content(std::string_view query_text, const CodeHeuristic& heuristic = {});

struct ThresholdInputs {
    ContentClass content_class = ContentClass::text;
    CostEstimate estimated_cost;
    std::optional<double> cheapest_monetary;  // same request on the cheapest model
    bool provider_healthy = true;
    std::optional<double> user_override;
};

// Owns the base similarity threshold and the two feedback controllers (quality
// rate around t4, hit rate around the cost target). All mutators serialize.
class AdaptivePolicy {
public:
    explicit AdaptivePolicy(PolicyParams params = {});

    PolicyParams params() const;
    // Validates, then replaces parameters; base_ts is clamped into the new bounds.
    void set_params(const PolicyParams& params);

    double base_ts() const;
    double clamp(double ts) const;

    double effective_threshold(const ThresholdInputs& in) const;
    double cost_offset(const CostEstimate& estimate, std::optional<double> cheapest_monetary) const;
    double class_offset(ContentClass cls) const;

    void record_feedback(Verdict v);
    std::uint64_t high_hits() const;
    std::uint64_t low_hits() const;
    std::optional<double> quality_rate() const;

    // Throws Error(unavailable) when no feedback has been recorded.
    double adjust_for_quality();
    double adjust_for_cost(double observed_hit_rate, double target_hit_rate);

    // Counts a completed request; every `cost_cadence` requests, when the cost
    // target is enabled and c2 is known, runs adjust_for_cost on the window's
    // hit rate. Returns true when the controller ran.
    bool on_request_completed(bool was_hit, std::optional<double> mean_uncached_cost);
    std::optional<double> last_window_hit_rate() const;

private:
    double clamp_locked(double ts) const;
    double adjust_for_quality_locked();

    mutable std::mutex mutex_;
    PolicyParams params_;
    std::uint64_t high_ = 0;
    std::uint64_t low_ = 0;
    // Direction of the most recent quality move inside the current cost window.
    int quality_direction_in_window_ = 0;
    std::uint64_t window_requests_ = 0;
    std::uint64_t window_hits_ = 0;
    std::optional<double> last_window_hit_rate_;
};

}  // namespace gencache
