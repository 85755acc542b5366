#include "gencache/adaptive_policy.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "gencache/error.hpp"

namespace gencache {

namespace {

std::string lowercase(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return 0;
    std::size_t n = 0;
    for (std::size_t pos = haystack.find(needle); pos != std::string_view::npos;
         pos = haystack.find(needle, pos + needle.size())) {
        ++n;
    }
    return n;
}

void require(bool ok, const char* field, const std::string& why) {
    if (!ok) throw Error(ErrorCode::invalid_argument, std::string(field) + ": " + why);
}

}  // namespace

std::string_view to_string(ContentClass cls) { return cls == ContentClass::code ? "code" : "text"; }

ContentClass content_class_from_string(std::string_view name) {
    if (name == "code") return ContentClass::code;
    if (name == "text") return ContentClass::text;
    throw Error(ErrorCode::invalid_argument, "unknown content class: " + std::string(name));
}

std::string_view to_string(Verdict v) { return v == Verdict::high ? "high" : "low"; }

Verdict verdict_from_string(std::string_view name) {
    if (name == "high") return Verdict::high;
    if (name == "low") return Verdict::low;
    throw Error(ErrorCode::invalid_argument, "verdict must be \"high\" or \"low\"");
}

void PolicyParams::validate() const {
    auto finite = [](double v) { return std::isfinite(v); };
    require(finite(ts_min) && ts_min >= 0.0 && ts_min <= 1.0, "ts_min", "must be in [0,1]");
    require(finite(ts_max) && ts_max >= 0.0 && ts_max <= 1.0, "ts_max", "must be in [0,1]");
    require(ts_min < ts_max, "ts_min", "must be below ts_max");
    require(finite(base_ts) && base_ts >= 0.0 && base_ts <= 1.0, "base_ts", "must be in [0,1]");
    require(finite(step) && step > 0.0 && step <= 0.5, "step", "must be in (0,0.5]");
    require(finite(hysteresis) && hysteresis >= 0.0 && hysteresis < 0.5, "hysteresis", "must be in [0,0.5)");
    require(finite(t4) && t4 > 0.0 && t4 < 1.0, "t4", "must be in (0,1)");
    require(finite(code_offset) && std::abs(code_offset) <= 0.5, "code_offset", "must be in [-0.5,0.5]");
    require(finite(text_offset) && std::abs(text_offset) <= 0.5, "text_offset", "must be in [-0.5,0.5]");
    require(finite(connectivity_offset_unhealthy) && std::abs(connectivity_offset_unhealthy) <= 0.5,
            "connectivity_offset_unhealthy", "must be in [-0.5,0.5]");
    require(finite(high_cost_offset) && std::abs(high_cost_offset) <= 0.5, "high_cost_offset",
            "must be in [-0.5,0.5]");
    require(finite(high_cost_factor) && high_cost_factor >= 1.0, "high_cost_factor", "must be >= 1");
    require(finite(high_latency_ms) && high_latency_ms >= 0.0, "high_latency_ms", "must be >= 0");
    require(finite(preferred_cost_c1) && preferred_cost_c1 >= 0.0, "preferred_cost_c1", "must be >= 0");
    require(cost_cadence >= 1, "cost_cadence", "must be >= 1");
}

double cost_target_hit_rate(double c1, double c2) {
    if (!(c1 >= 0.0) || !(c2 > 0.0) || !(c2 > c1)) {
        throw Error(ErrorCode::invalid_argument, "cost target requires c2 > c1 >= 0");
    }
    return std::min((c2 - c1) / c2, kMaxTargetHitRate);
}

ContentClass classify_content(std::string_view query_text, const CodeHeuristic& heuristic) {
    const std::string lower = lowercase(query_text);
    for (const auto& phrase : heuristic.phrases) {
        if (lower.find(lowercase(phrase)) != std::string::npos) return ContentClass::code;
    }
    std::size_t symbols = 0;
    for (const auto& tok : heuristic.symbol_tokens) symbols += count_occurrences(lower, tok);
    return symbols >= heuristic.min_symbol_hits ? ContentClass::code : ContentClass::text;
}

AdaptivePolicy::AdaptivePolicy(PolicyParams params) {
    params.validate();
    params_ = params;
    params_.base_ts = clamp_locked(params.base_ts);
}

PolicyParams AdaptivePolicy::params() const {
    std::lock_guard lock(mutex_);
    return params_;
}

void AdaptivePolicy::set_params(const PolicyParams& params) {
    params.validate();
    std::lock_guard lock(mutex_);
    params_ = params;
    params_.base_ts = clamp_locked(params.base_ts);
}

double AdaptivePolicy::base_ts() const {
    std::lock_guard lock(mutex_);
    return params_.base_ts;
}

double AdaptivePolicy::clamp_locked(double ts) const { return std::clamp(ts, params_.ts_min, params_.ts_max); }

double AdaptivePolicy::clamp(double ts) const {
    std::lock_guard lock(mutex_);
    return clamp_locked(ts);
}

double AdaptivePolicy::class_offset(ContentClass cls) const {
    std::lock_guard lock(mutex_);
    return cls == ContentClass::code ? params_.code_offset : params_.text_offset;
}

double AdaptivePolicy::cost_offset(const CostEstimate& estimate, std::optional<double> cheapest_monetary) const {
    std::lock_guard lock(mutex_);
    const bool expensive = cheapest_monetary && *cheapest_monetary > 0.0 &&
                           estimate.monetary > params_.high_cost_factor * *cheapest_monetary;
    const bool slow = estimate.expected_latency_ms > params_.high_latency_ms;
    return (expensive || slow) ? params_.high_cost_offset : 0.0;
}

double AdaptivePolicy::effective_threshold(const ThresholdInputs& in) const {
    if (in.user_override) return clamp(*in.user_override);
    const double offset = class_offset(in.content_class) + cost_offset(in.estimated_cost, in.cheapest_monetary);
    std::lock_guard lock(mutex_);
    const double health = in.provider_healthy ? 0.0 : params_.connectivity_offset_unhealthy;
    return clamp_locked(params_.base_ts + offset + health);
}

void AdaptivePolicy::record_feedback(Verdict v) {
    std::lock_guard lock(mutex_);
    (v == Verdict::high ? high_ : low_) += 1;
}

std::uint64_t AdaptivePolicy::high_hits() const {
    std::lock_guard lock(mutex_);
    return high_;
}

std::uint64_t AdaptivePolicy::low_hits() const {
    std::lock_guard lock(mutex_);
    return low_;
}

std::optional<double> AdaptivePolicy::quality_rate() const {
    std::lock_guard lock(mutex_);
    if (high_ + low_ == 0) return std::nullopt;
    return static_cast<double>(high_) / static_cast<double>(high_ + low_);
}

double AdaptivePolicy::adjust_for_quality() {
    std::lock_guard lock(mutex_);
    return adjust_for_quality_locked();
}

double AdaptivePolicy::adjust_for_quality_locked() {
    if (high_ + low_ == 0) throw Error(ErrorCode::unavailable, "quality rate undefined: no feedback yet");
    const double rate = static_cast<double>(high_) / static_cast<double>(high_ + low_);
    int direction = 0;
    if (rate < params_.t4 - params_.hysteresis) {
        direction = +1;
    } else if (rate > params_.t4 + params_.hysteresis) {
        direction = -1;
    }
    if (direction != 0) {
        params_.base_ts = clamp_locked(params_.base_ts + direction * params_.step);
        quality_direction_in_window_ = direction;
    }
    return params_.base_ts;
}

double AdaptivePolicy::adjust_for_cost(double observed_hit_rate, double target_hit_rate) {
    if (!(observed_hit_rate >= 0.0 && observed_hit_rate <= 1.0) ||
        !(target_hit_rate >= 0.0 && target_hit_rate <= 1.0)) {
        throw Error(ErrorCode::invalid_argument, "hit rates must be in [0,1]");
    }
    std::lock_guard lock(mutex_);
    int direction = 0;
    if (observed_hit_rate < target_hit_rate - params_.hysteresis) {
        direction = -1;  // lower threshold, more hits
    } else if (observed_hit_rate > target_hit_rate + params_.hysteresis) {
        direction = +1;
    }
    // A cost move never reverses a quality move from the same window.
    if (direction != 0 && quality_direction_in_window_ != 0 && direction != quality_direction_in_window_) {
        direction = 0;
    }
    if (direction != 0) params_.base_ts = clamp_locked(params_.base_ts + direction * params_.step);
    return params_.base_ts;
}

bool AdaptivePolicy::on_request_completed(bool was_hit, std::optional<double> mean_uncached_cost) {
    double observed = 0.0;
    PolicyParams snapshot;
    {
        std::lock_guard lock(mutex_);
        ++window_requests_;
        if (was_hit) ++window_hits_;
        if (window_requests_ < params_.cost_cadence) return false;
        observed = static_cast<double>(window_hits_) / static_cast<double>(window_requests_);
        last_window_hit_rate_ = observed;
        window_requests_ = 0;
        window_hits_ = 0;
        snapshot = params_;
    }
    bool ran = false;
    if (snapshot.cost_target_enabled && mean_uncached_cost && *mean_uncached_cost > snapshot.preferred_cost_c1) {
        adjust_for_cost(observed, cost_target_hit_rate(snapshot.preferred_cost_c1, *mean_uncached_cost));
        ran = true;
    }
    std::lock_guard lock(mutex_);
    quality_direction_in_window_ = 0;
    return ran;
}

std::optional<double> AdaptivePolicy::last_window_hit_rate() const {
    std::lock_guard lock(mutex_);
    return last_window_hit_rate_;
}

}  // namespace gencache
