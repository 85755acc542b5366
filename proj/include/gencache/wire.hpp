#pragma once

// JSON shapes for every endpoint of the service and the tier-to-tier protocol.
// Readers ignore unknown fields; writers emit only the fields below. Decoding
// failures throw Error(schema) naming the offending field.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gencache/adaptive_policy.hpp"
#include "gencache/error.hpp"
#include "gencache/semantic_cache.hpp"

namespace gencache::wire {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

enum class Source { l1, l2, peer, generative, llm };
std::string_view to_string(Source s);
Source source_from_string(std::string_view name);

struct TraceHop {
    std::string tier;     // "l1", "l2", "peer:<address>"
    OutcomeKind outcome = OutcomeKind::miss;
    double effective_ts = 0.0;
    bool reachable = true;

    friend bool operator==(const TraceHop&, const TraceHop&) = default;
};

struct QueryRequest {
    std::string query;
    std::optional<std::string> provider_id;
    std::optional<std::string> model_id;
    std::uint64_t max_tokens = 512;
    double temperature = 0.7;
    std::optional<double> ts_override;
    CacheScope cache_control;
    bool fresh = false;
    bool summarize = false;

    friend bool operator==(const QueryRequest&, const QueryRequest&) = default;
};

struct ComponentView {
    std::string entry_id;
    std::string query_text;
    double score = 0.0;

    friend bool operator==(const ComponentView&, const ComponentView&) = default;
};

struct CostView {
    double estimated = 0.0;
    double charged = 0.0;

    friend bool operator==(const CostView&, const CostView&) = default;
};

struct QueryResponse {
    std::string answer;
    Source source = Source::llm;
    std::optional<double> similarity;
    std::optional<std::vector<ComponentView>> components;
    CostView cost;
    double latency_ms = 0.0;
    std::string entry_id;
    double effective_ts = 0.0;
    std::optional<std::string> model_id;
    std::vector<TraceHop> trace;

    friend bool operator==(const QueryResponse&, const QueryResponse&) = default;
};

struct FeedbackRequest {
    std::string entry_id;
    Verdict verdict = Verdict::high;

    friend bool operator==(const FeedbackRequest&, const FeedbackRequest&) = default;
};

struct FeedbackAck {
    bool accepted = true;
    std::optional<double> quality_rate;
    double base_ts = 0.0;

    friend bool operator==(const FeedbackAck&, const FeedbackAck&) = default;
};

struct LookupRequest {
    std::string query;
    LookupPolicy policy{0.8, 0.6, 1.2};
    CacheScope scope;  // governs promotions made while answering

    friend bool operator==(const LookupRequest&, const LookupRequest&) = default;
};

struct LookupResponse {
    OutcomeKind kind = OutcomeKind::miss;
    std::vector<ComponentView> components;
    std::optional<std::string> answer;
    // Which tier answered ("l2" or "peer:<address>") and the hops taken there.
    std::optional<std::string> served_by;
    std::vector<TraceHop> trace;

    friend bool operator==(const LookupResponse&, const LookupResponse&) = default;
};

struct InsertRequest {
    std::string query;
    ResponseRecord response;
    CacheScope scope;

    friend bool operator==(const InsertRequest&, const InsertRequest&) = default;
};

struct InsertResponse {
    std::optional<std::string> entry_id;  // nullopt encodes "skipped"

    friend bool operator==(const InsertResponse&, const InsertResponse&) = default;
};

struct ProviderView {
    std::string provider_id;
    double mean_latency_ms = 0.0;
    double failure_rate = 0.0;
    std::string current_model;

    friend bool operator==(const ProviderView&, const ProviderView&) = default;
};

struct HitCounts {
    std::uint64_t l1 = 0;
    std::uint64_t l2 = 0;
    std::uint64_t peer = 0;
    std::uint64_t generative = 0;

    std::uint64_t total() const noexcept { return l1 + l2 + peer + generative; }
    friend bool operator==(const HitCounts&, const HitCounts&) = default;
};

struct StatsSnapshot {
    std::uint64_t total_requests = 0;
    HitCounts cache_hits;
    std::uint64_t llm_served = 0;
    std::uint64_t errors = 0;
    double hit_rate = 0.0;
    std::optional<double> quality_rate;
    double base_ts = 0.0;
    std::vector<ProviderView> providers;
    double mean_cost_per_request = 0.0;
    std::optional<double> mean_uncached_cost;
    std::uint64_t entry_count = 0;
    std::uint64_t wire_calls = 0;
    std::uint64_t gateway_calls = 0;

    friend bool operator==(const StatsSnapshot&, const StatsSnapshot&) = default;
};

struct PathRequest {
    std::string path;

    friend bool operator==(const PathRequest&, const PathRequest&) = default;
};

struct CountResponse {
    std::uint64_t count = 0;
    std::optional<std::string> path;

    friend bool operator==(const CountResponse&, const CountResponse&) = default;
};

struct ErrorBody {
    std::string error;    // error code name
    std::string message;
    std::optional<std::string> field;
    std::vector<TraceHop> trace;

    friend bool operator==(const ErrorBody&, const ErrorBody&) = default;
};

json encode(const CacheScope& v);
json encode(const LookupPolicy& v);
json encode(const ResponseRecord& v);
json encode(const TraceHop& v);
json encode(const QueryRequest& v);
json encode(const ComponentView& v);
json encode(const QueryResponse& v);
json encode(const FeedbackRequest& v);
json encode(const FeedbackAck& v);
json encode(const LookupRequest& v);
json encode(const LookupResponse& v);
json encode(const InsertRequest& v);
json encode(const InsertResponse& v);
json encode(const StatsSnapshot& v);
json encode(const PathRequest& v);
json encode(const CountResponse& v);
json encode(const ErrorBody& v);

template <typename T>
T decode(const json& j);

template <> CacheScope decode<CacheScope>(const json& j);
template <> LookupPolicy decode<LookupPolicy>(const json& j);
template <> ResponseRecord decode<ResponseRecord>(const json& j);
template <> TraceHop decode<TraceHop>(const json& j);
template <> QueryRequest decode<QueryRequest>(const json& j);
template <> ComponentView decode<ComponentView>(const json& j);
template <> QueryResponse decode<QueryResponse>(const json& j);
template <> FeedbackRequest decode<FeedbackRequest>(const json& j);
template <> FeedbackAck decode<FeedbackAck>(const json& j);
template <> LookupRequest decode<LookupRequest>(const json& j);
template <> LookupResponse decode<LookupResponse>(const json& j);
template <> InsertRequest decode<InsertRequest>(const json& j);
template <> InsertResponse decode<InsertResponse>(const json& j);
template <> StatsSnapshot decode<StatsSnapshot>(const json& j);
template <> PathRequest decode<PathRequest>(const json& j);
template <> CountResponse decode<CountResponse>(const json& j);
template <> ErrorBody decode<ErrorBody>(const json& j);

// Parses text then decodes; malformed JSON is a schema error.
template <typename T>
T decode_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::schema, std::string("malformed JSON: ") + e.what());
    }
    return decode<T>(j);
}

LookupResponse to_wire(const LookupOutcome& outcome);
LookupOutcome from_wire(const LookupResponse& response);

}  // namespace gencache::wire
