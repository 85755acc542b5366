#include "gencache/wire.hpp"

#include <cmath>

#include "gencache/error.hpp"

namespace gencache::wire {

template <typename T>
T decode_at(const json& j, const std::string& prefix);

namespace {

class Reader {
public:
    Reader(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
        if (!j_.is_object()) {
            throw Error(ErrorCode::schema, prefix_.empty() ? std::string("expected a JSON object")
                                                           : "field \"" + prefix_ + "\": expected an object");
        }
    }

    std::string name(const char* field) const { return prefix_.empty() ? field : prefix_ + "." + field; }

    [[noreturn]] void fail(const char* field, const char* expected) const {
        throw Error(ErrorCode::schema, "field \"" + name(field) + "\": expected " + expected);
    }

    bool has(const char* field) const { return j_.contains(field) && !j_.at(field).is_null(); }

    const json& at(const char* field) const {
        if (!has(field)) throw Error(ErrorCode::schema, "missing required field \"" + name(field) + "\"");
        return j_.at(field);
    }

    std::string str(const char* field) const {
        const auto& v = at(field);
        if (!v.is_string()) fail(field, "a string");
        return v.get<std::string>();
    }
    std::optional<std::string> opt_str(const char* field) const {
        if (!has(field)) return std::nullopt;
        return str(field);
    }
    std::string str_or(const char* field, std::string fallback) const { return has(field) ? str(field) : fallback; }

    double num(const char* field) const {
        const auto& v = at(field);
        if (!v.is_number()) fail(field, "a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) fail(field, "a finite number");
        return d;
    }
    std::optional<double> opt_num(const char* field) const {
        if (!has(field)) return std::nullopt;
        return num(field);
    }
    double num_or(const char* field, double fallback) const { return has(field) ? num(field) : fallback; }

    std::uint64_t u64(const char* field) const {
        const auto& v = at(field);
        if (!v.is_number_unsigned()) {
            if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
            fail(field, "a nonnegative integer");
        }
        return v.get<std::uint64_t>();
    }
    std::uint64_t u64_or(const char* field, std::uint64_t fallback) const { return has(field) ? u64(field) : fallback; }

    std::int64_t i64_or(const char* field, std::int64_t fallback) const {
        if (!has(field)) return fallback;
        const auto& v = at(field);
        if (!v.is_number_integer()) fail(field, "an integer");
        return v.get<std::int64_t>();
    }

    bool boolean_or(const char* field, bool fallback) const {
        if (!has(field)) return fallback;
        const auto& v = at(field);
        if (!v.is_boolean()) fail(field, "a boolean");
        return v.get<bool>();
    }

    const json& array(const char* field) const {
        const auto& v = at(field);
        if (!v.is_array()) fail(field, "an array");
        return v;
    }

    template <typename T>
    T nested(const char* field) const {
        return decode_at<T>(at(field), name(field));
    }

    template <typename T>
    std::vector<T> list(const char* field) const {
        std::vector<T> out;
        std::size_t i = 0;
        for (const auto& item : array(field)) {
            out.push_back(decode_at<T>(item, name(field) + "[" + std::to_string(i++) + "]"));
        }
        return out;
    }

private:
    const json& j_;
    std::string prefix_;
};

template <typename E, typename F>
E parse_enum(const Reader& r, const char* field, F&& from_string) {
    const auto text = r.str(field);
    try {
        return from_string(text);
    } catch (const Error&) {
        throw Error(ErrorCode::schema, "field \"" + r.name(field) + "\": invalid value \"" + text + "\"");
    }
}

json encode_trace(const std::vector<TraceHop>& trace) {
    json out = json::array();
    for (const auto& hop : trace) out.push_back(encode(hop));
    return out;
}

}  // namespace

std::string_view to_string(Source s) {
    switch (s) {
        case Source::l1: return "l1";
        case Source::l2: return "l2";
        case Source::peer: return "peer";
        case Source::generative: return "generative";
        case Source::llm: return "llm";
    }
    return "llm";
}

Source source_from_string(std::string_view name) {
    if (name == "l1") return Source::l1;
    if (name == "l2") return Source::l2;
    if (name == "peer") return Source::peer;
    if (name == "generative") return Source::generative;
    if (name == "llm") return Source::llm;
    throw Error(ErrorCode::invalid_argument, "unknown source: " + std::string(name));
}

json encode(const CacheScope& v) { return json{{"allow_l1", v.allow_l1}, {"allow_l2", v.allow_l2}}; }

template <>
CacheScope decode_at<CacheScope>(const json& j, const std::string& prefix) {
    Reader r(j, prefix);
    return CacheScope{r.boolean_or("allow_l1", true), r.boolean_or("allow_l2", true)};
}

json encode(const LookupPolicy& v) {
    return json{{"t_s", v.t_s()},
                {"t_single", v.t_single()},
                {"t_combined", v.t_combined()},
                {"gen_mode", to_string(v.gen_mode())},
                {"max_components", v.max_components()}};
}

template <>
LookupPolicy decode_at<LookupPolicy>(const json& j, const std::string& prefix) {
    Reader r(j, prefix);
    const double t_s = r.num("t_s");
    const double t_single = r.num("t_single");
    const double t_combined = r.num("t_combined");
    const GenMode mode = r.has("gen_mode") ? parse_enum<GenMode>(r, "gen_mode", gen_mode_from_string)
                                           : GenMode::secondary;
    const auto k = r.u64_or("max_components", kDefaultMaxComponents);
    try {
        return LookupPolicy(t_s, t_single, t_combined, mode, k);
    } catch (const Error& e) {
        throw Error(ErrorCode::schema, "field \"" + r.name("t_s") + "\": " + e.what());
    }
}

json encode(const ResponseRecord& v) {
    return json{{"text", v.text},
                {"model_id", v.model_id},
                {"provider_id", v.provider_id},
                {"observed_cost", v.observed_cost},
                {"observed_latency_ms", v.observed_latency_ms},
                {"created_at", v.created_at},
                {"synthesized", v.synthesized}};
}

template <>
ResponseRecord decode_at<ResponseRecord>(const json& j, const std::string& prefix) {
    Reader r(j, prefix);
    ResponseRecord v;
    v.text = r.str("text");
    if (v.text.empty()) r.fail("text", "a non-empty string");
    v.model_id = r.str_or("model_id", "");
    v.provider_id = r.str_or("provider_id", "");
    v.observed_cost = r.num_or("observed_cost", 0.0);
    v.observed_latency_ms = r.num_or("observed_latency_ms", 0.0);
    v.created_at = r.i64_or("created_at", 0);
    v.synthesized = r.boolean_or("synthesized", false);
    return v;
}

json encode(const TraceHop& v) {
    return json{{"tier", v.tier},
                {"outcome", to_string(v.outcome)},
                {"effective_ts", v.effective_ts},
                {"reachable", v.reachable}};
}

template <>
TraceHop decode_at<TraceHop>(const json& j, const std::string& prefix) {
    Reader r(j, prefix);
    TraceHop v;
    v.tier = r.str("tier");
    v.outcome = parse_enum<OutcomeKind>(r, "outcome", outcome_kind_from_string);
    v.effective_ts = r.num_or("effective_ts", 0.0);
    v.reachable = r.boolean_or("reachable", true);
    return v;
}

json encode(const QueryRequest& v) {
    json j{{"query", v.query},
           {"max_tokens", v.max_tokens},
           {"temperature", v.temperature},
           {"cache_control", encode(v.cache_control)},
           {"fresh", v.fresh},
           {"summarize", v.summarize}};
    if (v.provider_id) j["provider_id"] = *v.provider_id;
    if (v.model_id) j["model_id"] = *v.model_id;
    if (v.ts_override) j["ts_override"] = *v.ts_override;
    return j;
}

template <>
QueryRequest decode_at<QueryRequest>(const json& j, const std::string& prefix) {
    Reader r(j, prefix);
    QueryRequest v;
    v.query = r.str("query");
    v.provider_id = r.opt_str("provider_id");
    v.model_id = r.opt_str("model_id");
    v.max_tokens = r.u64_or("max_tokens", 512);
    if (v.max_tokens == 0) r.fail("max_tokens", "a positive integer");
    v.temperature = r.num_or("temperature", 0.7);
    if (v.temperature < 0.0) r.fail("temperature", "a number >= 0");
    v.ts_override = r.opt_num("ts_override");
    if (v.ts_override && (*v.ts_override < 0.0 || *v.ts_override > 1.0)) r.fail("ts_override", "a number in [0,1]");
    if (r.has("cache_control")) v.cache_control = r.nested<CacheScope>("cache_control");
    v.fresh = r.boolean_or("fresh", false);
    v.summarize = r.boolean_or("summarize", false);
    return v;
}

json encode(const ComponentView& v) {
    return json{{"entry_id", v.entry_id}, {"query_text", v.query_text}, {"score", v.score}};
}

template <>
ComponentView decode_at<ComponentView>(const json& j, const std::string& prefix) {
    Reader r(j, prefix);
    return ComponentView{r.str_or("entry_id", ""), r.str_or("query_text", ""), r.num("score")};
}

json encode(const QueryResponse& v) {
    json j{{"answer", v.answer},
           {"source", to_string(v.source)},
           {"cost", json{{"estimated", v.cost.estimated}, {"charged", v.cost.charged}}},
           {"latency_ms", v.latency_ms},
           {"entry_id", v.entry_id},
           {"effective_ts", v.effective_ts},
           {"trace", encode_trace(v.trace)}};
    if (v.similarity) j["similarity"] = *v.similarity;
    if (v.components) {
        json comps = json::array();
        for (const auto& c : *v.components) comps.push_back(encode(c));
        j["components"] = std::move(comps);
    }
    if (v.model_id) j["model_id"] = *v.model_id;
    return j;
}

template <>
QueryResponse decode_at<QueryResponse>(const json& j, const std::string& prefix) {
    Reader r(j, prefix);
    QueryResponse v;
    v.answer = r.str("answer");
    v.source = parse_enum<Source>(r, "source", source_from_string);
    v.similarity = r.opt_num("similarity");
    if (r.has("components")) v.components = r.list<ComponentView>("components");
    const Reader cost(r.at("cost"), r.name("cost"));
    v.cost.estimated = cost.num_or("estimated", 0.0);
    v.cost.charged = cost.num_or("charged", 0.0);
    v.latency_ms = r.num_or("latency_ms", 0.0);
    v.entry_id = r.str_or("entry_id", "");
    v.effective_ts = r.num_or("effective_ts", 0.0);
    v.model_id = r.opt_str("model_id");
    if (r.has("trace")) v.trace = r.list<TraceHop>("trace");
    if (v.source == Source::generative && (!v.components || v.components->empty())) {
        r.fail("components", "at least one component for a generative answer");
    }
    return v;
}

json encode(const FeedbackRequest& v) { return json{{"entry_id", v.entry_id}, {"verdict", to_string(v.verdict)}}; }

template <>
FeedbackRequest decode_at<FeedbackRequest>(const json& j, const std::string& prefix) {
    Reader r(j, prefix);
    FeedbackRequest v;
    v.entry_id = r.str("entry_id");
    v.verdict = parse_enum<Verdict>(r, "verdict", verdict_from_string);
    return v;
}

json encode(const FeedbackAck& v) {
    json j{{"accepted", v.accepted}, {"base_ts", v.base_ts}};
    if (v.quality_rate) j["quality_rate"] = *v.quality_rate;
    return j;
}

template <>
FeedbackAck decode_at<FeedbackAck>(const json& j, const std::string& prefix) {
    Reader r(j, prefix);
    return FeedbackAck{r.boolean_or("accepted", true), r.opt_num("quality_rate"), r.num_or("base_ts", 0.0)};
}

json encode(const LookupRequest& v) {
    json j{{"query", v.query}, {"policy", encode(v.policy)}};
    if (!(v.scope == CacheScope{})) j["scope"] = encode(v.scope);
    return j;
}

template <>
LookupRequest decode_at<LookupRequest>(const json& j, const std::string& prefix) {
    Reader r(j, prefix);
    LookupRequest v{r.str("query"), r.nested<LookupPolicy>("policy"), {}};
    if (r.has("scope")) v.scope = r.nested<CacheScope>("scope");
    return v;
}

json encode(const LookupResponse& v) {
    json comps = json::array();
    for (const auto& c : v.components) comps.push_back(encode(c));
    json j{{"kind", to_string(v.kind)}, {"components", std::move(comps)}};
    if (v.answer) j["answer"] = *v.answer;
    if (v.served_by) j["served_by"] = *v.served_by;
    if (!v.trace.empty()) j["trace"] = encode_trace(v.trace);
    return j;
}

template <>
LookupResponse decode_at<LookupResponse>(const json& j, const std::string& prefix) {
    Reader r(j, prefix);
    LookupResponse v;
    v.kind = parse_enum<OutcomeKind>(r, "kind", outcome_kind_from_string);
    if (r.has("components")) v.components = r.list<ComponentView>("components");
    v.answer = r.opt_str("answer");
    v.served_by = r.opt_str("served_by");
    if (r.has("trace")) v.trace = r.list<TraceHop>("trace");
    if (v.kind == OutcomeKind::miss && (!v.components.empty() || v.answer)) {
        r.fail("kind", "no components or answer on a miss");
    }
    if (v.kind != OutcomeKind::miss && (v.components.empty() || !v.answer)) {
        r.fail("components", "components and an answer on a hit");
    }
    return v;
}

json encode(const InsertRequest& v) {
    return json{{"query", v.query}, {"response", encode(v.response)}, {"scope", encode(v.scope)}};
}

template <>
InsertRequest decode_at<InsertRequest>(const json& j, const std::string& prefix) {
    Reader r(j, prefix);
    InsertRequest v;
    v.query = r.str("query");
    v.response = r.nested<ResponseRecord>("response");
    if (r.has("scope")) v.scope = r.nested<CacheScope>("scope");
    return v;
}

json encode(const InsertResponse& v) { return json{{"entry_id", v.entry_id ? *v.entry_id : std::string("skipped")}}; }

template <>
InsertResponse decode_at<InsertResponse>(const json& j, const std::string& prefix) {
    Reader r(j, prefix);
    auto id = r.str("entry_id");
    if (id == "skipped") return InsertResponse{std::nullopt};
    return InsertResponse{std::move(id)};
}

json encode(const StatsSnapshot& v) {
    json providers = json::array();
    for (const auto& p : v.providers) {
        providers.push_back(json{{"provider_id", p.provider_id},
                                 {"mean_latency_ms", p.mean_latency_ms},
                                 {"failure_rate", p.failure_rate},
                                 {"current_model", p.current_model}});
    }
    json j{{"total_requests", v.total_requests},
           {"cache_hits",
            json{{"l1", v.cache_hits.l1},
                 {"l2", v.cache_hits.l2},
                 {"peer", v.cache_hits.peer},
                 {"generative", v.cache_hits.generative},
                 {"total", v.cache_hits.total()}}},
           {"llm_served", v.llm_served},
           {"errors", v.errors},
           {"hit_rate", v.hit_rate},
           {"base_ts", v.base_ts},
           {"providers", std::move(providers)},
           {"mean_cost_per_request", v.mean_cost_per_request},
           {"entry_count", v.entry_count},
           {"wire_calls", v.wire_calls},
           {"gateway_calls", v.gateway_calls}};
    if (v.quality_rate) j["quality_rate"] = *v.quality_rate;
    if (v.mean_uncached_cost) j["mean_uncached_cost"] = *v.mean_uncached_cost;
    return j;
}

template <>
StatsSnapshot decode_at<StatsSnapshot>(const json& j, const std::string& prefix) {
    Reader r(j, prefix);
    StatsSnapshot v;
    v.total_requests = r.u64("total_requests");
    if (r.has("cache_hits")) {
        const Reader hits(r.at("cache_hits"), r.name("cache_hits"));
        v.cache_hits = HitCounts{hits.u64_or("l1", 0), hits.u64_or("l2", 0), hits.u64_or("peer", 0),
                                 hits.u64_or("generative", 0)};
    }
    v.llm_served = r.u64_or("llm_served", 0);
    v.errors = r.u64_or("errors", 0);
    v.hit_rate = r.num_or("hit_rate", 0.0);
    v.quality_rate = r.opt_num("quality_rate");
    v.base_ts = r.num_or("base_ts", 0.0);
    if (r.has("providers")) {
        for (const auto& item : r.array("providers")) {
            const Reader p(item, r.name("providers"));
            v.providers.push_back(ProviderView{p.str("provider_id"), p.num_or("mean_latency_ms", 0.0),
                                               p.num_or("failure_rate", 0.0), p.str_or("current_model", "")});
        }
    }
    v.mean_cost_per_request = r.num_or("mean_cost_per_request", 0.0);
    v.mean_uncached_cost = r.opt_num("mean_uncached_cost");
    v.entry_count = r.u64_or("entry_count", 0);
    v.wire_calls = r.u64_or("wire_calls", 0);
    v.gateway_calls = r.u64_or("gateway_calls", 0);
    return v;
}

json encode(const PathRequest& v) { return json{{"path", v.path}}; }

template <>
PathRequest decode_at<PathRequest>(const json& j, const std::string& prefix) {
    Reader r(j, prefix);
    return PathRequest{r.str("path")};
}

json encode(const CountResponse& v) {
    json j{{"count", v.count}};
    if (v.path) j["path"] = *v.path;
    return j;
}

template <>
CountResponse decode_at<CountResponse>(const json& j, const std::string& prefix) {
    Reader r(j, prefix);
    return CountResponse{r.u64("count"), r.opt_str("path")};
}

json encode(const ErrorBody& v) {
    json j{{"error", v.error}, {"message", v.message}};
    if (v.field) j["field"] = *v.field;
    if (!v.trace.empty()) j["trace"] = encode_trace(v.trace);
    return j;
}

template <>
ErrorBody decode_at<ErrorBody>(const json& j, const std::string& prefix) {
    Reader r(j, prefix);
    ErrorBody v;
    v.error = r.str("error");
    v.message = r.str_or("message", "");
    v.field = r.opt_str("field");
    if (r.has("trace")) v.trace = r.list<TraceHop>("trace");
    return v;
}

template <>
CacheScope decode<CacheScope>(const json& j) {
    return decode_at<CacheScope>(j, "");
}

template <>
LookupPolicy decode<LookupPolicy>(const json& j) {
    return decode_at<LookupPolicy>(j, "");
}

template <>
ResponseRecord decode<ResponseRecord>(const json& j) {
    return decode_at<ResponseRecord>(j, "");
}

template <>
TraceHop decode<TraceHop>(const json& j) {
    return decode_at<TraceHop>(j, "");
}

template <>
QueryRequest decode<QueryRequest>(const json& j) {
    return decode_at<QueryRequest>(j, "");
}

template <>
ComponentView decode<ComponentView>(const json& j) {
    return decode_at<ComponentView>(j, "");
}

template <>
QueryResponse decode<QueryResponse>(const json& j) {
    return decode_at<QueryResponse>(j, "");
}

template <>
FeedbackRequest decode<FeedbackRequest>(const json& j) {
    return decode_at<FeedbackRequest>(j, "");
}

template <>
FeedbackAck decode<FeedbackAck>(const json& j) {
    return decode_at<FeedbackAck>(j, "");
}

template <>
LookupRequest decode<LookupRequest>(const json& j) {
    return decode_at<LookupRequest>(j, "");
}

template <>
LookupResponse decode<LookupResponse>(const json& j) {
    return decode_at<LookupResponse>(j, "");
}

template <>
InsertRequest decode<InsertRequest>(const json& j) {
    return decode_at<InsertRequest>(j, "");
}

template <>
InsertResponse decode<InsertResponse>(const json& j) {
    return decode_at<InsertResponse>(j, "");
}

template <>
StatsSnapshot decode<StatsSnapshot>(const json& j) {
    return decode_at<StatsSnapshot>(j, "");
}

template <>
PathRequest decode<PathRequest>(const json& j) {
    return decode_at<PathRequest>(j, "");
}

template <>
CountResponse decode<CountResponse>(const json& j) {
    return decode_at<CountResponse>(j, "");
}

template <>
ErrorBody decode<ErrorBody>(const json& j) {
    return decode_at<ErrorBody>(j, "");
}

LookupResponse to_wire(const LookupOutcome& outcome) {
    LookupResponse out;
    out.kind = outcome.kind;
    for (const auto& c : outcome.components) out.components.push_back(ComponentView{c.entry_id.str(), c.query_text, c.score});
    out.answer = outcome.answer;
    return out;
}

LookupOutcome from_wire(const LookupResponse& response) {
    LookupOutcome out;
    out.kind = response.kind;
    for (const auto& c : response.components) {
        Component comp;
        try {
            comp.entry_id = EntryId::parse(c.entry_id);
        } catch (const Error&) {
            comp.entry_id = EntryId{0};
        }
        comp.score = c.score;
        comp.query_text = c.query_text;
        out.components.push_back(std::move(comp));
    }
    out.answer = response.answer;
    if (!out.components.empty()) out.best_score = out.components.front().score;
    return out;
}

}  // namespace gencache::wire
