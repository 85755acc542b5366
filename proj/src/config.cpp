#include "gencache/config.hpp"

#include <cmath>
#include <fstream>

#include "gencache/error.hpp"

namespace gencache {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& why) {
    throw Error(ErrorCode::invalid_argument, field + ": " + why);
}

const json& need(const json& j, const char* key, const std::string& field) {
    if (!j.is_object() || !j.contains(key)) bad(field, "required");
    return j.at(key);
}

double get_num(const json& j, const char* key, const std::string& field) {
    const auto& v = need(j, key, field);
    if (!v.is_number() || !std::isfinite(v.get<double>())) bad(field, "expected a number");
    return v.get<double>();
}

std::uint64_t get_u64(const json& j, const char* key, const std::string& field) {
    const auto& v = need(j, key, field);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) bad(field, "expected a nonnegative integer");
    return v.get<std::uint64_t>();
}

bool get_bool(const json& j, const char* key, const std::string& field) {
    const auto& v = need(j, key, field);
    if (!v.is_boolean()) bad(field, "expected a boolean");
    return v.get<bool>();
}

std::string get_str(const json& j, const char* key, const std::string& field) {
    const auto& v = need(j, key, field);
    if (!v.is_string()) bad(field, "expected a string");
    return v.get<std::string>();
}

template <typename Fn>
void with(const json& j, const char* key, Fn&& fn) {
    if (j.contains(key) && !j.at(key).is_null()) fn();
}

std::vector<std::string> get_str_list(const json& j, const char* key, const std::string& field) {
    const auto& v = need(j, key, field);
    if (!v.is_array()) bad(field, "expected an array of strings");
    std::vector<std::string> out;
    for (const auto& item : v) {
        if (!item.is_string()) bad(field, "expected an array of strings");
        out.push_back(item.get<std::string>());
    }
    return out;
}

std::chrono::milliseconds get_ms(const json& j, const char* key, const std::string& field) {
    return std::chrono::milliseconds(static_cast<std::int64_t>(get_u64(j, key, field)));
}

}  // namespace

void RuntimeConfig::validate() const {
    policy.validate();
    if (!(lookup.single_margin > 0.0 && lookup.single_margin <= 1.0)) bad("single_margin", "must be in (0,1]");
    if (!(lookup.combined_margin > 0.0 && lookup.combined_margin <= 4.0)) bad("combined_margin", "must be in (0,4]");
    if (lookup.max_components < 1 || lookup.max_components > 64) bad("max_components", "must be in [1,64]");
}

json RuntimeConfig::to_json() const {
    return json{{"base_ts", policy.base_ts},
                {"ts_min", policy.ts_min},
                {"ts_max", policy.ts_max},
                {"step", policy.step},
                {"hysteresis", policy.hysteresis},
                {"t4", policy.t4},
                {"code_offset", policy.code_offset},
                {"text_offset", policy.text_offset},
                {"connectivity_offset_unhealthy", policy.connectivity_offset_unhealthy},
                {"high_cost_offset", policy.high_cost_offset},
                {"high_cost_factor", policy.high_cost_factor},
                {"high_latency_ms", policy.high_latency_ms},
                {"preferred_cost_c1", policy.preferred_cost_c1},
                {"cost_target_enabled", policy.cost_target_enabled},
                {"quality_enabled", policy.quality_enabled},
                {"cost_cadence", policy.cost_cadence},
                {"gen_mode", to_string(lookup.gen_mode)},
                {"max_components", lookup.max_components},
                {"single_margin", lookup.single_margin},
                {"combined_margin", lookup.combined_margin}};
}

RuntimeConfig RuntimeConfig::patched(const json& patch) const {
    if (!patch.is_object()) bad("config", "expected a JSON object");
    RuntimeConfig next = *this;
    auto& p = next.policy;
    auto num = [&](const char* key, double& target) {
        with(patch, key, [&] { target = get_num(patch, key, key); });
    };
    num("base_ts", p.base_ts);
    num("ts_min", p.ts_min);
    num("ts_max", p.ts_max);
    num("step", p.step);
    num("hysteresis", p.hysteresis);
    num("t4", p.t4);
    num("code_offset", p.code_offset);
    num("text_offset", p.text_offset);
    num("connectivity_offset_unhealthy", p.connectivity_offset_unhealthy);
    num("high_cost_offset", p.high_cost_offset);
    num("high_cost_factor", p.high_cost_factor);
    num("high_latency_ms", p.high_latency_ms);
    num("preferred_cost_c1", p.preferred_cost_c1);
    num("single_margin", next.lookup.single_margin);
    num("combined_margin", next.lookup.combined_margin);
    with(patch, "cost_target_enabled", [&] { p.cost_target_enabled = get_bool(patch, "cost_target_enabled", "cost_target_enabled"); });
    with(patch, "quality_enabled", [&] { p.quality_enabled = get_bool(patch, "quality_enabled", "quality_enabled"); });
    with(patch, "cost_cadence", [&] { p.cost_cadence = get_u64(patch, "cost_cadence", "cost_cadence"); });
    with(patch, "max_components", [&] { next.lookup.max_components = get_u64(patch, "max_components", "max_components"); });
    with(patch, "gen_mode", [&] {
        try {
            next.lookup.gen_mode = gen_mode_from_string(get_str(patch, "gen_mode", "gen_mode"));
        } catch (const Error& e) {
            bad("gen_mode", e.what());
        }
    });
    next.validate();
    return next;
}

ServiceConfig ServiceConfig::from_json(const json& j) {
    if (!j.is_object()) bad("config", "expected a JSON object");
    ServiceConfig cfg;

    with(j, "tier", [&] {
        const auto& t = j.at("tier");
        with(t, "id", [&] { cfg.tier.id = get_str(t, "id", "tier.id"); });
        with(t, "role", [&] {
            const auto role = get_str(t, "role", "tier.role");
            if (role == "l1") cfg.tier.role = Tier::l1;
            else if (role == "l2") cfg.tier.role = Tier::l2;
            else bad("tier.role", "must be l1 or l2");
        });
        with(t, "upstream", [&] { cfg.tier.upstream = get_str(t, "upstream", "tier.upstream"); });
        with(t, "peers", [&] { cfg.tier.peers = get_str_list(t, "peers", "tier.peers"); });
        with(t, "max_peer_fanout", [&] { cfg.tier.max_peer_fanout = get_u64(t, "max_peer_fanout", "tier.max_peer_fanout"); });
        with(t, "peer_timeout_ms", [&] { cfg.tier.peer_timeout = get_ms(t, "peer_timeout_ms", "tier.peer_timeout_ms"); });
        with(t, "upstream_timeout_ms", [&] { cfg.tier.upstream_timeout = get_ms(t, "upstream_timeout_ms", "tier.upstream_timeout_ms"); });
        with(t, "inclusion", [&] { cfg.tier.inclusion = get_bool(t, "inclusion", "tier.inclusion"); });
    });
    if (cfg.tier.role == Tier::l1 && !cfg.tier.peers.empty()) bad("tier.peers", "an l1 tier has no peers");
    if (cfg.tier.role == Tier::l2 && cfg.tier.upstream) bad("tier.upstream", "an l2 tier has no upstream");
    if (cfg.tier.peers.size() > cfg.tier.max_peer_fanout) bad("tier.peers", "more peers than max_peer_fanout");

    with(j, "providers", [&] {
        const auto& list = j.at("providers");
        if (!list.is_array()) bad("providers", "expected an array");
        for (std::size_t i = 0; i < list.size(); ++i) {
            const auto& pj = list[i];
            const std::string at = "providers[" + std::to_string(i) + "]";
            if (!pj.is_object()) bad(at, "expected an object");
            ProviderConfig pc;
            pc.id = get_str(pj, "provider_id", at + ".provider_id");
            with(pj, "kind", [&] { pc.kind = get_str(pj, "kind", at + ".kind"); });
            if (pc.kind != "mock" && pc.kind != "http") bad(at + ".kind", "must be mock or http");
            with(pj, "models", [&] { pc.models = get_str_list(pj, "models", at + ".models"); });
            if (pc.models.empty()) bad(at + ".models", "must list at least one model");
            with(pj, "timeout_ms", [&] { pc.timeout = get_ms(pj, "timeout_ms", at + ".timeout_ms"); });
            if (pc.timeout.count() <= 0) bad(at + ".timeout_ms", "must be positive");
            with(pj, "mode", [&] { pc.mode = get_str(pj, "mode", at + ".mode"); });
            with(pj, "latency_ms", [&] { pc.latency = get_ms(pj, "latency_ms", at + ".latency_ms"); });
            with(pj, "failure_rate", [&] { pc.failure_rate = get_num(pj, "failure_rate", at + ".failure_rate"); });
            if (pc.failure_rate < 0.0 || pc.failure_rate > 1.0) bad(at + ".failure_rate", "must be in [0,1]");
            with(pj, "seed", [&] { pc.seed = get_u64(pj, "seed", at + ".seed"); });
            with(pj, "canned_file", [&] { pc.canned_file = get_str(pj, "canned_file", at + ".canned_file"); });
            with(pj, "base_url", [&] { pc.base_url = get_str(pj, "base_url", at + ".base_url"); });
            with(pj, "path", [&] { pc.path = get_str(pj, "path", at + ".path"); });
            with(pj, "auth_header", [&] { pc.auth_header = get_str(pj, "auth_header", at + ".auth_header"); });
            if (pc.kind == "http" && pc.base_url.empty()) bad(at + ".base_url", "required for http providers");
            cfg.providers.push_back(std::move(pc));
        }
    });

    with(j, "pricing", [&] {
        const auto& list = j.at("pricing");
        if (!list.is_array()) bad("pricing", "expected an array");
        cfg.pricing.clear();
        for (std::size_t i = 0; i < list.size(); ++i) {
            const auto& pj = list[i];
            const std::string at = "pricing[" + std::to_string(i) + "]";
            ModelPricing mp;
            mp.model_id = get_str(pj, "model_id", at + ".model_id");
            mp.input_per_million = get_num(pj, "input_per_million", at + ".input_per_million");
            mp.output_per_million = get_num(pj, "output_per_million", at + ".output_per_million");
            with(pj, "seed_latency_ms", [&] { mp.expected_latency_ms = get_num(pj, "seed_latency_ms", at + ".seed_latency_ms"); });
            if (mp.input_per_million < 0 || mp.output_per_million < 0 || mp.expected_latency_ms < 0) {
                bad(at, "prices and latency must be nonnegative");
            }
            cfg.pricing.push_back(std::move(mp));
        }
    });

    with(j, "policy", [&] { cfg.runtime = cfg.runtime.patched(j.at("policy")); });

    with(j, "ladder", [&] {
        const auto& l = j.at("ladder");
        with(l, "n_down", [&] { cfg.ladder.consecutive_low_to_upgrade = get_u64(l, "n_down", "ladder.n_down"); });
        with(l, "n_up", [&] { cfg.ladder.consecutive_high_to_downgrade = get_u64(l, "n_up", "ladder.n_up"); });
        if (cfg.ladder.consecutive_low_to_upgrade == 0 || cfg.ladder.consecutive_high_to_downgrade == 0) {
            bad("ladder", "thresholds must be positive");
        }
    });

    with(j, "capacity", [&] { cfg.capacity = get_u64(j, "capacity", "capacity"); });
    if (cfg.capacity == 0) bad("capacity", "must be positive");

    with(j, "embedder", [&] {
        const auto& e = j.at("embedder");
        with(e, "kind", [&] { cfg.embedder.kind = get_str(e, "kind", "embedder.kind"); });
        if (cfg.embedder.kind != "deterministic" && cfg.embedder.kind != "external") {
            bad("embedder.kind", "must be deterministic or external");
        }
        with(e, "dim", [&] { cfg.embedder.dim = get_u64(e, "dim", "embedder.dim"); });
        if (cfg.embedder.dim == 0) bad("embedder.dim", "must be positive");
        with(e, "base_url", [&] { cfg.embedder.base_url = get_str(e, "base_url", "embedder.base_url"); });
        with(e, "path", [&] { cfg.embedder.path = get_str(e, "path", "embedder.path"); });
        with(e, "timeout_ms", [&] { cfg.embedder.timeout = get_ms(e, "timeout_ms", "embedder.timeout_ms"); });
        if (cfg.embedder.kind == "external" && cfg.embedder.base_url.empty()) {
            bad("embedder.base_url", "required for an external embedder");
        }
    });

    with(j, "snapshot_path", [&] { cfg.snapshot_path = get_str(j, "snapshot_path", "snapshot_path"); });
    with(j, "static_dir", [&] { cfg.static_dir = get_str(j, "static_dir", "static_dir"); });

    if (cfg.providers.empty()) {
        ProviderConfig mock;
        mock.id = "mock";
        mock.models = {"mock-small", "mock-large"};
        cfg.providers.push_back(std::move(mock));
    }
    return cfg;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, "cannot read config file: " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_argument, "config " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

std::shared_ptr<Embedder> make_embedder(const EmbedderConfig& config) {
    if (config.kind == "external") {
        return std::make_shared<HttpEmbedder>(config.base_url, config.path, config.dim, config.timeout);
    }
    return std::make_shared<HashingEmbedder>(config.dim);
}

std::shared_ptr<Provider> make_provider(const ProviderConfig& config) {
    if (config.kind == "http") {
        HttpProviderOptions o;
        o.id = config.id;
        o.models = config.models;
        o.base_url = config.base_url;
        o.path = config.path;
        o.auth_header = config.auth_header;
        o.timeout = config.timeout;
        return std::make_shared<HttpProvider>(std::move(o));
    }
    MockProviderOptions o;
    o.id = config.id;
    o.models = config.models;
    o.mode = mock_mode_from_string(config.mode);
    o.latency = config.latency;
    o.timeout = config.timeout;
    o.failure_rate = config.failure_rate;
    o.seed = config.seed;
    if (config.canned_file) o.canned = load_canned_fixture(*config.canned_file);
    return std::make_shared<MockProvider>(std::move(o));
}

}  // namespace gencache
