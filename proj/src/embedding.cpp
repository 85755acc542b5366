#include "gencache/embedding.hpp"

#include <algorithm>
#include <cmath>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "gencache/error.hpp"

namespace gencache {

namespace {

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

bool is_token_byte(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
           c >= 0x80;
}

unsigned char ascii_lower(unsigned char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<unsigned char>(c - 'A' + 'a') : c;
}

template <typename T>
Embedding normalize_impl(std::span<const T> raw) {
    double sum_sq = 0.0;
    for (T v : raw) sum_sq += static_cast<double>(v) * static_cast<double>(v);
    if (sum_sq == 0.0 || !std::isfinite(sum_sq)) return Embedding::zero(raw.size());
    const double norm = std::sqrt(sum_sq);
    std::vector<float> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out[i] = static_cast<float>(static_cast<double>(raw[i]) / norm);
    }
    return Embedding::from_unit(std::move(out));
}

}  // namespace

Embedding Embedding::zero(std::size_t dim) { return Embedding(std::vector<float>(dim, 0.0f), true); }

Embedding Embedding::normalized(std::span<const double> raw) { return normalize_impl(raw); }
Embedding Embedding::normalized(std::span<const float> raw) { return normalize_impl(raw); }

Embedding Embedding::from_unit(std::vector<float> values) {
    double sum_sq = 0.0;
    bool all_zero = true;
    for (float v : values) {
        if (!std::isfinite(v)) throw Error(ErrorCode::format, "embedding contains a non-finite value");
        if (v != 0.0f) all_zero = false;
        sum_sq += static_cast<double>(v) * static_cast<double>(v);
    }
    if (all_zero) return Embedding(std::move(values), true);
    if (std::abs(std::sqrt(sum_sq) - 1.0) > 1e-4) {
        throw Error(ErrorCode::format, "embedding is neither unit-norm nor zero");
    }
    return Embedding(std::move(values), false);
}

std::string_view to_string(Metric metric) {
    switch (metric) {
        case Metric::cosine: return "cosine";
        case Metric::dot: return "dot";
        case Metric::euclidean: return "euclidean";
    }
    return "cosine";
}

Metric metric_from_string(std::string_view name) {
    if (name == "cosine") return Metric::cosine;
    if (name == "dot") return Metric::dot;
    if (name == "euclidean") return Metric::euclidean;
    throw Error(ErrorCode::invalid_argument, "unknown metric: " + std::string(name));
}

// Four independent accumulators keep the loop vectorizable while fixing the
// summation order, so results are reproducible and symmetric in (a, b).
double dot_product(std::span<const float> a, std::span<const float> b) noexcept {
    const std::size_t n = a.size();
    double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc0 += static_cast<double>(a[i]) * b[i];
        acc1 += static_cast<double>(a[i + 1]) * b[i + 1];
        acc2 += static_cast<double>(a[i + 2]) * b[i + 2];
        acc3 += static_cast<double>(a[i + 3]) * b[i + 3];
    }
    for (; i < n; ++i) acc0 += static_cast<double>(a[i]) * b[i];
    return (acc0 + acc1) + (acc2 + acc3);
}

double squared_distance(std::span<const float> a, std::span<const float> b) noexcept {
    const std::size_t n = a.size();
    double acc0 = 0.0, acc1 = 0.0;
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const double d0 = static_cast<double>(a[i]) - b[i];
        const double d1 = static_cast<double>(a[i + 1]) - b[i + 1];
        acc0 += d0 * d0;
        acc1 += d1 * d1;
    }
    for (; i < n; ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc0 += d * d;
    }
    return acc0 + acc1;
}

double similarity(const Embedding& a, const Embedding& b, Metric metric) {
    if (a.dim() != b.dim()) {
        throw Error(ErrorCode::invalid_argument,
                    "embedding dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                        std::to_string(b.dim()));
    }
    if (a.is_zero() || b.is_zero()) return 0.0;
    switch (metric) {
        case Metric::cosine: {
            const double d = dot_product(a.values(), b.values());
            const double na = dot_product(a.values(), a.values());
            const double nb = dot_product(b.values(), b.values());
            return std::clamp(d / std::sqrt(na * nb), -1.0, 1.0);
        }
        case Metric::dot: return dot_product(a.values(), b.values());
        case Metric::euclidean:
            return 1.0 / (1.0 + std::sqrt(squared_distance(a.values(), b.values())));
    }
    return 0.0;
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = kFnvOffset;
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= kFnvPrime;
    }
    return h;
}

HashingEmbedder::HashingEmbedder(std::size_t dim) {
    if (dim == 0) throw Error(ErrorCode::invalid_argument, "embedding dim must be positive");
    spec_ = EmbedderSpec{"fnv1a-bow-" + std::to_string(dim), dim, EmbedderSpec::Kind::deterministic};
}

Embedding HashingEmbedder::embed(std::string_view text) const {
    std::vector<double> counts(spec_.dim, 0.0);
    std::string token;
    bool any = false;
    auto flush = [&] {
        if (token.empty()) return;
        counts[fnv1a64(token) % spec_.dim] += 1.0;
        any = true;
        token.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (is_token_byte(c)) {
            token.push_back(static_cast<char>(ascii_lower(c)));
        } else {
            flush();
        }
    }
    flush();
    if (!any) return Embedding::zero(spec_.dim);
    return Embedding::normalized(std::span<const double>(counts));
}

HttpEmbedder::HttpEmbedder(std::string base_url, std::string path, std::size_t dim,
                           std::chrono::milliseconds timeout)
    : spec_{"http:" + base_url + path, dim, EmbedderSpec::Kind::external_service},
      base_url_(std::move(base_url)),
      path_(std::move(path)),
      timeout_(timeout) {}

Embedding HttpEmbedder::embed(std::string_view text) const {
    httplib::Client client(base_url_);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    const nlohmann::json body = {{"text", std::string(text)}};
    auto res = client.Post(path_, body.dump(), "application/json");
    if (!res) {
        throw Error(ErrorCode::unavailable,
                    "embedding service unreachable: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw Error(ErrorCode::unavailable,
                    "embedding service returned HTTP " + std::to_string(res->status));
    }
    nlohmann::json reply;
    try {
        reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::format, std::string("embedding reply is not JSON: ") + e.what());
    }
    if (!reply.is_object() || !reply.contains("values") || !reply["values"].is_array()) {
        throw Error(ErrorCode::format, "embedding reply lacks a \"values\" array");
    }
    std::vector<double> values;
    values.reserve(reply["values"].size());
    for (const auto& v : reply["values"]) {
        if (!v.is_number()) throw Error(ErrorCode::format, "embedding value is not a number");
        values.push_back(v.get<double>());
    }
    if (values.size() != spec_.dim) {
        throw Error(ErrorCode::format, "embedding reply has dim " + std::to_string(values.size()) +
                                           ", expected " + std::to_string(spec_.dim));
    }
    return Embedding::normalized(std::span<const double>(values));
}

}  // namespace gencache
