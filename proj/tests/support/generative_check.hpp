#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "gencache/semantic_cache.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace check {

struct InstanceResult {
    bool match = false;
    gencache::OutcomeKind kind = gencache::OutcomeKind::miss;
    std::string detail;
};

// One randomized cache (<= 50 entries around a few centers, dim 16), query and
// policy; compares SemanticCache::lookup against the brute-force rule.
inline InstanceResult generative_instance(std::mt19937_64& rng) {
    using namespace gencache;
    constexpr std::size_t dim = 16;
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(0.0, 1.0);

    auto table = std::make_shared<fixture::TableEmbedder>(dim);
    SemanticCache cache(table);

    const int centers = 1 + static_cast<int>(rng() % 4);
    std::vector<std::vector<double>> c(centers, std::vector<double>(dim));
    for (auto& v : c)
        for (auto& x : v) x = g(rng);

    const int n = static_cast<int>(rng() % 51);
    const double spread = 0.2 + 0.8 * u(rng);
    std::vector<oracle::Entry> entries;
    for (int i = 0; i < n; ++i) {
        std::vector<double> v = c[rng() % centers];
        for (auto& x : v) x += spread * g(rng);
        const std::string text = "entry " + std::to_string(i);
        table->set(text, v);
        ResponseRecord rec;
        rec.text = "answer " + std::to_string(i);
        const auto id = cache.insert(text, rec);
        const auto entry = cache.find(*id).value();
        const auto stored = entry.embedding.values();
        entries.push_back({id->value, std::vector<float>(stored.begin(), stored.end())});
    }
    std::vector<double> qv = c[rng() % centers];
    for (auto& x : qv) x += spread * g(rng);
    table->set("query", qv);
    const auto q = table->embed("query");
    const std::vector<float> qf(q.values().begin(), q.values().end());

    const double t_s = 0.5 + 0.45 * u(rng);
    const double t_single = t_s - (0.05 + 0.45 * u(rng));
    const double t_combined = t_s + 0.05 + 1.5 * u(rng);
    const int mode = static_cast<int>(rng() % 3);
    const GenMode gm = mode == 0 ? GenMode::off : mode == 1 ? GenMode::primary : GenMode::secondary;
    const std::size_t k = 4;
    const LookupPolicy policy(t_s, t_single, t_combined, gm, k);

    const auto got = cache.lookup(q, policy);
    const auto want = oracle::generative_rule(entries, qf, t_s, t_single, t_combined, mode, k);

    InstanceResult r;
    r.kind = got.kind;
    const OutcomeKind want_kind = want.kind == oracle::Kind::miss       ? OutcomeKind::miss
                                  : want.kind == oracle::Kind::standard ? OutcomeKind::standard_hit
                                                                        : OutcomeKind::generative_hit;
    std::vector<std::uint64_t> got_ids;
    for (const auto& comp : got.components) got_ids.push_back(comp.entry_id.value);
    r.match = got.kind == want_kind && got_ids == want.ids;
    if (!r.match) {
        r.detail = "n=" + std::to_string(n) + " mode=" + std::to_string(mode) + " got " +
                   std::string(to_string(got.kind)) + "/" + std::to_string(got_ids.size()) + " want " +
                   std::string(to_string(want_kind)) + "/" + std::to_string(want.ids.size());
    }
    return r;
}

}  // namespace check
