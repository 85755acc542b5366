#include <doctest.h>

#include <random>
#include <sstream>

#include "gencache/error.hpp"
#include "gencache/vector_store.hpp"
#include "support/oracles.hpp"

using namespace gencache;

namespace {

Embedding random_unit(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> g;
    std::vector<double> v(dim);
    for (auto& x : v) x = g(rng);
    return Embedding::normalized(std::span<const double>(v));
}

Embedding unit(std::initializer_list<double> xs) {
    std::vector<double> v(xs);
    return Embedding::normalized(std::span<const double>(v));
}

}  // namespace

TEST_SUITE("vector_store") {
    TEST_CASE("top_k matches a brute-force scan") {
        std::mt19937_64 rng(11);
        for (int trial = 0; trial < 100; ++trial) {
            VectorStore store(16);
            std::vector<oracle::Entry> entries;
            const int n = 1 + static_cast<int>(rng() % 60);
            for (int i = 0; i < n; ++i) {
                auto e = random_unit(rng, 16);
                store.insert(EntryId{static_cast<std::uint64_t>(i + 1)}, e);
                entries.push_back({static_cast<std::uint64_t>(i + 1), {e.values().begin(), e.values().end()}});
            }
            const auto q = random_unit(rng, 16);
            const std::vector<float> qv(q.values().begin(), q.values().end());
            const std::size_t k = 1 + rng() % 8;
            const double min_score = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);

            std::vector<oracle::Scored> want;
            for (const auto& e : entries) {
                const double s = oracle::cosine(e.v, qv);
                if (s > min_score) want.push_back({e.id, s});
            }
            std::stable_sort(want.begin(), want.end(),
                             [](const auto& a, const auto& b) { return a.score > b.score; });
            if (want.size() > k) want.resize(k);

            const auto got = store.top_k(q, k, min_score);
            REQUIRE(got.size() == want.size());
            for (std::size_t i = 0; i < got.size(); ++i) {
                CHECK(got[i].entry_id.value == want[i].id);
                CHECK(got[i].score == doctest::Approx(want[i].score).epsilon(1e-9));
            }
        }
    }

    TEST_CASE("ties break by insertion order and the filter is strict") {
        VectorStore store(2);
        const auto v = unit({1, 0});
        store.insert(EntryId{30}, v);
        store.insert(EntryId{10}, v);
        store.insert(EntryId{20}, v);
        const auto hits = store.top_k(v, 3, 0.0);
        REQUIRE(hits.size() == 3);
        CHECK(hits[0].entry_id.value == 30);
        CHECK(hits[1].entry_id.value == 10);
        CHECK(hits[2].entry_id.value == 20);
        CHECK(store.top_k(v, 3, 1.0).empty());
    }

    TEST_CASE("insert, get, remove, conflicts") {
        VectorStore store(2);
        store.insert(EntryId{1}, unit({1, 0}));
        CHECK_THROWS_AS(store.insert(EntryId{1}, unit({0, 1})), Error);
        CHECK_THROWS_AS(store.insert(EntryId{2}, Embedding::zero(3)), Error);
        CHECK(store.get(EntryId{1}).has_value());
        store.remove(EntryId{1});
        CHECK_FALSE(store.contains(EntryId{1}));
        CHECK_THROWS_AS(store.remove(EntryId{1}), Error);
        CHECK(store.top_k(unit({1, 0}), 4, -1.0).empty());
    }

    TEST_CASE("swap-remove keeps the remaining rows addressable") {
        std::mt19937_64 rng(3);
        VectorStore store(8);
        std::vector<Embedding> vs;
        for (int i = 0; i < 20; ++i) {
            vs.push_back(random_unit(rng, 8));
            store.insert(EntryId{static_cast<std::uint64_t>(i)}, vs.back());
        }
        for (int i = 0; i < 20; i += 3) store.remove(EntryId{static_cast<std::uint64_t>(i)});
        for (int i = 0; i < 20; ++i) {
            const auto got = store.get(EntryId{static_cast<std::uint64_t>(i)});
            if (i % 3 == 0) {
                CHECK_FALSE(got.has_value());
            } else {
                REQUIRE(got.has_value());
                CHECK(*got == vs[i]);
                const auto top = store.top_k(vs[i], 1, -1.0);
                CHECK(top.front().entry_id.value == static_cast<std::uint64_t>(i));
            }
        }
    }

    TEST_CASE("snapshot round-trip preserves ids, sequence and vectors") {
        std::mt19937_64 rng(5);
        VectorStore store(12);
        for (int i = 0; i < 50; ++i) store.insert(EntryId{static_cast<std::uint64_t>(100 + i)}, random_unit(rng, 12));
        store.remove(EntryId{110});
        std::stringstream buf;
        store.snapshot_save(buf);
        auto loaded = VectorStore::snapshot_load(buf);
        CHECK(loaded->size() == store.size());
        CHECK(loaded->digest() == store.digest());
        const auto q = random_unit(rng, 12);
        CHECK(loaded->top_k(q, 10, -1.0) == store.top_k(q, 10, -1.0));
    }

    TEST_CASE("snapshot format errors name the line") {
        auto expect_line = [](const std::string& text, const std::string& line) {
            std::istringstream in(text);
            try {
                (void)VectorStore::snapshot_load(in);
                FAIL("expected a format error");
            } catch (const Error& e) {
                CHECK(e.code() == ErrorCode::format);
                CHECK(std::string(e.what()).find(line) != std::string::npos);
            }
        };
        expect_line("", "line 1");
        expect_line("{\"format\":\"other\",\"version\":1,\"dim\":2}\n", "line 1");
        expect_line("{\"format\":\"gencache-snap\",\"version\":9,\"dim\":2}\n", "line 1");
        expect_line(make_snapshot_header(2) + "\n{\"entry_id\":\"1\",\"seq\":0,\"embedding\":[1.0,0.0]}\nnot json\n",
                    "line 3");
        expect_line(make_snapshot_header(2) + "\n{\"entry_id\":\"1\",\"seq\":0,\"embedding\":[1.0]}\n", "line 2");
    }
}
