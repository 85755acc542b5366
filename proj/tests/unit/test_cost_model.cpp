#include <doctest.h>

#include "gencache/cost_model.hpp"
#include "gencache/error.hpp"

using namespace gencache;

TEST_SUITE("cost_model") {
    TEST_CASE("token estimate is ceil(code points / 4)") {
        CHECK(estimate_tokens("") == 0);
        CHECK(estimate_tokens("a") == 1);
        CHECK(estimate_tokens("abcd") == 1);
        CHECK(estimate_tokens("abcde") == 2);
        CHECK(estimate_tokens("naïve") == 2);     // 5 code points, 6 bytes
        CHECK(estimate_tokens("ééééé") == 2);  // 5 code points, 10 bytes
    }

    TEST_CASE("default pricing fixture") {
        const auto p = default_pricing();
        REQUIRE(p.size() == 2);
        CHECK(p[0].model_id == "gpt-3.5-turbo-0125");
        CHECK(p[0].input_per_million == 0.50);
        CHECK(p[0].output_per_million == 1.50);
        CHECK(p[1].model_id == "gpt-4-32k");
        CHECK(p[1].input_per_million == 60.0);
        CHECK(p[1].output_per_million == 120.0);
        CHECK(p[1].input_per_million / p[0].input_per_million == doctest::Approx(120.0));
        CHECK(p[1].output_per_million / p[0].output_per_million == doctest::Approx(80.0));
    }

    TEST_CASE("estimate uses input estimate and max_tokens") {
        CostModel m(default_pricing());
        // 40 chars -> 10 tokens
        const std::string q(40, 'x');
        const auto e = m.estimate(q, 100, "gpt-3.5-turbo-0125");
        CHECK(e.monetary == doctest::Approx(10 * 0.50 / 1e6 + 100 * 1.50 / 1e6));
        CHECK(e.expected_latency_ms == 1500.0);
        const auto big = m.estimate(q, 100, "gpt-4-32k");
        CHECK(big.monetary == doctest::Approx(10 * 60.0 / 1e6 + 100 * 120.0 / 1e6));
        CHECK(m.cheapest_monetary(q, 100).value() == doctest::Approx(e.monetary));
        CHECK_THROWS_AS(m.estimate(q, 0, "gpt-4-32k"), Error);
        CHECK_THROWS_AS(m.estimate(q, 10, "nope"), Error);
    }

    TEST_CASE("latency EWMA is seeded by the first observation") {
        CostModel m(default_pricing());
        m.record_observation("gpt-4-32k", 1, 1, 1000.0, 0.5);
        CHECK(m.pricing("gpt-4-32k").expected_latency_ms == 1000.0);
        m.record_observation("gpt-4-32k", 1, 1, 2000.0, 1.5);
        CHECK(m.pricing("gpt-4-32k").expected_latency_ms == doctest::Approx(0.8 * 1000.0 + 0.2 * 2000.0));
        CHECK(m.mean_uncached_cost() == doctest::Approx(1.0));
        CHECK(m.observation_count() == 2);
        CHECK_THROWS_AS(m.record_observation("nope", 1, 1, 1.0, 1.0), Error);
    }

    TEST_CASE("c2 is unavailable before any observation") {
        CostModel m;
        try {
            (void)m.mean_uncached_cost();
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::unavailable);
        }
        CHECK_FALSE(m.cheapest_monetary("x", 1).has_value());
    }

    TEST_CASE("charge uses actual token counts") {
        CostModel m(default_pricing());
        CHECK(m.charge("gpt-4-32k", 1000, 500) == doctest::Approx(1000 * 60.0 / 1e6 + 500 * 120.0 / 1e6));
    }
}
