#include <doctest.h>

#include <atomic>
#include <map>
#include <thread>

#include "gencache/hierarchy.hpp"

using namespace gencache;
using namespace std::chrono_literals;

namespace {

// Routes calls straight into another Hierarchy object.
class LoopbackClient final : public TierClient {
public:
    LoopbackClient(std::string address, Hierarchy* target) : address_(std::move(address)), target_(target) {}

    const std::string& address() const noexcept override { return address_; }
    wire::LookupResponse lookup(const wire::LookupRequest& request, bool peer_hop,
                                std::chrono::milliseconds timeout) override {
        ++lookups;
        check_up(timeout);
        // serialize to exercise the codec on the same path as HTTP
        const auto req = wire::decode_text<wire::LookupRequest>(wire::encode(request).dump());
        return wire::decode_text<wire::LookupResponse>(wire::encode(target_->serve_lookup(req, peer_hop)).dump());
    }
    wire::InsertResponse insert(const wire::InsertRequest& request, std::chrono::milliseconds timeout) override {
        ++inserts;
        check_up(timeout);
        return target_->serve_insert(wire::decode_text<wire::InsertRequest>(wire::encode(request).dump()));
    }

    std::atomic<int> lookups{0};
    std::atomic<int> inserts{0};
    std::atomic<bool> down{false};
    std::atomic<int> fail_next{0};
    std::chrono::milliseconds delay{0};

private:
    void check_up(std::chrono::milliseconds timeout) {
        if (delay > timeout) {
            std::this_thread::sleep_for(timeout);
            throw Error(ErrorCode::timeout, address_ + ": timed out");
        }
        if (delay.count() > 0) std::this_thread::sleep_for(delay);
        if (down) throw Error(ErrorCode::unavailable, address_ + ": connection refused");
        if (fail_next > 0) {
            --fail_next;
            throw Error(ErrorCode::unavailable, address_ + ": flaky");
        }
    }

    std::string address_;
    Hierarchy* target_;
};

std::shared_ptr<SemanticCache> cache(Tier tier) {
    return std::make_shared<SemanticCache>(std::make_shared<HashingEmbedder>(), CacheOptions{1000, tier});
}

ResponseRecord rec(std::string text) {
    ResponseRecord r;
    r.text = std::move(text);
    r.model_id = "m";
    return r;
}

ResolveContext ctx(double ts = 0.8, CacheScope scope = {}) {
    return {LookupPolicy::around(ts, 0.2, 0.4, GenMode::secondary), scope, {}};
}

// l1 -> l2 -> {peer}
struct Topology {
    std::unique_ptr<Hierarchy> peer;
    std::unique_ptr<Hierarchy> l2;
    std::unique_ptr<Hierarchy> l1;
    std::map<std::string, std::shared_ptr<LoopbackClient>> clients;

    explicit Topology(bool inclusion = false, std::chrono::milliseconds peer_timeout = 1000ms) {
        TierConfig pc;
        pc.id = "peer";
        pc.role = Tier::l2;
        peer = std::make_unique<Hierarchy>(pc, cache(Tier::l2));

        TierConfig c2;
        c2.id = "l2";
        c2.role = Tier::l2;
        c2.peers = {"peer-a"};
        c2.peer_timeout = peer_timeout;
        l2 = std::make_unique<Hierarchy>(c2, cache(Tier::l2), factory());

        TierConfig c1;
        c1.id = "l1";
        c1.upstream = "up";
        c1.inclusion = inclusion;
        c1.upstream_timeout = 1000ms;
        l1 = std::make_unique<Hierarchy>(c1, cache(Tier::l1), factory());
    }

    TierClientFactory factory() {
        return [this](const std::string& address) {
            Hierarchy* target = address == "peer-a" ? peer.get() : l2.get();
            auto c = std::make_shared<LoopbackClient>(address, target);
            clients[address] = c;
            return c;
        };
    }
};

std::vector<std::string> tiers(const Resolution& r) {
    std::vector<std::string> out;
    for (const auto& h : r.trace) out.push_back(h.tier + "/" + std::string(to_string(h.outcome)));
    return out;
}

}  // namespace

TEST_SUITE("hierarchy") {
    TEST_CASE("peer hit travels back through l2 and is promoted into both tiers") {
        Topology t;
        t.peer->serve_insert({"What is the capital of France?", rec("Paris"), {}});
        const auto r = t.l1->resolve("What is the capital of France?", ctx());
        CHECK(r.outcome.kind == OutcomeKind::standard_hit);
        CHECK(r.outcome.answer == "Paris");
        CHECK(r.source == wire::Source::peer);
        CHECK(r.served_by == "peer:peer-a");
        CHECK(tiers(r) == std::vector<std::string>{"l1/miss", "l2/miss", "peer:peer-a/standard_hit"});
        for (const auto& h : r.trace) CHECK(h.effective_ts == 0.8);
        CHECK(r.local_entry.has_value());
        CHECK(t.l2->local().find_by_query("What is the capital of France?").has_value());
        CHECK(t.l1->local().find_by_query("What is the capital of France?")->origin == "peer:peer-a");

        const auto calls = t.l1->wire_calls();
        const auto again = t.l1->resolve("What is the capital of France?", ctx());
        CHECK(again.source == wire::Source::l1);
        CHECK(tiers(again) == std::vector<std::string>{"l1/standard_hit"});
        CHECK(t.l1->wire_calls() == calls);
        CHECK(t.clients["up"]->lookups == 1);
    }

    TEST_CASE("l2 hit is served without consulting peers") {
        Topology t;
        t.l2->serve_insert({"shared question", rec("shared answer"), {}});
        const auto r = t.l1->resolve("shared question", ctx());
        CHECK(r.source == wire::Source::l2);
        CHECK(tiers(r) == std::vector<std::string>{"l1/miss", "l2/standard_hit"});
        CHECK(t.clients["peer-a"]->lookups == 0);
    }

    TEST_CASE("promotion follows the original entry's query text") {
        Topology t;
        t.l2->serve_insert({"how do I reset my password please", rec("Use the reset link."), {}});
        const auto r = t.l1->resolve("how do I reset my password", ctx(0.7));
        REQUIRE(r.outcome.kind == OutcomeKind::standard_hit);
        CHECK(t.l1->local().find_by_query("how do I reset my password please").has_value());
        CHECK_FALSE(t.l1->local().find_by_query("how do I reset my password").has_value());
    }

    TEST_CASE("scope governs promotions") {
        Topology t;
        t.peer->serve_insert({"private question", rec("secret"), {}});
        const auto r = t.l1->resolve("private question", ctx(0.8, {false, false}));
        CHECK(r.outcome.hit());
        CHECK_FALSE(r.local_entry.has_value());
        CHECK(t.l1->local().size() == 0);
        CHECK(t.l2->local().size() == 0);

        const auto r2 = t.l1->resolve("private question", ctx(0.8, {true, false}));
        CHECK(r2.local_entry.has_value());
        CHECK(t.l2->local().size() == 0);
    }

    TEST_CASE("miss everywhere") {
        Topology t;
        const auto r = t.l1->resolve("nothing anywhere", ctx());
        CHECK(r.outcome.kind == OutcomeKind::miss);
        CHECK(tiers(r) == std::vector<std::string>{"l1/miss", "l2/miss", "peer:peer-a/miss"});
    }

    TEST_CASE("unreachable upstream degrades to a miss") {
        Topology t;
        t.l2->serve_insert({"q", rec("a"), {}});
        t.clients["up"]->down = true;
        const auto r = t.l1->resolve("q", ctx());
        CHECK(r.outcome.kind == OutcomeKind::miss);
        REQUIRE(r.trace.size() == 2);
        CHECK_FALSE(r.trace[1].reachable);
        CHECK(r.trace[1].tier == "l2");
    }

    TEST_CASE("slow peer is skipped after the deadline") {
        Topology t(false, 100ms);
        t.peer->serve_insert({"q", rec("a"), {}});
        t.clients["peer-a"]->delay = 500ms;
        const auto t0 = std::chrono::steady_clock::now();
        const auto r = t.l1->resolve("q", ctx());
        const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        CHECK(r.outcome.kind == OutcomeKind::miss);
        CHECK(ms < 400.0);
        REQUIRE(r.trace.size() == 3);
        CHECK_FALSE(r.trace[2].reachable);
        std::this_thread::sleep_for(150ms);  // let the detached call finish
    }

    TEST_CASE("responses are pushed upstream, with one retry") {
        Topology t;
        t.l1->store_response("fresh question", rec("fresh answer"), {});
        CHECK(t.l2->local().find_by_query("fresh question").has_value());
        CHECK(t.l1->local().find_by_query("fresh question").has_value());

        t.l1->store_response("l1 only", rec("x"), {true, false});
        CHECK_FALSE(t.l2->local().find_by_query("l1 only").has_value());

        t.clients["up"]->fail_next = 1;
        t.l1->store_response("retried", rec("y"), {});
        CHECK(t.l1->pending_retries() == 1);
        t.l1->drain_retries();
        CHECK(t.l2->local().find_by_query("retried").has_value());

        t.clients["up"]->fail_next = 2;
        t.l1->store_response("dropped", rec("z"), {});
        t.l1->drain_retries();
        CHECK_FALSE(t.l2->local().find_by_query("dropped").has_value());
        CHECK(t.l1->pending_retries() == 0);
    }

    TEST_CASE("inclusion mirrors synthesized answers upstream") {
        for (bool inclusion : {false, true}) {
            Topology t(inclusion);
            t.l1->store_synthesized("combined query", "combined answer", {});
            const auto up = t.l2->local().find_by_query("combined query");
            CHECK(up.has_value() == inclusion);
            if (up) CHECK(up->responses.front().synthesized);
        }
    }

    TEST_CASE("generative hit at l2 is stored under the incoming query") {
        Topology t;
        t.l2->serve_insert({"What is an application-level denial of service attack?", rec("A1"), {}});
        t.l2->serve_insert({"What are the most effective techniques for defending against denial-of-service attacks?",
                            rec("A2"), {}});
        const std::string q3 =
            "What is an application-level denial of service attack, and what are the most effective techniques "
            "for defending against such attacks?";
        ResolveContext c{LookupPolicy(0.85, 0.6, 1.4, GenMode::secondary), {}, {}};
        const auto r = t.l1->resolve(q3, c);
        CHECK(r.outcome.kind == OutcomeKind::generative_hit);
        CHECK(r.source == wire::Source::generative);
        const auto e = t.l1->local().find_by_query(q3);
        REQUIRE(e.has_value());
        CHECK(e->responses.front().synthesized);
    }

    TEST_CASE("configuration checks") {
        TierConfig bad;
        bad.peers = {"x"};
        CHECK_THROWS_AS(Hierarchy(bad, cache(Tier::l1)), Error);
        TierConfig wide;
        wide.role = Tier::l2;
        wide.max_peer_fanout = 1;
        wide.peers = {"a", "b"};
        CHECK_THROWS_AS(Hierarchy(wide, cache(Tier::l2)), Error);
    }
}
