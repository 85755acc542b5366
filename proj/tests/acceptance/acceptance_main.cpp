// Acceptance run: one PASS/FAIL line per primary criterion.

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "gencache/bench.hpp"
#include "gencache/service.hpp"
#include "support/generative_check.hpp"

using namespace gencache;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

const char* kQ1 = "What is an application-level denial of service attack?";
const char* kQ2 = "What are the most effective techniques for defending against denial-of-service attacks?";
const char* kQ3 =
    "What is an application-level denial of service attack, and what are the most effective techniques for "
    "defending against such attacks?";

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(const std::string& name, const std::function<Outcome()>& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s  %-28s %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
}

std::string fmt(double v, int prec = 3) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(prec);
    os << v;
    return os.str();
}

// ---- synthetic paraphrase corpus ----------------------------------------

struct Corpus {
    std::mt19937_64 rng;
    std::size_t words_per_query = 10;

    std::string word() { return "w" + std::to_string(rng() % 200000); }
    std::vector<std::string> topic() {
        std::vector<std::string> t(words_per_query);
        for (auto& w : t) w = word();
        return t;
    }
    std::vector<std::string> variant(std::vector<std::string> base, std::size_t substitutions) {
        std::vector<std::size_t> pos(base.size());
        for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i;
        std::shuffle(pos.begin(), pos.end(), rng);
        for (std::size_t i = 0; i < substitutions && i < pos.size(); ++i) base[pos[i]] = word();
        return base;
    }
    static std::string text(const std::vector<std::string>& words) {
        std::string s;
        for (const auto& w : words) s += (s.empty() ? "" : " ") + w;
        return s;
    }
};

// ---- child processes ---------------------------------------------------------

struct Child {
    pid_t pid = -1;
    int out_fd = -1;
    int port = 0;

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

Child spawn_serve(const std::filesystem::path& config) {
    int fds[2];
    if (::pipe(fds) != 0) throw std::runtime_error("pipe failed");
    const pid_t pid = ::fork();
    if (pid < 0) throw std::runtime_error("fork failed");
    if (pid == 0) {
        ::dup2(fds[1], STDOUT_FILENO);
        ::close(fds[0]);
        ::close(fds[1]);
        const std::string cfg = config.string();
        ::execl(GENCACHE_CLI_PATH, GENCACHE_CLI_PATH, "serve", "--config", cfg.c_str(), "--port", "0",
                static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(fds[1]);
    Child c{pid, fds[0], 0};
    std::string line;
    const auto deadline = Clock::now() + std::chrono::seconds(20);
    while (line.find('\n') == std::string::npos && Clock::now() < deadline) {
        pollfd p{c.out_fd, POLLIN, 0};
        if (::poll(&p, 1, 100) <= 0) continue;
        char buf[256];
        const auto n = ::read(c.out_fd, buf, sizeof(buf));
        if (n <= 0) break;
        line.append(buf, static_cast<std::size_t>(n));
    }
    const auto at = line.find("gencache listening on ");
    if (at == std::string::npos) throw std::runtime_error("serve did not start: " + line);
    const auto nl = line.find('\n', at);
    const auto colon = line.rfind(':', nl);
    c.port = std::stoi(line.substr(colon + 1, nl - colon - 1));
    return c;
}

void stop(Child& c) {
    if (c.pid > 0) {
        ::kill(c.pid, SIGTERM);
        int status = 0;
        ::waitpid(c.pid, &status, 0);
        c.pid = -1;
    }
    if (c.out_fd >= 0) ::close(c.out_fd);
    c.out_fd = -1;
}

struct Children {
    std::vector<Child> all;
    Children() { all.reserve(8); }
    ~Children() {
        for (auto& c : all) stop(c);
    }
    Child& add(const std::filesystem::path& config) {
        all.push_back(spawn_serve(config));
        return all.back();
    }
};

json http_call(const Child& c, const std::string& method, const std::string& path, const json& body = {}) {
    httplib::Client client("127.0.0.1", c.port);
    client.set_read_timeout(std::chrono::seconds(30));
    httplib::Result res = method == "GET" ? client.Get(path) : client.Post(path, body.dump(), "application/json");
    if (!res) throw std::runtime_error(path + ": " + httplib::to_string(res.error()));
    if (res->status != 200) throw std::runtime_error(path + ": HTTP " + std::to_string(res->status) + " " + res->body);
    return json::parse(res->body);
}

std::filesystem::path write_config(const std::filesystem::path& dir, const std::string& name, const json& j) {
    const auto p = dir / (name + ".json");
    std::ofstream(p) << j.dump(2);
    return p;
}

// ---- criteria -------------------------------------------------------------

Outcome oracle_equivalence() {
    std::mt19937_64 rng(20240601);
    const auto t0 = Clock::now();
    int matched = 0;
    int kinds[3] = {0, 0, 0};
    std::string first_mismatch;
    for (int i = 0; i < 1000; ++i) {
        const auto r = check::generative_instance(rng);
        if (r.match) ++matched;
        else if (first_mismatch.empty()) first_mismatch = " first mismatch: " + r.detail;
        ++kinds[static_cast<int>(r.kind)];
    }
    const double s = seconds_since(t0);
    return {matched == 1000 && s < 10.0,
            std::to_string(matched) + "/1000 match (miss " + std::to_string(kinds[0]) + ", standard " +
                std::to_string(kinds[1]) + ", generative " + std::to_string(kinds[2]) + "), " + fmt(s, 2) +
                " s < 10 s" + first_mismatch};
}

Outcome worked_example() {
    const auto t0 = Clock::now();
    auto emb = std::make_shared<HashingEmbedder>();
    SemanticCache cache(emb);
    ResponseRecord a1, a2;
    a1.text = "An application-level DoS attack exhausts server resources with valid-looking requests.";
    a2.text = "Rate limiting, request filtering, and elastic scaling are the most effective defenses.";
    cache.insert(kQ1, a1);
    cache.insert(kQ2, a2);
    const LookupPolicy policy(0.85, 0.6, 1.4, GenMode::secondary);
    const auto out = cache.lookup(kQ3, policy);
    const double s = seconds_since(t0);
    const bool both = out.answer && out.answer->find(a1.text) != std::string::npos &&
                      out.answer->find(a2.text) != std::string::npos;
    std::string scores;
    for (const auto& c : out.components) scores += (scores.empty() ? "" : ", ") + fmt(c.score);
    return {out.kind == OutcomeKind::generative_hit && out.components.size() == 2 && both && s < 1.0,
            std::string(to_string(out.kind)) + " with component scores [" + scores +
                "] under t_s 0.85 t_single 0.6 t_combined 1.4, both answers present: " + (both ? "yes" : "no")};
}

Outcome quality_convergence() {
    const auto t0 = Clock::now();
    Corpus corpus{std::mt19937_64(7)};
    std::vector<std::string> queries;
    for (int t = 0; t < 100; ++t) {
        const auto base = corpus.topic();
        queries.push_back(Corpus::text(base));
        for (std::size_t k = 1; k <= 4; ++k) queries.push_back(Corpus::text(corpus.variant(base, k)));
    }
    ServiceConfig cfg = ServiceConfig::from_json({{"policy", {{"t4", 0.8}, {"step", 0.01}, {"hysteresis", 0.05}}}});
    Service svc(cfg);
    std::deque<int> window;
    std::size_t feedback = 0;
    std::mt19937_64 rng(11);
    for (int i = 0; i < 2000; ++i) {
        wire::QueryRequest req;
        req.query = queries[rng() % queries.size()];
        const auto out = svc.query(req);
        if (out.source == wire::Source::llm) continue;
        const bool approve = out.similarity.value_or(0.0) >= 0.85;
        svc.feedback({out.entry_id, approve ? Verdict::high : Verdict::low});
        window.push_back(approve ? 1 : 0);
        if (window.size() > 200) window.pop_front();
        ++feedback;
    }
    double rolling = 0.0;
    for (int v : window) rolling += v;
    rolling = window.empty() ? 0.0 : rolling / static_cast<double>(window.size());
    const double s = seconds_since(t0);
    const bool ok = window.size() == 200 && std::abs(rolling - 0.8) <= 0.10 && s < 60.0;
    return {ok, "rolling quality (last 200 verdicts) " + fmt(rolling) + " vs t4 0.80 +/- 0.10; " +
                    std::to_string(feedback) + " verdicts, cumulative " + fmt(svc.policy().quality_rate().value_or(0.0)) +
                    ", final base_ts " + fmt(svc.policy().base_ts())};
}

Outcome cost_steering() {
    const auto t0 = Clock::now();
    // Constant uncached cost: output-only pricing and a fixed canned reply.
    const json cfg_j = {
        {"providers", json::array({{{"provider_id", "priced"}, {"models", {"priced-model"}}, {"mode", "canned"}}})},
        {"pricing", json::array({{{"model_id", "priced-model"}, {"input_per_million", 0.0},
                                  {"output_per_million", 1000.0}}})},
        {"policy", {{"cost_target_enabled", true}, {"quality_enabled", false}}},
    };
    Service svc(ServiceConfig::from_json(cfg_j));
    Corpus corpus{std::mt19937_64(5)};
    std::vector<std::vector<std::string>> topics;
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<int> hit;
    bool c1_set = false;
    double target = 0.0;
    for (int i = 0; i < 5000; ++i) {
        wire::QueryRequest req;
        if (topics.empty() || u(rng) >= 0.6) {
            topics.push_back(corpus.topic());
            req.query = Corpus::text(topics.back());
        } else {
            const auto& base = topics[rng() % topics.size()];
            req.query = Corpus::text(corpus.variant(base, rng() % 6));
        }
        const auto out = svc.query(req);
        hit.push_back(out.source == wire::Source::llm ? 0 : 1);
        if (!c1_set) {
            const double c2 = svc.cost_model().mean_uncached_cost();
            svc.put_config({{"preferred_cost_c1", c2 * 0.5}});
            target = cost_target_hit_rate(c2 * 0.5, c2);
            c1_set = true;
        }
    }
    double tail = 0.0;
    for (std::size_t i = hit.size() - 500; i < hit.size(); ++i) tail += hit[i];
    tail /= 500.0;
    const double s = seconds_since(t0);
    const bool ok = std::abs(target - 0.5) < 1e-9 && std::abs(tail - 0.5) <= 0.10 && s < 60.0;
    return {ok, "hit rate over last 500 of 5000 = " + fmt(tail) + " vs target " + fmt(target, 2) +
                    " +/- 0.10; final base_ts " + fmt(svc.policy().base_ts())};
}

Outcome hierarchy_promotion(const std::filesystem::path& dir) {
    const auto t0 = Clock::now();
    Children kids;
    auto& peer = kids.add(write_config(dir, "peer", {{"tier", {{"id", "peer"}, {"role", "l2"}}}}));
    auto& l2 = kids.add(write_config(
        dir, "l2", {{"tier", {{"id", "l2"}, {"role", "l2"}, {"peers", {peer.url()}}, {"peer_timeout_ms", 2000}}}}));
    auto& l1 = kids.add(write_config(dir, "l1", {{"tier", {{"id", "l1"}, {"role", "l1"}, {"upstream", l2.url()}}}}));

    const std::string q = "Which port does the peer tier listen on for cache lookups?";
    ResponseRecord rec;
    rec.text = "Seeded at the peer only.";
    rec.model_id = "mock-small";
    http_call(peer, "POST", "/v1/cache/insert", wire::encode(wire::InsertRequest{q, rec, {}}));

    wire::QueryRequest req;
    req.query = q;
    const auto first = wire::decode<wire::QueryResponse>(http_call(l1, "POST", "/v1/query", wire::encode(req)));
    std::vector<std::string> hops;
    for (const auto& h : first.trace) hops.push_back(h.tier + " " + std::string(to_string(h.outcome)));
    const std::vector<std::string> want{"l1 miss", "l2 miss", "peer:" + peer.url() + " standard_hit"};

    const auto before = wire::decode<wire::StatsSnapshot>(http_call(l1, "GET", "/v1/stats"));
    const auto second = wire::decode<wire::QueryResponse>(http_call(l1, "POST", "/v1/query", wire::encode(req)));
    const auto after = wire::decode<wire::StatsSnapshot>(http_call(l1, "GET", "/v1/stats"));

    // CLI --no-cache-l2: answered by the LLM, kept out of L2.
    const std::string private_q = "Is this private answer absent from the shared tier?";
    const std::string cmd = std::string(GENCACHE_CLI_PATH) + " query --no-cache-l2 --server " + l1.url() + " '" +
                            private_q + "' > /dev/null";
    const bool cli_ok = std::system(cmd.c_str()) == 0;
    const auto at_l2 = wire::decode<wire::LookupResponse>(http_call(
        l2, "POST", "/v1/cache/lookup",
        wire::encode(wire::LookupRequest{private_q, LookupPolicy(0.99, 0.98, 1.5, GenMode::off), {}})));
    const bool kept_out = cli_ok && at_l2.kind == OutcomeKind::miss;

    std::string trace_text;
    for (const auto& h : hops) trace_text += (trace_text.empty() ? "" : ", ") + h;
    const bool ok = first.answer == rec.text && first.source == wire::Source::peer && hops == want &&
                    second.source == wire::Source::l1 && after.wire_calls == before.wire_calls &&
                    after.gateway_calls == 0 && kept_out && seconds_since(t0) < 10.0;
    return {ok, "first trace [" + trace_text + "] source " + std::string(wire::to_string(first.source)) +
                    "; second source " + std::string(wire::to_string(second.source)) + " with " +
                    std::to_string(after.wire_calls - before.wire_calls) + " wire calls; --no-cache-l2 kept out of L2: " +
                    (kept_out ? "yes" : "no")};
}

Outcome persistence(const std::filesystem::path& dir) {
    auto emb = std::make_shared<HashingEmbedder>();
    SemanticCache cache(emb);
    Corpus corpus{std::mt19937_64(3)};
    std::vector<std::vector<std::string>> bases;
    for (int i = 0; i < 10000; ++i) {
        std::vector<std::string> words;
        if (!bases.empty() && i % 3 == 0) words = corpus.variant(bases[corpus.rng() % bases.size()], 3);
        else words = corpus.topic();
        bases.push_back(words);
        ResponseRecord r;
        r.text = "answer " + std::to_string(i);
        cache.insert(Corpus::text(words), r);
    }
    const auto snap = dir / "persist.jsonl";
    const auto saved = cache.snapshot_save(snap);

    Children kids;
    auto& child = kids.add(write_config(dir, "persist", {{"tier", {{"id", "persist"}}}}));
    const auto warmed = http_call(child, "POST", "/v1/warm", wire::encode(wire::PathRequest{snap.string()}));

    std::mt19937_64 rng(4);
    const auto policy = LookupPolicy::around(0.8, 0.2, 0.4, GenMode::secondary);
    int same = 0;
    double worst = 0.0;
    int hits = 0;
    for (int i = 0; i < 100; ++i) {
        const auto& base = bases[rng() % bases.size()];
        const std::string q = Corpus::text(corpus.variant(base, rng() % 5));
        const auto local = wire::to_wire(cache.lookup(q, policy));
        const auto remote = wire::decode<wire::LookupResponse>(
            http_call(child, "POST", "/v1/cache/lookup", wire::encode(wire::LookupRequest{q, policy, {}})));
        bool eq = local.kind == remote.kind && local.components.size() == remote.components.size();
        for (std::size_t k = 0; eq && k < local.components.size(); ++k) {
            eq = local.components[k].entry_id == remote.components[k].entry_id;
            worst = std::max(worst, std::abs(local.components[k].score - remote.components[k].score));
        }
        if (eq) ++same;
        if (local.kind != OutcomeKind::miss) ++hits;
    }
    const bool ok = saved == 10000 && warmed["count"] == 10000 && same == 100 && worst <= 1e-6;
    return {ok, std::to_string(saved) + " entries saved and warmed in a fresh process; " + std::to_string(same) +
                    "/100 lookups identical (" + std::to_string(hits) + " hits), max score delta " +
                    fmt(worst, 9)};
}

Outcome parallel_gateway() {
    Gateway gw(std::make_shared<CostModel>());
    std::vector<std::pair<std::string, LlmRequest>> batch;
    for (int i = 0; i < 8; ++i) {
        MockProviderOptions o;
        o.id = "p" + std::to_string(i);
        o.latency = std::chrono::milliseconds(200);
        gw.add_provider(std::make_shared<MockProvider>(o));
        LlmRequest r;
        r.prompt = "prompt " + std::to_string(i);
        batch.emplace_back(o.id, r);
    }
    const auto t0 = Clock::now();
    const auto results = gw.query_parallel(batch);
    const double ms = seconds_since(t0) * 1000.0;
    bool ordered = results.size() == 8;
    for (int i = 0; ordered && i < 8; ++i) {
        ordered = results[i].ok() && results[i].value().provider_id == "p" + std::to_string(i) &&
                  results[i].value().text == "echo: prompt " + std::to_string(i);
    }
    return {ms < 500.0 && ordered, "8 x 200 ms providers in " + fmt(ms, 1) + " ms (< 500), order preserved: " +
                                       (ordered ? "yes" : "no")};
}

Outcome lookup_latency() {
    bench::Dataset data;
    Corpus corpus{std::mt19937_64(1)};
    corpus.words_per_query = 12;
    for (int i = 0; i < 1000; ++i) data.pairs.push_back({Corpus::text(corpus.topic()) + "?", "answer " + std::to_string(i)});
    auto emb = std::make_shared<HashingEmbedder>();

    bench::BenchOptions look;
    look.mode = bench::Mode::lookup;
    look.n = 200;
    look.sizes = {100000};
    const auto report = bench::run(data, look, emb);
    const auto& run = report.runs.at(0);
    const double mean = run.phases.at("end_to_end").mean_ms;

    bench::BenchOptions br;
    br.mode = bench::Mode::breakdown;
    br.n = 1000;
    const auto bd = bench::run(data, br, emb);
    const auto& shares = bd.runs.at(0).shares;
    const bool has_shares = shares.count("embed") && shares.count("store_search") && shares.count("cache_lookup");
    return {run.cache_size == 100000 && mean <= 50.0 && has_shares,
            "mean end-to-end lookup at " + std::to_string(run.cache_size) + " entries " + fmt(mean) +
                " ms (<= 50); breakdown shares embed " + fmt(shares.at("embed")) + ", store_search " +
                fmt(shares.at("store_search")) + " (hashing embedder)"};
}

Outcome invariants() {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::size_t checks = 0, bad = 0;
    auto expect = [&](bool cond) {
        ++checks;
        if (!cond) ++bad;
    };

    // threshold ordering
    for (int i = 0; i < 2000; ++i) {
        const double a = 2 * u(rng) - 0.5, b = 2 * u(rng) - 0.5, c = 2 * u(rng) - 0.5;
        bool accepted = true;
        try {
            LookupPolicy p(a, b, c);
        } catch (const Error&) {
            accepted = false;
        }
        expect(accepted == (b < a && a < c));
    }
    // clamping
    for (int i = 0; i < 300; ++i) {
        PolicyParams params;
        params.ts_min = 0.3 + 0.3 * u(rng);
        params.ts_max = params.ts_min + 0.05 + (0.99 - params.ts_min - 0.05) * u(rng);
        params.base_ts = u(rng);
        AdaptivePolicy p(params);
        for (int k = 0; k < 20; ++k) {
            ThresholdInputs in;
            in.content_class = u(rng) < 0.5 ? ContentClass::code : ContentClass::text;
            in.estimated_cost = {u(rng), 20000 * u(rng)};
            in.cheapest_monetary = 0.1 * u(rng);
            in.provider_healthy = u(rng) < 0.5;
            if (u(rng) < 0.3) in.user_override = 2 * u(rng) - 0.5;
            const double ts = p.effective_threshold(in);
            expect(ts >= params.ts_min && ts <= params.ts_max);
            p.record_feedback(u(rng) < 0.5 ? Verdict::high : Verdict::low);
            const double b = p.adjust_for_quality();
            expect(b >= params.ts_min && b <= params.ts_max);
            const double c = p.adjust_for_cost(u(rng), u(rng));
            expect(c >= params.ts_min && c <= params.ts_max);
        }
    }
    // hysteresis quiescence
    for (int i = 0; i < 200; ++i) {
        AdaptivePolicy p;
        const int highs = 31 + static_cast<int>(rng() % 3);  // rate 0.775..0.825 of 40
        for (int k = 0; k < 40; ++k) p.record_feedback(k < highs ? Verdict::high : Verdict::low);
        const double before = p.base_ts();
        for (int k = 0; k < 10; ++k) p.adjust_for_quality();
        expect(p.base_ts() == before);
    }
    // scope hints
    for (Tier tier : {Tier::l1, Tier::l2}) {
        SemanticCache c(std::make_shared<HashingEmbedder>(), {1000, tier});
        for (int i = 0; i < 300; ++i) {
            const CacheScope scope{(rng() & 1) != 0, (rng() & 1) != 0};
            ResponseRecord r;
            r.text = "a";
            const auto id = c.insert("scoped " + std::to_string(i), r, scope);
            expect(id.has_value() == scope.allows(tier));
        }
    }
    // capacity bound
    for (std::size_t cap : {1, 7, 50}) {
        SemanticCache c(std::make_shared<HashingEmbedder>(), {cap, Tier::l1});
        const auto policy = LookupPolicy::around(0.8, 0.2, 0.4, GenMode::secondary);
        for (int i = 0; i < 1000; ++i) {
            ResponseRecord r;
            r.text = "a";
            c.insert("entry " + std::to_string(rng() % 400), r);
            if (rng() % 4 == 0) c.lookup("entry " + std::to_string(rng() % 400), policy);
            expect(c.size() <= cap);
        }
    }
    return {bad == 0, std::to_string(checks - bad) + "/" + std::to_string(checks) +
                          " property checks (threshold ordering, clamping, hysteresis, scope hints, capacity)"};
}

}  // namespace

int main() {
    ::signal(SIGPIPE, SIG_IGN);
    const auto dir = std::filesystem::temp_directory_path() / ("gencache_acceptance_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);

    criterion("oracle-equivalence", oracle_equivalence);
    criterion("worked-example", worked_example);
    criterion("quality-convergence", quality_convergence);
    criterion("cost-target-steering", cost_steering);
    criterion("hierarchy-promotion", [&] { return hierarchy_promotion(dir); });
    criterion("persistence-round-trip", [&] { return persistence(dir); });
    criterion("parallel-gateway", parallel_gateway);
    criterion("lookup-latency", lookup_latency);
    criterion("invariant-suites", invariants);

    std::filesystem::remove_all(dir);
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
