// gencache: serve, query, bench, warm, export, stats, feedback.
//
// Exit codes: 0 ok, 1 other failure, 2 bad or missing config, 3 port in use,
// 4 server unreachable, 5 bad dataset or snapshot.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "gencache/bench.hpp"
#include "gencache/config.hpp"
#include "gencache/error.hpp"
#include "gencache/service.hpp"
#include "gencache/wire.hpp"

namespace {

using namespace gencache;
using nlohmann::json;

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitPortInUse = 3;
constexpr int kExitUnreachable = 4;
constexpr int kExitData = 5;

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

struct ClientError {
    int exit_code;
    std::string message;
};

json call(const std::string& server, const std::string& method, const std::string& path, const json* body) {
    httplib::Client client(server);
    client.set_connection_timeout(std::chrono::seconds(5));
    client.set_read_timeout(std::chrono::seconds(120));
    httplib::Result res = method == "GET"    ? client.Get(path)
                          : method == "PUT"  ? client.Put(path, body->dump(), "application/json")
                                             : client.Post(path, body->dump(), "application/json");
    if (!res) throw ClientError{kExitUnreachable, "cannot reach " + server + ": " + httplib::to_string(res.error())};
    json reply;
    try {
        reply = json::parse(res->body);
    } catch (const json::exception&) {
        throw ClientError{kExitFailure, "HTTP " + std::to_string(res->status) + ": " + res->body};
    }
    if (res->status != 200) {
        const auto err = wire::decode<wire::ErrorBody>(reply);
        const int code = (err.error == "not-found" || err.error == "format" || err.error == "io") ? kExitData
                                                                                                  : kExitFailure;
        throw ClientError{code, err.error + ": " + err.message};
    }
    return reply;
}

std::string fmt_num(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

int cmd_serve(const std::string& config_flag, int port, const std::string& host) {
    std::string path = config_flag;
    if (path.empty()) {
        if (const char* env = std::getenv("GENCACHE_CONFIG")) path = env;
    }
    if (path.empty()) {
        std::cerr << "error: no config file (use --config or GENCACHE_CONFIG)\n";
        return kExitConfig;
    }
    if (!std::filesystem::exists(path)) {
        std::cerr << "error: config file not found: " << path << "\n";
        return kExitConfig;
    }
    std::unique_ptr<Service> service;
    try {
        service = std::make_unique<Service>(ServiceConfig::load(path));
    } catch (const std::exception& e) {
        std::cerr << "error: bad config: " << e.what() << "\n";
        return kExitConfig;
    }
    HttpFrontend frontend(*service, service->service_config().static_dir);
    if (!frontend.bind(host, port)) {
        std::cerr << "error: cannot bind " << host << ":" << port << " (port in use?)\n";
        return kExitPortInUse;
    }
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::thread watcher([&] {
        while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
        frontend.stop();
    });
    std::cout << "gencache listening on " << host << ":" << frontend.port() << std::endl;
    frontend.run();
    g_stop.store(true);
    watcher.join();
    service->hierarchy().drain_retries();
    if (const auto& snap = service->service_config().snapshot_path) {
        try {
            const auto n = service->cache().snapshot_save(*snap);
            spdlog::info("saved {} entries to {}", n, *snap);
        } catch (const std::exception& e) {
            spdlog::error("snapshot on shutdown failed: {}", e.what());
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gencache: semantic cache for LLM responses"};
    app.require_subcommand(1);

    std::string server = "http://127.0.0.1:8080";

    auto* serve = app.add_subcommand("serve", "Run the cache service");
    std::string config_path;
    int port = 8080;
    std::string host = "127.0.0.1";
    serve->add_option("--config", config_path, "Service config file (falls back to GENCACHE_CONFIG)");
    serve->add_option("--port", port, "Listen port; 0 picks a free one")->check(CLI::Range(0, 65535));
    serve->add_option("--host", host, "Listen address");

    auto* query = app.add_subcommand("query", "Send one query to a running service");
    std::string text;
    std::optional<std::string> provider, model;
    std::uint64_t max_tokens = 512;
    double temperature = 0.7;
    std::optional<double> ts;
    bool no_l1 = false, no_l2 = false, fresh = false, summarize = false, as_json = false;
    query->add_option("text", text, "Query text")->required();
    query->add_option("--server", server, "Service base URL");
    query->add_option("--provider", provider, "Provider id");
    query->add_option("--model", model, "Model id");
    query->add_option("--max-tokens", max_tokens, "Maximum output tokens")->check(CLI::PositiveNumber);
    query->add_option("--temperature", temperature, "Sampling temperature");
    query->add_option("--ts", ts, "Similarity threshold override")->check(CLI::Range(0.0, 1.0));
    query->add_flag("--no-cache-l1", no_l1, "Do not store the answer in L1");
    query->add_flag("--no-cache-l2", no_l2, "Do not store the answer in L2");
    query->add_flag("--fresh", fresh, "Skip the cache and call the LLM");
    query->add_flag("--summarize", summarize, "Summarize generative answers through the LLM");
    query->add_flag("--json", as_json, "Print the raw response");

    auto* bench = app.add_subcommand("bench", "Benchmark the cache in-process");
    std::string dataset;
    std::size_t n = 1000;
    std::string mode = "breakdown";
    std::string sizes = "1000,100000";
    std::size_t concurrency = 1;
    double bench_ts = 0.8;
    std::string embed_url;
    std::size_t dim = kDefaultEmbeddingDim;
    bench->add_option("--dataset", dataset, "Dataset file (JSON array, JSON Lines or SQuAD)")->required();
    bench->add_option("--n", n, "Number of operations");
    bench->add_option("--mode", mode, "add, lookup or breakdown")->check(CLI::IsMember({"add", "lookup", "breakdown"}));
    bench->add_option("--sizes", sizes, "Cache sizes for lookup mode, comma separated");
    bench->add_option("--concurrency", concurrency, "Concurrent lookup streams")->check(CLI::PositiveNumber);
    bench->add_option("--ts", bench_ts, "Similarity threshold")->check(CLI::Range(0.0, 1.0));
    bench->add_option("--embed-url", embed_url, "External embedding service base URL");
    bench->add_option("--dim", dim, "Embedding dimension")->check(CLI::PositiveNumber);

    auto* warm = app.add_subcommand("warm", "Load a snapshot into a running service");
    std::string snapshot;
    warm->add_option("--snapshot", snapshot, "Snapshot file")->required();
    warm->add_option("--server", server, "Service base URL");

    auto* exp = app.add_subcommand("export", "Write a running service's cache to a snapshot");
    std::string out_path;
    exp->add_option("--out", out_path, "Destination file")->required();
    exp->add_option("--server", server, "Service base URL");

    auto* stats = app.add_subcommand("stats", "Print service statistics");
    stats->add_option("--server", server, "Service base URL");

    auto* fb = app.add_subcommand("feedback", "Rate a served cache hit");
    std::string entry_id, verdict;
    fb->add_option("--entry-id", entry_id, "entry_id from a query response")->required();
    fb->add_option("--verdict", verdict, "high or low")->required()->check(CLI::IsMember({"high", "low"}));
    fb->add_option("--server", server, "Service base URL");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*serve) return cmd_serve(config_path, port, host);

        if (*query) {
            wire::QueryRequest req;
            req.query = text;
            req.provider_id = provider;
            req.model_id = model;
            req.max_tokens = max_tokens;
            req.temperature = temperature;
            req.ts_override = ts;
            req.cache_control = CacheScope{!no_l1, !no_l2};
            req.fresh = fresh;
            req.summarize = summarize;
            const json body = wire::encode(req);
            const json reply = call(server, "POST", "/v1/query", &body);
            if (as_json) {
                std::cout << reply.dump(2) << "\n";
                return 0;
            }
            const auto r = wire::decode<wire::QueryResponse>(reply);
            std::cout << r.answer << "\n";
            std::cout << "source=" << wire::to_string(r.source)
                      << " similarity=" << (r.similarity ? fmt_num(*r.similarity) : "-")
                      << " cost=" << fmt_num(r.cost.charged) << " latency_ms=" << fmt_num(r.latency_ms)
                      << " entry_id=" << (r.entry_id.empty() ? "-" : r.entry_id)
                      << " effective_ts=" << fmt_num(r.effective_ts) << "\n";
            return 0;
        }

        if (*bench) {
            bench::Dataset data;
            try {
                data = bench::load_dataset(dataset);
            } catch (const Error& e) {
                std::cerr << "error: " << e.what() << "\n";
                return kExitData;
            }
            bench::BenchOptions opts;
            opts.mode = bench::mode_from_string(mode);
            opts.n = n;
            opts.concurrency = concurrency;
            opts.t_s = bench_ts;
            opts.sizes.clear();
            std::stringstream ss(sizes);
            for (std::string item; std::getline(ss, item, ',');) {
                try {
                    opts.sizes.push_back(std::stoul(item));
                } catch (const std::exception&) {
                    std::cerr << "error: --sizes: not a number: " << item << "\n";
                    return kExitFailure;
                }
            }
            std::shared_ptr<const Embedder> embedder;
            if (embed_url.empty()) {
                embedder = std::make_shared<HashingEmbedder>(dim);
            } else {
                embedder = std::make_shared<HttpEmbedder>(embed_url, "/embed", dim, std::chrono::milliseconds(10000));
            }
            std::cout << bench::run(data, opts, embedder).to_json().dump(2) << "\n";
            return 0;
        }

        if (*warm) {
            const json body = wire::encode(wire::PathRequest{std::filesystem::absolute(snapshot).string()});
            const auto r = wire::decode<wire::CountResponse>(call(server, "POST", "/v1/warm", &body));
            std::cout << "loaded " << r.count << " entries\n";
            return 0;
        }

        if (*exp) {
            const json body = wire::encode(wire::PathRequest{std::filesystem::absolute(out_path).string()});
            const auto r = wire::decode<wire::CountResponse>(call(server, "POST", "/v1/snapshot", &body));
            std::cout << "wrote " << r.count << " entries to " << r.path.value_or(out_path) << "\n";
            return 0;
        }

        if (*stats) {
            std::cout << call(server, "GET", "/v1/stats", nullptr).dump(2) << "\n";
            return 0;
        }

        if (*fb) {
            const json body = wire::encode(wire::FeedbackRequest{entry_id, verdict_from_string(verdict)});
            std::cout << call(server, "POST", "/v1/feedback", &body).dump() << "\n";
            return 0;
        }
    } catch (const ClientError& e) {
        std::cerr << "error: " << e.message << "\n";
        return e.exit_code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitFailure;
}
