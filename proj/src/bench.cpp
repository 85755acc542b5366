#include "gencache/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "gencache/error.hpp"
#include "gencache/semantic_cache.hpp"

namespace gencache::bench {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::optional<std::string> answer_of(const json& rec) {
    if (rec.contains("answer")) {
        const auto& a = rec["answer"];
        if (a.is_string() && !a.get<std::string>().empty()) return a.get<std::string>();
        if (!a.is_null() && !a.is_string()) throw std::invalid_argument("\"answer\" is not a string");
        return std::nullopt;
    }
    if (rec.contains("answers")) {
        const auto& list = rec["answers"];
        if (!list.is_array()) throw std::invalid_argument("\"answers\" is not an array");
        for (const auto& a : list) {
            if (a.is_string() && !a.get<std::string>().empty()) return a.get<std::string>();
            if (a.is_object() && a.contains("text") && a["text"].is_string() && !a["text"].get<std::string>().empty()) {
                return a["text"].get<std::string>();
            }
        }
    }
    return std::nullopt;
}

void add_record(Dataset& out, const json& rec, const std::string& where) {
    try {
        if (!rec.is_object()) throw std::invalid_argument("expected an object");
        if (!rec.contains("question") || !rec["question"].is_string()) {
            throw std::invalid_argument("missing string field \"question\"");
        }
        auto answer = answer_of(rec);
        if (!answer) {
            ++out.skipped;
            return;
        }
        out.pairs.push_back({rec["question"].get<std::string>(), std::move(*answer)});
    } catch (const std::invalid_argument& e) {
        throw Error(ErrorCode::format, where + ": " + e.what());
    }
}

void add_squad(Dataset& out, const json& doc) {
    const auto& data = doc["data"];
    if (!data.is_array()) throw Error(ErrorCode::format, "record data: expected an array");
    for (std::size_t a = 0; a < data.size(); ++a) {
        const auto& article = data[a];
        if (!article.is_object() || !article.contains("paragraphs") || !article["paragraphs"].is_array()) {
            throw Error(ErrorCode::format, "record data[" + std::to_string(a) + "]: missing paragraphs array");
        }
        const auto& paragraphs = article["paragraphs"];
        for (std::size_t p = 0; p < paragraphs.size(); ++p) {
            const auto& para = paragraphs[p];
            const std::string at = "record data[" + std::to_string(a) + "].paragraphs[" + std::to_string(p) + "]";
            if (!para.is_object() || !para.contains("qas") || !para["qas"].is_array()) {
                throw Error(ErrorCode::format, at + ": missing qas array");
            }
            const auto& qas = para["qas"];
            for (std::size_t q = 0; q < qas.size(); ++q) add_record(out, qas[q], at + ".qas[" + std::to_string(q) + "]");
        }
    }
}

}  // namespace

Dataset parse_dataset(const std::string& text) {
    Dataset out;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return out;

    if (text[first] == '[' || text[first] == '{') {
        json doc;
        bool whole = true;
        try {
            doc = json::parse(text);
        } catch (const json::exception&) {
            whole = false;
        }
        if (whole) {
            if (doc.is_array()) {
                for (std::size_t i = 0; i < doc.size(); ++i) add_record(out, doc[i], "record " + std::to_string(i + 1));
                return out;
            }
            if (doc.is_object() && doc.contains("data")) {
                add_squad(out, doc);
                return out;
            }
            if (doc.is_object()) {
                add_record(out, doc, "record 1");
                return out;
            }
        } else if (text[first] == '[') {
            throw Error(ErrorCode::format, "record 1: dataset is not valid JSON");
        }
    }

    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::format, "record " + std::to_string(line_no) + ": invalid JSON");
        }
        add_record(out, rec, "record " + std::to_string(line_no));
    }
    return out;
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot read dataset " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_dataset(buf.str());
}

PhaseStats summarize(std::vector<double> samples) {
    PhaseStats s;
    s.count = samples.size();
    if (samples.empty()) return s;
    std::sort(samples.begin(), samples.end());
    double sum = 0.0;
    for (double v : samples) sum += v;
    s.mean_ms = sum / static_cast<double>(samples.size());
    auto pct = [&](double p) {
        const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(samples.size())));
        return samples[std::clamp<std::size_t>(rank, 1, samples.size()) - 1];
    };
    s.p50_ms = pct(0.50);
    s.p95_ms = pct(0.95);
    s.p99_ms = pct(0.99);
    return s;
}

Mode mode_from_string(const std::string& name) {
    if (name == "add") return Mode::add;
    if (name == "lookup") return Mode::lookup;
    if (name == "breakdown") return Mode::breakdown;
    throw Error(ErrorCode::invalid_argument, "mode: expected add, lookup or breakdown");
}

json BenchReport::to_json() const {
    json runs_j = json::array();
    for (const auto& r : runs) {
        json phases_j = json::object();
        for (const auto& [name, p] : r.phases) {
            phases_j[name] = {{"count", p.count},
                              {"mean_ms", p.mean_ms},
                              {"p50_ms", p.p50_ms},
                              {"p95_ms", p.p95_ms},
                              {"p99_ms", p.p99_ms}};
        }
        runs_j.push_back({{"cache_size", r.cache_size},
                          {"operations", r.operations},
                          {"hits", r.hits},
                          {"phases", std::move(phases_j)},
                          {"shares", r.shares}});
    }
    return json{{"mode", mode},
                {"n", n},
                {"records_loaded", records_loaded},
                {"records_skipped", records_skipped},
                {"concurrency", concurrency},
                {"embedder", embedder},
                {"runs", std::move(runs_j)}};
}

namespace {

struct Samples {
    std::vector<double> embed, search, add, lookup, total;
    std::size_t hits = 0;
};

void fill(SemanticCache& cache, const Dataset& data, std::size_t size, Samples* samples) {
    const auto& pairs = data.pairs;
    for (std::size_t i = 0; cache.size() < size && i < size * 2; ++i) {
        const auto& qa = pairs[i % pairs.size()];
        std::string q = i < pairs.size() ? qa.question : qa.question + " v" + std::to_string(i / pairs.size());
        ResponseRecord rec;
        rec.text = qa.answer;
        const auto t0 = Clock::now();
        cache.insert(q, std::move(rec));
        if (samples) samples->add.push_back(ms_since(t0));
    }
}

void measure_lookups(SemanticCache& cache, const Embedder& embedder, const Dataset& data, std::size_t n,
                     std::size_t concurrency, double t_s, Samples& out) {
    const auto policy = LookupPolicy::around(t_s, 0.2, 0.4, GenMode::secondary);
    std::vector<Samples> per(concurrency);
    auto worker = [&](std::size_t w) {
        auto& s = per[w];
        for (std::size_t i = w; i < n; i += concurrency) {
            const auto& q = data.pairs[i % data.pairs.size()].question;
            const auto t0 = Clock::now();
            const auto emb = embedder.embed(q);
            const auto t1 = Clock::now();
            const auto outcome = cache.lookup(emb, policy);
            const double total = ms_since(t0);
            s.embed.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
            s.search.push_back(total - s.embed.back());
            s.lookup.push_back(total);
            s.total.push_back(total);
            if (outcome.hit()) ++s.hits;
        }
    };
    if (concurrency == 1) {
        worker(0);
    } else {
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < concurrency; ++w) threads.emplace_back(worker, w);
        for (auto& t : threads) t.join();
    }
    for (auto& s : per) {
        out.embed.insert(out.embed.end(), s.embed.begin(), s.embed.end());
        out.search.insert(out.search.end(), s.search.begin(), s.search.end());
        out.lookup.insert(out.lookup.end(), s.lookup.begin(), s.lookup.end());
        out.total.insert(out.total.end(), s.total.begin(), s.total.end());
        out.hits += s.hits;
    }
}

BenchRun finish(const Samples& s, std::size_t cache_size, std::size_t operations) {
    BenchRun run;
    run.cache_size = cache_size;
    run.operations = operations;
    run.hits = s.hits;
    run.phases["embed"] = summarize(s.embed);
    run.phases["store_search"] = summarize(s.search);
    run.phases["cache_add"] = summarize(s.add);
    run.phases["cache_lookup"] = summarize(s.lookup);
    run.phases["end_to_end"] = summarize(s.total);
    const double e2e = run.phases["end_to_end"].mean_ms;
    for (const auto& name : kPhases) {
        if (name == "end_to_end" || name == "cache_add") continue;
        run.shares[name] = e2e > 0.0 ? run.phases[name].mean_ms / e2e : 0.0;
    }
    return run;
}

}  // namespace

BenchReport run(const Dataset& data, const BenchOptions& options, std::shared_ptr<const Embedder> embedder) {
    BenchReport report;
    report.n = options.n;
    report.records_loaded = data.pairs.size();
    report.records_skipped = data.skipped;
    report.concurrency = std::max<std::size_t>(1, options.concurrency);
    report.embedder = embedder->spec().id;
    switch (options.mode) {
        case Mode::add: report.mode = "add"; break;
        case Mode::lookup: report.mode = "lookup"; break;
        case Mode::breakdown: report.mode = "breakdown"; break;
    }
    if (options.n == 0 || data.pairs.empty()) return report;

    CacheOptions copts;
    copts.capacity = std::max<std::size_t>(options.n, 1);
    if (options.mode == Mode::add) {
        SemanticCache cache(embedder, copts);
        Samples s;
        fill(cache, data, options.n, &s);
        for (std::size_t i = 0; i < s.add.size(); ++i) s.total.push_back(s.add[i]);
        report.runs.push_back(finish(s, cache.size(), s.add.size()));
        return report;
    }
    if (options.mode == Mode::lookup) {
        for (std::size_t size : options.sizes) {
            CacheOptions c = copts;
            c.capacity = std::max<std::size_t>(size, 1);
            SemanticCache cache(embedder, c);
            fill(cache, data, size, nullptr);
            Samples s;
            measure_lookups(cache, *embedder, data, options.n, report.concurrency, options.t_s, s);
            report.runs.push_back(finish(s, cache.size(), options.n));
        }
        return report;
    }
    SemanticCache cache(embedder, copts);
    Samples s;
    fill(cache, data, options.n, &s);
    measure_lookups(cache, *embedder, data, options.n, report.concurrency, options.t_s, s);
    report.runs.push_back(finish(s, cache.size(), options.n));
    return report;
}

}  // namespace gencache::bench
