#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gencache/embedding.hpp"

namespace gencache::bench {

struct QaPair {
    std::string question;
    std::string answer;
};

struct Dataset {
    std::vector<QaPair> pairs;
    std::size_t skipped = 0;  // records without an answer
};

// Accepts a JSON array of {question, answer}, JSON Lines of the same, or the
// nested SQuAD layout (data[].paragraphs[].qas[] with answers[].text).
// Throws Error(io) when unreadable and Error(format) naming the bad record.
Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset(const std::string& text);

struct PhaseStats {
    std::size_t count = 0;
    double mean_ms = 0.0;
    double p50_ms = 0.0;
    double p95_ms = 0.0;
    double p99_ms = 0.0;
};

PhaseStats summarize(std::vector<double> samples_ms);

inline const std::vector<std::string> kPhases{"embed", "store_search", "cache_add", "cache_lookup", "end_to_end"};

struct BenchRun {
    std::size_t cache_size = 0;
    std::size_t operations = 0;
    std::size_t hits = 0;
    std::map<std::string, PhaseStats> phases;
    std::map<std::string, double> shares;  // phase mean / end_to_end mean
};

struct BenchReport {
    std::string mode;
    std::size_t n = 0;
    std::size_t records_loaded = 0;
    std::size_t records_skipped = 0;
    std::size_t concurrency = 1;
    std::string embedder;
    std::vector<BenchRun> runs;

    nlohmann::json to_json() const;
};

enum class Mode { add, lookup, breakdown };
Mode mode_from_string(const std::string& name);

struct BenchOptions {
    Mode mode = Mode::breakdown;
    std::size_t n = 1000;
    std::vector<std::size_t> sizes{1000, 100'000};  // lookup mode
    std::size_t concurrency = 1;
    double t_s = 0.8;
};

BenchReport run(const Dataset& data, const BenchOptions& options, std::shared_ptr<const Embedder> embedder);

}  // namespace gencache::bench
