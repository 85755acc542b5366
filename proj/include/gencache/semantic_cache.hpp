#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gencache/embedding.hpp"
#include "gencache/vector_store.hpp"

namespace gencache {

std::int64_t now_ms();

struct ResponseRecord {
    std::string text;
    std::string model_id;
    std::string provider_id;
    double observed_cost = 0.0;
    double observed_latency_ms = 0.0;
    std::int64_t created_at = 0;  // ms since epoch
    bool synthesized = false;

    friend bool operator==(const ResponseRecord&, const ResponseRecord&) = default;
};

struct CacheEntry {
    EntryId id;
    std::string query_text;
    Embedding embedding;
    std::vector<ResponseRecord> responses;  // oldest first, never empty
    std::uint64_t hit_count = 0;
    std::int64_t last_access = 0;
    std::int64_t created_at = 0;
    std::string origin;  // "local", "l2", "peer", ... (observability only)
};

enum class Tier { l1, l2 };
std::string_view to_string(Tier tier);

struct CacheScope {
    bool allow_l1 = true;
    bool allow_l2 = true;

    bool allows(Tier tier) const noexcept { return tier == Tier::l1 ? allow_l1 : allow_l2; }
    friend bool operator==(const CacheScope&, const CacheScope&) = default;
};

enum class GenMode { off, primary, secondary };
std::string_view to_string(GenMode mode);
GenMode gen_mode_from_string(std::string_view name);

inline constexpr std::size_t kDefaultMaxComponents = 4;

// Threshold triple for one lookup; the constructor enforces t_single < t_s < t_combined.
class LookupPolicy {
public:
    LookupPolicy(double t_s, double t_single, double t_combined, GenMode mode = GenMode::secondary,
                 std::size_t max_components = kDefaultMaxComponents);

    // Derives t_single = t_s - single_margin and t_combined = t_s + combined_margin.
    static LookupPolicy around(double t_s, double single_margin, double combined_margin, GenMode mode,
                               std::size_t max_components = kDefaultMaxComponents);

    double t_s() const noexcept { return t_s_; }
    double t_single() const noexcept { return t_single_; }
    double t_combined() const noexcept { return t_combined_; }
    GenMode gen_mode() const noexcept { return mode_; }
    std::size_t max_components() const noexcept { return max_components_; }

    friend bool operator==(const LookupPolicy&, const LookupPolicy&) = default;

private:
    double t_s_;
    double t_single_;
    double t_combined_;
    GenMode mode_;
    std::size_t max_components_;
};

enum class OutcomeKind { miss, standard_hit, generative_hit };
std::string_view to_string(OutcomeKind kind);
OutcomeKind outcome_kind_from_string(std::string_view name);

struct Component {
    EntryId entry_id;
    double score = 0.0;
    std::string query_text;
    std::string model_id;  // model of the response that was served

    friend bool operator==(const Component&, const Component&) = default;
};

struct LookupOutcome {
    OutcomeKind kind = OutcomeKind::miss;
    std::vector<Component> components;
    std::optional<std::string> answer;
    std::optional<double> best_score;

    bool hit() const noexcept { return kind != OutcomeKind::miss; }
    friend bool operator==(const LookupOutcome&, const LookupOutcome&) = default;
};

// Condenses a combined answer (implemented on top of the LLM gateway).
class Summarizer {
public:
    virtual ~Summarizer() = default;
    // Throws on failure; the cache falls back to plain concatenation.
    virtual std::string summarize(const std::string& prompt) = 0;
};

struct AnswerPart {
    std::string query_text;
    std::string answer;
    double score = 0.0;
};

std::string component_header(std::string_view query_text);
std::string summarization_prompt(std::string_view combined);

// Concatenates answers in the given (score-descending) order, each behind a header
// naming its cached query; a single part is returned verbatim. With a summarizer the
// concatenation is summarized instead, falling back to it on failure.
std::string combine_answers(const std::vector<AnswerPart>& parts, Summarizer* summarizer = nullptr);

struct LookupOptions {
    Summarizer* summarizer = nullptr;
    std::optional<std::string> preferred_model;
};

struct CacheOptions {
    std::size_t capacity = 100'000;
    Tier tier = Tier::l1;
    Metric metric = Metric::cosine;
};

class SemanticCache {
public:
    SemanticCache(std::shared_ptr<const Embedder> embedder, CacheOptions options = {});

    SemanticCache(const SemanticCache&) = delete;
    SemanticCache& operator=(const SemanticCache&) = delete;

    const Embedder& embedder() const noexcept { return *embedder_; }
    Tier tier() const noexcept { return options_.tier; }
    std::size_t capacity() const noexcept { return options_.capacity; }
    std::size_t size() const;

    // Throws Error(unavailable) when the embedder fails.
    LookupOutcome lookup(std::string_view query_text, const LookupPolicy& policy, const LookupOptions& options = {});
    LookupOutcome lookup(const Embedding& query, const LookupPolicy& policy, const LookupOptions& options = {});

    // Returns nullopt ("skipped") when the scope forbids this cache's tier.
    std::optional<EntryId> insert(std::string_view query_text, ResponseRecord response, CacheScope scope = {},
                                  std::string_view origin = "local");
    std::optional<EntryId> store_synthesized(std::string_view query_text, std::string_view combined_answer,
                                             CacheScope scope = {});

    std::optional<CacheEntry> find(EntryId id) const;
    std::optional<CacheEntry> find_by_query(std::string_view query_text) const;
    std::vector<CacheEntry> entries() const;
    void clear();

    // Returns the number of entries written.
    std::size_t snapshot_save(const std::filesystem::path& destination) const;
    std::size_t snapshot_save(std::ostream& out) const;
    // Throws Error(io) if unreadable, Error(format) naming the line on bad content.
    std::size_t warm_load(const std::filesystem::path& source);
    std::size_t warm_load(std::istream& in);

private:
    struct Slot {
        CacheEntry entry;
        std::uint64_t access_tick = 0;
        std::list<EntryId>::iterator lru_pos;
    };

    Embedding embed_or_throw(std::string_view text, const char* what) const;
    void touch_locked(Slot& slot, std::int64_t now);
    void evict_one_locked();
    static const ResponseRecord& pick_response(const CacheEntry& entry,
                                               const std::optional<std::string>& preferred_model);

    std::shared_ptr<const Embedder> embedder_;
    CacheOptions options_;
    VectorStore store_;

    mutable std::shared_mutex mutex_;  // entries, by_query, ids
    mutable std::mutex lru_mutex_;     // lru list, counters (taken under a shared lock)
    std::unordered_map<EntryId, Slot, EntryIdHash> entries_;
    std::unordered_map<std::string, EntryId> by_query_;
    std::list<EntryId> lru_;  // front = most recently used
    std::uint64_t next_id_ = 1;
    std::uint64_t access_clock_ = 0;
};

}  // namespace gencache
