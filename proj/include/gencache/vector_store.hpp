#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "gencache/embedding.hpp"

namespace gencache {

struct EntryId {
    std::uint64_t value = 0;

    std::string str() const { return std::to_string(value); }
    // Throws Error(invalid_argument) unless `text` is a decimal integer.
    static EntryId parse(std::string_view text);

    friend bool operator==(EntryId, EntryId) = default;
    friend auto operator<=>(EntryId, EntryId) = default;
};

struct EntryIdHash {
    std::size_t operator()(EntryId id) const noexcept { return std::hash<std::uint64_t>{}(id.value); }
};

struct SearchHit {
    EntryId entry_id;
    double score = 0.0;
    std::uint64_t inserted_seq = 0;

    friend bool operator==(const SearchHit&, const SearchHit&) = default;
};

// Score descending, then insertion order ascending.
inline bool hit_precedes(const SearchHit& a, const SearchHit& b) noexcept {
    if (a.score != b.score) return a.score > b.score;
    return a.inserted_seq < b.inserted_seq;
}

// Exact brute-force vector index. Many concurrent readers or one writer.
class VectorStore {
public:
    explicit VectorStore(std::size_t dim, Metric metric = Metric::cosine);

    VectorStore(const VectorStore&) = delete;
    VectorStore& operator=(const VectorStore&) = delete;

    std::size_t dim() const noexcept { return dim_; }
    Metric metric() const noexcept { return metric_; }
    std::size_t size() const;
    bool contains(EntryId id) const;

    // Throws Error(conflict) for a present id, Error(invalid_argument) on dim mismatch.
    void insert(EntryId id, const Embedding& embedding);
    // Restores a vector with an explicit sequence number (snapshot load).
    void insert_with_seq(EntryId id, const Embedding& embedding, std::uint64_t seq);
    // Throws Error(not_found).
    void remove(EntryId id);
    void clear();

    std::optional<Embedding> get(EntryId id) const;

    // At most k hits with score > min_score, sorted by hit_precedes.
    std::vector<SearchHit> top_k(const Embedding& query, std::size_t k, double min_score) const;

    // Order-independent fingerprint of the stored (id, seq, vector) set.
    std::uint64_t digest() const;

    // Versioned JSON Lines: header line, then one record per vector.
    void snapshot_save(const std::filesystem::path& destination) const;
    void snapshot_save(std::ostream& out) const;
    static std::unique_ptr<VectorStore> snapshot_load(const std::filesystem::path& source,
                                                      Metric metric = Metric::cosine);
    static std::unique_ptr<VectorStore> snapshot_load(std::istream& in,
                                                      Metric metric = Metric::cosine);

private:
    double score_row(std::size_t row, std::span<const float> query, double query_norm_sq) const;
    void insert_locked(EntryId id, const Embedding& embedding, std::uint64_t seq);

    std::size_t dim_;
    Metric metric_;
    mutable std::shared_mutex mutex_;
    std::vector<float> data_;  // row-major, size() * dim_
    std::vector<double> norm_sq_;
    std::vector<EntryId> ids_;
    std::vector<std::uint64_t> seqs_;
    std::unordered_map<EntryId, std::size_t, EntryIdHash> row_of_;
    std::uint64_t next_seq_ = 0;
};

// Snapshot header shared by the vector store and the cache.
inline constexpr std::string_view kSnapshotFormat = "gencache-snap";
inline constexpr int kSnapshotVersion = 1;

// Parses and validates a header line; returns the stored dim. Throws Error(format)
// naming line 1 on any problem.
std::size_t parse_snapshot_header(const std::string& line);
std::string make_snapshot_header(std::size_t dim);

}  // namespace gencache
