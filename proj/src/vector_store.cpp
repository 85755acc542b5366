#include "gencache/vector_store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>

#include <nlohmann/json.hpp>

#include "gencache/error.hpp"

namespace gencache {

using nlohmann::json;

EntryId EntryId::parse(std::string_view text) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
        throw Error(ErrorCode::invalid_argument, "malformed entry id: " + std::string(text));
    }
    return EntryId{v};
}

std::string make_snapshot_header(std::size_t dim) {
    return json{{"format", kSnapshotFormat}, {"version", kSnapshotVersion}, {"dim", dim}}.dump();
}

std::size_t parse_snapshot_header(const std::string& line) {
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception&) {
        throw Error(ErrorCode::format, "line 1: snapshot header is not JSON");
    }
    if (!header.is_object() || header.value("format", "") != kSnapshotFormat) {
        throw Error(ErrorCode::format, "line 1: not a gencache snapshot");
    }
    if (!header.contains("version") || !header["version"].is_number_integer() ||
        header["version"].get<int>() != kSnapshotVersion) {
        throw Error(ErrorCode::format, "line 1: unsupported snapshot version");
    }
    if (!header.contains("dim") || !header["dim"].is_number_unsigned() || header["dim"].get<std::size_t>() == 0) {
        throw Error(ErrorCode::format, "line 1: missing or invalid dim");
    }
    return header["dim"].get<std::size_t>();
}

VectorStore::VectorStore(std::size_t dim, Metric metric) : dim_(dim), metric_(metric) {
    if (dim == 0) throw Error(ErrorCode::invalid_argument, "vector store dim must be positive");
}

std::size_t VectorStore::size() const {
    std::shared_lock lock(mutex_);
    return ids_.size();
}

bool VectorStore::contains(EntryId id) const {
    std::shared_lock lock(mutex_);
    return row_of_.contains(id);
}

void VectorStore::insert(EntryId id, const Embedding& embedding) {
    std::unique_lock lock(mutex_);
    insert_locked(id, embedding, next_seq_);
}

void VectorStore::insert_with_seq(EntryId id, const Embedding& embedding, std::uint64_t seq) {
    std::unique_lock lock(mutex_);
    insert_locked(id, embedding, seq);
}

void VectorStore::insert_locked(EntryId id, const Embedding& embedding, std::uint64_t seq) {
    if (embedding.dim() != dim_) {
        throw Error(ErrorCode::invalid_argument, "embedding dim " + std::to_string(embedding.dim()) +
                                                     " does not match store dim " + std::to_string(dim_));
    }
    if (row_of_.contains(id)) {
        throw Error(ErrorCode::conflict, "entry id already present: " + id.str());
    }
    const auto values = embedding.values();
    data_.insert(data_.end(), values.begin(), values.end());
    norm_sq_.push_back(dot_product(values, values));
    ids_.push_back(id);
    seqs_.push_back(seq);
    row_of_.emplace(id, ids_.size() - 1);
    next_seq_ = std::max(next_seq_, seq + 1);
}

void VectorStore::remove(EntryId id) {
    std::unique_lock lock(mutex_);
    auto it = row_of_.find(id);
    if (it == row_of_.end()) throw Error(ErrorCode::not_found, "entry id not present: " + id.str());
    const std::size_t row = it->second;
    const std::size_t last = ids_.size() - 1;
    if (row != last) {
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(last * dim_), dim_,
                    data_.begin() + static_cast<std::ptrdiff_t>(row * dim_));
        norm_sq_[row] = norm_sq_[last];
        ids_[row] = ids_[last];
        seqs_[row] = seqs_[last];
        row_of_[ids_[row]] = row;
    }
    data_.resize(last * dim_);
    norm_sq_.pop_back();
    ids_.pop_back();
    seqs_.pop_back();
    row_of_.erase(it);
}

void VectorStore::clear() {
    std::unique_lock lock(mutex_);
    data_.clear();
    norm_sq_.clear();
    ids_.clear();
    seqs_.clear();
    row_of_.clear();
}

std::optional<Embedding> VectorStore::get(EntryId id) const {
    std::shared_lock lock(mutex_);
    auto it = row_of_.find(id);
    if (it == row_of_.end()) return std::nullopt;
    const auto begin = data_.begin() + static_cast<std::ptrdiff_t>(it->second * dim_);
    return Embedding::from_unit(std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(dim_)));
}

double VectorStore::score_row(std::size_t row, std::span<const float> query, double query_norm_sq) const {
    const std::span<const float> stored(data_.data() + row * dim_, dim_);
    const double stored_norm_sq = norm_sq_[row];
    // Zero embeddings score 0 under every metric.
    if (stored_norm_sq == 0.0 || query_norm_sq == 0.0) return 0.0;
    switch (metric_) {
        case Metric::cosine:
            return std::clamp(dot_product(query, stored) / std::sqrt(query_norm_sq * stored_norm_sq), -1.0, 1.0);
        case Metric::dot: return dot_product(query, stored);
        case Metric::euclidean: return 1.0 / (1.0 + std::sqrt(squared_distance(query, stored)));
    }
    return 0.0;
}

std::vector<SearchHit> VectorStore::top_k(const Embedding& query, std::size_t k, double min_score) const {
    if (k == 0) throw Error(ErrorCode::invalid_argument, "top_k requires k >= 1");
    if (query.dim() != dim_) {
        throw Error(ErrorCode::invalid_argument, "query dim " + std::to_string(query.dim()) +
                                                     " does not match store dim " + std::to_string(dim_));
    }
    const auto q = query.values();
    const double q_norm_sq = query.is_zero() ? 0.0 : dot_product(q, q);

    std::shared_lock lock(mutex_);
    std::vector<SearchHit> best;
    best.reserve(k + 1);
    // Bounded selection: `best` is kept sorted, worst hit last.
    for (std::size_t row = 0; row < ids_.size(); ++row) {
        const double s = score_row(row, q, q_norm_sq);
        if (!(s > min_score)) continue;
        SearchHit hit{ids_[row], s, seqs_[row]};
        if (best.size() == k && !hit_precedes(hit, best.back())) continue;
        auto pos = std::upper_bound(best.begin(), best.end(), hit, hit_precedes);
        best.insert(pos, hit);
        if (best.size() > k) best.pop_back();
    }
    return best;
}

std::uint64_t VectorStore::digest() const {
    std::shared_lock lock(mutex_);
    std::uint64_t acc = 0;
    for (std::size_t row = 0; row < ids_.size(); ++row) {
        std::uint64_t h = fnv1a64(std::string_view(reinterpret_cast<const char*>(data_.data() + row * dim_),
                                                   dim_ * sizeof(float)));
        h ^= ids_[row].value * 0x9E3779B97F4A7C15ULL;
        h ^= seqs_[row] + 0x7F4A7C159E3779B9ULL + (h << 6) + (h >> 2);
        acc += h;  // commutative so row order (changed by remove) does not matter
    }
    return acc ^ (ids_.size() * 0xC2B2AE3D27D4EB4FULL);
}

void VectorStore::snapshot_save(std::ostream& out) const {
    std::shared_lock lock(mutex_);
    out << make_snapshot_header(dim_) << '\n';
    // Write in insertion order so a reload preserves tie-breaks.
    std::vector<std::size_t> rows(ids_.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) { return seqs_[a] < seqs_[b]; });
    for (std::size_t row : rows) {
        json rec;
        rec["entry_id"] = ids_[row].str();
        rec["seq"] = seqs_[row];
        rec["embedding"] = std::vector<float>(data_.begin() + static_cast<std::ptrdiff_t>(row * dim_),
                                              data_.begin() + static_cast<std::ptrdiff_t>((row + 1) * dim_));
        out << rec.dump() << '\n';
    }
}

void VectorStore::snapshot_save(const std::filesystem::path& destination) const {
    std::ofstream out(destination, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot open snapshot for writing: " + destination.string());
    snapshot_save(out);
    out.flush();
    if (!out) throw Error(ErrorCode::io, "failed writing snapshot: " + destination.string());
}

std::unique_ptr<VectorStore> VectorStore::snapshot_load(std::istream& in, Metric metric) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::format, "line 1: empty snapshot");
    const std::size_t dim = parse_snapshot_header(line);
    auto store = std::make_unique<VectorStore>(dim, metric);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(line_no) + ": ";
        try {
            const json rec = json::parse(line);
            const auto id = EntryId::parse(rec.at("entry_id").get<std::string>());
            const auto seq = rec.at("seq").get<std::uint64_t>();
            auto values = rec.at("embedding").get<std::vector<float>>();
            if (values.size() != dim) throw Error(ErrorCode::format, "embedding has wrong dim");
            store->insert_with_seq(id, Embedding::from_unit(std::move(values)), seq);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::format, where + e.what());
        } catch (const Error& e) {
            throw Error(ErrorCode::format, where + e.what());
        }
    }
    return store;
}

std::unique_ptr<VectorStore> VectorStore::snapshot_load(const std::filesystem::path& source, Metric metric) {
    std::ifstream in(source, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open snapshot: " + source.string());
    return snapshot_load(in, metric);
}

}  // namespace gencache
