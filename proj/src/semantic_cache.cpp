#include "gencache/semantic_cache.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "gencache/error.hpp"

namespace gencache {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

json response_to_json(const ResponseRecord& r) {
    return json{{"text", r.text},
                {"model_id", r.model_id},
                {"provider_id", r.provider_id},
                {"observed_cost", r.observed_cost},
                {"observed_latency_ms", r.observed_latency_ms},
                {"created_at", r.created_at},
                {"synthesized", r.synthesized}};
}

ResponseRecord response_from_json(const json& j) {
    ResponseRecord r;
    r.text = j.at("text").get<std::string>();
    r.model_id = j.value("model_id", "");
    r.provider_id = j.value("provider_id", "");
    r.observed_cost = j.value("observed_cost", 0.0);
    r.observed_latency_ms = j.value("observed_latency_ms", 0.0);
    r.created_at = j.value("created_at", std::int64_t{0});
    r.synthesized = j.value("synthesized", false);
    return r;
}

}  // namespace

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

std::string_view to_string(Tier tier) { return tier == Tier::l1 ? "l1" : "l2"; }

std::string_view to_string(GenMode mode) {
    switch (mode) {
        case GenMode::off: return "off";
        case GenMode::primary: return "primary";
        case GenMode::secondary: return "secondary";
    }
    return "off";
}

GenMode gen_mode_from_string(std::string_view name) {
    if (name == "off") return GenMode::off;
    if (name == "primary") return GenMode::primary;
    if (name == "secondary") return GenMode::secondary;
    throw Error(ErrorCode::invalid_argument, "gen_mode must be off, primary or secondary");
}

std::string_view to_string(OutcomeKind kind) {
    switch (kind) {
        case OutcomeKind::miss: return "miss";
        case OutcomeKind::standard_hit: return "standard_hit";
        case OutcomeKind::generative_hit: return "generative_hit";
    }
    return "miss";
}

OutcomeKind outcome_kind_from_string(std::string_view name) {
    if (name == "miss") return OutcomeKind::miss;
    if (name == "standard_hit") return OutcomeKind::standard_hit;
    if (name == "generative_hit") return OutcomeKind::generative_hit;
    throw Error(ErrorCode::invalid_argument, "unknown outcome kind: " + std::string(name));
}

LookupPolicy::LookupPolicy(double t_s, double t_single, double t_combined, GenMode mode,
                           std::size_t max_components)
    : t_s_(t_s), t_single_(t_single), t_combined_(t_combined), mode_(mode), max_components_(max_components) {
    if (!std::isfinite(t_s) || !std::isfinite(t_single) || !std::isfinite(t_combined)) {
        throw Error(ErrorCode::invalid_argument, "lookup thresholds must be finite");
    }
    if (!(t_single < t_s && t_s < t_combined)) {
        throw Error(ErrorCode::invalid_argument, "lookup policy requires t_single < t_s < t_combined");
    }
    if (max_components == 0) throw Error(ErrorCode::invalid_argument, "max_components must be >= 1");
}

LookupPolicy LookupPolicy::around(double t_s, double single_margin, double combined_margin, GenMode mode,
                                  std::size_t max_components) {
    return LookupPolicy(t_s, t_s - single_margin, t_s + combined_margin, mode, max_components);
}

std::string component_header(std::string_view query_text) {
    return "--- from cached query: " + std::string(query_text) + " ---";
}

std::string summarization_prompt(std::string_view combined) {
    return "Summarize the following answers into one coherent answer. Keep every distinct fact.\n\n" +
           std::string(combined);
}

std::string combine_answers(const std::vector<AnswerPart>& parts, Summarizer* summarizer) {
    if (parts.empty()) throw Error(ErrorCode::invalid_argument, "combine_answers needs at least one component");
    if (parts.size() == 1 && summarizer == nullptr) return parts.front().answer;
    std::string combined;
    for (const auto& part : parts) {
        if (!combined.empty()) combined += '\n';
        combined += component_header(part.query_text);
        combined += '\n';
        combined += part.answer;
    }
    if (summarizer != nullptr) {
        try {
            auto summary = summarizer->summarize(summarization_prompt(combined));
            if (!summary.empty()) return summary;
        } catch (const std::exception&) {
            // plain concatenation below
        }
    }
    return combined;
}

SemanticCache::SemanticCache(std::shared_ptr<const Embedder> embedder, CacheOptions options)
    : embedder_(std::move(embedder)), options_(options), store_(embedder_->dim(), options.metric) {
    if (options_.capacity == 0) throw Error(ErrorCode::invalid_argument, "cache capacity must be >= 1");
}

std::size_t SemanticCache::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

Embedding SemanticCache::embed_or_throw(std::string_view text, const char* what) const {
    try {
        return embedder_->embed(text);
    } catch (const std::exception& e) {
        throw Error(ErrorCode::unavailable, std::string(what) + " unavailable: " + e.what());
    }
}

void SemanticCache::touch_locked(Slot& slot, std::int64_t now) {
    slot.entry.hit_count += 1;
    slot.entry.last_access = now;
    slot.access_tick = ++access_clock_;
    lru_.splice(lru_.begin(), lru_, slot.lru_pos);
}

const ResponseRecord& SemanticCache::pick_response(const CacheEntry& entry,
                                                   const std::optional<std::string>& preferred_model) {
    if (preferred_model) {
        for (auto it = entry.responses.rbegin(); it != entry.responses.rend(); ++it) {
            if (it->model_id == *preferred_model) return *it;
        }
    }
    return entry.responses.back();
}

LookupOutcome SemanticCache::lookup(std::string_view query_text, const LookupPolicy& policy,
                                    const LookupOptions& options) {
    return lookup(embed_or_throw(query_text, "lookup"), policy, options);
}

LookupOutcome SemanticCache::lookup(const Embedding& query, const LookupPolicy& policy,
                                    const LookupOptions& options) {
    LookupOutcome outcome;
    std::vector<AnswerPart> parts;
    {
        std::shared_lock lock(mutex_);
        const auto hits = store_.top_k(query, policy.max_components(), policy.t_single());
        if (!hits.empty()) outcome.best_score = hits.front().score;

        const bool standard_first = policy.gen_mode() != GenMode::primary;
        const bool generative = policy.gen_mode() != GenMode::off;
        std::vector<SearchHit> used;
        if (standard_first && !hits.empty() && hits.front().score > policy.t_s()) {
            outcome.kind = OutcomeKind::standard_hit;
            used.push_back(hits.front());
        } else if (generative && !hits.empty()) {
            const double sum = std::accumulate(hits.begin(), hits.end(), 0.0,
                                               [](double acc, const SearchHit& h) { return acc + h.score; });
            if (sum > policy.t_combined()) {
                outcome.kind = OutcomeKind::generative_hit;
                used = hits;
            }
        }

        if (!used.empty()) {
            const auto now = now_ms();
            std::lock_guard lru_lock(lru_mutex_);
            for (const auto& h : used) {
                auto it = entries_.find(h.entry_id);
                if (it == entries_.end()) continue;
                touch_locked(it->second, now);
                const auto& rec = pick_response(it->second.entry, options.preferred_model);
                outcome.components.push_back(Component{h.entry_id, h.score, it->second.entry.query_text, rec.model_id});
                parts.push_back(AnswerPart{it->second.entry.query_text, rec.text, h.score});
            }
        }
    }
    if (outcome.kind == OutcomeKind::standard_hit) {
        outcome.answer = parts.front().answer;
    } else if (outcome.kind == OutcomeKind::generative_hit) {
        outcome.answer = combine_answers(parts, options.summarizer);
    }
    return outcome;
}

void SemanticCache::evict_one_locked() {
    if (lru_.empty()) return;
    const EntryId victim = lru_.back();
    lru_.pop_back();
    auto it = entries_.find(victim);
    if (it != entries_.end()) {
        by_query_.erase(std::string(trim(it->second.entry.query_text)));
        entries_.erase(it);
    }
    store_.remove(victim);
}

std::optional<EntryId> SemanticCache::insert(std::string_view query_text, ResponseRecord response, CacheScope scope,
                                             std::string_view origin) {
    if (!scope.allows(options_.tier)) return std::nullopt;
    if (response.text.empty()) throw Error(ErrorCode::invalid_argument, "response text must be non-empty");
    if (response.created_at == 0) response.created_at = now_ms();
    const std::string key(trim(query_text));
    {
        std::unique_lock lock(mutex_);
        if (auto found = by_query_.find(key); found != by_query_.end()) {
            entries_.at(found->second).entry.responses.push_back(std::move(response));
            return found->second;
        }
    }
    // Embed outside the lock; re-check for a racing insert of the same text.
    Embedding embedding = embed_or_throw(query_text, "insert");
    std::unique_lock lock(mutex_);
    if (auto found = by_query_.find(key); found != by_query_.end()) {
        entries_.at(found->second).entry.responses.push_back(std::move(response));
        return found->second;
    }
    std::lock_guard lru_lock(lru_mutex_);
    while (entries_.size() >= options_.capacity) evict_one_locked();

    const EntryId id{next_id_++};
    store_.insert_with_seq(id, embedding, id.value);
    Slot slot;
    slot.entry.id = id;
    slot.entry.query_text = std::string(query_text);
    slot.entry.embedding = std::move(embedding);
    slot.entry.created_at = response.created_at;
    slot.entry.last_access = slot.entry.created_at;
    slot.entry.origin = std::string(origin);
    slot.entry.responses.push_back(std::move(response));
    slot.access_tick = ++access_clock_;
    lru_.push_front(id);
    slot.lru_pos = lru_.begin();
    entries_.emplace(id, std::move(slot));
    by_query_.emplace(key, id);
    return id;
}

std::optional<EntryId> SemanticCache::store_synthesized(std::string_view query_text, std::string_view combined_answer,
                                                        CacheScope scope) {
    ResponseRecord rec;
    rec.text = std::string(combined_answer);
    rec.model_id = "gencache-synthesis";
    rec.provider_id = "cache";
    rec.synthesized = true;
    return insert(query_text, std::move(rec), scope, "synthesized");
}

std::optional<CacheEntry> SemanticCache::find(EntryId id) const {
    std::shared_lock lock(mutex_);
    std::lock_guard lru_lock(lru_mutex_);
    auto it = entries_.find(id);
    if (it == entries_.end()) return std::nullopt;
    return it->second.entry;
}

std::optional<CacheEntry> SemanticCache::find_by_query(std::string_view query_text) const {
    std::shared_lock lock(mutex_);
    std::lock_guard lru_lock(lru_mutex_);
    auto found = by_query_.find(std::string(trim(query_text)));
    if (found == by_query_.end()) return std::nullopt;
    return entries_.at(found->second).entry;
}

std::vector<CacheEntry> SemanticCache::entries() const {
    std::shared_lock lock(mutex_);
    std::lock_guard lru_lock(lru_mutex_);
    std::vector<CacheEntry> out;
    out.reserve(entries_.size());
    for (const auto& [_, slot] : entries_) out.push_back(slot.entry);
    std::sort(out.begin(), out.end(), [](const CacheEntry& a, const CacheEntry& b) { return a.id < b.id; });
    return out;
}

void SemanticCache::clear() {
    std::unique_lock lock(mutex_);
    std::lock_guard lru_lock(lru_mutex_);
    entries_.clear();
    by_query_.clear();
    lru_.clear();
    store_.clear();
}

std::size_t SemanticCache::snapshot_save(std::ostream& out) const {
    std::shared_lock lock(mutex_);
    std::lock_guard lru_lock(lru_mutex_);
    out << make_snapshot_header(store_.dim()) << '\n';

    // Records in id order (which is insertion order); access ticks preserve LRU order.
    std::vector<const Slot*> slots;
    slots.reserve(entries_.size());
    for (const auto& [_, slot] : entries_) slots.push_back(&slot);
    std::sort(slots.begin(), slots.end(), [](const Slot* a, const Slot* b) { return a->entry.id < b->entry.id; });
    for (const Slot* slot : slots) {
        const auto& e = slot->entry;
        json rec;
        rec["entry_id"] = e.id.str();
        rec["seq"] = e.id.value;
        rec["query_text"] = e.query_text;
        rec["embedding"] = std::vector<float>(e.embedding.values().begin(), e.embedding.values().end());
        json responses = json::array();
        for (const auto& r : e.responses) responses.push_back(response_to_json(r));
        rec["responses"] = std::move(responses);
        rec["hit_count"] = e.hit_count;
        rec["last_access"] = e.last_access;
        rec["created_at"] = e.created_at;
        rec["access_tick"] = slot->access_tick;
        rec["origin"] = e.origin;
        out << rec.dump() << '\n';
    }
    return slots.size();
}

std::size_t SemanticCache::snapshot_save(const std::filesystem::path& destination) const {
    std::ofstream out(destination, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot open snapshot for writing: " + destination.string());
    const auto n = snapshot_save(out);
    out.flush();
    if (!out) throw Error(ErrorCode::io, "failed writing snapshot: " + destination.string());
    return n;
}

std::size_t SemanticCache::warm_load(const std::filesystem::path& source) {
    std::ifstream in(source, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open snapshot: " + source.string());
    return warm_load(in);
}

std::size_t SemanticCache::warm_load(std::istream& in) {
    struct Parsed {
        CacheEntry entry;
        std::uint64_t access_tick = 0;
    };

    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::format, "line 1: empty snapshot");
    const std::size_t dim = parse_snapshot_header(line);
    if (dim != store_.dim()) {
        throw Error(ErrorCode::format, "line 1: snapshot dim " + std::to_string(dim) + " does not match embedder dim " +
                                           std::to_string(store_.dim()));
    }

    // Parse everything before touching the cache so a bad file changes nothing.
    std::vector<Parsed> parsed;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = "line " + std::to_string(line_no) + ": ";
        try {
            const json rec = json::parse(line);
            Parsed p;
            p.entry.id = EntryId::parse(rec.at("entry_id").get<std::string>());
            p.entry.query_text = rec.at("query_text").get<std::string>();
            auto values = rec.at("embedding").get<std::vector<float>>();
            if (values.size() != dim) throw Error(ErrorCode::format, "embedding has wrong dim");
            p.entry.embedding = Embedding::from_unit(std::move(values));
            for (const auto& r : rec.at("responses")) p.entry.responses.push_back(response_from_json(r));
            if (p.entry.responses.empty()) throw Error(ErrorCode::format, "record has no responses");
            for (const auto& r : p.entry.responses) {
                if (r.text.empty()) throw Error(ErrorCode::format, "response text is empty");
            }
            p.entry.hit_count = rec.value("hit_count", std::uint64_t{0});
            p.entry.last_access = rec.value("last_access", std::int64_t{0});
            p.entry.created_at = rec.value("created_at", std::int64_t{0});
            p.entry.origin = rec.value("origin", std::string("warm"));
            p.access_tick = rec.value("access_tick", std::uint64_t{0});
            parsed.push_back(std::move(p));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::format, where + e.what());
        } catch (const Error& e) {
            throw Error(ErrorCode::format, where + e.what());
        }
    }

    // Least recently used first, so pushing to the LRU front rebuilds the order.
    std::stable_sort(parsed.begin(), parsed.end(),
                     [](const Parsed& a, const Parsed& b) { return a.access_tick < b.access_tick; });

    std::unique_lock lock(mutex_);
    std::lock_guard lru_lock(lru_mutex_);
    const bool exact_restore = entries_.empty();
    std::size_t loaded = 0;
    for (auto& p : parsed) {
        const std::string key(trim(p.entry.query_text));
        if (auto found = by_query_.find(key); found != by_query_.end()) {
            auto& target = entries_.at(found->second).entry.responses;
            target.insert(target.end(), p.entry.responses.begin(), p.entry.responses.end());
            ++loaded;
            continue;
        }
        while (entries_.size() >= options_.capacity) evict_one_locked();
        EntryId id = p.entry.id;
        if (!exact_restore || entries_.contains(id)) id = EntryId{next_id_};
        next_id_ = std::max(next_id_, id.value + 1);
        p.entry.id = id;
        store_.insert_with_seq(id, p.entry.embedding, id.value);
        Slot slot;
        slot.entry = std::move(p.entry);
        slot.access_tick = ++access_clock_;
        lru_.push_front(id);
        slot.lru_pos = lru_.begin();
        entries_.emplace(id, std::move(slot));
        by_query_.emplace(key, id);
        ++loaded;
    }
    return loaded;
}

}  // namespace gencache
