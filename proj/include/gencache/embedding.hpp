#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gencache {

inline constexpr std::size_t kDefaultEmbeddingDim = 256;

// Fixed-dimension vector that is either unit-norm or exactly zero.
class Embedding {
public:
    Embedding() = default;

    // All-zero embedding of the given dimension.
    static Embedding zero(std::size_t dim);

    // L2-normalizes `raw`; a vector with zero norm becomes the zero embedding.
    static Embedding normalized(std::span<const double> raw);
    static Embedding normalized(std::span<const float> raw);

    // Adopts already-normalized values (e.g. from a snapshot). Throws
    // Error(format) when the values are neither unit-norm (within 1e-4) nor zero.
    static Embedding from_unit(std::vector<float> values);

    std::size_t dim() const noexcept { return values_.size(); }
    bool is_zero() const noexcept { return zero_; }
    std::span<const float> values() const noexcept { return values_; }

    friend bool operator==(const Embedding& a, const Embedding& b) {
        return a.values_ == b.values_;
    }

private:
    explicit Embedding(std::vector<float> values, bool zero)
        : values_(std::move(values)), zero_(zero) {}

    std::vector<float> values_;
    bool zero_ = true;
};

enum class Metric { cosine, dot, euclidean };

std::string_view to_string(Metric metric);
Metric metric_from_string(std::string_view name);

// Similarity score where larger means more similar. Zero embeddings score 0
// under every metric. Throws Error(invalid_argument) on dimension mismatch.
double similarity(const Embedding& a, const Embedding& b, Metric metric = Metric::cosine);

// Raw kernels over float spans of equal length.
double dot_product(std::span<const float> a, std::span<const float> b) noexcept;
double squared_distance(std::span<const float> a, std::span<const float> b) noexcept;

struct EmbedderSpec {
    enum class Kind { deterministic, external_service };

    std::string id;
    std::size_t dim = kDefaultEmbeddingDim;
    Kind kind = Kind::deterministic;
};

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual Embedding embed(std::string_view text) const = 0;
    virtual const EmbedderSpec& spec() const noexcept = 0;
    std::size_t dim() const noexcept { return spec().dim; }
};

// Bag-of-words feature hashing: lowercase, split on non-alphanumerics, FNV-1a 64
// each token into a bucket, L2-normalize. Bytes >= 0x80 are kept inside tokens
// so UTF-8 words hash as a unit.
class HashingEmbedder final : public Embedder {
public:
    explicit HashingEmbedder(std::size_t dim = kDefaultEmbeddingDim);

    Embedding embed(std::string_view text) const override;
    const EmbedderSpec& spec() const noexcept override { return spec_; }

private:
    EmbedderSpec spec_;
};

std::uint64_t fnv1a64(std::string_view bytes) noexcept;

// Client for a remote embedding service:
// POST {"text": ...} -> {"dim": N, "values": [...]}.
class HttpEmbedder final : public Embedder {
public:
    HttpEmbedder(std::string base_url, std::string path, std::size_t dim,
                 std::chrono::milliseconds timeout);

    // Throws Error(unavailable) on transport failure and Error(format) on a
    // malformed or wrong-dimension reply.
    Embedding embed(std::string_view text) const override;
    const EmbedderSpec& spec() const noexcept override { return spec_; }

private:
    EmbedderSpec spec_;
    std::string base_url_;
    std::string path_;
    std::chrono::milliseconds timeout_;
};

}  // namespace gencache
