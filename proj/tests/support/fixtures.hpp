#pragma once

#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "gencache/embedding.hpp"

namespace fixture {

// Returns preset vectors for known texts; unknown text embeds to zero.
class TableEmbedder final : public gencache::Embedder {
public:
    explicit TableEmbedder(std::size_t dim) : spec_{"table", dim, gencache::EmbedderSpec::Kind::deterministic} {}

    void set(const std::string& text, const std::vector<double>& v) {
        std::lock_guard lock(mutex_);
        table_[text] = gencache::Embedding::normalized(std::span<const double>(v));
    }

    gencache::Embedding embed(std::string_view text) const override {
        std::lock_guard lock(mutex_);
        auto it = table_.find(std::string(text));
        return it == table_.end() ? gencache::Embedding::zero(spec_.dim) : it->second;
    }
    const gencache::EmbedderSpec& spec() const noexcept override { return spec_; }

private:
    gencache::EmbedderSpec spec_;
    mutable std::mutex mutex_;
    std::map<std::string, gencache::Embedding> table_;
};

class FailingEmbedder final : public gencache::Embedder {
public:
    gencache::Embedding embed(std::string_view) const override { throw std::runtime_error("embedder down"); }
    const gencache::EmbedderSpec& spec() const noexcept override { return spec_; }

private:
    gencache::EmbedderSpec spec_{"failing", 8, gencache::EmbedderSpec::Kind::external_service};
};

}  // namespace fixture
