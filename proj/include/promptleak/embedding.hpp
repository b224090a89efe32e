#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptleak/common.hpp"
#include "promptleak/corpus.hpp"

namespace promptleak {

struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dim() const { return values.size(); }
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual const std::string& name() const = 0;
    virtual std::size_t dim() const = 0;
    // Deterministic for a fixed provider configuration.
    virtual EmbeddingVector embed_uncached(const std::string& text) const = 0;
};

// Character-trigram hashing embedder. Offline, deterministic, nonnegative
// entries, unit L2 norm. Texts are normalized as titles before hashing so the
// cache key and the geometry agree with catalog lookups.
class TrigramHashEmbedder final : public EmbeddingProvider {
public:
    explicit TrigramHashEmbedder(std::size_t dim = 256)
        : dim_(dim), name_("trigram-hash-" + std::to_string(dim)) {
        if (dim_ == 0) throw Error("TrigramHashEmbedder: dim must be positive");
    }

    const std::string& name() const override { return name_; }
    std::size_t dim() const override { return dim_; }

    EmbeddingVector embed_uncached(const std::string& text) const override {
        if (text.empty()) throw Error("embed: empty text");
        std::string t = "\x02" + normalize_title(text) + "\x03";
        EmbeddingVector v;
        v.values.assign(dim_, 0.0);
        if (t.size() < 3) t += "\x03";
        for (std::size_t i = 0; i + 3 <= t.size(); ++i) {
            std::uint64_t h = fnv1a64(std::string_view(t).substr(i, 3));
            v.values[h % dim_] += 1.0;
        }
        double norm = 0.0;
        for (double x : v.values) norm += x * x;
        norm = std::sqrt(norm);
        if (norm == 0.0) {
            v.values[0] = 1.0;  // whitespace-only input
        } else {
            for (double& x : v.values) x /= norm;
        }
        return v;
    }

private:
    std::size_t dim_;
    std::string name_;
};

// Memoizing front of a provider, keyed by (provider name, normalized text).
// Thread-safe; optionally persisted as line-JSON with a versioned header.
class EmbeddingCache {
public:
    explicit EmbeddingCache(std::shared_ptr<const EmbeddingProvider> provider)
        : provider_(std::move(provider)) {
        if (!provider_) throw Error("EmbeddingCache: null provider");
    }

    const EmbeddingProvider& provider() const { return *provider_; }

    EmbeddingVector embed(const std::string& text) {
        if (text.empty()) throw Error("embed: empty text");
        std::string key = normalize_title(text);
        if (key.empty()) key = text;
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = cache_.find(key);
            if (it != cache_.end()) return it->second;
        }
        EmbeddingVector v = provider_->embed_uncached(text);
        std::lock_guard<std::mutex> lock(mu_);
        ++provider_calls_;
        cache_.emplace(key, v);
        return v;
    }

    std::size_t provider_calls() const {
        std::lock_guard<std::mutex> lock(mu_);
        return provider_calls_;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw Error("embedding cache not writable: " + path);
        std::lock_guard<std::mutex> lock(mu_);
        nlohmann::json header = {{"format", "promptleak-embedding-cache"},
                                 {"version", 1},
                                 {"provider", provider_->name()},
                                 {"dim", provider_->dim()}};
        out << header.dump() << '\n';
        for (const auto& [text, vec] : cache_) {
            nlohmann::json row = {{"h", to_hex(fnv1a64(text))}, {"t", text}, {"v", vec.values}};
            out << row.dump() << '\n';
        }
    }

    void load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error("embedding cache not readable: " + path);
        std::string line;
        if (!std::getline(in, line)) throw ParseError("embedding cache: missing header");
        nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
        if (header.is_discarded() || header.value("format", "") != "promptleak-embedding-cache" ||
            header.value("version", 0) != 1)
            throw ParseError("embedding cache: bad header in " + path);
        if (header.value("provider", "") != provider_->name())
            throw ParseError("embedding cache: provider mismatch (" +
                             header.value("provider", std::string{}) + " vs " +
                             provider_->name() + ")");
        std::lock_guard<std::mutex> lock(mu_);
        std::size_t line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            nlohmann::json row = nlohmann::json::parse(line, nullptr, false);
            if (row.is_discarded() || !row.contains("t") || !row.contains("v"))
                throw ParseError("embedding cache: bad record at line " + std::to_string(line_no));
            EmbeddingVector v;
            v.values = row["v"].get<std::vector<double>>();
            cache_[row["t"].get<std::string>()] = std::move(v);
        }
    }

private:
    std::shared_ptr<const EmbeddingProvider> provider_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, EmbeddingVector> cache_;
    std::size_t provider_calls_ = 0;
};

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim())
        throw Error("cosine: dimension mismatch (" + std::to_string(a.dim()) + " vs " +
                    std::to_string(b.dim()) + ")");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na == 0.0 || nb == 0.0) throw Error("cosine: zero vector has no direction");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// Mean pairwise cosine over the full cross product of the two title lists.
inline double avg_sim(const std::vector<std::string>& recommended,
                      const std::vector<std::string>& history, EmbeddingCache& cache) {
    if (recommended.empty() || history.empty()) throw Error("avg_sim: empty title list");
    std::vector<EmbeddingVector> rec, hist;
    rec.reserve(recommended.size());
    hist.reserve(history.size());
    for (const auto& r : recommended) rec.push_back(cache.embed(r));
    for (const auto& h : history) hist.push_back(cache.embed(h));
    double sum = 0.0;
    for (const auto& r : rec)
        for (const auto& h : hist) sum += cosine(r, h);
    return sum / (static_cast<double>(rec.size()) * static_cast<double>(hist.size()));
}

// Full scan for the least similar pool title; ties go to the
// lexicographically smallest normalized title.
inline std::string argmin_sim(const std::string& target, const ItemCatalog& pool,
                              EmbeddingCache& cache, const std::set<std::string>& exclude = {}) {
    EmbeddingVector t = cache.embed(target);
    const std::string* best = nullptr;
    double best_sim = 0.0;
    for (const std::string& candidate : pool.titles) {
        if (exclude.count(candidate)) continue;
        double s = cosine(t, cache.embed(candidate));
        if (!best || s < best_sim || (s == best_sim && candidate < *best)) {
            best = &candidate;
            best_sim = s;
        }
    }
    if (!best) throw Error("argmin_sim: pool is empty after exclusions");
    return *best;
}

}  // namespace promptleak
