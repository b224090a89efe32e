#pragma once

#include <algorithm>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "promptleak/common.hpp"
#include "promptleak/corpus.hpp"
#include "promptleak/embedding.hpp"
#include "promptleak/llm.hpp"

namespace promptleak {

// Behavior knobs for the simulator. Member vs non-member status is read from
// the transcript itself: the queried name either appears in a system-prompt
// shot or it does not. Faithful mode encodes the hypotheses under test
// (members hallucinate less, get history-adjacent recommendations, and resist
// poisoning); arbitrary settings are allowed for calibration work.
struct MockBehavior {
    std::uint64_t seed = 0;
    double p_yes_member = 1.0;
    double p_yes_nonmember = 0.0;
    double halluc_rate_member = 0.0;
    double halluc_rate_nonmember = 0.0;
    // per-slot probability of sampling a recommendation near the shown history
    double affinity_member = 1.0;
    double affinity_nonmember = 0.0;
    double poison_susceptibility_member = 0.0;
    double poison_susceptibility_nonmember = 1.0;
    ItemCatalog catalog;

    void validate() const {
        for (double p : {p_yes_member, p_yes_nonmember, halluc_rate_member,
                         halluc_rate_nonmember, affinity_member, affinity_nonmember,
                         poison_susceptibility_member, poison_susceptibility_nonmember})
            if (p < 0.0 || p > 1.0) throw ConfigError("mock behavior: probability outside [0,1]");
        if (catalog.titles.empty()) throw ConfigError("mock behavior: empty catalog");
    }

    static MockBehavior faithful(ItemCatalog catalog, std::uint64_t seed = 0) {
        MockBehavior b;
        b.seed = seed;
        b.p_yes_member = 0.95;
        b.p_yes_nonmember = 0.05;
        b.halluc_rate_member = 0.05;
        b.halluc_rate_nonmember = 0.5;
        b.affinity_member = 0.9;
        b.affinity_nonmember = 0.0;
        b.poison_susceptibility_member = 0.1;
        b.poison_susceptibility_nonmember = 0.9;
        b.catalog = std::move(catalog);
        return b;
    }
};

// Deterministic chat simulator: a pure function of (behavior, transcript).
// All randomness comes from a PRNG keyed by (seed, transcript hash), so every
// call replays exactly.
class MockChatBackend final : public ChatBackend {
public:
    explicit MockChatBackend(MockBehavior behavior,
                             std::shared_ptr<EmbeddingCache> cache = nullptr)
        : behavior_(std::move(behavior)),
          cache_(cache ? std::move(cache)
                       : std::make_shared<EmbeddingCache>(
                             std::make_shared<TrigramHashEmbedder>())) {
        behavior_.validate();
        titles_.assign(behavior_.catalog.titles.begin(), behavior_.catalog.titles.end());
    }

    LlmResponse chat(const ChatTranscript& transcript) override {
        auto start = std::chrono::steady_clock::now();
        LlmResponse r;
        r.text = respond(transcript);
        r.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - start);
        r.backend_id = "mock";
        return r;
    }

    std::string respond(const ChatTranscript& transcript) const {
        if (transcript.messages.empty() || transcript.messages.front().role != Role::System)
            throw BackendError("mock: transcript has no system prompt");
        if (transcript.messages.back().role != Role::User)
            throw BackendError("mock: transcript does not end with a user message");
        const std::string& query = transcript.messages.back().content;
        const std::string& system = transcript.messages.front().content;
        Rng rng(mix_seed(behavior_.seed, transcript.content_hash()));

        if (query.find("Have you seen the user ") != std::string::npos)
            return respond_inquiry(system, query, rng);
        if (query.find("previously interacted with items (") != std::string::npos)
            return respond_poison(transcript, system, query, rng);
        if (query.find("recommend top-") != std::string::npos)
            return respond_recommend(system, query, rng);
        throw BackendError("mock: unrecognized query kind: " + query);
    }

private:
    static std::string extract_between(const std::string& text, std::string_view before,
                                       std::string_view after) {
        std::size_t b = text.find(before);
        if (b == std::string::npos) throw BackendError("mock: cannot find '" + std::string(before) + "'");
        b += before.size();
        std::size_t e = text.find(after, b);
        if (e == std::string::npos) throw BackendError("mock: cannot find '" + std::string(after) + "'");
        return text.substr(b, e - b);
    }

    bool is_member(const std::string& system, const std::string& name) const {
        return system.find("user " + name + " has interacted") != std::string::npos;
    }

    // titles shown in the queried user's demonstration block
    std::vector<std::string> shown_history(const std::string& system,
                                           const std::string& name) const {
        std::size_t pos = system.find("user " + name + " has interacted with: ");
        if (pos == std::string::npos) return {};
        std::size_t end = system.find("\nExample", pos);
        std::string block =
            system.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
        std::vector<std::string> titles;
        std::size_t i = 0;
        while ((i = block.find('"', i)) != std::string::npos) {
            std::size_t close = block.find('"', i + 1);
            if (close == std::string::npos) break;
            titles.push_back(block.substr(i + 1, close - i - 1));
            i = close + 1;
        }
        return titles;
    }

    std::string respond_inquiry(const std::string& system, const std::string& query,
                                Rng& rng) const {
        std::string name = extract_between(query, "Have you seen the user ", "?");
        double p = is_member(system, name) ? behavior_.p_yes_member : behavior_.p_yes_nonmember;
        return rng.bernoulli(p) ? "Yes" : "No";
    }

    std::string synthesize_hallucination(Rng& rng, const std::set<std::string>& used) const {
        for (;;) {
            std::string t = "Unreleased Phantom Feature " + to_hex(rng.next_u64()).substr(10);
            std::string norm = normalize_title(t);
            if (!behavior_.catalog.contains(t) && !used.count(norm)) return t;
        }
    }

    const std::vector<std::pair<std::string, EmbeddingVector>>& catalog_vectors() const {
        std::lock_guard<std::mutex> lock(mu_);
        if (catalog_vecs_.empty()) {
            catalog_vecs_.reserve(titles_.size());
            for (const auto& t : titles_) catalog_vecs_.emplace_back(t, cache_->embed(t));
        }
        return catalog_vecs_;
    }

    // most similar catalog title to `anchor`, skipping excluded titles
    std::string nearest_catalog_title(const std::string& anchor,
                                      const std::set<std::string>& exclude) const {
        EmbeddingVector a = cache_->embed(anchor);
        const std::string* best = nullptr;
        double best_sim = 0.0;
        for (const auto& [title, vec] : catalog_vectors()) {
            if (exclude.count(title)) continue;
            double s = cosine(a, vec);
            if (!best || s > best_sim) {
                best = &title;
                best_sim = s;
            }
        }
        if (!best) throw BackendError("mock: catalog exhausted");
        return *best;
    }

    std::string uniform_catalog_title(Rng& rng, const std::set<std::string>& exclude) const {
        if (exclude.size() >= titles_.size()) throw BackendError("mock: catalog exhausted");
        for (;;) {
            const std::string& t = titles_[rng.uniform_below(titles_.size())];
            if (!exclude.count(t)) return t;
        }
    }

    static std::string render_list(const std::vector<std::string>& titles) {
        std::ostringstream out;
        for (std::size_t i = 0; i < titles.size(); ++i)
            out << (i + 1) << ". " << titles[i] << '\n';
        return out.str();
    }

    std::string respond_recommend(const std::string& system, const std::string& query,
                                  Rng& rng) const {
        std::string name = extract_between(query, "for ", ".");
        std::size_t top_k = std::stoul(extract_between(query, "recommend top-", " "));
        bool member = is_member(system, name);
        double halluc_rate = member ? behavior_.halluc_rate_member : behavior_.halluc_rate_nonmember;
        double affinity = member ? behavior_.affinity_member : behavior_.affinity_nonmember;
        std::vector<std::string> history = shown_history(system, name);

        std::set<std::string> blocked;  // normalized; shown history plus picks so far
        for (const auto& h : history) blocked.insert(normalize_title(h));

        std::vector<std::string> out;
        for (std::size_t slot = 0; slot < top_k; ++slot) {
            std::string pick;
            if (rng.bernoulli(halluc_rate)) {
                pick = synthesize_hallucination(rng, blocked);
            } else if (!history.empty() && rng.bernoulli(affinity)) {
                const std::string& anchor = history[rng.uniform_below(history.size())];
                pick = nearest_catalog_title(anchor, blocked);
            } else {
                pick = uniform_catalog_title(rng, blocked);
            }
            blocked.insert(normalize_title(pick));
            out.push_back(std::move(pick));
        }
        return render_list(out);
    }

    std::string respond_poison(const ChatTranscript& transcript, const std::string& system,
                               const std::string& query, Rng& rng) const {
        std::string name = extract_between(query, "The user ", " previously");
        std::string items = extract_between(query, "items (", ")");
        std::vector<std::string> poisons;
        for (auto& p : str::split(items, ',')) {
            std::string t = str::trim(p);
            if (!t.empty()) poisons.push_back(std::move(t));
        }
        if (poisons.empty()) throw BackendError("mock: poison follow-up lists no items");

        const ChatMessage* prior = nullptr;
        for (auto it = transcript.messages.rbegin(); it != transcript.messages.rend(); ++it)
            if (it->role == Role::Assistant) {
                prior = &*it;
                break;
            }
        if (!prior) throw BackendError("mock: poison follow-up without a prior recommendation");
        std::vector<std::string> first_list = parse_item_list(prior->content, 1000);
        if (first_list.empty()) throw BackendError("mock: prior recommendation is empty");

        double susceptibility = is_member(system, name)
                                    ? behavior_.poison_susceptibility_member
                                    : behavior_.poison_susceptibility_nonmember;
        std::set<std::string> blocked;
        for (const auto& t : first_list) blocked.insert(normalize_title(t));

        std::vector<std::string> out = first_list;
        for (std::string& slot : out) {
            if (!rng.bernoulli(susceptibility)) continue;
            const std::string& anchor = poisons[rng.uniform_below(poisons.size())];
            std::string pick = nearest_catalog_title(anchor, blocked);
            blocked.insert(normalize_title(pick));
            slot = std::move(pick);
        }
        return render_list(out);
    }

    MockBehavior behavior_;
    std::shared_ptr<EmbeddingCache> cache_;
    std::vector<std::string> titles_;
    mutable std::mutex mu_;
    mutable std::vector<std::pair<std::string, EmbeddingVector>> catalog_vecs_;
};

inline std::string mock_respond(const MockBehavior& behavior, const ChatTranscript& transcript) {
    return MockChatBackend(behavior).respond(transcript);
}

}  // namespace promptleak
