#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "promptleak/common.hpp"
#include "promptleak/corpus.hpp"
#include "promptleak/embedding.hpp"
#include "promptleak/llm.hpp"
#include "promptleak/prompting.hpp"

namespace promptleak {

enum class AttackKind { DirectInquiry, Hallucination, Similarity, Poisoning };

inline const char* attack_name(AttackKind k) {
    switch (k) {
        case AttackKind::DirectInquiry: return "direct_inquiry";
        case AttackKind::Hallucination: return "hallucination";
        case AttackKind::Similarity: return "similarity";
        case AttackKind::Poisoning: return "poisoning";
    }
    return "?";
}

inline AttackKind attack_from_name(std::string_view s) {
    if (s == "direct_inquiry" || s == "inquiry") return AttackKind::DirectInquiry;
    if (s == "hallucination") return AttackKind::Hallucination;
    if (s == "similarity") return AttackKind::Similarity;
    if (s == "poisoning") return AttackKind::Poisoning;
    throw ConfigError("unknown attack: " + std::string(s));
}

enum class Decision { Member, NonMember, Abstain };

inline const char* decision_name(Decision d) {
    switch (d) {
        case Decision::Member: return "member";
        case Decision::NonMember: return "non_member";
        case Decision::Abstain: return "abstain";
    }
    return "?";
}

struct AttackVerdict {
    Decision decision = Decision::Abstain;
    double score = 0.0;  // yes flag, hallucination count, mean similarity, or gap
    AttackKind attack = AttackKind::DirectInquiry;
    // full conversation including model turns, for audit replay
    ChatTranscript transcript;
};

// Similarity-gap readings for the poisoning attack. ListDrift is the primary
// rule: gap = 1 - best-match similarity between the two lists, so an
// unchanged list scores exactly 0 and a fully rewritten one scores near 1.
// HistoryDelta is the alternative |AvgSim(R0, hist) - AvgSim(R1, hist)|,
// kept behind a flag.
enum class GapMode { ListDrift, HistoryDelta };

// Symmetric best-match similarity between two title lists: each item is
// matched to its most similar counterpart and the matched similarities are
// averaged over both directions. Equal lists give exactly 1.
inline double list_match_sim(const std::vector<std::string>& a,
                             const std::vector<std::string>& b, EmbeddingCache& cache) {
    if (a.empty() || b.empty()) throw Error("list_match_sim: empty title list");
    std::vector<EmbeddingVector> va, vb;
    va.reserve(a.size());
    vb.reserve(b.size());
    for (const auto& t : a) va.push_back(cache.embed(t));
    for (const auto& t : b) vb.push_back(cache.embed(t));
    auto directed = [](const std::vector<EmbeddingVector>& from,
                       const std::vector<EmbeddingVector>& to) {
        double sum = 0.0;
        for (const auto& f : from) {
            double best = -1.0;
            for (const auto& t : to) best = std::max(best, cosine(f, t));
            sum += best;
        }
        return sum / static_cast<double>(from.size());
    };
    return 0.5 * (directed(va, vb) + directed(vb, va));
}

struct AttackContext {
    ChatBackend* backend = nullptr;
    SystemPrompt system_prompt;
    Shot target_user;
    std::shared_ptr<EmbeddingCache> embeddings;
    const ItemCatalog* catalog = nullptr;
    std::size_t top_k = 10;
    PromptTemplates templates;

    void validate() const {
        if (!backend) throw Error("attack context: no backend");
        if (target_user.interactions.empty())
            throw Error("attack context: target user has no interactions");
        if (top_k < 1) throw Error("attack context: top_k must be >= 1");
    }

    std::vector<std::string> history_titles() const {
        std::vector<std::string> t;
        t.reserve(target_user.interactions.size());
        for (const auto& [title, _] : target_user.interactions) t.push_back(title);
        return t;
    }
};

namespace detail {

inline LlmResponse send(const AttackContext& ctx, ChatTranscript& transcript,
                        const AttackQuery& query) {
    transcript.messages.push_back({Role::User, query.text});
    LlmResponse r = chat(*ctx.backend, transcript);
    transcript.messages.push_back({Role::Assistant, r.text});
    return r;
}

inline ChatTranscript open_conversation(const AttackContext& ctx) {
    ChatTranscript t;
    t.messages.push_back({Role::System, ctx.system_prompt.render()});
    return t;
}

}  // namespace detail

inline AttackVerdict run_direct_inquiry(const AttackContext& ctx) {
    ctx.validate();
    AttackVerdict v;
    v.attack = AttackKind::DirectInquiry;
    v.transcript = detail::open_conversation(ctx);
    LlmResponse r =
        detail::send(ctx, v.transcript, make_inquiry_query(ctx.target_user.user_name, ctx.templates));
    switch (parse_yes_no(r.text)) {
        case YesNo::Member:
            v.decision = Decision::Member;
            v.score = 1.0;
            break;
        case YesNo::NonMember:
            v.decision = Decision::NonMember;
            v.score = 0.0;
            break;
        case YesNo::Unparseable: v.decision = Decision::Abstain; break;
    }
    return v;
}

inline Decision decide_hallucination(double count, double threshold) {
    return count > threshold ? Decision::NonMember : Decision::Member;
}

inline AttackVerdict run_hallucination(const AttackContext& ctx, std::size_t threshold) {
    ctx.validate();
    if (!ctx.catalog || ctx.catalog->titles.empty())
        throw Error("hallucination attack: catalog required");
    AttackVerdict v;
    v.attack = AttackKind::Hallucination;
    v.transcript = detail::open_conversation(ctx);
    LlmResponse r = detail::send(
        ctx, v.transcript,
        make_recommendation_query(ctx.target_user.user_name, ctx.top_k, ctx.templates));
    std::vector<std::string> items = parse_item_list(r.text, ctx.top_k);
    if (items.empty()) {
        v.decision = Decision::Abstain;
        return v;
    }
    std::size_t count = 0;
    for (const auto& item : items)
        if (!catalog_contains(*ctx.catalog, item)) ++count;
    v.score = static_cast<double>(count);
    v.decision = decide_hallucination(v.score, static_cast<double>(threshold));
    return v;
}

inline Decision decide_similarity(double score, double tau) {
    return score > tau ? Decision::Member : Decision::NonMember;
}

inline AttackVerdict run_similarity(const AttackContext& ctx, double tau) {
    ctx.validate();
    if (!ctx.embeddings) throw Error("similarity attack: embedding provider required");
    if (tau < -1.0 || tau > 1.0) throw Error("similarity attack: tau outside [-1,1]");
    AttackVerdict v;
    v.attack = AttackKind::Similarity;
    v.transcript = detail::open_conversation(ctx);
    LlmResponse r = detail::send(
        ctx, v.transcript,
        make_recommendation_query(ctx.target_user.user_name, ctx.top_k, ctx.templates));
    std::vector<std::string> items = parse_item_list(r.text, ctx.top_k);
    if (items.empty()) {
        v.decision = Decision::Abstain;
        return v;
    }
    v.score = avg_sim(items, ctx.history_titles(), *ctx.embeddings);
    v.decision = decide_similarity(v.score, tau);
    return v;
}

// Seeded choice of n_poison history slots, each swapped for the least similar
// catalog title outside the user's own history.
inline std::vector<std::string> select_poison_items(const std::vector<std::string>& history,
                                                    std::size_t n_poison,
                                                    const ItemCatalog& catalog,
                                                    EmbeddingCache& cache, std::uint64_t seed) {
    if (n_poison < 1 || n_poison > history.size())
        throw Error("select_poison_items: n_poison must be in [1, " +
                    std::to_string(history.size()) + "], got " + std::to_string(n_poison));
    std::set<std::string> exclude;
    for (const auto& h : history) exclude.insert(normalize_title(h));
    Rng rng(mix_seed(seed, 0x706f69736f6eull));
    std::vector<std::size_t> slots = rng.sample_indices(history.size(), n_poison);
    std::vector<std::string> out = history;
    for (std::size_t slot : slots)
        out[slot] = argmin_sim(history[slot], catalog, cache, exclude);
    return out;
}

inline Decision decide_poisoning(double gap, double tau) {
    return gap < tau ? Decision::Member : Decision::NonMember;
}

inline AttackVerdict run_poisoning(const AttackContext& ctx, std::size_t n_poison, double tau,
                                   std::uint64_t seed, GapMode gap_mode = GapMode::ListDrift) {
    ctx.validate();
    if (!ctx.embeddings) throw Error("poisoning attack: embedding provider required");
    if (!ctx.catalog || ctx.catalog->titles.empty())
        throw Error("poisoning attack: catalog required");
    if (tau < 0.0 || tau > 2.0) throw Error("poisoning attack: tau outside [0,2]");

    AttackVerdict v;
    v.attack = AttackKind::Poisoning;
    v.transcript = detail::open_conversation(ctx);
    LlmResponse r0 = detail::send(
        ctx, v.transcript,
        make_recommendation_query(ctx.target_user.user_name, ctx.top_k, ctx.templates));

    std::vector<std::string> poisoned = select_poison_items(
        ctx.history_titles(), n_poison, *ctx.catalog, *ctx.embeddings, seed);
    LlmResponse r1 = detail::send(
        ctx, v.transcript,
        make_poison_followup(ctx.target_user.user_name, poisoned, ctx.top_k, ctx.templates));

    std::vector<std::string> list0 = parse_item_list(r0.text, ctx.top_k);
    std::vector<std::string> list1 = parse_item_list(r1.text, ctx.top_k);
    if (list0.empty() || list1.empty()) {
        v.decision = Decision::Abstain;
        return v;
    }
    if (gap_mode == GapMode::ListDrift) {
        v.score = 1.0 - list_match_sim(list0, list1, *ctx.embeddings);
    } else {
        std::vector<std::string> hist = ctx.history_titles();
        v.score = std::abs(avg_sim(list0, hist, *ctx.embeddings) -
                           avg_sim(list1, hist, *ctx.embeddings));
    }
    v.decision = decide_poisoning(v.score, tau);
    return v;
}

}  // namespace promptleak
