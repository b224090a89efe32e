#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptleak/attacks.hpp"
#include "promptleak/common.hpp"
#include "promptleak/corpus.hpp"
#include "promptleak/embedding.hpp"
#include "promptleak/llm.hpp"
#include "promptleak/mock.hpp"
#include "promptleak/prompting.hpp"

namespace promptleak {

inline double advantage(double accuracy) { return 2.0 * (accuracy - 0.5); }

struct TrialSpec {
    std::size_t trial_id = 0;
    bool is_member = false;
    Shot victim;
    std::vector<Shot> fillers;  // k-1 members for member trials, k for non-member
    std::size_t shots_k = 0;
    ShotPosition position;
    std::uint64_t seed = 0;
};

struct MockParams {
    double p_yes_member = 0.95;
    double p_yes_nonmember = 0.05;
    double halluc_rate_member = 0.05;
    double halluc_rate_nonmember = 0.5;
    double affinity_member = 0.9;
    double affinity_nonmember = 0.0;
    double poison_susceptibility_member = 0.1;
    double poison_susceptibility_nonmember = 0.9;
};

struct ExperimentConfig {
    AttackKind attack = AttackKind::DirectInquiry;
    std::string backend = "mock";  // mock | http
    std::string dataset_path;
    DatasetFormat dataset_format = DatasetFormat::NormalizedCsv;
    std::string movies_path;  // movielens only; defaults beside the ratings file
    std::string catalog_path;
    std::size_t shots_k = 5;
    ShotPosition position = ShotPosition::first();
    std::string position_str = "first";
    std::size_t n_trials = 1000;
    std::uint64_t seed = 1;
    std::size_t top_k = 10;
    std::size_t n_poison = 2;
    double tau = 0.5;                  // similarity / poisoning-gap threshold
    std::size_t halluc_threshold = 2;  // hallucination count threshold
    GapMode gap_mode = GapMode::ListDrift;
    double member_fraction = 0.5;
    std::size_t history_len = 10;  // max interactions rendered per shot
    int concurrency = 1;
    std::string output_dir;
    std::string domain = "movies";  // movies | music
    std::size_t embed_dim = 256;
    MockParams mock;
    HttpBackendConfig http;
    std::string instruction_template_path;

    void validate() const {
        if (n_trials == 0 || n_trials % 2 != 0)
            throw ConfigError("n_trials must be a positive even number");
        if (shots_k < 1) throw ConfigError("shots_k must be >= 1");
        if (top_k < 1) throw ConfigError("top_k must be >= 1");
        if (concurrency < 1) throw ConfigError("concurrency must be >= 1");
        if (member_fraction <= 0.0 || member_fraction >= 1.0)
            throw ConfigError("member_fraction must be in (0,1)");
        if (backend != "mock" && backend != "http")
            throw ConfigError("backend must be 'mock' or 'http'");
        if (domain != "movies" && domain != "music")
            throw ConfigError("domain must be 'movies' or 'music'");
    }

    PromptTemplates templates() const {
        PromptTemplates t = domain == "music" ? PromptTemplates::music() : PromptTemplates::movies();
        if (!instruction_template_path.empty())
            t.instruction = load_template_file(instruction_template_path);
        return t;
    }

    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::string& path);
    void apply_override(const std::string& key, const std::string& value);

    std::string digest() const { return to_hex(fnv1a64(to_json().dump())); }
};

struct TrialOutcome {
    std::size_t trial_id = 0;
    bool is_member = false;
    Decision decision = Decision::Abstain;
    double score = 0.0;
    bool abstained = false;
    bool failed = false;
    std::string error;
    ChatTranscript transcript;
};

struct Metrics {
    double accuracy = 0.0;
    double advantage = 0.0;
    double abstain_rate = 0.0;
    std::size_t decided = 0;
    std::size_t abstained = 0;
    std::size_t failed = 0;
};

struct ExperimentReport {
    std::vector<TrialOutcome> trials;
    Metrics metrics;
    std::string config_digest;
    nlohmann::json config;
    double duration_seconds = 0.0;
};

// Accuracy is computed over decided trials only; abstains and failures are
// tracked separately and never coerced into a guess.
inline Metrics compute_metrics(const std::vector<TrialOutcome>& trials) {
    Metrics m;
    std::size_t correct = 0;
    for (const auto& t : trials) {
        if (t.failed) {
            ++m.failed;
        } else if (t.abstained || t.decision == Decision::Abstain) {
            ++m.abstained;
        } else {
            ++m.decided;
            bool said_member = t.decision == Decision::Member;
            if (said_member == t.is_member) ++correct;
        }
    }
    m.accuracy = m.decided == 0 ? 0.5 : static_cast<double>(correct) / static_cast<double>(m.decided);
    m.advantage = advantage(m.accuracy);
    std::size_t attempted = m.decided + m.abstained;
    m.abstain_rate = attempted == 0 ? 0.0 : static_cast<double>(m.abstained) / static_cast<double>(attempted);
    return m;
}

namespace detail {

inline Shot make_shot(const InteractionDataset& dataset, const std::string& user_id,
                      std::size_t history_len, std::uint64_t seed) {
    auto it = dataset.users.find(user_id);
    if (it == dataset.users.end() || it->second.empty())
        throw Error("make_shot: unknown user " + user_id);
    const std::vector<std::size_t>& idx = it->second;
    std::vector<std::size_t> chosen;
    if (history_len == 0 || idx.size() <= history_len) {
        chosen = idx;
    } else {
        Rng rng(mix_seed(seed, fnv1a64(user_id)));
        chosen.clear();
        for (std::size_t i : rng.sample_indices(idx.size(), history_len)) chosen.push_back(idx[i]);
        std::sort(chosen.begin(), chosen.end());  // keep original interaction order
    }
    Shot s;
    s.user_id = user_id;
    s.user_name = display_name(user_id);
    for (std::size_t i : chosen)
        s.interactions.emplace_back(dataset.interactions[i].item_title,
                                    dataset.interactions[i].score);
    return s;
}

}  // namespace detail

inline std::vector<TrialSpec> build_trials(const Partition& partition,
                                           const InteractionDataset& dataset,
                                           const ExperimentConfig& config) {
    config.validate();
    std::vector<std::string> members(partition.members.begin(), partition.members.end());
    std::vector<std::string> non_members(partition.non_members.begin(), partition.non_members.end());
    std::size_t half = config.n_trials / 2;
    if (members.size() < config.shots_k + 1)
        throw Error("build_trials: member pool has " + std::to_string(members.size()) +
                    " users, need at least shots_k+1 = " + std::to_string(config.shots_k + 1));
    if (non_members.size() < half)
        throw Error("build_trials: non-member pool has " + std::to_string(non_members.size()) +
                    " users, need at least n_trials/2 = " + std::to_string(half));

    Rng order_rng(mix_seed(config.seed, 0x747269616c73ull));
    order_rng.shuffle(members);
    order_rng.shuffle(non_members);

    std::vector<TrialSpec> trials;
    trials.reserve(config.n_trials);
    std::size_t member_cursor = 0, non_member_cursor = 0;
    for (std::size_t id = 0; id < config.n_trials; ++id) {
        TrialSpec t;
        t.trial_id = id;
        t.is_member = id % 2 == 0;
        t.shots_k = config.shots_k;
        t.position = config.position;
        t.seed = mix_seed(config.seed, 0x100000 + id);

        std::string victim_id = t.is_member ? members[member_cursor++ % members.size()]
                                            : non_members[non_member_cursor++ % non_members.size()];
        t.victim = detail::make_shot(dataset, victim_id, config.history_len, t.seed);

        // fillers: members other than the victim, resampled per trial
        std::size_t n_fillers = t.is_member ? config.shots_k - 1 : config.shots_k;
        std::vector<const std::string*> pool;
        pool.reserve(members.size());
        for (const auto& m : members)
            if (m != victim_id) pool.push_back(&m);
        if (pool.size() < n_fillers)
            throw Error("build_trials: not enough members for " + std::to_string(n_fillers) +
                        " filler shots");
        Rng filler_rng(mix_seed(t.seed, 0x66696c6cull));
        for (std::size_t i : filler_rng.sample_indices(pool.size(), n_fillers))
            t.fillers.push_back(detail::make_shot(dataset, *pool[i], config.history_len, t.seed));
        trials.push_back(std::move(t));
    }
    return trials;
}

// One trial: compose the prompt, run the configured attack, record outcome.
inline TrialOutcome run_trial(const TrialSpec& trial, const ExperimentConfig& config,
                              ChatBackend& backend, std::shared_ptr<EmbeddingCache> embeddings,
                              const ItemCatalog* catalog, const PromptTemplates& templates) {
    TrialOutcome out;
    out.trial_id = trial.trial_id;
    out.is_member = trial.is_member;
    try {
        AttackContext ctx;
        ctx.backend = &backend;
        ctx.templates = templates;
        ctx.embeddings = embeddings;
        ctx.catalog = catalog;
        ctx.top_k = config.top_k;
        ctx.target_user = trial.victim;
        std::string instruction =
            render_template(templates.instruction, {{"domain_noun", templates.domain_noun}});
        if (trial.is_member) {
            ctx.system_prompt =
                compose_system_prompt(instruction, trial.fillers, trial.victim, trial.position);
        } else {
            ctx.system_prompt = compose_system_prompt(instruction, trial.fillers, std::nullopt);
        }

        AttackVerdict v;
        switch (config.attack) {
            case AttackKind::DirectInquiry: v = run_direct_inquiry(ctx); break;
            case AttackKind::Hallucination: v = run_hallucination(ctx, config.halluc_threshold); break;
            case AttackKind::Similarity: v = run_similarity(ctx, config.tau); break;
            case AttackKind::Poisoning:
                v = run_poisoning(ctx, config.n_poison, config.tau, trial.seed, config.gap_mode);
                break;
        }
        out.decision = v.decision;
        out.score = v.score;
        out.abstained = v.decision == Decision::Abstain;
        out.transcript = std::move(v.transcript);
    } catch (const std::exception& e) {
        out.failed = true;
        out.error = e.what();
    }
    return out;
}

inline void persist_report(const ExperimentReport& report, const std::string& dir);

// Core runner over preloaded inputs and an injected backend. Trials execute
// concurrently up to config.concurrency; aggregation is by trial_id, so the
// report is independent of completion order.
inline ExperimentReport run_experiment_with(const ExperimentConfig& config,
                                            const std::vector<TrialSpec>& trials,
                                            ChatBackend& backend,
                                            std::shared_ptr<EmbeddingCache> embeddings,
                                            const ItemCatalog* catalog) {
    config.validate();
    PromptTemplates templates = config.templates();
    templates.validate();
    auto start = std::chrono::steady_clock::now();

    std::vector<TrialOutcome> outcomes(trials.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= trials.size()) break;
            outcomes[i] = run_trial(trials[i], config, backend, embeddings, catalog, templates);
        }
    };
    std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(config.concurrency),
                                                  std::max<std::size_t>(trials.size(), 1));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t i = 0; i < n_threads; ++i) threads.emplace_back(worker);
        for (auto& th : threads) th.join();
    }

    ExperimentReport report;
    report.trials = std::move(outcomes);
    report.metrics = compute_metrics(report.trials);
    if (report.metrics.failed * 10 > trials.size())
        throw Error("experiment: " + std::to_string(report.metrics.failed) + " of " +
                    std::to_string(trials.size()) + " trials failed (over the 10% limit)");
    report.config = config.to_json();
    report.config_digest = config.digest();
    report.duration_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!config.output_dir.empty()) persist_report(report, config.output_dir);
    return report;
}

inline ExperimentReport run_experiment(const ExperimentConfig& config,
                                       const InteractionDataset& dataset,
                                       const ItemCatalog& catalog) {
    config.validate();
    Partition partition = partition_users(dataset, config.seed, config.member_fraction);
    std::vector<TrialSpec> trials = build_trials(partition, dataset, config);
    auto embeddings = std::make_shared<EmbeddingCache>(
        std::make_shared<TrigramHashEmbedder>(config.embed_dim));

    std::unique_ptr<ChatBackend> backend;
    if (config.backend == "mock") {
        MockBehavior b;
        b.seed = config.seed;
        b.p_yes_member = config.mock.p_yes_member;
        b.p_yes_nonmember = config.mock.p_yes_nonmember;
        b.halluc_rate_member = config.mock.halluc_rate_member;
        b.halluc_rate_nonmember = config.mock.halluc_rate_nonmember;
        b.affinity_member = config.mock.affinity_member;
        b.affinity_nonmember = config.mock.affinity_nonmember;
        b.poison_susceptibility_member = config.mock.poison_susceptibility_member;
        b.poison_susceptibility_nonmember = config.mock.poison_susceptibility_nonmember;
        b.catalog = catalog;
        backend = std::make_unique<MockChatBackend>(std::move(b), embeddings);
    } else {
        backend = std::make_unique<HttpChatBackend>(config.http);
    }
    return run_experiment_with(config, trials, *backend, embeddings, &catalog);
}

inline ExperimentReport run_experiment(const ExperimentConfig& config) {
    if (config.dataset_path.empty()) throw ConfigError("dataset_path is required");
    if (config.catalog_path.empty()) throw ConfigError("catalog_path is required");
    InteractionDataset dataset =
        config.dataset_format == DatasetFormat::MovielensDat
            ? load_movielens(config.dataset_path, config.movies_path)
            : load_normalized_csv(config.dataset_path);
    ItemCatalog catalog = load_catalog(config.catalog_path);
    return run_experiment(config, dataset, catalog);
}

// ---------------------------------------------------------------------------
// Threshold sweep: one backend pass, many decisions.

inline Decision redecide(AttackKind attack, double score, double threshold) {
    switch (attack) {
        case AttackKind::Hallucination: return decide_hallucination(score, threshold);
        case AttackKind::Similarity: return decide_similarity(score, threshold);
        case AttackKind::Poisoning: return decide_poisoning(score, threshold);
        case AttackKind::DirectInquiry:
            return score > 0.5 ? Decision::Member : Decision::NonMember;
    }
    throw Error("redecide: unknown attack");
}

struct SweepResult {
    double best_threshold = 0.0;
    std::vector<std::pair<double, ExperimentReport>> reports;  // grid order
};

inline SweepResult sweep_from_report(const ExperimentReport& base, AttackKind attack,
                                     const std::vector<double>& grid) {
    if (grid.empty()) throw Error("sweep: empty threshold grid");
    if (attack == AttackKind::DirectInquiry)
        throw Error("sweep: direct inquiry has no threshold to sweep");
    SweepResult result;
    double best_acc = -1.0;
    for (double threshold : grid) {
        ExperimentReport r = base;
        for (TrialOutcome& t : r.trials)
            if (!t.failed && !t.abstained) t.decision = redecide(attack, t.score, threshold);
        r.metrics = compute_metrics(r.trials);
        if (r.metrics.accuracy > best_acc) {
            best_acc = r.metrics.accuracy;
            result.best_threshold = threshold;
        }
        result.reports.emplace_back(threshold, std::move(r));
    }
    return result;
}

inline SweepResult sweep_threshold(const ExperimentConfig& config,
                                   const std::vector<double>& grid,
                                   const InteractionDataset& dataset,
                                   const ItemCatalog& catalog) {
    ExperimentConfig base_config = config;
    base_config.output_dir.clear();
    ExperimentReport base = run_experiment(base_config, dataset, catalog);
    return sweep_from_report(base, config.attack, grid);
}

// ---------------------------------------------------------------------------
// Persistence and replay.

inline void persist_report(const ExperimentReport& report, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory " + dir + ": " + ec.message());

    {
        std::ofstream csv(dir + "/trials.csv");
        if (!csv) throw Error("cannot write " + dir + "/trials.csv");
        csv << "trial_id,label,decision,score,abstained,failed\n";
        for (const auto& t : report.trials) {
            nlohmann::json score = t.score;  // shortest round-trip formatting
            csv << t.trial_id << ',' << (t.is_member ? "member" : "non_member") << ','
                << decision_name(t.decision) << ',' << score.dump() << ','
                << (t.abstained ? 1 : 0) << ',' << (t.failed ? 1 : 0) << '\n';
        }
    }
    {
        std::ofstream js(dir + "/summary.json");
        if (!js) throw Error("cannot write " + dir + "/summary.json");
        nlohmann::json summary = {
            {"accuracy", report.metrics.accuracy},
            {"advantage", report.metrics.advantage},
            {"abstain_rate", report.metrics.abstain_rate},
            {"decided_trials", report.metrics.decided},
            {"abstained_trials", report.metrics.abstained},
            {"failed_trials", report.metrics.failed},
            {"n_trials", report.trials.size()},
            {"config_digest", report.config_digest},
            {"duration_seconds", report.duration_seconds},
            {"config", report.config},
        };
        js << summary.dump(2) << '\n';
    }
    {
        std::ofstream jl(dir + "/transcripts.jsonl");
        if (!jl) throw Error("cannot write " + dir + "/transcripts.jsonl");
        for (const auto& t : report.trials) {
            nlohmann::json messages = nlohmann::json::array();
            for (const auto& m : t.transcript.messages)
                messages.push_back({{"role", role_name(m.role)}, {"content", m.content}});
            nlohmann::json rec = {
                {"trial_id", t.trial_id},
                {"attack", report.config.value("attack", "")},
                {"label", t.is_member ? "member" : "non_member"},
                {"decision", decision_name(t.decision)},
                {"score", t.score},
                {"abstained", t.abstained},
                {"failed", t.failed},
                {"messages", messages},
            };
            jl << rec.dump() << '\n';
        }
    }
}

struct ReplayedTrials {
    AttackKind attack = AttackKind::DirectInquiry;
    std::vector<TrialOutcome> trials;
};

inline ReplayedTrials load_transcripts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("transcripts file not readable: " + path);
    ReplayedTrials out;
    std::string line;
    std::size_t line_no = 0;
    bool attack_set = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (str::trim(line).empty()) continue;
        nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.contains("trial_id") || !rec.contains("label") ||
            !rec.contains("score") || !rec.contains("decision") || !rec.contains("messages"))
            throw ParseError("transcripts record " + std::to_string(line_no) +
                             " is malformed in " + path);
        if (!attack_set) {
            out.attack = attack_from_name(rec.value("attack", "direct_inquiry"));
            attack_set = true;
        }
        TrialOutcome t;
        t.trial_id = rec["trial_id"].get<std::size_t>();
        t.is_member = rec["label"].get<std::string>() == "member";
        t.score = rec["score"].get<double>();
        t.abstained = rec.value("abstained", false);
        t.failed = rec.value("failed", false);
        std::string d = rec["decision"].get<std::string>();
        t.decision = d == "member"      ? Decision::Member
                     : d == "non_member" ? Decision::NonMember
                                         : Decision::Abstain;
        for (const auto& m : rec["messages"])
            t.transcript.messages.push_back(
                {role_from_name(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
        out.trials.push_back(std::move(t));
    }
    return out;
}

// Re-derives verdicts and metrics from stored trial scores; no backend calls.
// With no threshold given, stored decisions are kept as-is.
inline ExperimentReport replay_transcripts(const std::string& path,
                                           std::optional<double> threshold = std::nullopt) {
    ReplayedTrials loaded = load_transcripts(path);
    ExperimentReport report;
    report.trials = std::move(loaded.trials);
    if (threshold) {
        for (TrialOutcome& t : report.trials)
            if (!t.failed && !t.abstained)
                t.decision = redecide(loaded.attack, t.score, *threshold);
    }
    report.metrics = compute_metrics(report.trials);
    return report;
}

// ---------------------------------------------------------------------------
// Config serialization.

inline nlohmann::json ExperimentConfig::to_json() const {
    return nlohmann::json{
        {"attack", attack_name(attack)},
        {"backend", backend},
        {"dataset_path", dataset_path},
        {"dataset_format",
         dataset_format == DatasetFormat::MovielensDat ? "movielens-dat" : "normalized-csv"},
        {"movies_path", movies_path},
        {"catalog_path", catalog_path},
        {"shots_k", shots_k},
        {"victim_position", position_str},
        {"n_trials", n_trials},
        {"seed", seed},
        {"top_k", top_k},
        {"n_poison", n_poison},
        {"tau", tau},
        {"halluc_threshold", halluc_threshold},
        {"gap_mode", gap_mode == GapMode::ListDrift ? "list_drift" : "history_delta"},
        {"member_fraction", member_fraction},
        {"history_len", history_len},
        {"concurrency", concurrency},
        {"output_dir", output_dir},
        {"domain", domain},
        {"embed_dim", embed_dim},
        {"instruction_template_path", instruction_template_path},
        {"mock",
         {{"p_yes_member", mock.p_yes_member},
          {"p_yes_nonmember", mock.p_yes_nonmember},
          {"halluc_rate_member", mock.halluc_rate_member},
          {"halluc_rate_nonmember", mock.halluc_rate_nonmember},
          {"affinity_member", mock.affinity_member},
          {"affinity_nonmember", mock.affinity_nonmember},
          {"poison_susceptibility_member", mock.poison_susceptibility_member},
          {"poison_susceptibility_nonmember", mock.poison_susceptibility_nonmember}}},
        {"http",
         {{"base_url", http.base_url},
          {"path", http.path},
          {"model", http.model},
          {"temperature", http.temperature},
          {"max_attempts", http.max_attempts},
          {"initial_backoff_ms", http.initial_backoff.count()},
          {"bearer_env", http.bearer_env},
          {"max_in_flight", http.max_in_flight},
          {"timeout_seconds", http.timeout_seconds}}},
    };
}

inline ShotPosition parse_position(const std::string& s) {
    if (s == "first") return ShotPosition::first();
    if (s == "last") return ShotPosition::last();
    try {
        std::size_t pos = 0;
        unsigned long v = std::stoul(s, &pos);
        if (pos == s.size()) return ShotPosition::at(v);
    } catch (const std::exception&) {
    }
    throw ConfigError("victim_position must be 'first', 'last', or an index, got '" + s + "'");
}

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    static const std::set<std::string> top_keys = {
        "attack",        "backend",       "dataset_path",   "dataset_format",
        "movies_path",   "catalog_path",  "shots_k",        "victim_position",
        "n_trials",      "seed",          "top_k",          "n_poison",
        "tau",           "halluc_threshold", "gap_mode",    "member_fraction",
        "history_len",   "concurrency",   "output_dir",     "domain",
        "embed_dim",     "instruction_template_path",       "mock", "http"};
    static const std::set<std::string> mock_keys = {
        "p_yes_member",        "p_yes_nonmember",    "halluc_rate_member",
        "halluc_rate_nonmember", "affinity_member",  "affinity_nonmember",
        "poison_susceptibility_member", "poison_susceptibility_nonmember"};
    static const std::set<std::string> http_keys = {
        "base_url", "path",          "model",        "temperature", "max_attempts",
        "initial_backoff_ms", "bearer_env", "max_in_flight", "timeout_seconds"};

    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!top_keys.count(key)) throw ConfigError("unknown config key '" + key + "'");
    if (j.contains("mock"))
        for (const auto& [key, _] : j["mock"].items())
            if (!mock_keys.count(key)) throw ConfigError("unknown config key 'mock." + key + "'");
    if (j.contains("http"))
        for (const auto& [key, _] : j["http"].items())
            if (!http_keys.count(key)) throw ConfigError("unknown config key 'http." + key + "'");

    ExperimentConfig c;
    if (j.contains("attack")) c.attack = attack_from_name(j["attack"].get<std::string>());
    c.backend = j.value("backend", c.backend);
    c.dataset_path = j.value("dataset_path", c.dataset_path);
    if (j.contains("dataset_format")) {
        std::string f = j["dataset_format"].get<std::string>();
        if (f == "normalized-csv")
            c.dataset_format = DatasetFormat::NormalizedCsv;
        else if (f == "movielens-dat")
            c.dataset_format = DatasetFormat::MovielensDat;
        else
            throw ConfigError("dataset_format must be 'normalized-csv' or 'movielens-dat'");
    }
    c.movies_path = j.value("movies_path", c.movies_path);
    c.catalog_path = j.value("catalog_path", c.catalog_path);
    c.shots_k = j.value("shots_k", c.shots_k);
    if (j.contains("victim_position")) {
        c.position_str = j["victim_position"].is_string()
                             ? j["victim_position"].get<std::string>()
                             : std::to_string(j["victim_position"].get<std::size_t>());
        c.position = parse_position(c.position_str);
    }
    c.n_trials = j.value("n_trials", c.n_trials);
    c.seed = j.value("seed", c.seed);
    c.top_k = j.value("top_k", c.top_k);
    c.n_poison = j.value("n_poison", c.n_poison);
    c.tau = j.value("tau", c.tau);
    c.halluc_threshold = j.value("halluc_threshold", c.halluc_threshold);
    if (j.contains("gap_mode")) {
        std::string g = j["gap_mode"].get<std::string>();
        if (g == "list_drift")
            c.gap_mode = GapMode::ListDrift;
        else if (g == "history_delta")
            c.gap_mode = GapMode::HistoryDelta;
        else
            throw ConfigError("gap_mode must be 'list_drift' or 'history_delta'");
    }
    c.member_fraction = j.value("member_fraction", c.member_fraction);
    c.history_len = j.value("history_len", c.history_len);
    c.concurrency = j.value("concurrency", c.concurrency);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.domain = j.value("domain", c.domain);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.instruction_template_path = j.value("instruction_template_path", c.instruction_template_path);
    if (j.contains("mock")) {
        const auto& m = j["mock"];
        c.mock.p_yes_member = m.value("p_yes_member", c.mock.p_yes_member);
        c.mock.p_yes_nonmember = m.value("p_yes_nonmember", c.mock.p_yes_nonmember);
        c.mock.halluc_rate_member = m.value("halluc_rate_member", c.mock.halluc_rate_member);
        c.mock.halluc_rate_nonmember = m.value("halluc_rate_nonmember", c.mock.halluc_rate_nonmember);
        c.mock.affinity_member = m.value("affinity_member", c.mock.affinity_member);
        c.mock.affinity_nonmember = m.value("affinity_nonmember", c.mock.affinity_nonmember);
        c.mock.poison_susceptibility_member =
            m.value("poison_susceptibility_member", c.mock.poison_susceptibility_member);
        c.mock.poison_susceptibility_nonmember =
            m.value("poison_susceptibility_nonmember", c.mock.poison_susceptibility_nonmember);
    }
    if (j.contains("http")) {
        const auto& h = j["http"];
        c.http.base_url = h.value("base_url", c.http.base_url);
        c.http.path = h.value("path", c.http.path);
        c.http.model = h.value("model", c.http.model);
        c.http.temperature = h.value("temperature", c.http.temperature);
        c.http.max_attempts = h.value("max_attempts", c.http.max_attempts);
        c.http.initial_backoff =
            std::chrono::milliseconds(h.value("initial_backoff_ms", c.http.initial_backoff.count()));
        c.http.bearer_env = h.value("bearer_env", c.http.bearer_env);
        c.http.max_in_flight = h.value("max_in_flight", c.http.max_in_flight);
        c.http.timeout_seconds = h.value("timeout_seconds", c.http.timeout_seconds);
    }
    c.validate();
    return c;
}

inline ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not readable: " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
    return from_json(j);
}

// `key` may be dotted ("mock.p_yes_member"); `value` is parsed as JSON when
// possible and taken as a string otherwise.
inline void ExperimentConfig::apply_override(const std::string& key, const std::string& value) {
    nlohmann::json j = to_json();
    nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
    if (parsed.is_discarded()) parsed = value;
    nlohmann::json* node = &j;
    std::vector<std::string> parts = str::split(key, '.');
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->contains(parts[i])) throw ConfigError("unknown config key '" + key + "'");
        node = &(*node)[parts[i]];
    }
    if (!node->contains(parts.back())) throw ConfigError("unknown config key '" + key + "'");
    (*node)[parts.back()] = parsed;
    *this = from_json(j);
}

}  // namespace promptleak
