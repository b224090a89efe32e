// Acceptance suite: one pass/fail line per criterion, exit 1 on any failure.
// Runs fully offline against the deterministic mock and built-in embedder.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "promptleak/experiment.hpp"
#include "support.hpp"

using namespace promptleak;

namespace {

int failures = 0;

void criterion(const std::string& name, const std::function<bool(std::string&)>& body) {
    std::string detail;
    bool ok = false;
    auto start = std::chrono::steady_clock::now();
    try {
        ok = body(detail);
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %-34s (%.1fs)%s%s\n", ok ? "PASS" : "FAIL", name.c_str(), secs,
                detail.empty() ? "" : " ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::vector<std::string> random_titles(Rng& rng, std::size_t n) {
    const auto& pool = testsupport::title_pool();
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(pool[rng.uniform_below(pool.size())]);
    return out;
}

// Independent nested-loop mean over fresh, uncached embeddings.
double oracle_avg_sim(const std::vector<std::string>& a, const std::vector<std::string>& b,
                      std::size_t dim) {
    TrigramHashEmbedder e(dim);
    double sum = 0.0;
    for (const auto& x : a)
        for (const auto& y : b) sum += cosine(e.embed_uncached(x), e.embed_uncached(y));
    return sum / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

bool check_avg_sim_oracle(std::string& detail) {
    Rng rng(101);
    auto cache = std::make_shared<EmbeddingCache>(std::make_shared<TrigramHashEmbedder>(64));
    double worst = 0.0;
    for (int round = 0; round < 1000; ++round) {
        auto a = random_titles(rng, 1 + rng.uniform_below(20));
        auto b = random_titles(rng, 1 + rng.uniform_below(20));
        double diff = std::abs(avg_sim(a, b, *cache) - oracle_avg_sim(a, b, 64));
        worst = std::max(worst, diff);
        if (diff > 1e-12) {
            detail = "diff " + std::to_string(diff) + " at round " + std::to_string(round);
            return false;
        }
    }
    detail = "1000 cases, max diff " + std::to_string(worst);
    return true;
}

bool check_argmin_oracle(std::string& detail) {
    ItemCatalog pool = testsupport::make_catalog(100);
    auto cache = std::make_shared<EmbeddingCache>(std::make_shared<TrigramHashEmbedder>(128));
    TrigramHashEmbedder oracle(128);
    const auto& titles = testsupport::title_pool();
    Rng rng(202);

    for (int round = 0; round < 50; ++round) {
        std::string target = titles[100 + rng.uniform_below(titles.size() - 100)];
        std::string best;
        double best_sim = 2.0;
        EmbeddingVector tv = oracle.embed_uncached(target);
        for (const auto& c : pool.titles) {
            double s = cosine(tv, oracle.embed_uncached(c));
            if (s < best_sim || (s == best_sim && c < best)) {
                best = c;
                best_sim = s;
            }
        }
        if (argmin_sim(target, pool, *cache) != best) {
            detail = "argmin mismatch for " + target;
            return false;
        }
    }

    // tie-break: duplicate geometry forces the lexicographic rule
    {
        ItemCatalog tie;
        tie.titles = {"bb same title", "aa same title"};
        // identical trailing trigrams dominate; verify the scan prefers 'aa...' on exact ties
        auto tie_cache =
            std::make_shared<EmbeddingCache>(std::make_shared<TrigramHashEmbedder>(128));
        double sa = cosine(tie_cache->embed("zz probe"), tie_cache->embed("aa same title"));
        double sb = cosine(tie_cache->embed("zz probe"), tie_cache->embed("bb same title"));
        if (sa == sb && argmin_sim("zz probe", tie, *tie_cache) != "aa same title") {
            detail = "lexicographic tie-break violated";
            return false;
        }
    }

    // select_poison_items against the same exhaustive scan
    std::vector<std::string> history = {"Crimson Harbor", "Silent Empire", "Golden Garden",
                                        "Broken Voyage", "Hidden Summit"};
    std::set<std::string> exclude;
    for (const auto& h : history) exclude.insert(normalize_title(h));
    auto poisoned = select_poison_items(history, history.size(), pool, *cache, 77);
    for (std::size_t i = 0; i < history.size(); ++i) {
        std::string best;
        double best_sim = 2.0;
        EmbeddingVector tv = oracle.embed_uncached(history[i]);
        for (const auto& c : pool.titles) {
            if (exclude.count(c)) continue;
            double s = cosine(tv, oracle.embed_uncached(c));
            if (s < best_sim || (s == best_sim && c < best)) {
                best = c;
                best_sim = s;
            }
        }
        if (poisoned[i] != best) {
            detail = "poison slot " + std::to_string(i) + " mismatch";
            return false;
        }
    }
    return true;
}

bool check_advantage_identities(std::string& detail) {
    if (advantage(0.5) != 0.0 || advantage(1.0) != 1.0 || advantage(0.75) != 0.5) {
        detail = "anchor identity failed";
        return false;
    }
    // affinity and strict monotonicity on a 101-point grid
    double prev = advantage(0.0);
    for (int i = 1; i <= 100; ++i) {
        double acc = i / 100.0;
        double adv = advantage(acc);
        if (adv != 2.0 * (acc - 0.5)) {
            detail = "affine identity failed at acc=" + std::to_string(acc);
            return false;
        }
        if (adv <= prev) {
            detail = "not strictly increasing at acc=" + std::to_string(acc);
            return false;
        }
        prev = adv;
    }
    return true;
}

ExperimentConfig mock_config(AttackKind attack, std::size_t n_trials) {
    ExperimentConfig cfg;
    cfg.attack = attack;
    cfg.backend = "mock";
    cfg.shots_k = 3;
    cfg.n_trials = n_trials;
    cfg.seed = 13;
    cfg.top_k = 10;
    cfg.concurrency = 4;
    return cfg;
}

bool check_inquiry_calibration(std::string& detail) {
    auto ds = testsupport::make_dataset(1100, 5);
    auto catalog = testsupport::make_catalog(200);
    auto cfg = mock_config(AttackKind::DirectInquiry, 1000);
    cfg.mock.p_yes_member = 0.9;
    cfg.mock.p_yes_nonmember = 0.1;
    auto report = run_experiment(cfg, ds, catalog);
    detail = "advantage " + std::to_string(report.metrics.advantage);
    return std::abs(report.metrics.advantage - 0.8) <= 0.08;
}

bool check_hallucination_calibration(std::string& detail) {
    auto ds = testsupport::make_dataset(1100, 5);
    auto catalog = testsupport::make_catalog(300);
    auto cfg = mock_config(AttackKind::Hallucination, 1000);
    cfg.halluc_threshold = 2;
    cfg.mock.halluc_rate_member = 0.05;
    cfg.mock.halluc_rate_nonmember = 0.5;
    cfg.mock.affinity_member = 0.0;
    cfg.mock.affinity_nonmember = 0.0;
    auto report = run_experiment(cfg, ds, catalog);

    auto binom_le = [](int n, double p, int k) {
        double total = 0.0;
        for (int j = 0; j <= k; ++j) {
            double c = 1.0;
            for (int i = 0; i < j; ++i) c = c * (n - i) / (i + 1);
            total += c * std::pow(p, j) * std::pow(1.0 - p, n - j);
        }
        return total;
    };
    // member correct iff count <= 2; non-member correct iff count > 2
    double acc = 0.5 * binom_le(10, 0.05, 2) + 0.5 * (1.0 - binom_le(10, 0.5, 2));
    double expected_adv = advantage(acc);
    detail = "advantage " + std::to_string(report.metrics.advantage) + ", analytic " +
             std::to_string(expected_adv);
    return std::abs(report.metrics.advantage - expected_adv) <= 0.05;
}

bool check_poisoning_separation(std::string& detail) {
    auto ds = testsupport::make_dataset(600, 5);
    auto catalog = testsupport::make_catalog(250);
    auto cfg = mock_config(AttackKind::Poisoning, 500);
    cfg.n_poison = 2;
    cfg.tau = 0.3;
    cfg.mock.poison_susceptibility_member = 0.0;
    cfg.mock.poison_susceptibility_nonmember = 1.0;
    auto report = run_experiment(cfg, ds, catalog);
    detail = "advantage " + std::to_string(report.metrics.advantage);
    return report.metrics.advantage >= 0.95;
}

bool check_null_signal(std::string& detail) {
    auto ds = testsupport::make_dataset(1100, 5);
    auto catalog = testsupport::make_catalog(250);
    double bound = 3.0 / std::sqrt(1000.0);

    for (AttackKind attack : {AttackKind::DirectInquiry, AttackKind::Hallucination,
                              AttackKind::Similarity, AttackKind::Poisoning}) {
        auto cfg = mock_config(attack, 1000);
        cfg.tau = attack == AttackKind::Poisoning ? 0.3 : 0.2;
        cfg.n_poison = 2;
        // identical member / non-member parameters: no signal anywhere
        cfg.mock.p_yes_member = cfg.mock.p_yes_nonmember = 0.5;
        cfg.mock.halluc_rate_member = cfg.mock.halluc_rate_nonmember = 0.25;
        cfg.mock.affinity_member = cfg.mock.affinity_nonmember = 0.0;
        cfg.mock.poison_susceptibility_member = cfg.mock.poison_susceptibility_nonmember = 0.4;
        auto report = run_experiment(cfg, ds, catalog);
        if (std::abs(report.metrics.advantage) > bound) {
            detail = std::string(attack_name(attack)) + " advantage " +
                     std::to_string(report.metrics.advantage) + " exceeds " +
                     std::to_string(bound);
            return false;
        }
    }
    return true;
}

bool check_protocol_invariants(std::string& detail) {
    auto ds = testsupport::make_dataset(200, 5);
    auto catalog = testsupport::make_catalog(200);

    // partition disjointness + determinism
    auto p1 = partition_users(ds, 5, 0.5);
    auto p2 = partition_users(ds, 5, 0.5);
    if (p1.members != p2.members || p1.non_members != p2.non_members) {
        detail = "partition not deterministic";
        return false;
    }
    for (const auto& m : p1.members)
        if (p1.non_members.count(m)) {
            detail = "partition overlap";
            return false;
        }

    // balance
    auto cfg = mock_config(AttackKind::Similarity, 100);
    cfg.tau = 0.2;
    auto trials = build_trials(p1, ds, cfg);
    std::size_t members = 0;
    for (const auto& t : trials) members += t.is_member ? 1 : 0;
    if (members * 2 != trials.size()) {
        detail = "unbalanced trial set";
        return false;
    }

    // determinism by seed + replay equality
    testsupport::TempDir dir("acceptance");
    cfg.output_dir = dir.file("run");
    auto a = run_experiment(cfg, ds, catalog);
    cfg.output_dir.clear();
    auto b = run_experiment(cfg, ds, catalog);
    if (a.metrics.accuracy != b.metrics.accuracy ||
        a.metrics.advantage != b.metrics.advantage) {
        detail = "seeded rerun diverged";
        return false;
    }
    auto replayed = replay_transcripts(dir.file("run") + "/transcripts.jsonl", cfg.tau);
    if (replayed.metrics.accuracy != a.metrics.accuracy ||
        replayed.metrics.advantage != a.metrics.advantage ||
        replayed.metrics.abstain_rate != a.metrics.abstain_rate) {
        detail = "replay metrics diverged";
        return false;
    }

    // parse_item_list fixture regression (same corpus as the unit suite)
    std::ifstream in(std::string(PROMPTLEAK_FIXTURES_DIR) + "/completions.json");
    if (!in) {
        detail = "fixtures missing";
        return false;
    }
    nlohmann::json fixtures = nlohmann::json::parse(in);
    for (std::size_t i = 0; i < fixtures.size(); ++i) {
        auto got = parse_item_list(fixtures[i]["text"].get<std::string>(),
                                   fixtures[i]["top_k"].get<std::size_t>());
        if (got != fixtures[i]["expected"].get<std::vector<std::string>>()) {
            detail = "fixture " + std::to_string(i) + " regressed";
            return false;
        }
    }
    return true;
}

bool check_grid(std::string& detail) {
    testsupport::TempDir dir("grid");
    auto ds = testsupport::make_dataset(200, 5);
    auto catalog = testsupport::make_catalog(250);
    std::size_t cells = 0;

    for (std::size_t shots : {1, 5, 10}) {
        for (const char* position : {"first", "last"}) {
            for (AttackKind attack : {AttackKind::DirectInquiry, AttackKind::Hallucination,
                                      AttackKind::Similarity, AttackKind::Poisoning}) {
                auto cfg = mock_config(attack, 100);
                cfg.shots_k = shots;
                cfg.position_str = position;
                cfg.position = parse_position(position);
                cfg.tau = attack == AttackKind::Poisoning ? 0.3 : 0.2;
                cfg.n_poison = 2;
                cfg.output_dir = dir.file("cell-" + std::to_string(cells));
                auto report = run_experiment(cfg, ds, catalog);
                ++cells;

                // schema validity of the emitted report
                std::ifstream js(cfg.output_dir + "/summary.json");
                nlohmann::json summary = nlohmann::json::parse(js, nullptr, false);
                if (summary.is_discarded() || !summary.contains("accuracy") ||
                    !summary.contains("advantage") || !summary.contains("config_digest") ||
                    summary["config"]["attack"] != attack_name(attack)) {
                    detail = "bad summary schema in cell " + std::to_string(cells - 1);
                    return false;
                }
                auto loaded = load_transcripts(cfg.output_dir + "/transcripts.jsonl");
                if (loaded.trials.size() != cfg.n_trials) {
                    detail = "transcript count mismatch in cell " + std::to_string(cells - 1);
                    return false;
                }
                (void)report;
            }
        }
    }
    detail = std::to_string(cells) + " cells";
    return cells == 24;
}

}  // namespace

int main() {
    criterion("avg-sim-oracle-equivalence", check_avg_sim_oracle);
    criterion("argmin-oracle-equivalence", check_argmin_oracle);
    criterion("advantage-identities", check_advantage_identities);
    criterion("mock-calibration-inquiry", check_inquiry_calibration);
    criterion("mock-calibration-hallucination", check_hallucination_calibration);
    criterion("mock-separation-poisoning", check_poisoning_separation);
    criterion("null-signal-sanity", check_null_signal);
    criterion("protocol-invariants", check_protocol_invariants);
    criterion("end-to-end-grid", check_grid);
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
