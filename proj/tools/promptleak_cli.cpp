#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "promptleak/experiment.hpp"

namespace {

using namespace promptleak;

std::vector<double> parse_grid(const std::string& csv) {
    std::vector<double> grid;
    for (const auto& part : str::split(csv, ',')) {
        std::string t = str::trim(part);
        if (t.empty()) continue;
        grid.push_back(std::stod(t));
    }
    if (grid.empty()) throw ConfigError("empty grid: '" + csv + "'");
    return grid;
}

std::vector<std::size_t> parse_int_grid(const std::string& csv) {
    std::vector<std::size_t> grid;
    for (const auto& part : str::split(csv, ',')) {
        std::string t = str::trim(part);
        if (t.empty()) continue;
        grid.push_back(std::stoul(t));
    }
    if (grid.empty()) throw ConfigError("empty grid: '" + csv + "'");
    return grid;
}

void print_header() {
    std::printf("%-16s %7s %-8s %9s %10s %9s %8s\n", "attack", "shots", "position", "accuracy",
                "advantage", "abstain", "failed");
}

void print_row(const ExperimentConfig& config, const Metrics& m, const char* extra = "") {
    std::printf("%-16s %7zu %-8s %9.4f %10.4f %8.1f%% %8zu %s\n", attack_name(config.attack),
                config.shots_k, config.position_str.c_str(), m.accuracy, m.advantage,
                m.abstain_rate * 100.0, m.failed, extra);
}

ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides,
                             const std::string& out_dir) {
    ExperimentConfig config = ExperimentConfig::load(path);
    for (const auto& kv : overrides) {
        std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        config.apply_override(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!out_dir.empty()) config.output_dir = out_dir;
    return config;
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides,
            const std::string& out_dir) {
    ExperimentConfig config = load_config(config_path, overrides, out_dir);
    ExperimentReport report = run_experiment(config);
    print_header();
    print_row(config, report.metrics);
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& out_dir, const std::string& grid_shots,
              const std::string& grid_poison, const std::string& grid_tau) {
    ExperimentConfig base = load_config(config_path, overrides, out_dir);
    if (grid_shots.empty() && grid_poison.empty() && grid_tau.empty())
        throw ConfigError("sweep: give at least one of --grid-shots, --grid-poison, --grid-tau");

    std::vector<std::size_t> shots =
        grid_shots.empty() ? std::vector<std::size_t>{base.shots_k} : parse_int_grid(grid_shots);
    std::vector<std::size_t> poisons =
        grid_poison.empty() ? std::vector<std::size_t>{base.n_poison} : parse_int_grid(grid_poison);

    print_header();
    for (std::size_t k : shots) {
        for (std::size_t m : poisons) {
            ExperimentConfig config = base;
            config.shots_k = k;
            config.n_poison = m;
            if (!config.output_dir.empty())
                config.output_dir = base.output_dir + "/shots-" + std::to_string(k) + "-poison-" +
                                    std::to_string(m);
            if (grid_tau.empty()) {
                ExperimentReport report = run_experiment(config);
                print_row(config, report.metrics);
            } else {
                InteractionDataset dataset =
                    config.dataset_format == DatasetFormat::MovielensDat
                        ? load_movielens(config.dataset_path, config.movies_path)
                        : load_normalized_csv(config.dataset_path);
                ItemCatalog catalog = load_catalog(config.catalog_path);
                SweepResult sweep =
                    sweep_threshold(config, parse_grid(grid_tau), dataset, catalog);
                for (const auto& [tau, report] : sweep.reports) {
                    char extra[64];
                    std::snprintf(extra, sizeof extra, "tau=%g%s", tau,
                                  tau == sweep.best_threshold ? " (best)" : "");
                    print_row(config, report.metrics, extra);
                    if (!config.output_dir.empty()) {
                        char tdir[64];
                        std::snprintf(tdir, sizeof tdir, "/tau-%g", tau);
                        persist_report(report, config.output_dir + tdir);
                    }
                }
            }
        }
    }
    return 0;
}

int cmd_replay(const std::string& transcripts_path, const std::string& tau_str) {
    std::optional<double> tau;
    if (!tau_str.empty()) tau = std::stod(tau_str);
    ExperimentReport report = replay_transcripts(transcripts_path, tau);
    std::printf("trials=%zu accuracy=%.4f advantage=%.4f abstain_rate=%.1f%% failed=%zu\n",
                report.trials.size(), report.metrics.accuracy, report.metrics.advantage,
                report.metrics.abstain_rate * 100.0, report.metrics.failed);
    return 0;
}

int cmd_inspect(const std::string& path, const std::string& format, const std::string& movies) {
    InteractionDataset ds = format == "movielens-dat" ? load_movielens(path, movies)
                                                      : load_normalized_csv(path);
    std::printf("users=%zu items=%zu interactions=%zu score_scale=[%d,%d] dropped_untitled=%zu\n",
                ds.user_count(), ds.item_count(), ds.interactions.size(), ds.scale.min,
                ds.scale.max, ds.dropped_untitled);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Membership-inference audit harness for in-context-learning recommenders"};
    app.require_subcommand(1);

    std::string config_path, out_dir, grid_shots, grid_poison, grid_tau;
    std::vector<std::string> overrides;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config file (JSON)")->required();
        cmd->add_option("--set", overrides, "override a config key (key=value, repeatable)");
        cmd->add_option("--out", out_dir, "output directory (overrides config)");
    };

    CLI::App* run = app.add_subcommand("run", "run one experiment and write reports");
    add_common(run);

    CLI::App* sweep = app.add_subcommand("sweep", "run a shots/poison/threshold grid");
    add_common(sweep);
    sweep->add_option("--grid-shots", grid_shots, "comma-separated shot counts, e.g. 1,5,10");
    sweep->add_option("--grid-poison", grid_poison, "comma-separated poison counts, e.g. 2,5,8");
    sweep->add_option("--grid-tau", grid_tau, "comma-separated thresholds, e.g. 0.3,0.35,0.4,0.45");

    std::string transcripts_path, replay_tau;
    CLI::App* replay = app.add_subcommand("replay", "re-derive metrics from stored transcripts");
    replay->add_option("transcripts", transcripts_path, "transcripts.jsonl path")->required();
    replay->add_option("--tau", replay_tau, "re-decide with this threshold");

    std::string ds_path, ds_format = "normalized-csv", ds_movies;
    CLI::App* inspect = app.add_subcommand("inspect-dataset", "print dataset statistics");
    inspect->add_option("dataset", ds_path, "dataset path")->required();
    inspect->add_option("--format", ds_format, "normalized-csv | movielens-dat");
    inspect->add_option("--movies", ds_movies, "movies.dat path (movielens only)");

    try {
        CLI11_PARSE(app, argc, argv);
        if (run->parsed()) return cmd_run(config_path, overrides, out_dir);
        if (sweep->parsed())
            return cmd_sweep(config_path, overrides, out_dir, grid_shots, grid_poison, grid_tau);
        if (replay->parsed()) return cmd_replay(transcripts_path, replay_tau);
        if (inspect->parsed()) return cmd_inspect(ds_path, ds_format, ds_movies);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
