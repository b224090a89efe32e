#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "promptleak/corpus.hpp"
#include "promptleak/llm.hpp"

namespace testsupport {

inline const std::vector<std::string>& title_pool() {
    static const std::vector<std::string> pool = [] {
        static const char* adjectives[] = {
            "Crimson", "Silent",  "Golden",  "Broken",   "Hidden",  "Electric",
            "Frozen",  "Savage",  "Gentle",  "Midnight", "Scarlet", "Hollow",
            "Restless", "Velvet", "Iron",    "Distant",  "Burning", "Quiet",
            "Wandering", "Forgotten"};
        static const char* nouns[] = {
            "Harbor",  "Empire", "Garden",  "Voyage",  "Summit", "Mirror",
            "Horizon", "Orchard", "Signal", "Canyon",  "Lantern", "Compass",
            "Meadow",  "Fortress", "Tide",  "Journey", "Outpost", "Carousel"};
        std::vector<std::string> titles;
        for (const char* a : adjectives)
            for (const char* n : nouns) titles.push_back(std::string(a) + " " + n);
        return titles;
    }();
    return pool;
}

inline promptleak::ItemCatalog make_catalog(std::size_t n) {
    const auto& pool = title_pool();
    if (n > pool.size()) n = pool.size();
    promptleak::ItemCatalog cat;
    cat.source_name = "synthetic";
    for (std::size_t i = 0; i < n; ++i) cat.titles.insert(promptleak::normalize_title(pool[i]));
    return cat;
}

inline promptleak::InteractionDataset make_dataset(std::size_t n_users,
                                                   std::size_t items_per_user,
                                                   std::uint64_t seed = 42,
                                                   std::size_t catalog_size = 200) {
    const auto& pool = title_pool();
    if (catalog_size > pool.size()) catalog_size = pool.size();
    promptleak::InteractionDataset ds;
    promptleak::Rng rng(seed);
    for (std::size_t u = 0; u < n_users; ++u) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "u%04zu", u);
        for (std::size_t i : rng.sample_indices(catalog_size, items_per_user)) {
            promptleak::Interaction it;
            it.user_id = buf;
            it.item_id = "i" + std::to_string(i);
            it.item_title = pool[i];
            it.score = 1 + static_cast<int>(rng.uniform_below(5));
            ds.interactions.push_back(std::move(it));
        }
    }
    promptleak::detail::finalize(ds);
    return ds;
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("promptleak-" + tag + "-" + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

inline std::string write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
    return path;
}

inline std::string write_dataset_csv(const std::string& path,
                                     const promptleak::InteractionDataset& ds) {
    std::ofstream out(path);
    out << "user_id,item_id,item_title,score\n";
    for (const auto& it : ds.interactions)
        out << it.user_id << ',' << it.item_id << ",\"" << it.item_title << "\"," << it.score
            << '\n';
    return path;
}

inline std::string write_catalog(const std::string& path, const promptleak::ItemCatalog& cat) {
    std::ofstream out(path);
    for (const auto& t : cat.titles) out << t << '\n';
    return path;
}

// Canned backend for exercising parse/decision paths without a model.
class FixedBackend final : public promptleak::ChatBackend {
public:
    explicit FixedBackend(std::vector<std::string> responses)
        : responses_(std::move(responses)) {}

    promptleak::LlmResponse chat(const promptleak::ChatTranscript&) override {
        promptleak::LlmResponse r;
        r.text = responses_[std::min(calls_, responses_.size() - 1)];
        ++calls_;
        r.backend_id = "fixed";
        return r;
    }

    std::size_t calls() const { return calls_; }

private:
    std::vector<std::string> responses_;
    std::size_t calls_ = 0;
};

}  // namespace testsupport
