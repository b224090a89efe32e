#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "promptleak/common.hpp"

namespace promptleak {

struct Interaction {
    std::string user_id;
    std::string item_id;
    std::string item_title;
    int score = 0;
};

struct ScoreScale {
    int min = 0;
    int max = 0;
};

struct InteractionDataset {
    std::vector<Interaction> interactions;
    // user_id -> indices into interactions, in ingestion order
    std::map<std::string, std::vector<std::size_t>> users;
    ScoreScale scale;
    std::size_t dropped_untitled = 0;  // movielens rows with no matching movie line

    std::size_t user_count() const { return users.size(); }

    std::size_t item_count() const {
        std::unordered_set<std::string> items;
        for (const auto& it : interactions) items.insert(it.item_id);
        return items.size();
    }

    std::vector<std::string> user_ids() const {
        std::vector<std::string> ids;
        ids.reserve(users.size());
        for (const auto& [id, _] : users) ids.push_back(id);
        return ids;
    }
};

// Lowercase, trim, collapse internal whitespace, drop one trailing
// parenthesized 4-digit year, then drop a leading article ("the ", "a ",
// "an ") including the catalog convention of a trailing ", the" suffix.
// Idempotent by construction.
inline std::string normalize_title(std::string_view raw) {
    std::string t = str::collapse_ws(str::lower(str::trim(raw)));

    auto strip_year = [](std::string& s) {
        if (s.size() >= 6 && s.back() == ')') {
            std::size_t open = s.rfind('(');
            if (open != std::string::npos && s.size() - open == 6) {
                bool all_digits = true;
                for (std::size_t i = open + 1; i < s.size() - 1; ++i)
                    if (!std::isdigit(static_cast<unsigned char>(s[i]))) all_digits = false;
                if (all_digits) s = str::trim(s.substr(0, open));
            }
        }
    };
    auto strip_articles = [](std::string& s) {
        for (const char* suf : {", the", ", a", ", an"}) {
            std::string_view sv(suf);
            if (s.size() > sv.size() && s.compare(s.size() - sv.size(), sv.size(), sv) == 0) {
                s = str::trim(s.substr(0, s.size() - sv.size()));
                break;
            }
        }
        for (const char* pre : {"the ", "an ", "a "}) {
            std::string_view sv(pre);
            if (s.size() > sv.size() && s.compare(0, sv.size(), sv) == 0) {
                s = str::trim(s.substr(sv.size()));
                break;
            }
        }
    };

    // year may follow an article suffix ("matrix, the (1999)")
    strip_year(t);
    strip_articles(t);
    strip_year(t);
    return t;
}

struct ItemCatalog {
    std::set<std::string> titles;  // normalized
    std::string source_name;

    bool contains(std::string_view title) const {
        return titles.count(normalize_title(title)) > 0;
    }
};

inline bool catalog_contains(const ItemCatalog& catalog, std::string_view title) {
    return catalog.contains(title);
}

inline ItemCatalog load_catalog(const std::string& path, std::string source_name = "") {
    std::ifstream in(path);
    if (!in) throw Error("catalog file not readable: " + path);
    ItemCatalog cat;
    cat.source_name = source_name.empty() ? path : std::move(source_name);
    std::string line;
    while (std::getline(in, line)) {
        std::string norm = normalize_title(line);
        if (!norm.empty()) cat.titles.insert(std::move(norm));
    }
    if (cat.titles.empty()) throw Error("catalog file is empty: " + path);
    return cat;
}

struct Partition {
    std::set<std::string> members;
    std::set<std::string> non_members;
    std::uint64_t seed = 0;
};

namespace detail {

// RFC-style CSV line split: comma-separated, double-quote escaping.
inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (in_quotes)
        throw ParseError("line " + std::to_string(line_no) + ": unterminated quoted field");
    fields.push_back(std::move(cur));
    return fields;
}

inline int parse_score(const std::string& s, std::size_t line_no) {
    try {
        std::size_t pos = 0;
        int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(line_no) + ": bad score value '" + s + "'");
    }
}

inline void finalize(InteractionDataset& ds) {
    if (ds.interactions.empty()) throw Error("dataset is empty after ingestion");
    ds.scale.min = ds.scale.max = ds.interactions.front().score;
    for (std::size_t i = 0; i < ds.interactions.size(); ++i) {
        const Interaction& it = ds.interactions[i];
        ds.scale.min = std::min(ds.scale.min, it.score);
        ds.scale.max = std::max(ds.scale.max, it.score);
        ds.users[it.user_id].push_back(i);
    }
}

}  // namespace detail

inline InteractionDataset load_normalized_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("dataset file not readable: " + path);
    InteractionDataset ds;
    std::unordered_set<std::string> seen;  // user\x1fitem keys, keep-first
    std::string line;
    std::size_t line_no = 0;
    bool header_checked = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line, line_no);
        if (!header_checked) {
            header_checked = true;
            if (fields != std::vector<std::string>{"user_id", "item_id", "item_title", "score"})
                throw ParseError("line 1: expected header user_id,item_id,item_title,score");
            continue;
        }
        if (fields.size() != 4)
            throw ParseError("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                             std::to_string(fields.size()));
        Interaction it{fields[0], fields[1], fields[2], detail::parse_score(fields[3], line_no)};
        if (it.user_id.empty() || it.item_title.empty())
            throw ParseError("line " + std::to_string(line_no) + ": empty user_id or item_title");
        std::string key = it.user_id + '\x1f' + it.item_id;
        if (!seen.insert(key).second) continue;
        ds.interactions.push_back(std::move(it));
    }
    detail::finalize(ds);
    return ds;
}

// ratings_path: UserID::MovieID::Rating::Timestamp
// movies_path:  MovieID::Title::Genres (defaults to movies.dat next to ratings)
inline InteractionDataset load_movielens(const std::string& ratings_path,
                                         std::string movies_path = "") {
    if (movies_path.empty()) {
        std::size_t slash = ratings_path.find_last_of('/');
        std::string dir = slash == std::string::npos ? "" : ratings_path.substr(0, slash + 1);
        movies_path = dir + "movies.dat";
    }
    std::unordered_map<std::string, std::string> titles;
    {
        std::ifstream in(movies_path);
        if (!in) throw Error("movies file not readable: " + movies_path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            std::size_t a = line.find("::");
            std::size_t b = a == std::string::npos ? std::string::npos : line.find("::", a + 2);
            if (a == std::string::npos || b == std::string::npos)
                throw ParseError("movies line " + std::to_string(line_no) + ": expected MovieID::Title::Genres");
            titles[line.substr(0, a)] = line.substr(a + 2, b - a - 2);
        }
    }
    std::ifstream in(ratings_path);
    if (!in) throw Error("ratings file not readable: " + ratings_path);
    InteractionDataset ds;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto parts = str::split(line, ':');
        // "a::b::c::d" splits to {a,"",b,"",c,"",d}
        if (parts.size() != 7 || !parts[1].empty() || !parts[3].empty() || !parts[5].empty())
            throw ParseError("ratings line " + std::to_string(line_no) +
                             ": expected UserID::MovieID::Rating::Timestamp");
        const std::string& user = parts[0];
        const std::string& item = parts[2];
        auto title_it = titles.find(item);
        if (title_it == titles.end()) {
            ++ds.dropped_untitled;
            continue;
        }
        std::string key = user + '\x1f' + item;
        if (!seen.insert(key).second) continue;
        ds.interactions.push_back(
            {user, item, title_it->second, detail::parse_score(parts[4], line_no)});
    }
    detail::finalize(ds);
    return ds;
}

enum class DatasetFormat { NormalizedCsv, MovielensDat };

inline InteractionDataset load_interactions(const std::string& path, DatasetFormat format) {
    switch (format) {
        case DatasetFormat::NormalizedCsv: return load_normalized_csv(path);
        case DatasetFormat::MovielensDat: return load_movielens(path);
    }
    throw Error("unknown dataset format");
}

inline Partition partition_users(const InteractionDataset& dataset, std::uint64_t seed,
                                 double member_fraction = 0.5) {
    if (member_fraction <= 0.0 || member_fraction >= 1.0)
        throw Error("member_fraction must be in (0,1)");
    std::vector<std::string> ids = dataset.user_ids();  // sorted (map order)
    if (ids.size() < 2) throw Error("partition_users: need at least 2 users, have " +
                                    std::to_string(ids.size()));
    Rng rng(mix_seed(seed, 0x7061727469746f6eull));
    rng.shuffle(ids);
    std::size_t n_members = static_cast<std::size_t>(
        std::llround(member_fraction * static_cast<double>(ids.size())));
    n_members = std::clamp<std::size_t>(n_members, 1, ids.size() - 1);
    Partition p;
    p.seed = seed;
    for (std::size_t i = 0; i < ids.size(); ++i)
        (i < n_members ? p.members : p.non_members).insert(ids[i]);
    return p;
}

}  // namespace promptleak
