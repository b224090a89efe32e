#pragma once

#include <cctype>
#include <chrono>
#include <condition_variable>
#include <optional>
#include <set>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "promptleak/common.hpp"

namespace promptleak {

enum class Role { System, User, Assistant };

inline const char* role_name(Role r) {
    switch (r) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "user";
}

inline Role role_from_name(std::string_view s) {
    if (s == "system") return Role::System;
    if (s == "user") return Role::User;
    if (s == "assistant") return Role::Assistant;
    throw ParseError("unknown chat role: " + std::string(s));
}

struct ChatMessage {
    Role role;
    std::string content;
};

struct ChatTranscript {
    std::vector<ChatMessage> messages;

    void validate() const {
        for (std::size_t i = 0; i < messages.size(); ++i) {
            const ChatMessage& m = messages[i];
            if (m.role == Role::System && i != 0)
                throw Error("transcript: system message must come first");
            if (m.role != Role::Assistant && m.content.empty())
                throw Error("transcript: empty " + std::string(role_name(m.role)) + " message");
        }
    }

    std::uint64_t content_hash() const {
        std::string buf;
        for (const auto& m : messages) {
            buf += role_name(m.role);
            buf += '\x1e';
            buf += m.content;
            buf += '\x1f';
        }
        return fnv1a64(buf);
    }
};

struct LlmResponse {
    std::string text;
    std::chrono::milliseconds latency{0};
    std::string backend_id;
};

// Black-box chat contract: text in, text out, no probabilities.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual LlmResponse chat(const ChatTranscript& transcript) = 0;
};

inline LlmResponse chat(ChatBackend& backend, const ChatTranscript& transcript) {
    transcript.validate();
    return backend.chat(transcript);
}

enum class YesNo { Member, NonMember, Unparseable };

// First alphabetic token wins if it is yes/no; otherwise the first standalone
// yes/no anywhere in the text; otherwise unparseable. Never throws.
inline YesNo parse_yes_no(std::string_view text) {
    std::string token;
    auto classify = [](const std::string& t) -> std::optional<YesNo> {
        if (t == "yes") return YesNo::Member;
        if (t == "no") return YesNo::NonMember;
        return std::nullopt;
    };
    for (std::size_t i = 0; i <= text.size(); ++i) {
        bool alpha = i < text.size() && std::isalpha(static_cast<unsigned char>(text[i]));
        if (alpha) {
            token.push_back(
                static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
        } else if (!token.empty()) {
            if (auto v = classify(token)) return *v;
            token.clear();
        }
    }
    return YesNo::Unparseable;
}

namespace detail {

inline std::string strip_bold(std::string line) {
    std::size_t pos;
    while ((pos = line.find("**")) != std::string::npos) line.erase(pos, 2);
    return line;
}

inline std::string strip_list_decoration(std::string line) {
    line = str::trim(strip_bold(std::move(line)));
    // bullet markers
    for (const char* bullet : {"- ", "* ", "+ ", "\xe2\x80\xa2 "}) {
        if (str::starts_with(line, bullet)) {
            line = str::trim(line.substr(std::string_view(bullet).size()));
            break;
        }
    }
    // numbering: "12." or "12)"
    std::size_t i = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')'))
        line = str::trim(line.substr(i + 1));
    // trailing description
    for (const char* sep : {" - ", ": "}) {
        std::size_t pos = line.find(sep);
        if (pos != std::string::npos) line = str::trim(line.substr(0, pos));
    }
    return line;
}

inline bool looks_like_list_item(const std::string& line) {
    std::string t = str::trim(strip_bold(line));
    if (t.empty()) return false;
    if (str::starts_with(t, "- ") || str::starts_with(t, "* ") || str::starts_with(t, "+ ") ||
        str::starts_with(t, "\xe2\x80\xa2 "))
        return true;
    std::size_t i = 0;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
    return i > 0 && i < t.size() && (t[i] == '.' || t[i] == ')');
}

}  // namespace detail

// Extracts up to top_k titles from numbered, bulleted, or one-per-line text.
// When any line carries list decoration, undecorated lines (preambles like
// "Here are my picks:") are ignored.
inline std::vector<std::string> parse_item_list(std::string_view text, std::size_t top_k) {
    std::vector<std::string> lines = str::split_lines(text);
    bool has_decorated = false;
    for (const auto& l : lines)
        if (detail::looks_like_list_item(l)) has_decorated = true;

    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& l : lines) {
        if (out.size() >= top_k) break;
        if (has_decorated && !detail::looks_like_list_item(l)) continue;
        std::string title = detail::strip_list_decoration(l);
        if (title.empty()) continue;
        if (seen.insert(title).second) out.push_back(std::move(title));
    }
    return out;
}

struct HttpBackendConfig {
    std::string base_url = "http://localhost:8080";
    std::string path = "/v1/chat/completions";
    std::string model = "llama-3-8b";
    double temperature = 0.0;
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{500};
    std::string bearer_env = "PROMPTLEAK_API_TOKEN";
    int max_in_flight = 4;
    int timeout_seconds = 120;
};

// OpenAI-compatible chat completion client. Retries transient failures with
// exponential backoff and bounds concurrent requests.
class HttpChatBackend final : public ChatBackend {
public:
    explicit HttpChatBackend(HttpBackendConfig config) : config_(std::move(config)) {
        if (config_.max_attempts < 1) throw ConfigError("http backend: max_attempts must be >= 1");
        if (config_.max_in_flight < 1) throw ConfigError("http backend: max_in_flight must be >= 1");
    }

    LlmResponse chat(const ChatTranscript& transcript) override {
        InFlightGuard guard(*this);
        nlohmann::json body;
        body["model"] = config_.model;
        body["temperature"] = config_.temperature;
        body["messages"] = nlohmann::json::array();
        for (const auto& m : transcript.messages)
            body["messages"].push_back({{"role", role_name(m.role)}, {"content", m.content}});
        std::string payload = body.dump();

        httplib::Headers headers;
        if (const char* token = std::getenv(config_.bearer_env.c_str()))
            headers.emplace("Authorization", std::string("Bearer ") + token);

        auto start = std::chrono::steady_clock::now();
        std::string last_error;
        auto backoff = config_.initial_backoff;
        for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
            if (attempt > 1) {
                std::this_thread::sleep_for(backoff);
                backoff *= 2;
            }
            httplib::Client client(config_.base_url);
            client.set_read_timeout(config_.timeout_seconds, 0);
            client.set_connection_timeout(config_.timeout_seconds, 0);
            auto res = client.Post(config_.path, headers, payload, "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status >= 500 || res->status == 429) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200)
                throw BackendError("http backend: HTTP " + std::to_string(res->status) + ": " +
                                   res->body);
            return parse_completion(res->body, start);
        }
        throw BackendError("http backend: giving up after " +
                           std::to_string(config_.max_attempts) + " attempts (" + last_error +
                           ")");
    }

private:
    LlmResponse parse_completion(const std::string& body,
                                 std::chrono::steady_clock::time_point start) const {
        nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded() || !j.contains("choices") || j["choices"].empty() ||
            !j["choices"][0].contains("message") ||
            !j["choices"][0]["message"].contains("content"))
            throw BackendError("http backend: malformed completion payload");
        LlmResponse r;
        r.text = j["choices"][0]["message"]["content"].get<std::string>();
        r.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - start);
        r.backend_id = "http:" + config_.model;
        return r;
    }

    struct InFlightGuard {
        explicit InFlightGuard(HttpChatBackend& b) : backend(b) {
            std::unique_lock<std::mutex> lock(b.mu_);
            b.cv_.wait(lock, [&] { return b.in_flight_ < b.config_.max_in_flight; });
            ++b.in_flight_;
        }
        ~InFlightGuard() {
            {
                std::lock_guard<std::mutex> lock(backend.mu_);
                --backend.in_flight_;
            }
            backend.cv_.notify_one();
        }
        HttpChatBackend& backend;
    };

    HttpBackendConfig config_;
    std::mutex mu_;
    std::condition_variable cv_;
    int in_flight_ = 0;
};

}  // namespace promptleak
