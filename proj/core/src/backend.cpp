#include "rsmig/backend.hpp"

#include "rsmig/support/digest.hpp"
#include "rsmig/support/files.hpp"
#include "rsmig/support/text.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <regex>
#include <thread>

namespace rsmig::backend {

const char* finish_name(FinishReason f) {
    switch (f) {
    case FinishReason::Complete: return "complete";
    case FinishReason::Length: return "length";
    case FinishReason::Error: return "error";
    }
    return "?";
}

std::string normalize_prompt(std::string_view text) {
    std::string unified = text::replace_all(std::string(text), "\r\n", "\n");
    std::vector<std::string> lines;
    for (auto& l : text::split_lines(unified)) {
        while (!l.empty() && (l.back() == ' ' || l.back() == '\t' || l.back() == '\r')) l.pop_back();
        lines.push_back(std::move(l));
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    size_t first = 0;
    while (first < lines.size() && lines[first].empty()) ++first;
    lines.erase(lines.begin(), lines.begin() + static_cast<std::ptrdiff_t>(first));
    return text::join(lines, "\n");
}

std::string request_digest(const GenerationRequest& req) {
    return sha256_hex(normalize_prompt(req.system) + "\n\x1f\n" + normalize_prompt(req.user));
}

Backend::Backend(int max_in_flight) : max_in_flight_(std::max(1, max_in_flight)) {}

GenerationResponse Backend::generate(const GenerationRequest& req) {
    {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return in_flight_ < max_in_flight_; });
        ++in_flight_;
    }
    auto start = std::chrono::steady_clock::now();
    GenerationResponse r;
    try {
        r = do_generate(req);
    } catch (...) {
        std::lock_guard lock(mu_);
        --in_flight_;
        cv_.notify_one();
        throw;
    }
    {
        std::lock_guard lock(mu_);
        --in_flight_;
    }
    cv_.notify_one();
    r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    r.backend_id = id();
    if (!r.ok()) r.text.clear();
    return r;
}

// ---------------------------------------------------------------------------
// Remote

namespace {

thread_local int t_last_attempts = 0;

GenerationResponse error_response(std::string message) {
    GenerationResponse r;
    r.finish = FinishReason::Error;
    r.error = std::move(message);
    return r;
}

struct Url {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

Url split_url(const std::string& endpoint) {
    static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(endpoint, m, re)) throw BackendError("invalid endpoint URL `" + endpoint + "`");
    return {m[1].str(), m[2].matched ? m[2].str() : "/"};
}

}  // namespace

RemoteBackend::RemoteBackend(RemoteConfig config, int max_in_flight)
    : Backend(max_in_flight), config_(std::move(config)) {
    split_url(config_.endpoint);
}

int RemoteBackend::last_attempts() const { return t_last_attempts; }

nlohmann::json RemoteBackend::request_body(const GenerationRequest& req) const {
    nlohmann::json messages = nlohmann::json::array();
    if (!req.system.empty()) messages.push_back({{"role", "system"}, {"content", req.system}});
    messages.push_back({{"role", "user"}, {"content", req.user}});
    nlohmann::json body = {{"model", config_.model},
                           {"messages", messages},
                           {"temperature", req.decoding.temperature},
                           {"top_p", req.decoding.top_p},
                           {"max_tokens", std::min(req.decoding.max_tokens, config_.max_tokens_cap)}};
    if (config_.extended_params) {
        body["top_k"] = req.decoding.top_k;
        body["repetition_penalty"] = req.decoding.repetition_penalty;
    }
    return body;
}

GenerationResponse RemoteBackend::do_generate(const GenerationRequest& req) {
    Url url = split_url(config_.endpoint);
    httplib::Client client(url.origin);
    client.set_connection_timeout(30);
    client.set_read_timeout(config_.timeout_s);
    client.set_write_timeout(config_.timeout_s);
    httplib::Headers headers;
    if (const char* token = std::getenv(config_.auth_env.c_str()); token && *token)
        headers.emplace("Authorization", std::string("Bearer ") + token);
    const std::string body = request_body(req).dump();

    std::string last_error;
    int attempts = std::max(1, config_.max_attempts);
    t_last_attempts = 0;
    for (int a = 0; a < attempts; ++a) {
        if (a > 0) std::this_thread::sleep_for(std::chrono::milliseconds(config_.backoff_ms * (1 << (a - 1))));
        ++t_last_attempts;
        auto res = client.Post(url.path, headers, body, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
        } else if (res->status < 200 || res->status >= 300) {
            last_error = "HTTP status " + std::to_string(res->status);
        } else {
            try {
                auto j = nlohmann::json::parse(res->body);
                const auto& choice = j.at("choices").at(0);
                GenerationResponse r;
                r.text = choice.at("message").at("content").get<std::string>();
                std::string reason = choice.value("finish_reason", "stop");
                r.finish = reason == "length" ? FinishReason::Length : FinishReason::Complete;
                return r;
            } catch (const std::exception& e) {
                last_error = std::string("malformed response: ") + e.what();
            }
        }
        spdlog::warn("{}: attempt {}/{} failed: {}", req.tag(), a + 1, attempts, last_error);
    }
    return error_response(last_error);
}

// ---------------------------------------------------------------------------
// Replay and recording

ReplayBackend::ReplayBackend(fs::path dir) : Backend(64), dir_(std::move(dir)) {}

GenerationResponse ReplayBackend::do_generate(const GenerationRequest& req) {
    std::string digest = request_digest(req);
    fs::path file = dir_ / (digest + ".txt");
    if (!fs::exists(file)) throw ReplayMissError("no replay response for " + req.tag() + " (digest " + digest + ")");
    GenerationResponse r;
    r.text = read_file(file);
    return r;
}

RecordingBackend::RecordingBackend(std::unique_ptr<Backend> inner, fs::path dir)
    : Backend(64), inner_(std::move(inner)), dir_(std::move(dir)) {}

GenerationResponse RecordingBackend::do_generate(const GenerationRequest& req) {
    GenerationResponse r = inner_->generate(req);
    if (r.ok()) write_file(dir_ / (request_digest(req) + ".txt"), r.text);
    return r;
}

// ---------------------------------------------------------------------------
// Oracle and scripted failures

std::map<std::string, std::string> load_oracle_bodies(const fs::path& file) {
    try {
        auto j = nlohmann::json::parse(read_file(file));
        return j.at("bodies").get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw BackendError("bad oracle file " + file.string() + ": " + e.what());
    }
}

OracleBackend::OracleBackend(std::map<std::string, std::string> bodies) : Backend(64), bodies_(std::move(bodies)) {}

GenerationResponse OracleBackend::do_generate(const GenerationRequest& req) {
    auto it = bodies_.find(req.function_id);
    if (it == bodies_.end()) return error_response("oracle has no body for " + req.function_id);
    GenerationResponse r;
    r.text = it->second;
    return r;
}

Script load_script(const fs::path& file) {
    Script s;
    try {
        auto j = nlohmann::json::parse(read_file(file));
        if (j.contains("oracle")) {
            fs::path oracle = j.at("oracle").get<std::string>();
            if (oracle.is_relative()) oracle = file.parent_path() / oracle;
            s.valid_bodies = load_oracle_bodies(oracle);
        }
        if (j.contains("bodies")) {
            for (const auto& [k, v] : j.at("bodies").items()) s.valid_bodies[k] = v.get<std::string>();
        }
        if (j.contains("invalid_body")) s.invalid_body = j.at("invalid_body");
        const nlohmann::json functions = j.value("functions", nlohmann::json::object());
        for (const auto& [id, e] : functions.items()) {
            ScriptEntry entry;
            const auto& f = e.is_object() ? e.at("failures") : e;
            if (f.is_string()) {
                if (f != "permanent") throw BackendError("failures must be a count or \"permanent\"");
                entry.failures = std::nullopt;
            } else {
                entry.failures = f.get<int>();
            }
            if (e.is_object()) entry.resolved_by = e.value("resolved_by", "");
            s.entries[id] = entry;
        }
    } catch (const nlohmann::json::exception& e) {
        throw BackendError("bad script file " + file.string() + ": " + e.what());
    }
    return s;
}

ScriptedBackend::ScriptedBackend(Script script) : Backend(64), script_(std::move(script)) {}

int ScriptedBackend::requests_for(const std::string& function_id) const {
    std::lock_guard lock(mu_);
    auto it = seen_.find(function_id);
    return it == seen_.end() ? 0 : it->second;
}

GenerationResponse ScriptedBackend::do_generate(const GenerationRequest& req) {
    int n;
    {
        std::lock_guard lock(mu_);
        n = seen_[req.function_id]++;
    }
    GenerationResponse r;
    auto e = script_.entries.find(req.function_id);
    bool fail = false;
    if (e != script_.entries.end()) {
        const ScriptEntry& s = e->second;
        bool resolved = !s.resolved_by.empty() && req.user.find(s.resolved_by) != std::string::npos;
        fail = !resolved && (!s.failures || n < *s.failures);
    }
    if (fail) {
        r.text = script_.invalid_body;
        return r;
    }
    auto v = script_.valid_bodies.find(req.function_id);
    if (v == script_.valid_bodies.end()) return error_response("script has no valid body for " + req.function_id);
    r.text = v->second;
    return r;
}

std::unique_ptr<Backend> make_backend(const BackendConfig& c) {
    std::unique_ptr<Backend> b;
    if (c.kind == "remote") b = std::make_unique<RemoteBackend>(c.remote, c.max_in_flight);
    else if (c.kind == "replay") b = std::make_unique<ReplayBackend>(c.replay_dir);
    else if (c.kind == "oracle") b = std::make_unique<OracleBackend>(load_oracle_bodies(c.oracle_file));
    else if (c.kind == "script") b = std::make_unique<ScriptedBackend>(load_script(c.script_file));
    else throw BackendError("unknown backend `" + c.kind + "`");
    if (!c.record_dir.empty()) b = std::make_unique<RecordingBackend>(std::move(b), c.record_dir);
    return b;
}

}  // namespace rsmig::backend
