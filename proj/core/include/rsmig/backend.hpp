#pragma once

#include "rsmig/support/error.hpp"

#include <nlohmann/json.hpp>

#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

namespace rsmig::backend {

namespace fs = std::filesystem;

struct DecodingParams {
    double temperature = 0.0;
    double top_p = 1.0;
    int max_tokens = 8192;
    int top_k = -1;
    double repetition_penalty = 1.0;
};

struct GenerationRequest {
    std::string system;
    std::string user;
    DecodingParams decoding;
    /// Node id of the function being generated.
    std::string function_id;
    /// 0 for the initial generation, then one per repair round.
    int attempt = 0;

    std::string tag() const { return function_id + "#" + std::to_string(attempt); }
};

enum class FinishReason { Complete, Length, Error };
const char* finish_name(FinishReason f);

struct GenerationResponse {
    std::string text;
    FinishReason finish = FinishReason::Complete;
    double latency_ms = 0;
    std::string backend_id;
    /// Set when finish is Error.
    std::string error;

    bool ok() const { return finish != FinishReason::Error; }
};

/// A replay fixture has no response for the request.
class ReplayMissError : public Error {
public:
    using Error::Error;
};

class BackendError : public Error {
public:
    using Error::Error;
};

/// Line endings unified, trailing blanks dropped per line, outer blank lines removed.
std::string normalize_prompt(std::string_view text);
/// SHA-256 of the normalized system and user text (decoding parameters excluded).
std::string request_digest(const GenerationRequest& req);

class Backend {
public:
    explicit Backend(int max_in_flight = 4);
    virtual ~Backend() = default;
    Backend(const Backend&) = delete;
    Backend& operator=(const Backend&) = delete;

    /// Safe to call concurrently; at most `max_in_flight` calls proceed at once.
    GenerationResponse generate(const GenerationRequest& req);
    virtual std::string id() const = 0;

protected:
    virtual GenerationResponse do_generate(const GenerationRequest& req) = 0;

private:
    int max_in_flight_;
    int in_flight_ = 0;
    std::mutex mu_;
    std::condition_variable cv_;
};

struct RemoteConfig {
    /// Full URL of the chat-completions endpoint.
    std::string endpoint;
    std::string model;
    /// Name of the environment variable holding the bearer token.
    std::string auth_env = "RSMIG_API_KEY";
    int max_attempts = 3;
    int backoff_ms = 500;
    int timeout_s = 300;
    int max_tokens_cap = 8192;
    /// Send top_k and repetition_penalty too.
    bool extended_params = false;
};

/// Chat-style HTTP backend: {model, messages, temperature, top_p, max_tokens}
/// in, the first choice's message content out.
class RemoteBackend : public Backend {
public:
    explicit RemoteBackend(RemoteConfig config, int max_in_flight = 4);
    std::string id() const override { return "remote:" + config_.model; }
    /// Transport attempts made by the last request on this thread.
    int last_attempts() const;
    nlohmann::json request_body(const GenerationRequest& req) const;

protected:
    GenerationResponse do_generate(const GenerationRequest& req) override;

private:
    RemoteConfig config_;
};

/// Canned responses in `<dir>/<digest>.txt`; a miss is a hard error.
class ReplayBackend : public Backend {
public:
    explicit ReplayBackend(fs::path dir);
    std::string id() const override { return "replay"; }

protected:
    GenerationResponse do_generate(const GenerationRequest& req) override;

private:
    fs::path dir_;
};

/// Wraps another backend and stores each successful response as a replay fixture.
class RecordingBackend : public Backend {
public:
    RecordingBackend(std::unique_ptr<Backend> inner, fs::path dir);
    std::string id() const override { return "record:" + inner_->id(); }

protected:
    GenerationResponse do_generate(const GenerationRequest& req) override;

private:
    std::unique_ptr<Backend> inner_;
    fs::path dir_;
};

/// Known-good bodies keyed by function id. The file is JSON:
/// `{"bodies": {"crate::m::f": "body text", ...}}`.
std::map<std::string, std::string> load_oracle_bodies(const fs::path& file);

class OracleBackend : public Backend {
public:
    explicit OracleBackend(std::map<std::string, std::string> bodies);
    std::string id() const override { return "oracle"; }

protected:
    GenerationResponse do_generate(const GenerationRequest& req) override;

private:
    std::map<std::string, std::string> bodies_;
};

struct ScriptEntry {
    /// Invalid responses before the valid one; nullopt means never valid.
    std::optional<int> failures = 0;
    /// When the prompt contains this text the failures are skipped.
    std::string resolved_by;
};

struct Script {
    std::map<std::string, std::string> valid_bodies;
    std::map<std::string, ScriptEntry> entries;
    /// Body returned for a scripted failure; must not compile.
    std::string invalid_body = "let rsmig_scripted_failure: () = 0;\nunimplemented!()";
};

/// `{"oracle": "oracle.json", "invalid_body": "...", "functions": {"id":
/// {"failures": 2 | "permanent", "resolved_by": "..."}}}`; a relative oracle
/// path resolves against the script's directory.
Script load_script(const fs::path& file);

/// Returns invalid bodies for the first r requests of each function, then
/// the valid one. Functions absent from the script never fail.
class ScriptedBackend : public Backend {
public:
    explicit ScriptedBackend(Script script);
    std::string id() const override { return "script"; }
    int requests_for(const std::string& function_id) const;

protected:
    GenerationResponse do_generate(const GenerationRequest& req) override;

private:
    Script script_;
    mutable std::mutex mu_;
    std::map<std::string, int> seen_;
};

struct BackendConfig {
    std::string kind = "oracle";  // remote, replay, oracle, script
    RemoteConfig remote;
    fs::path replay_dir;
    fs::path oracle_file;
    fs::path script_file;
    /// When set, responses are also stored as replay fixtures here.
    fs::path record_dir;
    int max_in_flight = 4;
};

std::unique_ptr<Backend> make_backend(const BackendConfig& config);

}  // namespace rsmig::backend
