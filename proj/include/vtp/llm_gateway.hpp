#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vtp/error.hpp"

namespace vtp::llm {

inline constexpr int kDefaultMaxTokens = 32768;

struct CompletionRequest {
    std::string model_tag;
    std::string system_text;
    std::string user_text;
    double temperature = 0.0;
    int max_tokens = kDefaultMaxTokens;
    /// Distinguishes repeated samples of one prompt (k attempts at temperature > 0).
    std::size_t sample_index = 0;

    /// Throws ConfigError unless max_tokens > 0, temperature >= 0 and model_tag is set.
    void validate() const;
};

struct Usage {
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
};

struct CompletionResponse {
    std::string text;
    Usage usage;
    double latency = 0.0;    // seconds; not part of any persisted artifact
    bool truncated = false;  // provider stopped at max_tokens
};

/// Hex SHA-256 over a canonical document of every request field.
std::string request_digest(const CompletionRequest& request);

nlohmann::json to_json(const CompletionRequest&);
nlohmann::json to_json(const CompletionResponse&);
CompletionResponse response_from_json(const nlohmann::json&);

/// Retries exhausted, or a non-retryable provider failure.
class TransportError : public Error {
public:
    TransportError(const std::string& what, std::size_t attempts) : Error(what), attempts_(attempts) {}
    std::size_t attempts() const noexcept { return attempts_; }

private:
    std::size_t attempts_;
};

/// A failure worth retrying (rate limiting, 5xx, connection reset).
class TransientError : public Error {
public:
    using Error::Error;
};

class ReplayMiss : public Error {
public:
    explicit ReplayMiss(std::string digest)
        : Error("replay store has no entry for request " + digest), digest_(std::move(digest)) {}
    const std::string& digest() const noexcept { return digest_; }

private:
    std::string digest_;
};

class Transport {
public:
    virtual ~Transport() = default;
    /// May throw TransientError (retried by the gateway) or any other Error (not retried).
    virtual CompletionResponse send(const CompletionRequest& request) = 0;
};

/// Pure function of the request: `responder(request, digest)` supplies the text.
class MockTransport : public Transport {
public:
    using Responder = std::function<std::string(const CompletionRequest&, const std::string& digest)>;
    explicit MockTransport(Responder responder) : responder_(std::move(responder)) {}
    CompletionResponse send(const CompletionRequest& request) override;

private:
    Responder responder_;
};

/// Content-addressed store: `<dir>/<digest>.json` holding request and response.
class ReplayStore {
public:
    explicit ReplayStore(std::filesystem::path dir) : dir_(std::move(dir)) {}
    std::filesystem::path path_for(const std::string& digest) const { return dir_ / (digest + ".json"); }
    bool contains(const std::string& digest) const;
    CompletionResponse load(const std::string& digest) const;
    void save(const CompletionRequest& request, const CompletionResponse& response) const;
    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    mutable std::mutex mu_;
};

/// Serves stored responses only; a miss raises ReplayMiss.
class ReplayTransport : public Transport {
public:
    explicit ReplayTransport(std::filesystem::path dir) : store_(std::move(dir)) {}
    CompletionResponse send(const CompletionRequest& request) override;

private:
    ReplayStore store_;
};

/// Forwards to another transport and stores every successful exchange.
class RecordingTransport : public Transport {
public:
    RecordingTransport(std::shared_ptr<Transport> inner, std::filesystem::path dir)
        : inner_(std::move(inner)), store_(std::move(dir)) {}
    CompletionResponse send(const CompletionRequest& request) override;

private:
    std::shared_ptr<Transport> inner_;
    ReplayStore store_;
};

struct LiveConfig {
    std::string base_url;                         // scheme://host[:port]
    std::string path = "/v1/chat/completions";    // chat-completions compatible endpoint
    std::string api_key_env = "VTP_API_KEY";      // read at construction
    double timeout = 600.0;                       // seconds
};

/// HTTP transport for chat-completions compatible providers.
class LiveTransport : public Transport {
public:
    /// Throws ConfigError on a malformed URL or a missing key variable.
    explicit LiveTransport(LiveConfig config);
    CompletionResponse send(const CompletionRequest& request) override;

private:
    LiveConfig config_;
    std::string api_key_;
};

struct RetryPolicy {
    std::size_t max_retries = 4;  // attempts = max_retries + 1
    double base_delay = 1.0;      // seconds
    double max_delay = 30.0;

    /// min(base * 2^retry, max); nondecreasing in retry.
    double delay(std::size_t retry) const;
};

/// Thread-safe token bucket; `acquire` blocks until a token is available.
class TokenBucket {
public:
    /// rate <= 0 disables limiting.
    TokenBucket(double rate_per_second, double burst);
    void acquire();

private:
    double rate_;
    double burst_;
    double tokens_;
    std::chrono::steady_clock::time_point last_;
    std::mutex mu_;
};

struct GatewayStats {
    std::size_t requests = 0;
    std::size_t retries = 0;
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
};

/// Retrying, rate-limited front for any transport. Safe for concurrent calls.
class Gateway {
public:
    using Sleeper = std::function<void(double seconds)>;

    explicit Gateway(std::shared_ptr<Transport> transport, RetryPolicy retry = {}, double rate_per_second = 0.0,
                     double burst = 1.0);

    /// Throws TransportError once retries are exhausted; ReplayMiss and other errors pass through.
    CompletionResponse complete(const CompletionRequest& request);

    /// Replaces the real sleep (tests record the backoff schedule instead).
    void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }
    GatewayStats stats() const;

private:
    std::shared_ptr<Transport> transport_;
    RetryPolicy retry_;
    TokenBucket bucket_;
    Sleeper sleeper_;
    mutable std::mutex stats_mu_;
    GatewayStats stats_;
};

}  // namespace vtp::llm
