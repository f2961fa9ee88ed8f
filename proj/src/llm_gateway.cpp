#include "vtp/llm_gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include "httplib.h"

#include "vtp/text_util.hpp"

namespace vtp::llm {

using nlohmann::json;

void CompletionRequest::validate() const {
    if (text::is_blank(model_tag)) throw ConfigError("completion request needs a model tag");
    if (max_tokens <= 0) throw ConfigError("max_tokens must be positive");
    if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be >= 0");
}

json to_json(const CompletionRequest& r) {
    return {{"model_tag", r.model_tag},     {"system_text", r.system_text}, {"user_text", r.user_text},
            {"temperature", r.temperature}, {"max_tokens", r.max_tokens},   {"sample_index", r.sample_index}};
}

json to_json(const CompletionResponse& r) {
    return {{"text", r.text},
            {"usage", {{"prompt_tokens", r.usage.prompt_tokens}, {"completion_tokens", r.usage.completion_tokens}}},
            {"truncated", r.truncated}};
}

CompletionResponse response_from_json(const json& j) {
    CompletionResponse r;
    r.text = j.at("text").get<std::string>();
    if (j.contains("usage")) {
        r.usage.prompt_tokens = j["usage"].value("prompt_tokens", std::size_t{0});
        r.usage.completion_tokens = j["usage"].value("completion_tokens", std::size_t{0});
    }
    r.truncated = j.value("truncated", false);
    return r;
}

std::string request_digest(const CompletionRequest& request) {
    const std::string doc = to_json(request).dump();
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(doc.data(), doc.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xF];
    }
    return out;
}

// ---------------------------------------------------------------------------

CompletionResponse MockTransport::send(const CompletionRequest& request) {
    CompletionResponse r;
    r.text = responder_(request, request_digest(request));
    r.usage.prompt_tokens = text::approx_token_count(request.system_text) + text::approx_token_count(request.user_text);
    r.usage.completion_tokens = text::approx_token_count(r.text);
    return r;
}

bool ReplayStore::contains(const std::string& digest) const { return std::filesystem::exists(path_for(digest)); }

CompletionResponse ReplayStore::load(const std::string& digest) const {
    std::ifstream in(path_for(digest));
    if (!in) throw ReplayMiss(digest);
    try {
        return response_from_json(json::parse(in).at("response"));
    } catch (const json::exception& e) {
        throw ParseError("corrupt replay entry " + digest + ": " + e.what());
    }
}

void ReplayStore::save(const CompletionRequest& request, const CompletionResponse& response) const {
    std::lock_guard lock(mu_);
    std::filesystem::create_directories(dir_);
    const auto digest = request_digest(request);
    const auto tmp = dir_ / (digest + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << json{{"digest", digest}, {"request", to_json(request)}, {"response", to_json(response)}}.dump(1)
            << '\n';
        if (!out) throw Error("cannot write replay entry " + tmp.string());
    }
    std::filesystem::rename(tmp, path_for(digest));
}

CompletionResponse ReplayTransport::send(const CompletionRequest& request) {
    return store_.load(request_digest(request));
}

CompletionResponse RecordingTransport::send(const CompletionRequest& request) {
    auto r = inner_->send(request);
    store_.save(request, r);
    return r;
}

// ---------------------------------------------------------------------------

LiveTransport::LiveTransport(LiveConfig config) : config_(std::move(config)) {
    static const std::regex url(R"(^https?://[^/\s]+$)");
    if (!std::regex_match(config_.base_url, url))
        throw ConfigError("endpoint must look like scheme://host[:port], got '" + config_.base_url + "'");
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (!key || !*key) throw ConfigError("environment variable " + config_.api_key_env + " is not set");
    api_key_ = key;
}

CompletionResponse LiveTransport::send(const CompletionRequest& request) {
    httplib::Client cli(config_.base_url);
    const auto secs = static_cast<time_t>(config_.timeout);
    cli.set_connection_timeout(30, 0);
    cli.set_read_timeout(secs, 0);
    cli.set_write_timeout(60, 0);
    json body = {{"model", request.model_tag},
                 {"temperature", request.temperature},
                 {"max_tokens", request.max_tokens},
                 {"messages", json::array({{{"role", "system"}, {"content", request.system_text}},
                                           {{"role", "user"}, {"content", request.user_text}}})}};
    const auto start = std::chrono::steady_clock::now();
    auto res = cli.Post(config_.path, {{"Authorization", "Bearer " + api_key_}}, body.dump(), "application/json");
    if (!res) throw TransientError("HTTP request failed: " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500)
        throw TransientError("provider returned HTTP " + std::to_string(res->status));
    if (res->status != 200)
        throw TransportError("provider returned HTTP " + std::to_string(res->status) + ": " + res->body, 1);
    CompletionResponse out;
    try {
        const auto doc = json::parse(res->body);
        const auto& choice = doc.at("choices").at(0);
        const auto& content = choice.at("message").at("content");
        out.text = content.is_null() ? "" : content.get<std::string>();
        out.truncated = choice.value("finish_reason", std::string{}) == "length";
        if (doc.contains("usage")) {
            out.usage.prompt_tokens = doc["usage"].value("prompt_tokens", std::size_t{0});
            out.usage.completion_tokens = doc["usage"].value("completion_tokens", std::size_t{0});
        }
    } catch (const json::exception& e) {
        throw TransportError(std::string("unreadable provider response: ") + e.what(), 1);
    }
    out.latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

// ---------------------------------------------------------------------------

double RetryPolicy::delay(std::size_t retry) const {
    return std::min(max_delay, base_delay * std::ldexp(1.0, static_cast<int>(std::min<std::size_t>(retry, 60))));
}

TokenBucket::TokenBucket(double rate_per_second, double burst)
    : rate_(rate_per_second), burst_(std::max(1.0, burst)), tokens_(burst_), last_(std::chrono::steady_clock::now()) {}

void TokenBucket::acquire() {
    if (rate_ <= 0.0) return;
    std::unique_lock lock(mu_);
    for (;;) {
        const auto now = std::chrono::steady_clock::now();
        tokens_ = std::min(burst_, tokens_ + rate_ * std::chrono::duration<double>(now - last_).count());
        last_ = now;
        if (tokens_ >= 1.0) {
            tokens_ -= 1.0;
            return;
        }
        const double wait = (1.0 - tokens_) / rate_;
        lock.unlock();
        std::this_thread::sleep_for(std::chrono::duration<double>(wait));
        lock.lock();
    }
}

Gateway::Gateway(std::shared_ptr<Transport> transport, RetryPolicy retry, double rate_per_second, double burst)
    : transport_(std::move(transport)),
      retry_(retry),
      bucket_(rate_per_second, burst),
      sleeper_([](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); }) {
    if (!transport_) throw ConfigError("gateway needs a transport");
}

CompletionResponse Gateway::complete(const CompletionRequest& request) {
    request.validate();
    std::string last;
    for (std::size_t attempt = 0; attempt <= retry_.max_retries; ++attempt) {
        if (attempt > 0) {
            {
                std::lock_guard lock(stats_mu_);
                ++stats_.retries;
            }
            sleeper_(retry_.delay(attempt - 1));
        }
        bucket_.acquire();
        try {
            auto r = transport_->send(request);
            std::lock_guard lock(stats_mu_);
            ++stats_.requests;
            stats_.prompt_tokens += r.usage.prompt_tokens;
            stats_.completion_tokens += r.usage.completion_tokens;
            return r;
        } catch (const TransientError& e) {
            last = e.what();
        }
    }
    throw TransportError("retries exhausted after " + std::to_string(retry_.max_retries + 1) + " attempts: " + last,
                         retry_.max_retries + 1);
}

GatewayStats Gateway::stats() const {
    std::lock_guard lock(stats_mu_);
    return stats_;
}

}  // namespace vtp::llm
