#pragma once

// Chat-completion providers over HTTP.
//   OpenAI-compatible:    POST {endpoint}/chat/completions, reply choices[0].message.content
//   Anthropic-compatible: POST {endpoint}/v1/messages,      reply content[0].text
// Each request is a single user-role message.

#include "capecgen/concurrency.hpp"
#include "capecgen/http.hpp"
#include "capecgen/llm.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <mutex>

namespace capecgen {

class HttpProvider : public Provider {
public:
    explicit HttpProvider(ProviderConfig cfg)
        : cfg_(std::move(cfg)), ep_(http::parse_endpoint(cfg_.endpoint)), bucket_(cfg_.rate_limit_rpm) {
        if (cfg_.retry.max_attempts < 1) throw InputError("retry.max_attempts must be >= 1");
        if (!(cfg_.rate_limit_rpm > 0)) throw InputError("rate_limit_rpm must be > 0");
        if (cfg_.credentials_env.empty()) {
            throw CredentialError("provider '" + cfg_.name + "' names no credentials environment variable");
        }
        const char* key = std::getenv(cfg_.credentials_env.c_str());
        if (!key || !*key) {
            throw CredentialError("environment variable " + cfg_.credentials_env + " for provider '" + cfg_.name +
                                  "' is not set");
        }
        key_ = key;
    }

    const ProviderConfig& config() const override { return cfg_; }

    Completion complete(const RenderedPrompt& prompt) override {
        auto body = request_body(prompt.text).dump();
        if (cfg_.debug) log("request", body);
        auto cli = http::make_client(ep_, cfg_.timeout_s);
        auto headers = auth_headers();
        auto t0 = std::chrono::steady_clock::now();
        std::optional<int> last_status;
        std::optional<double> last_retry_after;
        std::string last_error;
        for (int attempt = 1; attempt <= cfg_.retry.max_attempts; ++attempt) {
            bucket_.acquire();
            auto res = cli.Post(ep_.prefix + path(), headers, body, "application/json");
            if (!res) {
                last_error = httplib::to_string(res.error());
                last_status.reset();
                last_retry_after.reset();
            } else {
                if (cfg_.debug) log("response " + std::to_string(res->status), res->body);
                if (res->status == 200) {
                    Completion c;
                    c.text = read_content(res->body, c.model_id);
                    c.attempts = attempt;
                    c.latency_ms =
                        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
                    return c;
                }
                if (res->status == 401 || res->status == 403) {
                    throw CredentialError("provider '" + cfg_.name + "' rejected credentials (HTTP " +
                                          std::to_string(res->status) + ")");
                }
                if (!http::retryable_status(res->status)) {
                    throw ProtocolError("provider '" + cfg_.name + "' rejected request: HTTP " +
                                        std::to_string(res->status) + " " + res->body.substr(0, 500));
                }
                last_status = res->status;
                last_retry_after = http::retry_after_seconds(*res);
                last_error = "HTTP " + std::to_string(res->status);
            }
            if (attempt < cfg_.retry.max_attempts) {
                http::backoff_sleep(cfg_.retry.backoff_base_s, attempt, last_retry_after);
            }
        }
        throw TransportError("provider '" + cfg_.name + "' failed after " + std::to_string(cfg_.retry.max_attempts) +
                                 " attempts: " + last_error,
                             cfg_.retry.max_attempts, last_status, last_retry_after);
    }

protected:
    virtual std::string path() const = 0;
    virtual nlohmann::json request_body(const std::string& prompt) const = 0;
    virtual httplib::Headers auth_headers() const = 0;
    virtual std::string content_of(const nlohmann::json& reply) const = 0;

    const std::string& key() const noexcept { return key_; }

private:
    std::string read_content(const std::string& body, std::string& model_out) const {
        nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw ProtocolError("provider reply is not a JSON object");
        model_out = j.value("model", cfg_.model_id);
        try {
            return content_of(j);
        } catch (const nlohmann::json::exception& e) {
            throw ProtocolError(std::string("provider reply lacks message content: ") + e.what());
        }
    }

    void log(const std::string& what, const std::string& body) const {
        static std::mutex mu;
        std::lock_guard lock(mu);
        std::cerr << "[" << cfg_.name << "] " << what << " (credentials redacted): " << body << '\n';
    }

    ProviderConfig cfg_;
    http::Endpoint ep_;
    TokenBucket bucket_;
    std::string key_;
};

class OpenAICompatibleProvider final : public HttpProvider {
public:
    using HttpProvider::HttpProvider;

protected:
    std::string path() const override { return "/chat/completions"; }

    nlohmann::json request_body(const std::string& prompt) const override {
        nlohmann::json body{{"model", config().model_id},
                            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
        if (config().temperature) body["temperature"] = *config().temperature;
        if (config().max_output_tokens) body["max_tokens"] = *config().max_output_tokens;
        return body;
    }

    httplib::Headers auth_headers() const override { return {{"Authorization", "Bearer " + key()}}; }

    std::string content_of(const nlohmann::json& reply) const override {
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    }
};

class AnthropicCompatibleProvider final : public HttpProvider {
public:
    using HttpProvider::HttpProvider;

protected:
    std::string path() const override { return "/v1/messages"; }

    nlohmann::json request_body(const std::string& prompt) const override {
        nlohmann::json body{{"model", config().model_id},
                            {"max_tokens", config().max_output_tokens.value_or(4096)},
                            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
        if (config().temperature) body["temperature"] = *config().temperature;
        return body;
    }

    httplib::Headers auth_headers() const override {
        return {{"x-api-key", key()}, {"anthropic-version", "2023-06-01"}};
    }

    std::string content_of(const nlohmann::json& reply) const override {
        return reply.at("content").at(0).at("text").get<std::string>();
    }
};

// Throws CredentialError for HTTP providers whose key is not available, so
// a run fails before any request is made.
inline std::unique_ptr<Provider> make_provider(const ProviderConfig& cfg) {
    switch (cfg.kind) {
        case ProviderKind::OpenAICompatible: return std::make_unique<OpenAICompatibleProvider>(cfg);
        case ProviderKind::AnthropicCompatible: return std::make_unique<AnthropicCompatibleProvider>(cfg);
        case ProviderKind::Mock: break;
    }
    return std::make_unique<MockProvider>(cfg);
}

}  // namespace capecgen
