#pragma once

// Client side of the embedding wire protocol:
//   POST /embed   {"texts": [...], "model": "text"|"code"}
//              -> {"vectors": [[...], ...], "dim": N, "model_id": "..."}
//   GET /healthz -> {"status": "ok", "models": {...}}

#include "capecgen/concurrency.hpp"
#include "capecgen/embedding.hpp"
#include "capecgen/http.hpp"

#include <nlohmann/json.hpp>

#include <mutex>

namespace capecgen {

class RemoteEmbedder final : public Embedder {
public:
    explicit RemoteEmbedder(EmbedderConfig cfg) : cfg_(std::move(cfg)), ep_(http::parse_endpoint(cfg_.endpoint)) {
        if (cfg_.batch_size == 0) throw InputError("embedder batch_size must be positive");
        if (cfg_.max_attempts < 1) throw InputError("embedder max_attempts must be >= 1");
    }

    double backoff_base_s = 0.5;

    std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override {
        if (texts.empty()) throw InputError("embed_batch needs at least one text");
        auto batches = (texts.size() + cfg_.batch_size - 1) / cfg_.batch_size;
        std::vector<std::vector<EmbeddingVector>> parts(batches);
        std::vector<std::size_t> dims(batches, 0);
        parallel_for(batches, cfg_.max_in_flight, [&](std::size_t b) {
            auto first = b * cfg_.batch_size;
            auto count = std::min(cfg_.batch_size, texts.size() - first);
            parts[b] = post_batch(texts.subspan(first, count), first);
            dims[b] = parts[b].front().dim();
        });
        for (std::size_t b = 1; b < batches; ++b) {
            if (dims[b] != dims[0]) throw ProtocolError("embedding dim changed between batches");
        }
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (auto& p : parts) {
            for (auto& v : p) out.push_back(std::move(v));
        }
        return out;
    }

    std::string model_id() const override {
        std::lock_guard lock(mu_);
        return model_id_.empty() ? "remote:" + cfg_.endpoint + "/" + std::string(to_string(cfg_.slot)) : model_id_;
    }

    nlohmann::json health() const {
        auto cli = http::make_client(ep_, cfg_.timeout_s);
        auto res = cli.Get(ep_.prefix + "/healthz");
        if (!res) throw TransportError("embedding service unreachable: " + httplib::to_string(res.error()), 1);
        if (res->status != 200) {
            throw TransportError("embedding service unhealthy (HTTP " + std::to_string(res->status) + ")", 1,
                                 res->status, http::retry_after_seconds(*res));
        }
        return nlohmann::json::parse(res->body);
    }

private:
    std::vector<EmbeddingVector> post_batch(std::span<const std::string> texts, std::size_t first) {
        std::string where = "batch [" + std::to_string(first) + ", " + std::to_string(first + texts.size()) + ")";
        nlohmann::json req{{"texts", texts}, {"model", to_string(cfg_.slot)}};
        auto body = req.dump();
        auto cli = http::make_client(ep_, cfg_.timeout_s);
        std::optional<int> last_status;
        std::optional<double> last_retry_after;
        std::string last_error;
        for (int attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
            auto res = cli.Post(ep_.prefix + "/embed", body, "application/json");
            if (!res) {
                last_error = httplib::to_string(res.error());
                last_status.reset();
                last_retry_after.reset();
            } else if (res->status == 200) {
                return decode(res->body, texts.size(), where);
            } else if (http::retryable_status(res->status)) {
                last_status = res->status;
                last_retry_after = http::retry_after_seconds(*res);
                last_error = "HTTP " + std::to_string(res->status);
            } else {
                throw ProtocolError("embedding request rejected for " + where + ": HTTP " +
                                    std::to_string(res->status) + " " + res->body);
            }
            if (attempt < cfg_.max_attempts) http::backoff_sleep(backoff_base_s, attempt, last_retry_after);
        }
        throw TransportError("embedding " + where + " failed after " + std::to_string(cfg_.max_attempts) +
                                 " attempts: " + last_error,
                             cfg_.max_attempts, last_status, last_retry_after);
    }

    std::vector<EmbeddingVector> decode(const std::string& body, std::size_t expected, const std::string& where) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception& e) {
            throw ProtocolError("embedding response for " + where + " is not JSON: " + e.what());
        }
        if (!j.is_object() || !j.contains("vectors") || !j.contains("dim") || !j["vectors"].is_array()) {
            throw ProtocolError("embedding response for " + where + " lacks vectors/dim");
        }
        if (!j["dim"].is_number_unsigned() || j["dim"].get<std::size_t>() == 0) {
            throw ProtocolError("embedding response for " + where + " has an invalid dim");
        }
        auto dim = j["dim"].get<std::size_t>();
        const auto& vecs = j["vectors"];
        if (vecs.size() != expected) {
            throw ProtocolError("embedding response for " + where + " has " + std::to_string(vecs.size()) +
                                " vectors, expected " + std::to_string(expected));
        }
        std::vector<EmbeddingVector> out;
        out.reserve(expected);
        for (const auto& v : vecs) {
            if (!v.is_array() || v.size() != dim) throw ProtocolError("dimension mismatch in " + where);
            EmbeddingVector ev;
            ev.values.reserve(dim);
            for (const auto& x : v) {
                if (!x.is_number()) throw ProtocolError("non-numeric value in " + where);
                ev.values.push_back(x.get<double>());
            }
            for (double x : ev.values) {
                if (!std::isfinite(x)) throw ProtocolError("non-finite value in " + where);
            }
            out.push_back(std::move(ev));
        }
        if (j.contains("model_id") && j["model_id"].is_string()) {
            std::lock_guard lock(mu_);
            model_id_ = j["model_id"].get<std::string>();
        }
        return out;
    }

    EmbedderConfig cfg_;
    http::Endpoint ep_;
    mutable std::mutex mu_;
    std::string model_id_;
};

inline std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& cfg) {
    if (cfg.kind == EmbedderConfig::Kind::Remote) return std::make_unique<RemoteEmbedder>(cfg);
    return std::make_unique<FallbackEmbedder>(cfg.dim);
}

// One-shot convenience: embed texts with a freshly built embedder.
inline std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts, const EmbedderConfig& cfg) {
    if (texts.empty()) throw InputError("embed_batch needs at least one text");
    return make_embedder(cfg)->embed(texts);
}

}  // namespace capecgen
