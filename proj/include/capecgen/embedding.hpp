#pragma once

#include "capecgen/errors.hpp"
#include "capecgen/hash.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace capecgen {

struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dim() const noexcept { return values.size(); }
    bool operator==(const EmbeddingVector&) const = default;
};

enum class ModelSlot { Text, Code };

inline std::string_view to_string(ModelSlot s) { return s == ModelSlot::Text ? "text" : "code"; }

struct EmbedderConfig {
    enum class Kind { Fallback, Remote };

    Kind kind = Kind::Fallback;
    ModelSlot slot = ModelSlot::Text;
    std::size_t dim = 256;  // Fallback only
    std::string endpoint;   // Remote only, e.g. "http://127.0.0.1:8089"
    std::size_t batch_size = 64;
    std::size_t max_in_flight = 2;
    double timeout_s = 60.0;
    int max_attempts = 3;
};

inline constexpr std::size_t kMinFallbackDim = 16;

// Signed hashed bag of tokens. Tokens are maximal runs of ASCII letters and
// digits (bytes >= 0x80 also count as token characters so UTF-8 words stay
// whole), lowercased. Each token adds +1 or -1 (bit 63 of its FNV-1a hash)
// at index hash mod dim; the result is L2-normalised unless all zero.
inline EmbeddingVector fallback_embed(std::string_view text, std::size_t dim) {
    if (dim < kMinFallbackDim) throw InputError("fallback embedding dim must be >= 16");
    EmbeddingVector v{std::vector<double>(dim, 0.0)};
    std::string token;
    auto flush = [&] {
        if (token.empty()) return;
        auto h = fnv1a64(token);
        v.values[h % dim] += (h >> 63) ? -1.0 : 1.0;
        token.clear();
    };
    for (char c : text) {
        auto u = static_cast<unsigned char>(c);
        if (u >= 'A' && u <= 'Z') {
            token.push_back(static_cast<char>(u - 'A' + 'a'));
        } else if ((u >= 'a' && u <= 'z') || (u >= '0' && u <= '9') || u >= 0x80) {
            token.push_back(c);
        } else {
            flush();
        }
    }
    flush();
    double norm_sq = 0.0;
    for (double x : v.values) norm_sq += x * x;
    if (norm_sq > 0.0) {
        double norm = std::sqrt(norm_sq);
        for (double& x : v.values) x /= norm;
    }
    return v;
}

// Cosine of the angle between a and b; 0 when either vector is zero.
inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) {
        throw InputError("cosine_similarity: dimension mismatch (" + std::to_string(a.dim()) + " vs " +
                         std::to_string(b.dim()) + ")");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

class Embedder {
public:
    virtual ~Embedder() = default;
    // One vector per input, same order, common dim.
    virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) = 0;
    virtual std::string model_id() const = 0;
};

class FallbackEmbedder final : public Embedder {
public:
    explicit FallbackEmbedder(std::size_t dim) : dim_(dim) {
        if (dim < kMinFallbackDim) throw InputError("fallback embedding dim must be >= 16");
    }

    std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override {
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(fallback_embed(t, dim_));
        return out;
    }

    std::string model_id() const override { return "fallback-fnv1a-" + std::to_string(dim_); }

private:
    std::size_t dim_;
};

}  // namespace capecgen
