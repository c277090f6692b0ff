#pragma once

// Run configuration loaded from JSON. Relative paths resolve against the
// directory of the config file.

#include "capecgen/embedding.hpp"
#include "capecgen/errors.hpp"
#include "capecgen/io.hpp"
#include "capecgen/llm.hpp"
#include "capecgen/tokenizer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace capecgen {

struct Config {
    std::filesystem::path capec_path;
    std::filesystem::path cwe_path;
    std::size_t k = 5;
    TokenizerScheme tokenizer = TokenizerScheme::Whitespace;
    EmbedderConfig text_embedder;  // CAPEC/CWE mapping
    EmbedderConfig code_embedder;  // dataset similarity
    std::vector<ProviderConfig> providers;
    std::vector<std::string> languages{"Java", "Python", "JavaScript"};
    std::filesystem::path output_dir = "out";
    std::size_t max_in_flight = 4;
    std::optional<std::filesystem::path> prompt_template;
    std::optional<std::string> dataset_id;

    const ProviderConfig& provider(std::string_view name) const {
        for (const auto& p : providers) {
            if (p.name == name) return p;
        }
        std::string known;
        for (const auto& p : providers) known += " " + p.name;
        throw InputError("no provider named '" + std::string(name) + "' in config (known:" + known + ")");
    }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj, std::string_view where,
                                std::initializer_list<std::string_view> allowed) {
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || key == a;
        if (!ok) throw InputError("config: unknown key '" + key + "' in " + std::string(where));
    }
}

inline MockBehavior parse_mock_behavior(std::string_view s) {
    if (s == "valid") return MockBehavior::Valid;
    if (s == "malformed") return MockBehavior::Malformed;
    if (s == "malformed-until-corrected") return MockBehavior::MalformedUntilCorrected;
    throw InputError("config: unknown mock_behavior '" + std::string(s) + "'");
}

inline ProviderConfig parse_provider(const nlohmann::json& j) {
    reject_unknown_keys(j, "providers[]",
                        {"name", "kind", "endpoint", "model_id", "credentials_env", "temperature", "max_output_tokens",
                         "rate_limit_rpm", "max_attempts", "backoff_base_s", "timeout_s", "mock_behavior", "debug"});
    ProviderConfig p;
    p.name = j.at("name").get<std::string>();
    p.kind = parse_provider_kind(j.at("kind").get<std::string>());
    p.endpoint = j.value("endpoint", "");
    p.model_id = j.value("model_id", p.model_id);
    p.credentials_env = j.value("credentials_env", "");
    if (j.contains("temperature")) p.temperature = j.at("temperature").get<double>();
    if (j.contains("max_output_tokens")) p.max_output_tokens = j.at("max_output_tokens").get<int>();
    p.rate_limit_rpm = j.value("rate_limit_rpm", p.rate_limit_rpm);
    p.retry.max_attempts = j.value("max_attempts", p.retry.max_attempts);
    p.retry.backoff_base_s = j.value("backoff_base_s", p.retry.backoff_base_s);
    p.timeout_s = j.value("timeout_s", p.timeout_s);
    p.mock_behavior = parse_mock_behavior(j.value("mock_behavior", "valid"));
    p.debug = j.value("debug", false);
    if (p.kind != ProviderKind::Mock && p.endpoint.empty()) {
        throw InputError("config: provider '" + p.name + "' needs an endpoint");
    }
    return p;
}

inline EmbedderConfig parse_embedder(const nlohmann::json& j, ModelSlot slot) {
    EmbedderConfig e;
    e.slot = slot;
    auto kind = j.value("kind", "fallback");
    if (kind == "fallback") e.kind = EmbedderConfig::Kind::Fallback;
    else if (kind == "remote") e.kind = EmbedderConfig::Kind::Remote;
    else throw InputError("config: embedder.kind must be 'fallback' or 'remote'");
    e.dim = j.value("dim", e.dim);
    e.endpoint = j.value("endpoint", "");
    e.batch_size = j.value("batch_size", e.batch_size);
    e.max_in_flight = j.value("max_in_flight", e.max_in_flight);
    e.timeout_s = j.value("timeout_s", e.timeout_s);
    e.max_attempts = j.value("max_attempts", e.max_attempts);
    if (e.kind == EmbedderConfig::Kind::Remote && e.endpoint.empty()) {
        throw InputError("config: remote embedder needs an endpoint");
    }
    return e;
}

}  // namespace detail

inline Config parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    if (!j.is_object()) throw InputError("config: top level must be an object");
    detail::reject_unknown_keys(j, "config",
                                {"catalogs", "mapping", "embedder", "providers", "languages", "output_dir",
                                 "concurrency", "prompt_template", "dataset_id"});
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    };
    Config c;
    try {
        if (j.contains("catalogs")) {
            const auto& cat = j.at("catalogs");
            detail::reject_unknown_keys(cat, "catalogs", {"capec_path", "cwe_path"});
            if (cat.contains("capec_path")) c.capec_path = resolve(cat.at("capec_path").get<std::string>());
            if (cat.contains("cwe_path")) c.cwe_path = resolve(cat.at("cwe_path").get<std::string>());
        }
        if (j.contains("mapping")) {
            const auto& m = j.at("mapping");
            detail::reject_unknown_keys(m, "mapping", {"k", "tokenizer"});
            c.k = m.value("k", c.k);
            c.tokenizer = parse_tokenizer_scheme(m.value("tokenizer", "whitespace"));
        }
        if (c.k == 0) throw InputError("config: mapping.k must be at least 1");
        if (j.contains("embedder")) {
            const auto& e = j.at("embedder");
            detail::reject_unknown_keys(e, "embedder",
                                        {"kind", "dim", "endpoint", "batch_size", "max_in_flight", "timeout_s",
                                         "max_attempts"});
            c.text_embedder = detail::parse_embedder(e, ModelSlot::Text);
            c.code_embedder = detail::parse_embedder(e, ModelSlot::Code);
        } else {
            c.code_embedder.slot = ModelSlot::Code;
        }
        if (j.contains("providers")) {
            std::set<std::string> names;
            for (const auto& p : j.at("providers")) {
                c.providers.push_back(detail::parse_provider(p));
                if (!names.insert(c.providers.back().name).second) {
                    throw InputError("config: duplicate provider name '" + c.providers.back().name + "'");
                }
            }
        }
        if (j.contains("languages")) c.languages = j.at("languages").get<std::vector<std::string>>();
        for (auto& l : c.languages) l = Language::parse(l).name();
        if (j.contains("output_dir")) c.output_dir = resolve(j.at("output_dir").get<std::string>());
        if (j.contains("concurrency")) {
            detail::reject_unknown_keys(j.at("concurrency"), "concurrency", {"max_in_flight"});
            c.max_in_flight = j.at("concurrency").value("max_in_flight", c.max_in_flight);
        }
        if (c.max_in_flight == 0) throw InputError("config: concurrency.max_in_flight must be at least 1");
        if (j.contains("prompt_template")) c.prompt_template = resolve(j.at("prompt_template").get<std::string>());
        if (j.contains("dataset_id")) c.dataset_id = j.at("dataset_id").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("config: ") + e.what());
    }
    return c;
}

inline Config load_config(const std::filesystem::path& path) {
    auto j = nlohmann::json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw InputError(path.string() + ": not valid JSON");
    return parse_config(j, path.parent_path());
}

}  // namespace capecgen
