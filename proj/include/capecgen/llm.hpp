#pragma once

// Provider-agnostic completion interface, the offline Mock provider, and
// extraction of the {"code_snippet", "description"} reply contract.

#include "capecgen/errors.hpp"
#include "capecgen/promptkit.hpp"

#include <nlohmann/json.hpp>

#include <cctype>
#include <optional>
#include <string>
#include <string_view>

namespace capecgen {

enum class ProviderKind { OpenAICompatible, AnthropicCompatible, Mock };

inline std::string_view to_string(ProviderKind k) {
    switch (k) {
        case ProviderKind::OpenAICompatible: return "openai-compatible";
        case ProviderKind::AnthropicCompatible: return "anthropic-compatible";
        case ProviderKind::Mock: return "mock";
    }
    return "mock";
}

inline ProviderKind parse_provider_kind(std::string_view s) {
    if (s == "openai-compatible" || s == "openai") return ProviderKind::OpenAICompatible;
    if (s == "anthropic-compatible" || s == "anthropic") return ProviderKind::AnthropicCompatible;
    if (s == "mock") return ProviderKind::Mock;
    throw InputError("unknown provider kind '" + std::string(s) + "'");
}

// How the Mock provider answers. Anything but Valid exists to exercise the
// rejection paths offline.
enum class MockBehavior {
    Valid,
    Malformed,               // never returns a JSON object
    MalformedUntilCorrected  // malformed unless the prompt carries the corrective suffix
};

struct RetryPolicy {
    int max_attempts = 3;
    double backoff_base_s = 1.0;
};

struct ProviderConfig {
    std::string name;  // key used on the command line (--provider)
    ProviderKind kind = ProviderKind::Mock;
    std::string endpoint;
    std::string model_id = "mock-1";
    std::string credentials_env;  // name of the environment variable holding the key
    std::optional<double> temperature;
    std::optional<int> max_output_tokens;
    double rate_limit_rpm = 60.0;
    RetryPolicy retry;
    double timeout_s = 120.0;
    MockBehavior mock_behavior = MockBehavior::Valid;
    bool debug = false;
};

struct GenerationPayload {
    std::string code_snippet;
    std::string description;

    bool operator==(const GenerationPayload&) const = default;
};

// Provider reply plus transport metadata.
struct Completion {
    std::string text;
    std::string model_id;  // as echoed by the provider
    int attempts = 1;
    double latency_ms = 0.0;
};

class Provider {
public:
    virtual ~Provider() = default;
    virtual Completion complete(const RenderedPrompt& prompt) = 0;
    virtual const ProviderConfig& config() const = 0;
};

inline constexpr std::string_view kCorrectiveSuffix =
    "\n\nYour previous reply was not valid JSON. Respond only with a JSON object that has exactly the keys "
    "'code_snippet' and 'description', both strings.";

namespace detail {

inline std::string mock_snippet(CapecId id, std::string_view language, std::string_view model_id,
                                std::string_view tag) {
    auto sid = std::to_string(id);
    std::string header = "CAPEC-" + sid + " illustration (model " + std::string(model_id) + ", context " +
                         std::string(tag) + ")";
    auto lang = Language::parse(language);
    switch (lang.kind) {
        case LanguageKind::Java:
            return "// " + header + "\npublic class Capec" + sid +
                   "Example {\n"
                   "    static String handle(String userInput) {\n"
                   "        // untrusted input reaches a sensitive sink without validation\n"
                   "        String sink = \"" + std::string(tag) + ":\" + userInput;\n"
                   "        return sink;\n"
                   "    }\n\n"
                   "    public static void main(String[] args) {\n"
                   "        System.out.println(handle(args.length > 0 ? args[0] : \"demo\"));\n"
                   "    }\n"
                   "}\n";
        case LanguageKind::JavaScript:
            return "// " + header + "\nfunction capec" + sid +
                   "Example(userInput) {\n"
                   "  // untrusted input reaches a sensitive sink without validation\n"
                   "  const sink = \"" + std::string(tag) + ":\" + userInput;\n"
                   "  return sink;\n"
                   "}\n\n"
                   "console.log(capec" + sid + "Example(\"demo\"));\n";
        case LanguageKind::Python:
        case LanguageKind::Other:
            break;
    }
    return "# " + header + "\ndef capec_" + sid +
           "_example(user_input):\n"
           "    # untrusted input reaches a sensitive sink without validation\n"
           "    sink = \"" + std::string(tag) + ":\" + user_input\n"
           "    return sink\n\n\n"
           "if __name__ == \"__main__\":\n"
           "    print(capec_" + sid + "_example(\"demo\"))\n";
}

inline bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace detail

// Offline provider: the reply is a pure function of (template_id,
// context_hash, language, model_id) and the CAPEC id.
class MockProvider final : public Provider {
public:
    explicit MockProvider(ProviderConfig cfg) : cfg_(std::move(cfg)) {}

    Completion complete(const RenderedPrompt& prompt) override {
        bool corrected = detail::ends_with(prompt.text, kCorrectiveSuffix);
        if (cfg_.mock_behavior == MockBehavior::Malformed ||
            (cfg_.mock_behavior == MockBehavior::MalformedUntilCorrected && !corrected)) {
            return {"I cannot produce JSON for CAPEC-" + std::to_string(prompt.capec_id) + " right now.",
                    cfg_.model_id, 1, 0.0};
        }
        auto tag = sha256_hex(prompt.template_id + "|" + prompt.context_hash + "|" + prompt.language + "|" +
                              cfg_.model_id)
                       .substr(0, 12);
        nlohmann::json reply{
            {"code_snippet", detail::mock_snippet(prompt.capec_id, prompt.language, cfg_.model_id, tag)},
            {"description", "Mock " + prompt.language + " illustration of CAPEC-" + std::to_string(prompt.capec_id) +
                                ": untrusted input flows into a sensitive operation without validation (" + tag +
                                ")."}};
        return {reply.dump(), cfg_.model_id, 1, 0.0};
    }

    const ProviderConfig& config() const override { return cfg_; }

private:
    ProviderConfig cfg_;
};

// ---------------------------------------------------------------------------
// Reply extraction

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline std::optional<nlohmann::json> parse_object(std::string_view s) {
    auto j = nlohmann::json::parse(s, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    return j;
}

// Body of the first ``` fenced block, minus an optional info string.
inline std::optional<std::string_view> fenced_body(std::string_view s) {
    auto open = s.find("```");
    if (open == std::string_view::npos) return std::nullopt;
    auto line_end = s.find('\n', open + 3);
    if (line_end == std::string_view::npos) return std::nullopt;
    auto close = s.find("```", line_end + 1);
    if (close == std::string_view::npos) return std::nullopt;
    return s.substr(line_end + 1, close - line_end - 1);
}

// First balanced {...} span that parses as a JSON object. String literals
// are skipped so braces inside them do not count.
inline std::optional<nlohmann::json> first_balanced_object(std::string_view s) {
    for (auto start = s.find('{'); start != std::string_view::npos; start = s.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false, escaped = false;
        for (std::size_t i = start; i < s.size(); ++i) {
            char c = s[i];
            if (in_string) {
                if (escaped) escaped = false;
                else if (c == '\\') escaped = true;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}' && --depth == 0) {
                if (auto j = parse_object(s.substr(start, i - start + 1))) return j;
                break;
            }
        }
    }
    return std::nullopt;
}

}  // namespace detail

// Accepts a bare JSON object, one inside a ``` fence, or one embedded in
// prose; the object must have exactly the string keys code_snippet and
// description, both non-blank.
inline GenerationPayload extract_payload(std::string_view raw) {
    auto text = detail::trim(raw);
    auto obj = detail::parse_object(text);
    if (!obj) {
        if (auto body = detail::fenced_body(text)) obj = detail::parse_object(detail::trim(*body));
    }
    if (!obj) obj = detail::first_balanced_object(text);
    if (!obj) throw FormatError("no JSON object found in model reply", std::string(raw));

    GenerationPayload p;
    for (const char* key : {"code_snippet", "description"}) {
        auto it = obj->find(key);
        if (it == obj->end()) throw SchemaError(std::string("missing key '") + key + "'", key);
        if (!it->is_string()) throw SchemaError(std::string("key '") + key + "' must be a string", key);
        auto value = it->get<std::string>();
        if (detail::trim(value).empty()) throw SchemaError(std::string("key '") + key + "' is blank", key);
        (std::string_view(key) == "code_snippet" ? p.code_snippet : p.description) = std::move(value);
    }
    for (const auto& [key, value] : obj->items()) {
        if (key != "code_snippet" && key != "description") {
            throw SchemaError("unexpected key '" + key + "'", key);
        }
    }
    return p;
}

inline std::string serialize_payload(const GenerationPayload& p) {
    return nlohmann::json{{"code_snippet", p.code_snippet}, {"description", p.description}}.dump();
}

}  // namespace capecgen
