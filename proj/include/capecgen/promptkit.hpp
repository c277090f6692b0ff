#pragma once

#include "capecgen/catalog.hpp"
#include "capecgen/hash.hpp"
#include "capecgen/io.hpp"
#include "capecgen/mapping.hpp"
#include "capecgen/tokenizer.hpp"

#include <algorithm>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace capecgen {

inline constexpr std::string_view kContextPlaceholder = "[insert_capec_cwes]";
inline constexpr std::string_view kLanguagePlaceholder = "[insert_programming_language]";

inline constexpr std::string_view kDefaultTemplateBody =
    "You are an expert in identifying and generating vulnerable code based on a given description. "
    "Given the CAPEC and related CWEs: [insert_capec_cwes], generate a [insert_programming_language] code "
    "snippet that embodies the main idea of the CAPEC, using the related CWEs for additional context. The code "
    "should be concise and represent the main point of the CAPEC. Also, provide a brief explanation of the "
    "code's functionality and the idea it represents. Respond in JSON format with 'code_snippet' and "
    "'description' keys.";

class PromptTemplate {
public:
    // Throws InputError unless each placeholder occurs exactly once.
    static PromptTemplate from_text(std::string body) {
        for (auto ph : {kContextPlaceholder, kLanguagePlaceholder}) {
            auto first = body.find(ph);
            if (first == std::string::npos) {
                throw InputError("prompt template is missing placeholder " + std::string(ph));
            }
            if (body.find(ph, first + 1) != std::string::npos) {
                throw InputError("prompt template repeats placeholder " + std::string(ph));
            }
        }
        PromptTemplate t;
        t.id_ = sha256_hex(body);
        t.body_ = std::move(body);
        return t;
    }

    // Loads a template file; one trailing newline is not part of the body.
    static PromptTemplate load(const std::filesystem::path& path) {
        auto text = read_file(path);
        if (!text.empty() && text.back() == '\n') text.pop_back();
        if (!text.empty() && text.back() == '\r') text.pop_back();
        return from_text(std::move(text));
    }

    static PromptTemplate default_template() { return from_text(std::string(kDefaultTemplateBody)); }

    const std::string& body() const noexcept { return body_; }
    const std::string& id() const noexcept { return id_; }

private:
    PromptTemplate() = default;
    std::string body_;
    std::string id_;
};

struct RenderedPrompt {
    std::string text;
    CapecId capec_id = 0;
    std::string language;
    std::string template_id;
    std::string context_hash;
    std::string prompt_hash;

    bool operator==(const RenderedPrompt&) const = default;
};

// Context for one CAPEC: the attack pattern first, then each selected CWE
// in selection order, blank-line separated.
//
//   CAPEC-<id>: <name>
//   Description: <description>
//
//   CWE-<id>: <name>
//   Description: <description>
//   Extended Description: <extended>      (only when present)
inline std::string build_context_block(const CapecEntry& capec, const RelatedCweSelection& selection,
                                       const CweCatalog& cwes) {
    std::string out = "CAPEC-" + std::to_string(capec.id) + ": " + capec.name + "\nDescription: " + capec.description;
    for (const auto& s : selection.selected) {
        const auto* cwe = cwes.find(s.cwe_id);
        if (!cwe) {
            throw InputError("CAPEC-" + std::to_string(capec.id) + " selects CWE-" + std::to_string(s.cwe_id) +
                             ", which is not in the CWE catalog");
        }
        out += "\n\nCWE-" + std::to_string(cwe->id) + ": " + cwe->name + "\nDescription: " + cwe->description;
        if (cwe->extended_description && !detail::blank(*cwe->extended_description)) {
            out += "\nExtended Description: " + *cwe->extended_description;
        }
    }
    return out;
}

inline RenderedPrompt render_prompt(const PromptTemplate& tmpl, std::string_view context, std::string_view language,
                                    CapecId capec_id = 0, const std::vector<std::string>& allowed_languages = {}) {
    if (language.empty()) throw InputError("target language must not be empty");
    if (!allowed_languages.empty() &&
        std::find(allowed_languages.begin(), allowed_languages.end(), language) == allowed_languages.end()) {
        throw InputError("language '" + std::string(language) + "' is not a configured target language");
    }
    // Substitute by position in the template so placeholder-like text in the
    // context is never re-expanded.
    const auto& body = tmpl.body();
    auto ctx_pos = body.find(kContextPlaceholder);
    auto lang_pos = body.find(kLanguagePlaceholder);
    if (ctx_pos == std::string::npos || lang_pos == std::string::npos) {
        throw InputError("prompt template is missing a placeholder");
    }
    struct Cut {
        std::size_t pos;
        std::size_t len;
        std::string_view with;
    };
    Cut cuts[2] = {{ctx_pos, kContextPlaceholder.size(), context}, {lang_pos, kLanguagePlaceholder.size(), language}};
    if (cuts[0].pos > cuts[1].pos) std::swap(cuts[0], cuts[1]);
    RenderedPrompt p;
    p.text.reserve(body.size() + context.size() + language.size());
    std::size_t at = 0;
    for (const auto& c : cuts) {
        p.text.append(body, at, c.pos - at);
        p.text.append(c.with);
        at = c.pos + c.len;
    }
    p.text.append(body, at);
    p.capec_id = capec_id;
    p.language = std::string(language);
    p.template_id = tmpl.id();
    p.context_hash = sha256_hex(context);
    p.prompt_hash = sha256_hex(p.text);
    return p;
}

}  // namespace capecgen
