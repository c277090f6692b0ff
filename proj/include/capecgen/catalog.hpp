#pragma once

// Typed views of the MITRE CAPEC (v3.x) and CWE (v4.x) XML catalogs, plus
// code-availability statistics over them.

#include "capecgen/errors.hpp"
#include "capecgen/xml.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace capecgen {

using CapecId = std::uint32_t;
using CweId = std::uint32_t;

enum class CatalogKind { Capec, Cwe };

enum class StatusKind { Stable, Draft, Deprecated, Obsolete, Other };

struct Status {
    StatusKind kind = StatusKind::Other;
    std::string label;  // raw catalog value, e.g. "Incomplete"

    static Status from_label(std::string_view s) {
        Status st{StatusKind::Other, std::string(s)};
        if (s == "Stable") st.kind = StatusKind::Stable;
        else if (s == "Draft") st.kind = StatusKind::Draft;
        else if (s == "Deprecated") st.kind = StatusKind::Deprecated;
        else if (s == "Obsolete") st.kind = StatusKind::Obsolete;
        return st;
    }

    bool retired() const noexcept { return kind == StatusKind::Deprecated || kind == StatusKind::Obsolete; }

    bool operator==(const Status&) const = default;
};

enum class LanguageKind { Java, JavaScript, Python, Other };

// Canonical language tag. Java/JavaScript/Python are recognised
// case-insensitively; everything else keeps its original spelling.
struct Language {
    LanguageKind kind = LanguageKind::Other;
    std::string other;

    static Language parse(std::string_view s) {
        std::string lower;
        for (char c : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        if (lower == "java") return {LanguageKind::Java, {}};
        if (lower == "javascript") return {LanguageKind::JavaScript, {}};
        if (lower == "python") return {LanguageKind::Python, {}};
        return {LanguageKind::Other, std::string(s)};
    }

    std::string name() const {
        switch (kind) {
            case LanguageKind::Java: return "Java";
            case LanguageKind::JavaScript: return "JavaScript";
            case LanguageKind::Python: return "Python";
            case LanguageKind::Other: break;
        }
        return other;
    }

    auto operator<=>(const Language&) const = default;
};

struct CatalogEntry {
    std::uint32_t id = 0;
    std::string name;
    std::string description;
    std::optional<std::string> extended_description;
    std::set<Language> example_languages;
    Status status;
    // Example code blocks seen in document order; language of the first one,
    // when tagged. Used by the availability statistics.
    std::size_t code_blocks = 0;
    std::optional<Language> first_code_language;

    bool operator==(const CatalogEntry&) const = default;
};

struct CweEntry : CatalogEntry {
    bool operator==(const CweEntry&) const = default;
};

struct CapecEntry : CatalogEntry {
    std::vector<CweId> related_cwe_ids;  // catalog order, deduplicated

    bool operator==(const CapecEntry&) const = default;
};

// An entry the parser could not accept; the rest of the catalog still loads.
struct Reject {
    std::size_t offset = 0;
    std::string id;  // raw ID attribute, possibly empty
    std::string reason;

    bool operator==(const Reject&) const = default;
};

template <class Entry>
struct Catalog {
    CatalogKind kind;
    std::string version;
    std::map<std::uint32_t, Entry> entries;
    std::vector<Reject> rejects;

    const Entry* find(std::uint32_t id) const noexcept {
        auto it = entries.find(id);
        return it == entries.end() ? nullptr : &it->second;
    }

    const Entry& at(std::uint32_t id) const {
        auto it = entries.find(id);
        if (it == entries.end()) {
            throw InputError(std::string(kind == CatalogKind::Capec ? "CAPEC-" : "CWE-") + std::to_string(id) +
                             " not in catalog");
        }
        return it->second;
    }

    std::size_t size() const noexcept { return entries.size(); }
    bool empty() const noexcept { return entries.empty(); }

    bool operator==(const Catalog&) const = default;
};

using CapecCatalog = Catalog<CapecEntry>;
using CweCatalog = Catalog<CweEntry>;

namespace detail {

inline bool is_block_element(std::string_view local) {
    static constexpr std::string_view kBlocks[] = {"p",  "div", "br", "li", "ul", "ol", "table", "tr", "td", "th",
                                                   "pre", "h1", "h2", "h3", "h4", "h5", "h6", "blockquote"};
    return std::find(std::begin(kBlocks), std::end(kBlocks), local) != std::end(kBlocks);
}

inline void collect_text(const xml::Node& node, std::string& out) {
    for (const auto& c : node.children) {
        if (c.is_text) {
            out += c.text;
            continue;
        }
        bool block = is_block_element(c.local_name());
        if (block) out.push_back(' ');
        collect_text(c, out);
        if (block) out.push_back(' ');
    }
}

inline std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : s) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(c);
    }
    return out;
}

inline std::optional<std::uint32_t> parse_id(std::string_view s) {
    if (s.empty() || s.size() > 9) return std::nullopt;
    std::uint32_t v = 0;
    for (char c : s) {
        if (c < '0' || c > '9') return std::nullopt;
        v = v * 10 + static_cast<std::uint32_t>(c - '0');
    }
    if (v == 0) return std::nullopt;
    return v;
}

// Registers one code block found under an example section.
inline void note_code_block(CatalogEntry& entry, const xml::Node& block) {
    std::optional<Language> lang;
    if (auto l = block.attr("Language"); l && !l->empty()) {
        lang = Language::parse(*l);
        entry.example_languages.insert(*lang);
    }
    if (entry.code_blocks == 0) entry.first_code_language = lang;
    ++entry.code_blocks;
}

inline bool is_code_element(const xml::Node& n) {
    auto local = n.local_name();
    return local == "Example_Code" || local == "code" || local == "pre";
}

// Visits code blocks in document order, not descending into a code block
// once found (a <pre> inside Example_Code is one block, not two).
inline void scan_code_blocks(CatalogEntry& entry, const xml::Node& section) {
    for (const auto& c : section.children) {
        if (c.is_text) continue;
        if (is_code_element(c)) {
            note_code_block(entry, c);
        } else {
            scan_code_blocks(entry, c);
        }
    }
}

// Fills the fields shared by both entry kinds. Returns a reject reason on
// failure, or an empty string.
inline std::string fill_common(CatalogEntry& e, const xml::Node& node) {
    auto id_attr = node.attr("ID");
    if (!id_attr) return "missing ID attribute";
    auto id = parse_id(*id_attr);
    if (!id) return "invalid ID attribute '" + std::string(*id_attr) + "'";
    auto name = node.attr("Name");
    if (!name || name->empty()) return "missing Name attribute";
    e.id = *id;
    e.name = collapse_whitespace(*name);
    e.status = Status::from_label(node.attr("Status").value_or(""));
    if (const auto* d = node.child("Description")) {
        std::string raw;
        collect_text(*d, raw);
        e.description = collapse_whitespace(raw);
    }
    if (const auto* d = node.child("Extended_Description")) {
        std::string raw;
        collect_text(*d, raw);
        auto flat = collapse_whitespace(raw);
        if (!flat.empty()) e.extended_description = std::move(flat);
    }
    if (e.description.empty() && !e.status.retired()) return "empty Description on active entry";
    return {};
}

template <class Entry>
void insert_entry(Catalog<Entry>& cat, Entry&& e, const xml::Node& node) {
    if (cat.entries.count(e.id)) {
        cat.rejects.push_back({node.offset, std::to_string(e.id), "duplicate ID"});
        return;
    }
    auto id = e.id;
    cat.entries.emplace(id, std::move(e));
}

inline const xml::Node& expect_root(const xml::Document& doc, std::string_view local) {
    if (doc.root.local_name() != local) {
        throw XmlError("expected root element <" + std::string(local) + ">, found <" + doc.root.name + ">",
                       doc.root.offset);
    }
    return doc.root;
}

}  // namespace detail

// Parses a CAPEC v3.x Attack_Pattern_Catalog. Entry-level problems land in
// `rejects`; only document-level problems throw.
inline CapecCatalog parse_capec_catalog(std::string_view raw) {
    auto doc = xml::parse(raw);
    const auto& root = detail::expect_root(doc, "Attack_Pattern_Catalog");
    CapecCatalog cat{CatalogKind::Capec, std::string(root.attr("Version").value_or("")), {}, {}};
    const auto* patterns = root.child("Attack_Patterns");
    if (!patterns) return cat;
    for (const auto* node : patterns->elements("Attack_Pattern")) {
        CapecEntry e;
        if (auto why = detail::fill_common(e, *node); !why.empty()) {
            cat.rejects.push_back({node->offset, std::string(node->attr("ID").value_or("")), why});
            continue;
        }
        if (const auto* rw = node->child("Related_Weaknesses")) {
            bool bad = false;
            for (const auto* w : rw->elements("Related_Weakness")) {
                auto cwe = detail::parse_id(w->attr("CWE_ID").value_or(""));
                if (!cwe) {
                    cat.rejects.push_back({w->offset, std::to_string(e.id), "invalid CWE_ID on Related_Weakness"});
                    bad = true;
                    break;
                }
                if (std::find(e.related_cwe_ids.begin(), e.related_cwe_ids.end(), *cwe) == e.related_cwe_ids.end()) {
                    e.related_cwe_ids.push_back(*cwe);
                }
            }
            if (bad) continue;
        }
        if (const auto* ex = node->child("Example_Instances")) detail::scan_code_blocks(e, *ex);
        detail::insert_entry(cat, std::move(e), *node);
    }
    return cat;
}

// Parses a CWE v4.x Weakness_Catalog (Weakness elements only; categories
// and views are skipped).
inline CweCatalog parse_cwe_catalog(std::string_view raw) {
    auto doc = xml::parse(raw);
    const auto& root = detail::expect_root(doc, "Weakness_Catalog");
    CweCatalog cat{CatalogKind::Cwe, std::string(root.attr("Version").value_or("")), {}, {}};
    const auto* weaknesses = root.child("Weaknesses");
    if (!weaknesses) return cat;
    for (const auto* node : weaknesses->elements("Weakness")) {
        CweEntry e;
        if (auto why = detail::fill_common(e, *node); !why.empty()) {
            cat.rejects.push_back({node->offset, std::string(node->attr("ID").value_or("")), why});
            continue;
        }
        if (const auto* demos = node->child("Demonstrative_Examples")) detail::scan_code_blocks(e, *demos);
        detail::insert_entry(cat, std::move(e), *node);
    }
    return cat;
}

// Copy of the catalog without Deprecated/Obsolete entries.
template <class Entry>
Catalog<Entry> filter_active(const Catalog<Entry>& catalog) {
    Catalog<Entry> out{catalog.kind, catalog.version, {}, catalog.rejects};
    for (const auto& [id, e] : catalog.entries) {
        if (!e.status.retired()) out.entries.emplace(id, e);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Code availability

enum class LanguageRule {
    FirstCodeBlock,  // an entry counts for the language of its first code block
    AnyCodeBlock,    // an entry counts for every language among its code blocks
};

inline std::string_view to_string(LanguageRule r) {
    return r == LanguageRule::FirstCodeBlock ? "first-code-block" : "any-code-block";
}

struct AvailabilityOptions {
    LanguageRule rule = LanguageRule::FirstCodeBlock;
    // CAPEC only: an attack pattern also "has code" when a MITRE-linked CWE does.
    bool capec_include_linked_cwes = true;
};

struct AvailabilityReport {
    CatalogKind kind = CatalogKind::Cwe;
    std::size_t total = 0;
    std::size_t with_code = 0;
    double any_language_pct = 0.0;
    std::map<std::string, std::size_t> per_language_count;
    std::map<std::string, double> per_language_pct;
    std::map<std::string, std::string> metadata;
};

namespace detail {

struct CodeFacts {
    bool has_code = false;
    std::set<Language> languages;  // languages the entry counts toward
};

inline CodeFacts own_facts(const CatalogEntry& e, LanguageRule rule) {
    CodeFacts f;
    f.has_code = e.code_blocks > 0;
    if (rule == LanguageRule::AnyCodeBlock) {
        f.languages = e.example_languages;
    } else if (e.first_code_language) {
        f.languages.insert(*e.first_code_language);
    }
    return f;
}

inline AvailabilityReport tally(CatalogKind kind, const std::vector<CodeFacts>& facts,
                                const std::vector<Language>& languages, const AvailabilityOptions& opts) {
    AvailabilityReport r;
    r.kind = kind;
    r.total = facts.size();
    for (const auto& l : languages) r.per_language_count[l.name()] = 0;
    for (const auto& f : facts) {
        if (f.has_code) ++r.with_code;
        for (const auto& l : languages) {
            if (f.languages.count(l)) ++r.per_language_count[l.name()];
        }
    }
    auto n = static_cast<double>(r.total);
    r.any_language_pct = static_cast<double>(r.with_code) / n;
    for (const auto& [name, count] : r.per_language_count) r.per_language_pct[name] = static_cast<double>(count) / n;
    r.metadata["language_rule"] = std::string(to_string(opts.rule));
    return r;
}

}  // namespace detail

inline AvailabilityReport code_availability(const CweCatalog& cwes, const std::vector<Language>& languages,
                                            const AvailabilityOptions& opts = {}) {
    if (cwes.empty()) throw InputError("code availability needs a non-empty catalog");
    std::vector<detail::CodeFacts> facts;
    facts.reserve(cwes.size());
    for (const auto& [id, e] : cwes.entries) facts.push_back(detail::own_facts(e, opts.rule));
    auto r = detail::tally(CatalogKind::Cwe, facts, languages, opts);
    r.metadata["catalog_version"] = cwes.version;
    return r;
}

// CAPEC availability. When `linked` is given and the option is on, an
// attack pattern without code of its own borrows from its MITRE-linked
// CWEs (in catalog order: the first linked CWE with code decides the
// language under FirstCodeBlock; all linked CWE languages count under
// AnyCodeBlock).
inline AvailabilityReport code_availability(const CapecCatalog& capecs, const std::vector<Language>& languages,
                                            const CweCatalog* linked, const AvailabilityOptions& opts = {}) {
    if (capecs.empty()) throw InputError("code availability needs a non-empty catalog");
    bool use_linked = linked != nullptr && opts.capec_include_linked_cwes;
    std::vector<detail::CodeFacts> facts;
    facts.reserve(capecs.size());
    for (const auto& [id, e] : capecs.entries) {
        auto f = detail::own_facts(e, opts.rule);
        bool first_rule = opts.rule == LanguageRule::FirstCodeBlock;
        if (use_linked && !(first_rule && f.has_code)) {
            for (CweId cwe_id : e.related_cwe_ids) {
                const auto* cwe = linked->find(cwe_id);
                if (!cwe || cwe->code_blocks == 0) continue;
                f.has_code = true;
                if (!first_rule) {
                    f.languages.insert(cwe->example_languages.begin(), cwe->example_languages.end());
                    continue;
                }
                if (cwe->first_code_language) f.languages.insert(*cwe->first_code_language);
                break;
            }
        }
        facts.push_back(std::move(f));
    }
    auto r = detail::tally(CatalogKind::Capec, facts, languages, opts);
    r.metadata["catalog_version"] = capecs.version;
    r.metadata["capec_has_code"] = use_linked ? "own-examples-or-linked-cwe-examples" : "own-examples-only";
    return r;
}

// ---------------------------------------------------------------------------
// Record serialization (JSON) for parsed catalogs.

inline void to_json(nlohmann::json& j, const Language& l) { j = l.name(); }
inline void from_json(const nlohmann::json& j, Language& l) { l = Language::parse(j.get<std::string>()); }

inline void to_json(nlohmann::json& j, const CatalogEntry& e) {
    j = nlohmann::json{{"id", e.id},
                       {"name", e.name},
                       {"description", e.description},
                       {"status", e.status.label},
                       {"example_languages", e.example_languages},
                       {"code_blocks", e.code_blocks}};
    j["extended_description"] = e.extended_description ? nlohmann::json(*e.extended_description) : nlohmann::json();
    j["first_code_language"] = e.first_code_language ? nlohmann::json(*e.first_code_language) : nlohmann::json();
}

inline void from_json(const nlohmann::json& j, CatalogEntry& e) {
    e.id = j.at("id").get<std::uint32_t>();
    e.name = j.at("name").get<std::string>();
    e.description = j.at("description").get<std::string>();
    e.status = Status::from_label(j.at("status").get<std::string>());
    e.example_languages = j.at("example_languages").get<std::set<Language>>();
    e.code_blocks = j.at("code_blocks").get<std::size_t>();
    e.extended_description.reset();
    if (const auto& x = j.at("extended_description"); !x.is_null()) e.extended_description = x.get<std::string>();
    e.first_code_language.reset();
    if (const auto& x = j.at("first_code_language"); !x.is_null()) e.first_code_language = x.get<Language>();
}

inline void to_json(nlohmann::json& j, const CweEntry& e) { to_json(j, static_cast<const CatalogEntry&>(e)); }
inline void from_json(const nlohmann::json& j, CweEntry& e) { from_json(j, static_cast<CatalogEntry&>(e)); }

inline void to_json(nlohmann::json& j, const CapecEntry& e) {
    to_json(j, static_cast<const CatalogEntry&>(e));
    j["related_cwe_ids"] = e.related_cwe_ids;
}
inline void from_json(const nlohmann::json& j, CapecEntry& e) {
    from_json(j, static_cast<CatalogEntry&>(e));
    e.related_cwe_ids = j.at("related_cwe_ids").get<std::vector<CweId>>();
}

inline void to_json(nlohmann::json& j, const Reject& r) {
    j = nlohmann::json{{"offset", r.offset}, {"id", r.id}, {"reason", r.reason}};
}
inline void from_json(const nlohmann::json& j, Reject& r) {
    r.offset = j.at("offset").get<std::size_t>();
    r.id = j.at("id").get<std::string>();
    r.reason = j.at("reason").get<std::string>();
}

template <class Entry>
nlohmann::json catalog_to_json(const Catalog<Entry>& c) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [id, e] : c.entries) entries.push_back(e);
    return {{"kind", c.kind == CatalogKind::Capec ? "CAPEC" : "CWE"},
            {"version", c.version},
            {"entries", std::move(entries)},
            {"rejects", c.rejects}};
}

template <class Entry>
Catalog<Entry> catalog_from_json(const nlohmann::json& j) {
    Catalog<Entry> c;
    auto kind = j.at("kind").get<std::string>();
    c.kind = kind == "CAPEC" ? CatalogKind::Capec : CatalogKind::Cwe;
    c.version = j.at("version").get<std::string>();
    for (const auto& e : j.at("entries")) {
        auto entry = e.get<Entry>();
        c.entries.emplace(entry.id, std::move(entry));
    }
    c.rejects = j.at("rejects").get<std::vector<Reject>>();
    return c;
}

inline nlohmann::json to_json(const AvailabilityReport& r) {
    return {{"kind", r.kind == CatalogKind::Capec ? "CAPEC" : "CWE"},
            {"total", r.total},
            {"with_code", r.with_code},
            {"any_language_pct", r.any_language_pct},
            {"per_language_count", r.per_language_count},
            {"per_language_pct", r.per_language_pct},
            {"metadata", r.metadata}};
}

}  // namespace capecgen
