#pragma once

// CAPEC -> related CWE selection: semantic ranking of weaknesses against an
// attack pattern and the MITRE-links-first top-up rule.

#include "capecgen/catalog.hpp"
#include "capecgen/embedding.hpp"
#include "capecgen/tokenizer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace capecgen {

namespace detail {
inline bool blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}
}  // namespace detail

// Name and description only; the extended description is left out.
inline std::string capec_text(const CapecEntry& e) { return e.name + ". " + e.description; }

inline std::string cwe_text(const CweEntry& e) {
    std::string t = e.name + ". " + e.description;
    if (e.extended_description && !detail::blank(*e.extended_description)) t += " " + *e.extended_description;
    return t;
}

struct RankedCwe {
    CweId cwe_id = 0;
    double score = 0.0;

    bool operator==(const RankedCwe&) const = default;
};

// Descending score, ties by ascending id.
inline void sort_ranking(std::vector<RankedCwe>& r) {
    std::sort(r.begin(), r.end(), [](const RankedCwe& a, const RankedCwe& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.cwe_id < b.cwe_id;
    });
}

// Embeddings of every active CWE, computed once and reused for each CAPEC.
class CweIndex {
public:
    CweIndex(const CweCatalog& cwes, Embedder& embedder) : embedder_(&embedder) {
        std::vector<std::string> texts;
        for (const auto& [id, e] : cwes.entries) {
            if (e.status.retired()) continue;
            ids_.push_back(id);
            texts.push_back(cwe_text(e));
        }
        if (!texts.empty()) vectors_ = embedder.embed(texts);
    }

    std::vector<RankedCwe> rank(const CapecEntry& capec) const {
        std::vector<RankedCwe> out;
        if (ids_.empty()) return out;
        std::vector<std::string> query{capec_text(capec)};
        auto q = embedder_->embed(query).front();
        out.reserve(ids_.size());
        for (std::size_t i = 0; i < ids_.size(); ++i) out.push_back({ids_[i], cosine_similarity(q, vectors_[i])});
        sort_ranking(out);
        return out;
    }

    std::size_t size() const noexcept { return ids_.size(); }

private:
    Embedder* embedder_;
    std::vector<CweId> ids_;
    std::vector<EmbeddingVector> vectors_;
};

// Scores every active CWE against the CAPEC.
inline std::vector<RankedCwe> rank_cwes(const CapecEntry& capec, const CweCatalog& cwes, Embedder& embedder) {
    return CweIndex(cwes, embedder).rank(capec);
}

enum class Provenance { MitreLink, SimilarityAdded };

inline std::string_view to_string(Provenance p) {
    return p == Provenance::MitreLink ? "mitre-link" : "similarity-added";
}

struct SelectedCwe {
    CweId cwe_id = 0;
    Provenance provenance = Provenance::MitreLink;
    std::optional<double> score;

    bool operator==(const SelectedCwe&) const = default;
};

struct RelatedCweSelection {
    CapecId capec_id = 0;
    std::vector<SelectedCwe> selected;
    std::size_t threshold_k = 5;
    bool short_of_k = false;  // fewer than k distinct CWEs were available

    std::vector<CweId> ids() const {
        std::vector<CweId> out;
        out.reserve(selected.size());
        for (const auto& s : selected) out.push_back(s.cwe_id);
        return out;
    }

    bool operator==(const RelatedCweSelection&) const = default;
};

// All MITRE-linked CWEs in catalog order; when there are fewer than k of
// them, top up with the best-ranked CWEs not already present until k.
inline RelatedCweSelection select_related_cwes(const CapecEntry& capec, const std::vector<RankedCwe>& ranking,
                                               std::size_t k = 5) {
    if (k == 0) throw InputError("selection threshold k must be >= 1");
    RelatedCweSelection sel;
    sel.capec_id = capec.id;
    sel.threshold_k = k;
    std::set<CweId> taken;
    for (CweId id : capec.related_cwe_ids) {
        if (!taken.insert(id).second) continue;
        std::optional<double> score;
        for (const auto& r : ranking) {
            if (r.cwe_id == id) {
                score = r.score;
                break;
            }
        }
        sel.selected.push_back({id, Provenance::MitreLink, score});
    }
    if (sel.selected.size() >= k) return sel;
    for (const auto& r : ranking) {
        if (sel.selected.size() >= k) break;
        if (!taken.insert(r.cwe_id).second) continue;
        sel.selected.push_back({r.cwe_id, Provenance::SimilarityAdded, r.score});
    }
    sel.short_of_k = sel.selected.size() < k;
    return sel;
}

// Selections for every CAPEC in `capecs`. CAPECs already holding >= k MITRE
// links skip ranking entirely; the rest are ranked against active CWEs.
inline std::map<CapecId, RelatedCweSelection> select_all(const CapecCatalog& capecs, const CweCatalog& cwes,
                                                         Embedder& embedder, std::size_t k) {
    std::map<CapecId, RelatedCweSelection> out;
    std::optional<CweIndex> index;
    for (const auto& [id, capec] : capecs.entries) {
        if (capec.related_cwe_ids.size() >= k) {
            out.emplace(id, select_related_cwes(capec, {}, k));
            continue;
        }
        if (!index) index.emplace(cwes, embedder);
        out.emplace(id, select_related_cwes(capec, index->rank(capec), k));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Token report

struct TokenSummary {
    std::size_t min = 0;
    double mean = 0.0;
    double median = 0.0;
    std::size_t max = 0;
};

struct TokenCounts {
    CapecId capec_id = 0;
    std::size_t capec_only = 0;
    std::size_t capec_plus_all_mitre = 0;
    std::size_t capec_plus_selected = 0;
};

struct TokenReport {
    std::vector<TokenCounts> per_capec;  // ascending capec id
    TokenSummary capec_only, capec_plus_all_mitre, capec_plus_selected;
    std::size_t unresolved_links = 0;  // MITRE links absent from the CWE catalog
    std::string tokenizer;
};

namespace detail {
inline TokenSummary summarize(std::vector<std::size_t> v) {
    TokenSummary s;
    if (v.empty()) return s;
    std::sort(v.begin(), v.end());
    s.min = v.front();
    s.max = v.back();
    s.mean = static_cast<double>(std::accumulate(v.begin(), v.end(), std::size_t{0})) / static_cast<double>(v.size());
    auto n = v.size();
    s.median = n % 2 ? static_cast<double>(v[n / 2]) : (static_cast<double>(v[n / 2 - 1]) + static_cast<double>(v[n / 2])) / 2.0;
    return s;
}
}  // namespace detail

inline TokenReport token_count_report(const CapecCatalog& capecs, const CweCatalog& cwes,
                                      const std::map<CapecId, RelatedCweSelection>& selections,
                                      TokenizerScheme scheme = TokenizerScheme::Whitespace) {
    TokenReport rep;
    rep.tokenizer = std::string(to_string(scheme));
    std::vector<std::size_t> a, b, c;
    auto cwe_tokens = [&](CweId id) -> std::optional<std::size_t> {
        const auto* e = cwes.find(id);
        if (!e) return std::nullopt;
        return count_tokens(cwe_text(*e), scheme);
    };
    for (const auto& [id, capec] : capecs.entries) {
        auto it = selections.find(id);
        if (it == selections.end()) throw InputError("no CWE selection for CAPEC-" + std::to_string(id));
        TokenCounts tc;
        tc.capec_id = id;
        tc.capec_only = count_tokens(capec_text(capec), scheme);
        tc.capec_plus_all_mitre = tc.capec_only;
        for (CweId w : capec.related_cwe_ids) {
            if (auto n = cwe_tokens(w)) tc.capec_plus_all_mitre += *n;
            else ++rep.unresolved_links;
        }
        tc.capec_plus_selected = tc.capec_only;
        for (const auto& s : it->second.selected) {
            if (auto n = cwe_tokens(s.cwe_id)) tc.capec_plus_selected += *n;
        }
        a.push_back(tc.capec_only);
        b.push_back(tc.capec_plus_all_mitre);
        c.push_back(tc.capec_plus_selected);
        rep.per_capec.push_back(tc);
    }
    rep.capec_only = detail::summarize(std::move(a));
    rep.capec_plus_all_mitre = detail::summarize(std::move(b));
    rep.capec_plus_selected = detail::summarize(std::move(c));
    return rep;
}

// ---------------------------------------------------------------------------
// Serialization

inline void to_json(nlohmann::json& j, const SelectedCwe& s) {
    j = nlohmann::json{{"cwe_id", s.cwe_id}, {"provenance", to_string(s.provenance)}};
    j["score"] = s.score ? nlohmann::json(*s.score) : nlohmann::json();
}

inline void from_json(const nlohmann::json& j, SelectedCwe& s) {
    s.cwe_id = j.at("cwe_id").get<CweId>();
    auto p = j.at("provenance").get<std::string>();
    if (p == "mitre-link") s.provenance = Provenance::MitreLink;
    else if (p == "similarity-added") s.provenance = Provenance::SimilarityAdded;
    else throw InputError("unknown provenance '" + p + "'");
    s.score.reset();
    if (j.contains("score") && !j["score"].is_null()) s.score = j["score"].get<double>();
}

inline void to_json(nlohmann::json& j, const RelatedCweSelection& s) {
    j = nlohmann::json{{"capec_id", s.capec_id},
                       {"threshold_k", s.threshold_k},
                       {"short_of_k", s.short_of_k},
                       {"selected", s.selected}};
}

inline void from_json(const nlohmann::json& j, RelatedCweSelection& s) {
    s.capec_id = j.at("capec_id").get<CapecId>();
    s.threshold_k = j.at("threshold_k").get<std::size_t>();
    s.short_of_k = j.value("short_of_k", false);
    s.selected = j.at("selected").get<std::vector<SelectedCwe>>();
}

// Selections as JSON lines, ascending CAPEC id.
inline std::string selections_to_jsonl(const std::map<CapecId, RelatedCweSelection>& sel) {
    std::string out;
    for (const auto& [id, s] : sel) {
        out += nlohmann::json(s).dump();
        out.push_back('\n');
    }
    return out;
}

inline std::map<CapecId, RelatedCweSelection> selections_from_jsonl(std::string_view text) {
    std::map<CapecId, RelatedCweSelection> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        ++line_no;
        if (detail::blank(line)) continue;
        try {
            auto s = nlohmann::json::parse(line).get<RelatedCweSelection>();
            out[s.capec_id] = std::move(s);
        } catch (const nlohmann::json::exception& e) {
            throw InputError("selections line " + std::to_string(line_no) + ": " + e.what());
        } catch (const InputError& e) {
            throw InputError("selections line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

// Human-readable preview: CAPEC id | MITRE links | selected CWEs.
inline std::string selections_table(const CapecCatalog& capecs,
                                    const std::map<CapecId, RelatedCweSelection>& sel) {
    auto join = [](const std::vector<CweId>& ids) {
        if (ids.empty()) return std::string("NA");
        std::string s;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (i) s += ", ";
            s += std::to_string(ids[i]);
        }
        return s;
    };
    std::ostringstream os;
    os << std::left << std::setw(10) << "CAPEC ID" << " | " << std::setw(40) << "Related (MITRE)" << " | "
       << "Selected CWEs\n";
    for (const auto& [id, s] : sel) {
        const auto* c = capecs.find(id);
        os << std::left << std::setw(10) << id << " | " << std::setw(40)
           << (c ? join(c->related_cwe_ids) : std::string("?")) << " | " << join(s.ids());
        if (s.short_of_k) os << "  (short of k=" << s.threshold_k << ")";
        os << '\n';
    }
    return os.str();
}

inline nlohmann::json to_json(const TokenReport& r) {
    auto sum = [](const TokenSummary& s) {
        return nlohmann::json{{"min", s.min}, {"mean", s.mean}, {"median", s.median}, {"max", s.max}};
    };
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& t : r.per_capec) {
        rows.push_back({{"capec_id", t.capec_id},
                        {"capec_only", t.capec_only},
                        {"capec_plus_all_mitre_cwes", t.capec_plus_all_mitre},
                        {"capec_plus_topk_cwes", t.capec_plus_selected}});
    }
    return {{"tokenizer", r.tokenizer},
            {"unresolved_links", r.unresolved_links},
            {"summary",
             {{"capec_only", sum(r.capec_only)},
              {"capec_plus_all_mitre_cwes", sum(r.capec_plus_all_mitre)},
              {"capec_plus_topk_cwes", sum(r.capec_plus_selected)}}},
            {"per_capec", std::move(rows)}};
}

}  // namespace capecgen
