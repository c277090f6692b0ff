#pragma once

// Consistency and agreement metrics: cross-dataset cosine similarity of
// generated code, Average Pairwise Agreement over rater judgments, and
// per-rater relevance/readability summaries.

#include "capecgen/embedding.hpp"
#include "capecgen/errors.hpp"
#include "capecgen/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace capecgen {

// Code embeddings of one dataset's records in one language, by CAPEC id.
using CodeEmbeddings = std::map<CapecId, EmbeddingVector>;

inline CodeEmbeddings embed_code(const Dataset& d, std::string_view language, Embedder& embedder) {
    auto by = d.by_capec(language);
    CodeEmbeddings out;
    if (by.empty()) return out;
    std::vector<std::string> texts;
    std::vector<CapecId> ids;
    for (const auto& [id, r] : by) {
        ids.push_back(id);
        texts.push_back(r->code_snippet);
    }
    auto vecs = embedder.embed(texts);
    for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(ids[i], std::move(vecs[i]));
    return out;
}

struct DatasetSimilarity {
    double mean = 0.0;
    std::map<CapecId, double> per_capec;
    std::vector<CapecId> only_in_a, only_in_b;  // not compared
};

// Unweighted mean over CAPEC ids present in both, of the cosine between the
// two snippets for that id.
inline DatasetSimilarity compare_embeddings(const CodeEmbeddings& a, const CodeEmbeddings& b) {
    DatasetSimilarity s;
    for (const auto& [id, va] : a) {
        auto it = b.find(id);
        if (it == b.end()) {
            s.only_in_a.push_back(id);
            continue;
        }
        s.per_capec[id] = cosine_similarity(va, it->second);
    }
    for (const auto& [id, vb] : b) {
        if (!a.count(id)) s.only_in_b.push_back(id);
    }
    if (s.per_capec.empty()) throw InputError("datasets share no CAPEC ids");
    double sum = 0.0;
    for (const auto& [id, v] : s.per_capec) sum += v;
    s.mean = sum / static_cast<double>(s.per_capec.size());
    return s;
}

inline DatasetSimilarity dataset_similarity(const Dataset& a, const Dataset& b, std::string_view language,
                                            Embedder& embedder) {
    return compare_embeddings(embed_code(a, language, embedder), embed_code(b, language, embedder));
}

struct SimilarityMatrix {
    std::string language;
    std::vector<std::string> labels;
    std::vector<std::vector<std::optional<double>>> cells;  // diagonal is nullopt
    std::map<std::pair<std::size_t, std::size_t>, DatasetSimilarity> pairs;  // i < j
    std::string aggregation = "unweighted mean over CAPEC-aligned snippet pairs";
    std::string embedder_model;
};

// The single language shared by all datasets, or InputError.
inline std::string common_language(const std::vector<Dataset>& ds) {
    std::set<std::string> langs;
    for (const auto& d : ds) {
        auto l = d.languages();
        langs.insert(l.begin(), l.end());
    }
    if (langs.size() != 1) {
        std::string msg = "datasets must share exactly one language, found:";
        for (const auto& l : langs) msg += " " + l;
        throw InputError(msg);
    }
    return *langs.begin();
}

// All unordered pairs of datasets. With no language given the datasets must
// all be single-language and agree; otherwise every dataset must hold
// records in that language.
inline SimilarityMatrix similarity_matrix(const std::vector<Dataset>& datasets, Embedder& embedder,
                                          std::optional<std::string> language = std::nullopt) {
    if (datasets.size() < 2) throw InputError("similarity matrix needs at least two datasets");
    SimilarityMatrix m;
    m.language = language ? *language : common_language(datasets);
    std::vector<CodeEmbeddings> emb;
    for (const auto& d : datasets) {
        m.labels.push_back(d.dataset_id);
        emb.push_back(embed_code(d, m.language, embedder));
        if (emb.back().empty()) throw InputError("dataset " + d.dataset_id + " has no " + m.language + " records");
    }
    auto n = datasets.size();
    m.cells.assign(n, std::vector<std::optional<double>>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            auto s = compare_embeddings(emb[i], emb[j]);
            m.cells[i][j] = m.cells[j][i] = s.mean;
            m.pairs.emplace(std::make_pair(i, j), std::move(s));
        }
    }
    m.embedder_model = embedder.model_id();
    return m;
}

inline std::string matrix_table(const SimilarityMatrix& m) {
    std::size_t w = 10;
    for (const auto& l : m.labels) w = std::max(w, l.size() + 2);
    std::ostringstream os;
    os << "Cosine similarity (" << m.language << ")\n" << std::left << std::setw(static_cast<int>(w)) << "";
    for (const auto& l : m.labels) os << std::setw(static_cast<int>(w)) << l;
    os << '\n';
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
        os << std::setw(static_cast<int>(w)) << m.labels[i];
        for (std::size_t j = 0; j < m.labels.size(); ++j) {
            std::ostringstream cell;
            if (m.cells[i][j]) cell << std::fixed << std::setprecision(3) << *m.cells[i][j];
            else cell << "-";
            os << std::setw(static_cast<int>(w)) << cell.str();
        }
        os << '\n';
    }
    return os.str();
}

inline nlohmann::json to_json(const SimilarityMatrix& m) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& row : m.cells) {
        nlohmann::json r = nlohmann::json::array();
        for (const auto& c : row) r.push_back(c ? nlohmann::json(*c) : nlohmann::json());
        cells.push_back(std::move(r));
    }
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& [ij, s] : m.pairs) {
        nlohmann::json per = nlohmann::json::object();
        for (const auto& [id, v] : s.per_capec) per[std::to_string(id)] = v;
        pairs.push_back({{"a", m.labels[ij.first]},
                         {"b", m.labels[ij.second]},
                         {"mean", s.mean},
                         {"compared", s.per_capec.size()},
                         {"only_in_a", s.only_in_a},
                         {"only_in_b", s.only_in_b},
                         {"per_capec", std::move(per)}});
    }
    return {{"language", m.language},
            {"labels", m.labels},
            {"cells", std::move(cells)},
            {"pairs", std::move(pairs)},
            {"aggregation", m.aggregation},
            {"embedder_model", m.embedder_model}};
}

// ---------------------------------------------------------------------------
// Rater tables

struct RaterRow {
    std::string rater_id;
    std::string item_id;
    std::string language;
    std::string dataset_id;
    bool relevant = false;
    int readability = 0;  // 1..5
};

struct RaterTable {
    std::vector<RaterRow> rows;

    void validate() const {
        std::set<std::pair<std::string, std::string>> seen;
        for (const auto& r : rows) {
            if (r.readability < 1 || r.readability > 5) {
                throw InputError("readability must be 1-5 (rater " + r.rater_id + ", item " + r.item_id + ")");
            }
            if (!seen.insert({r.rater_id, r.item_id}).second) {
                throw InputError("duplicate judgment for rater " + r.rater_id + ", item " + r.item_id);
            }
        }
    }
};

namespace detail {

// Splits one CSV record (RFC 4180 quoting, no embedded newlines).
inline std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (quoted) throw InputError("rater CSV line " + std::to_string(line_no) + ": unterminated quote");
    fields.push_back(std::move(cur));
    for (auto& f : fields) f = std::string(trim(f));
    return fields;
}

inline bool parse_yes_no(std::string s, std::size_t line_no) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (s == "yes" || s == "y" || s == "true" || s == "1") return true;
    if (s == "no" || s == "n" || s == "false" || s == "0") return false;
    throw InputError("rater CSV line " + std::to_string(line_no) + ": relevant must be yes/no, got '" + s + "'");
}

}  // namespace detail

inline constexpr const char* kRaterCsvHeader = "rater_id,item_id,language,dataset_id,relevant,readability";

// Header row (any column order) naming rater_id, item_id, language,
// dataset_id, relevant, readability.
inline RaterTable parse_rater_csv(std::string_view text) {
    RaterTable t;
    std::map<std::string, std::size_t> col;
    std::size_t pos = 0, line_no = 0;
    bool header_done = false;
    static const char* kCols[] = {"rater_id", "item_id", "language", "dataset_id", "relevant", "readability"};
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (detail::blank(line)) continue;
        auto fields = detail::split_csv_line(line, line_no);
        if (!header_done) {
            for (std::size_t i = 0; i < fields.size(); ++i) col[fields[i]] = i;
            for (const char* c : kCols) {
                if (!col.count(c)) throw InputError(std::string("rater CSV header lacks column '") + c + "'");
            }
            header_done = true;
            continue;
        }
        if (fields.size() != col.size()) {
            throw InputError("rater CSV line " + std::to_string(line_no) + ": expected " + std::to_string(col.size()) +
                             " fields, got " + std::to_string(fields.size()));
        }
        RaterRow r;
        r.rater_id = fields[col["rater_id"]];
        r.item_id = fields[col["item_id"]];
        r.language = fields[col["language"]];
        r.dataset_id = fields[col["dataset_id"]];
        r.relevant = detail::parse_yes_no(fields[col["relevant"]], line_no);
        const auto& rd = fields[col["readability"]];
        try {
            std::size_t used = 0;
            r.readability = std::stoi(rd, &used);
            if (used != rd.size()) throw std::invalid_argument(rd);
        } catch (const std::exception&) {
            throw InputError("rater CSV line " + std::to_string(line_no) + ": readability must be an integer, got '" +
                             rd + "'");
        }
        if (r.readability < 1 || r.readability > 5) {
            throw InputError("rater CSV line " + std::to_string(line_no) + ": readability must be 1-5");
        }
        if (r.rater_id.empty() || r.item_id.empty()) {
            throw InputError("rater CSV line " + std::to_string(line_no) + ": empty rater_id or item_id");
        }
        t.rows.push_back(std::move(r));
    }
    if (!header_done) throw InputError("rater CSV is empty (no header row)");
    t.validate();
    return t;
}

// APA = 100 / C(R,2) * sum over rater pairs of (agreeing items / items),
// on the yes/no relevance judgment. Every rater must have rated every item.
inline double average_pairwise_agreement(const RaterTable& table) {
    table.validate();
    std::map<std::string, std::map<std::string, bool>> by_rater;
    std::set<std::string> items;
    for (const auto& r : table.rows) {
        by_rater[r.rater_id][r.item_id] = r.relevant;
        items.insert(r.item_id);
    }
    if (by_rater.size() < 2) throw InputError("APA needs at least two raters");
    std::vector<std::string> gaps;
    for (const auto& [rater, judged] : by_rater) {
        for (const auto& item : items) {
            if (!judged.count(item)) gaps.push_back(rater + "/" + item);
        }
    }
    if (!gaps.empty()) {
        std::string msg = "incomplete rating grid; missing (rater/item):";
        for (std::size_t i = 0; i < gaps.size() && i < 20; ++i) msg += " " + gaps[i];
        if (gaps.size() > 20) msg += " ... (" + std::to_string(gaps.size()) + " total)";
        throw InputError(msg);
    }
    std::vector<const std::map<std::string, bool>*> raters;
    for (const auto& [id, judged] : by_rater) raters.push_back(&judged);
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < raters.size(); ++a) {
        for (std::size_t b = a + 1; b < raters.size(); ++b) {
            std::size_t agree = 0;
            for (const auto& item : items) agree += raters[a]->at(item) == raters[b]->at(item);
            sum += static_cast<double>(agree) / static_cast<double>(items.size());
            ++pairs;
        }
    }
    return 100.0 * sum / static_cast<double>(pairs);
}

// APA computed separately for each language in the table.
inline std::map<std::string, double> apa_by_language(const RaterTable& table) {
    std::map<std::string, RaterTable> split;
    for (const auto& r : table.rows) split[r.language].rows.push_back(r);
    std::map<std::string, double> out;
    for (const auto& [lang, t] : split) out[lang] = average_pairwise_agreement(t);
    return out;
}

inline std::string format_percent(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v;
    return os.str();
}

struct RaterCell {
    std::size_t items = 0;
    std::size_t relevant = 0;  // "yes" count
    double readability_mean = 0.0;
};

struct GroupSummary {
    double relevance_mean = 0.0;  // mean over raters of the yes count
    double readability_mean = 0.0;
    double readability_median = 0.0;  // median over raters of their cell readability
};

struct RaterSummary {
    // (rater, language, dataset) -> cell
    std::map<std::tuple<std::string, std::string, std::string>, RaterCell> cells;
    // (language, dataset) -> across-rater summary
    std::map<std::pair<std::string, std::string>, GroupSummary> groups;
};

inline RaterSummary rater_summaries(const RaterTable& table) {
    RaterSummary s;
    std::map<std::tuple<std::string, std::string, std::string>, int> readability_sum;
    for (const auto& r : table.rows) {
        auto key = std::make_tuple(r.rater_id, r.language, r.dataset_id);
        auto& c = s.cells[key];
        ++c.items;
        c.relevant += r.relevant;
        readability_sum[key] += r.readability;
    }
    std::map<std::pair<std::string, std::string>, std::vector<const RaterCell*>> grouped;
    for (auto& [key, c] : s.cells) {
        c.readability_mean = static_cast<double>(readability_sum[key]) / static_cast<double>(c.items);
        grouped[{std::get<1>(key), std::get<2>(key)}].push_back(&c);
    }
    for (const auto& [key, cells] : grouped) {
        GroupSummary g;
        std::vector<double> rd;
        for (const auto* c : cells) {
            g.relevance_mean += static_cast<double>(c->relevant);
            g.readability_mean += c->readability_mean;
            rd.push_back(c->readability_mean);
        }
        auto n = static_cast<double>(cells.size());
        g.relevance_mean /= n;
        g.readability_mean /= n;
        std::sort(rd.begin(), rd.end());
        auto m = rd.size();
        g.readability_median = m % 2 ? rd[m / 2] : (rd[m / 2 - 1] + rd[m / 2]) / 2.0;
        s.groups[key] = g;
    }
    return s;
}

inline nlohmann::json to_json(const RaterSummary& s) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& [k, c] : s.cells) {
        cells.push_back({{"rater_id", std::get<0>(k)},
                         {"language", std::get<1>(k)},
                         {"dataset_id", std::get<2>(k)},
                         {"items", c.items},
                         {"relevant", c.relevant},
                         {"readability", c.readability_mean}});
    }
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& [k, g] : s.groups) {
        groups.push_back({{"language", k.first},
                          {"dataset_id", k.second},
                          {"relevance_mean", g.relevance_mean},
                          {"readability_mean", g.readability_mean},
                          {"readability_median", g.readability_median}});
    }
    return {{"cells", std::move(cells)}, {"groups", std::move(groups)}};
}

inline std::string rater_table_text(const RaterSummary& s) {
    std::ostringstream os;
    os << std::left << std::setw(14) << "Rater" << std::setw(12) << "Language" << std::setw(14) << "Dataset"
       << std::setw(12) << "Relevant" << "Readability\n";
    for (const auto& [k, c] : s.cells) {
        os << std::setw(14) << std::get<0>(k) << std::setw(12) << std::get<1>(k) << std::setw(14) << std::get<2>(k)
           << std::setw(12) << (std::to_string(c.relevant) + "/" + std::to_string(c.items)) << std::fixed
           << std::setprecision(2) << c.readability_mean << '\n';
    }
    return os.str();
}

}  // namespace capecgen
