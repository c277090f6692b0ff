#pragma once

// Dataset generation over (CAPEC x language) for one provider, with an
// append-only JSON-lines store and checkpointed resume.
//
// Layout: <out_dir>/<dataset_id>/<language>.jsonl
//                                /manifest.json
//                                /rejects.jsonl

#include "capecgen/catalog.hpp"
#include "capecgen/concurrency.hpp"
#include "capecgen/io.hpp"
#include "capecgen/llm.hpp"
#include "capecgen/mapping.hpp"
#include "capecgen/promptkit.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace capecgen {

namespace fs = std::filesystem;

struct GenerationRecord {
    std::string dataset_id;
    CapecId capec_id = 0;
    std::string language;
    std::string model_id;
    std::string provider_kind;
    std::string code_snippet;
    std::string description;
    RelatedCweSelection selection;
    std::string prompt_template_id;
    std::string context_hash;
    std::string created_at;  // UTC; not part of equality
    int attempt = 1;         // 2 when the corrective re-ask was needed

    bool operator==(const GenerationRecord& o) const {
        return dataset_id == o.dataset_id && capec_id == o.capec_id && language == o.language &&
               model_id == o.model_id && provider_kind == o.provider_kind && code_snippet == o.code_snippet &&
               description == o.description && selection == o.selection &&
               prompt_template_id == o.prompt_template_id && context_hash == o.context_hash && attempt == o.attempt;
    }
};

inline void to_json(nlohmann::json& j, const GenerationRecord& r) {
    j = nlohmann::json{{"dataset_id", r.dataset_id},
                       {"capec_id", r.capec_id},
                       {"language", r.language},
                       {"model_id", r.model_id},
                       {"provider_kind", r.provider_kind},
                       {"code_snippet", r.code_snippet},
                       {"description", r.description},
                       {"selection", r.selection},
                       {"prompt_template_id", r.prompt_template_id},
                       {"context_hash", r.context_hash},
                       {"created_at", r.created_at},
                       {"attempt", r.attempt}};
}

inline void from_json(const nlohmann::json& j, GenerationRecord& r) {
    r.dataset_id = j.at("dataset_id").get<std::string>();
    r.capec_id = j.at("capec_id").get<CapecId>();
    r.language = j.at("language").get<std::string>();
    r.model_id = j.at("model_id").get<std::string>();
    r.provider_kind = j.at("provider_kind").get<std::string>();
    r.code_snippet = j.at("code_snippet").get<std::string>();
    r.description = j.at("description").get<std::string>();
    r.selection = j.at("selection").get<RelatedCweSelection>();
    r.prompt_template_id = j.at("prompt_template_id").get<std::string>();
    r.context_hash = j.at("context_hash").get<std::string>();
    r.created_at = j.value("created_at", "");
    r.attempt = j.value("attempt", 1);
    if (r.code_snippet.empty()) throw InputError("record for CAPEC-" + std::to_string(r.capec_id) + " has empty code");
}

struct RunManifest {
    std::string dataset_id;
    std::string capec_version;
    std::string cwe_version;
    nlohmann::json embedder = nlohmann::json::object();
    nlohmann::json provider = nlohmann::json::object();  // credentials never included
    std::size_t k = 5;
    std::string template_id;
    std::vector<std::string> languages;
    std::string started_at;
    std::string finished_at;
    std::size_t capec_count = 0;
    std::map<std::string, std::size_t> completed;  // per language
    std::map<std::string, std::string> notes;
};

inline void to_json(nlohmann::json& j, const RunManifest& m) {
    j = nlohmann::json{{"dataset_id", m.dataset_id},
                       {"catalogs", {{"capec_version", m.capec_version}, {"cwe_version", m.cwe_version}}},
                       {"embedder", m.embedder},
                       {"provider", m.provider},
                       {"k", m.k},
                       {"template_id", m.template_id},
                       {"languages", m.languages},
                       {"started_at", m.started_at},
                       {"finished_at", m.finished_at},
                       {"capec_count", m.capec_count},
                       {"completed", m.completed},
                       {"notes", m.notes}};
}

inline void from_json(const nlohmann::json& j, RunManifest& m) {
    m.dataset_id = j.at("dataset_id").get<std::string>();
    m.capec_version = j.at("catalogs").at("capec_version").get<std::string>();
    m.cwe_version = j.at("catalogs").at("cwe_version").get<std::string>();
    m.embedder = j.at("embedder");
    m.provider = j.at("provider");
    m.k = j.at("k").get<std::size_t>();
    m.template_id = j.at("template_id").get<std::string>();
    m.languages = j.at("languages").get<std::vector<std::string>>();
    m.started_at = j.value("started_at", "");
    m.finished_at = j.value("finished_at", "");
    m.capec_count = j.value("capec_count", std::size_t{0});
    m.completed = j.value("completed", std::map<std::string, std::size_t>{});
    m.notes = j.value("notes", std::map<std::string, std::string>{});
}

// Lines of difference between the fields that must agree for a resume.
inline std::vector<std::string> manifest_diff(const RunManifest& have, const RunManifest& want) {
    std::vector<std::string> diff;
    auto cmp = [&](const char* field, const nlohmann::json& a, const nlohmann::json& b) {
        if (a != b) diff.push_back(std::string(field) + ": existing " + a.dump() + ", requested " + b.dump());
    };
    cmp("template_id", have.template_id, want.template_id);
    cmp("k", have.k, want.k);
    cmp("catalogs.capec_version", have.capec_version, want.capec_version);
    cmp("catalogs.cwe_version", have.cwe_version, want.cwe_version);
    cmp("embedder", have.embedder, want.embedder);
    cmp("provider", have.provider, want.provider);
    return diff;
}

inline nlohmann::json provider_fingerprint(const ProviderConfig& p) {
    nlohmann::json j{{"name", p.name}, {"kind", to_string(p.kind)}, {"model_id", p.model_id},
                     {"endpoint", p.endpoint}};
    j["temperature"] = p.temperature ? nlohmann::json(*p.temperature) : nlohmann::json();
    j["max_output_tokens"] = p.max_output_tokens ? nlohmann::json(*p.max_output_tokens) : nlohmann::json();
    return j;
}

struct Dataset {
    std::string dataset_id;
    std::vector<GenerationRecord> records;
    std::optional<RunManifest> manifest;

    // Records of one language keyed by CAPEC id.
    std::map<CapecId, const GenerationRecord*> by_capec(std::string_view language) const {
        std::map<CapecId, const GenerationRecord*> out;
        for (const auto& r : records) {
            if (r.language == language) out[r.capec_id] = &r;
        }
        return out;
    }

    std::set<std::string> languages() const {
        std::set<std::string> out;
        for (const auto& r : records) out.insert(r.language);
        return out;
    }
};

struct ReadResult {
    Dataset dataset;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::string language_file_stem(std::string_view language) {
    std::string s;
    for (char c : language) {
        auto u = static_cast<unsigned char>(c);
        s.push_back(std::isalnum(u) || c == '-' || c == '_' || c == '+' ? static_cast<char>(std::tolower(u)) : '_');
    }
    return s;
}

// Parses one .jsonl file. A final line without a newline that fails to
// parse is a crash leftover: skipped with a warning. Any other bad line is
// an error naming it.
inline void read_jsonl_records(const fs::path& file, std::vector<GenerationRecord>& out,
                               std::vector<std::string>& warnings) {
    auto text = read_file(file);
    if (text.empty()) {
        warnings.push_back(file.string() + ": empty file");
        return;
    }
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        bool terminated = nl != std::string::npos;
        auto line = std::string_view(text).substr(pos, terminated ? nl - pos : std::string::npos);
        pos = terminated ? nl + 1 : text.size();
        ++line_no;
        if (blank(line)) continue;
        try {
            out.push_back(nlohmann::json::parse(line).get<GenerationRecord>());
        } catch (const std::exception& e) {
            if (!terminated) {
                warnings.push_back(file.string() + ": ignored partial trailing line " + std::to_string(line_no));
                return;
            }
            throw InputError(file.string() + ": corrupt record on line " + std::to_string(line_no) + ": " + e.what());
        }
    }
}

}  // namespace detail

// Reads a dataset directory (every <language>.jsonl plus manifest.json) or
// a single .jsonl file.
inline ReadResult read_dataset(const fs::path& path) {
    ReadResult rr;
    if (fs::is_directory(path)) {
        rr.dataset.dataset_id = path.filename().string();
        if (fs::exists(path / "manifest.json")) {
            try {
                rr.dataset.manifest = nlohmann::json::parse(read_file(path / "manifest.json")).get<RunManifest>();
                rr.dataset.dataset_id = rr.dataset.manifest->dataset_id;
            } catch (const nlohmann::json::exception& e) {
                throw InputError((path / "manifest.json").string() + ": " + e.what());
            }
        }
        std::vector<fs::path> files;
        for (const auto& f : fs::directory_iterator(path)) {
            if (f.path().extension() == ".jsonl" && f.path().filename() != "rejects.jsonl") files.push_back(f.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) detail::read_jsonl_records(f, rr.dataset.records, rr.warnings);
        if (files.empty()) rr.warnings.push_back(path.string() + ": no record files");
    } else {
        if (!fs::exists(path)) throw InputError("dataset not found: " + path.string());
        detail::read_jsonl_records(path, rr.dataset.records, rr.warnings);
        rr.dataset.dataset_id = rr.dataset.records.empty() ? path.parent_path().filename().string()
                                                           : rr.dataset.records.front().dataset_id;
        auto manifest = path.parent_path() / "manifest.json";
        if (fs::exists(manifest)) {
            rr.dataset.manifest = nlohmann::json::parse(read_file(manifest)).get<RunManifest>();
        }
    }
    return rr;
}

// Records sorted by (language, capec_id), timestamps blanked: two datasets
// with equal content dump to identical bytes.
inline std::string canonical_dump(const Dataset& d) {
    std::vector<const GenerationRecord*> rs;
    for (const auto& r : d.records) rs.push_back(&r);
    std::sort(rs.begin(), rs.end(), [](auto* a, auto* b) {
        return std::tie(a->language, a->capec_id) < std::tie(b->language, b->capec_id);
    });
    std::string out;
    for (const auto* r : rs) {
        nlohmann::json j = *r;
        j.erase("created_at");
        out += j.dump();
        out.push_back('\n');
    }
    return out;
}

// Append-only store for one dataset directory. Appends are serialized and
// flushed line by line.
class DatasetStore {
public:
    DatasetStore(fs::path out_dir, std::string dataset_id)
        : dataset_id_(std::move(dataset_id)), dir_(std::move(out_dir) / dataset_id_) {}

    const fs::path& dir() const noexcept { return dir_; }
    const std::string& dataset_id() const noexcept { return dataset_id_; }
    fs::path records_path(std::string_view language) const {
        return dir_ / (detail::language_file_stem(language) + ".jsonl");
    }
    fs::path manifest_path() const { return dir_ / "manifest.json"; }
    fs::path rejects_path() const { return dir_ / "rejects.jsonl"; }

    std::optional<RunManifest> load_manifest() const {
        if (!fs::exists(manifest_path())) return std::nullopt;
        try {
            return nlohmann::json::parse(read_file(manifest_path())).get<RunManifest>();
        } catch (const nlohmann::json::exception& e) {
            throw InputError(manifest_path().string() + ": " + e.what());
        }
    }

    void save_manifest(const RunManifest& m) const { write_file(manifest_path(), nlohmann::json(m).dump(2) + "\n"); }

    // Existing complete records for a language. A crash-truncated final
    // line is cut off so later appends start on a fresh line.
    std::vector<GenerationRecord> existing(std::string_view language, std::vector<std::string>& warnings) const {
        std::vector<GenerationRecord> out;
        auto path = records_path(language);
        if (!fs::exists(path)) return out;
        detail::read_jsonl_records(path, out, warnings);
        auto text = read_file(path);
        if (!text.empty() && text.back() != '\n') {
            auto keep = text.rfind('\n');
            fs::resize_file(path, keep == std::string::npos ? 0 : keep + 1);
        }
        return out;
    }

    void append(const GenerationRecord& r) { append_line(records_path(r.language), nlohmann::json(r).dump()); }

    void append_reject(const nlohmann::json& j) { append_line(rejects_path(), j.dump()); }

private:
    void append_line(const fs::path& path, const std::string& line) {
        std::lock_guard lock(mu_);
        fs::create_directories(dir_);
        std::ofstream out(path, std::ios::binary | std::ios::app);
        out << line << '\n';
        out.flush();
        if (!out) throw Error("write failed for " + path.string());
    }

    std::string dataset_id_;
    fs::path dir_;
    std::mutex mu_;
};

struct GenerationInputs {
    const CapecCatalog* capecs = nullptr;  // CAPECs to generate for (active-filtered by the caller)
    const CweCatalog* cwes = nullptr;      // full CWE catalog, for context lookup
    const std::map<CapecId, RelatedCweSelection>* selections = nullptr;
    const PromptTemplate* prompt_template = nullptr;
    nlohmann::json embedder_fingerprint = nlohmann::json::object();
    std::size_t k = 5;
};

struct GenerationOptions {
    bool resume = false;
    std::size_t max_in_flight = 4;
};

struct GenerationSummary {
    std::size_t requested = 0;     // CAPECs attempted this run
    std::size_t provider_calls = 0;
    std::size_t new_records = 0;
    std::size_t existing_records = 0;
    std::size_t rejects = 0;
    std::vector<std::string> warnings;
};

inline std::string recompute_context_hash(const GenerationRecord& r, const CapecCatalog& capecs,
                                          const CweCatalog& cwes) {
    return sha256_hex(build_context_block(capecs.at(r.capec_id), r.selection, cwes));
}

// Generates one record per CAPEC for `language` with `provider`, appending
// to `store`. Per-CAPEC failures go to rejects.jsonl and the run goes on;
// credential and store failures abort. With resume, CAPECs that already
// have a record are skipped and the manifest must match.
inline GenerationSummary generate_dataset(const GenerationInputs& in, const std::string& language,
                                          Provider& provider, DatasetStore& store,
                                          const GenerationOptions& opts = {}) {
    if (!in.capecs || !in.cwes || !in.selections || !in.prompt_template) {
        throw InputError("generate_dataset: incomplete inputs");
    }
    for (const auto& [id, e] : in.capecs->entries) {
        if (!in.selections->count(id)) throw InputError("no CWE selection for CAPEC-" + std::to_string(id));
    }

    const auto& pcfg = provider.config();
    RunManifest want;
    want.dataset_id = store.dataset_id();
    want.capec_version = in.capecs->version;
    want.cwe_version = in.cwes->version;
    want.embedder = in.embedder_fingerprint;
    want.provider = provider_fingerprint(pcfg);
    want.k = in.k;
    want.template_id = in.prompt_template->id();
    want.capec_count = in.capecs->size();
    want.notes = {{"prompt_roles", "single user message"},
                  {"context_block_format", "CAPEC section then CWE sections, blank-line separated"}};

    GenerationSummary summary;
    auto existing_manifest = store.load_manifest();
    auto existing = store.existing(language, summary.warnings);
    if (existing_manifest) {
        auto diff = manifest_diff(*existing_manifest, want);
        if (!diff.empty()) {
            std::string msg = "existing dataset " + store.dir().string() + " was produced with different settings:";
            for (const auto& d : diff) msg += "\n  " + d;
            throw RefusalError(msg);
        }
    }
    if (!existing.empty() && !opts.resume) {
        throw RefusalError("dataset " + store.dir().string() + " already has " + std::to_string(existing.size()) + " " +
                           language + " records; rerun with --resume");
    }
    RunManifest manifest = existing_manifest.value_or(want);
    if (manifest.started_at.empty()) manifest.started_at = utc_now_iso();
    if (std::find(manifest.languages.begin(), manifest.languages.end(), language) == manifest.languages.end()) {
        manifest.languages.push_back(language);
    }
    manifest.capec_count = want.capec_count;
    store.save_manifest(manifest);

    std::set<CapecId> done;
    for (const auto& r : existing) done.insert(r.capec_id);
    summary.existing_records = done.size();

    std::vector<const CapecEntry*> todo;
    for (const auto& [id, e] : in.capecs->entries) {
        if (!done.count(id)) todo.push_back(&e);
    }
    summary.requested = todo.size();

    std::atomic<std::size_t> calls{0}, made{0}, rejected{0};
    auto reject = [&](const CapecEntry& capec, std::string_view error_class, const std::string& message) {
        store.append_reject({{"capec_id", capec.id},
                             {"language", language},
                             {"model_id", pcfg.model_id},
                             {"error_class", error_class},
                             {"message", message},
                             {"at", utc_now_iso()}});
        ++rejected;
    };

    parallel_for(todo.size(), opts.max_in_flight, [&](std::size_t i) {
        const auto& capec = *todo[i];
        const auto& selection = in.selections->at(capec.id);
        std::string context;
        try {
            context = build_context_block(capec, selection, *in.cwes);
        } catch (const InputError& e) {
            reject(capec, "context", e.what());
            return;
        }
        auto prompt = render_prompt(*in.prompt_template, context, language, capec.id);

        std::optional<GenerationPayload> payload;
        std::string model_id = pcfg.model_id;
        int attempt = 0;
        std::string last_class, last_message;
        for (attempt = 1; attempt <= 2 && !payload; ++attempt) {
            auto p = prompt;
            if (attempt == 2) {
                p.text += kCorrectiveSuffix;
                p.prompt_hash = sha256_hex(p.text);
            }
            Completion reply;
            try {
                ++calls;
                reply = provider.complete(p);
            } catch (const CredentialError&) {
                throw;
            } catch (const TransportError& e) {
                reject(capec, "transport", e.what());
                return;
            } catch (const ProtocolError& e) {
                reject(capec, "protocol", e.what());
                return;
            }
            try {
                payload = extract_payload(reply.text);
                if (!reply.model_id.empty()) model_id = reply.model_id;
            } catch (const FormatError& e) {
                last_class = "format";
                last_message = e.what();
            } catch (const SchemaError& e) {
                last_class = "schema";
                last_message = e.what();
            }
        }
        if (!payload) {
            reject(capec, last_class, last_message);
            return;
        }
        GenerationRecord rec;
        rec.dataset_id = store.dataset_id();
        rec.capec_id = capec.id;
        rec.language = language;
        rec.model_id = model_id;
        rec.provider_kind = std::string(to_string(pcfg.kind));
        rec.code_snippet = std::move(payload->code_snippet);
        rec.description = std::move(payload->description);
        rec.selection = selection;
        rec.prompt_template_id = prompt.template_id;
        rec.context_hash = prompt.context_hash;
        rec.created_at = utc_now_iso();
        rec.attempt = attempt - 1;
        store.append(rec);
        ++made;
    });

    summary.provider_calls = calls;
    summary.new_records = made;
    summary.rejects = rejected;
    manifest.completed[language] = summary.existing_records + summary.new_records;
    manifest.finished_at = utc_now_iso();
    store.save_manifest(manifest);
    return summary;
}

}  // namespace capecgen
