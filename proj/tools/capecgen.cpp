// capecgen: catalog statistics, CAPEC->CWE mapping, dataset generation,
// compile checks, and consistency/agreement evaluation.

#include "capecgen/catalog.hpp"
#include "capecgen/config.hpp"
#include "capecgen/evaluation.hpp"
#include "capecgen/llm_http.hpp"
#include "capecgen/mapping.hpp"
#include "capecgen/pipeline.hpp"
#include "capecgen/remote_embedder.hpp"
#include "capecgen/validation.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <iostream>

using namespace capecgen;
using nlohmann::json;

namespace {

struct Common {
    std::string config_path;
    std::string capec_path;
    std::string cwe_path;
    std::string format = "table";

    Config load() const {
        Config c = config_path.empty() ? parse_config(json::object()) : load_config(config_path);
        if (!capec_path.empty()) c.capec_path = capec_path;
        if (!cwe_path.empty()) c.cwe_path = cwe_path;
        return c;
    }
    bool as_json() const { return format == "json"; }
};

CapecCatalog load_capecs(const Config& c) {
    if (c.capec_path.empty()) throw InputError("no CAPEC catalog given (--capec or catalogs.capec_path)");
    return parse_capec_catalog(read_file(c.capec_path));
}

CweCatalog load_cwes(const Config& c) {
    if (c.cwe_path.empty()) throw InputError("no CWE catalog given (--cwe or catalogs.cwe_path)");
    return parse_cwe_catalog(read_file(c.cwe_path));
}

template <class Entry>
void warn_rejects(const Catalog<Entry>& cat, const std::string& label) {
    for (const auto& r : cat.rejects) {
        std::cerr << "warning: " << label << " entry " << (r.id.empty() ? std::string("?") : r.id)
                  << " at byte " << r.offset << " skipped: " << r.reason << '\n';
    }
}

json embedder_fingerprint(const EmbedderConfig& cfg, const Embedder& e) {
    json j{{"slot", std::string(to_string(cfg.slot))}, {"model_id", e.model_id()}};
    if (cfg.kind == EmbedderConfig::Kind::Fallback) {
        j["kind"] = "fallback";
        j["dim"] = cfg.dim;
    } else {
        j["kind"] = "remote";
        j["endpoint"] = cfg.endpoint;
    }
    return j;
}

std::vector<Language> parse_languages(const std::vector<std::string>& names) {
    std::vector<Language> out;
    for (const auto& n : names) out.push_back(Language::parse(n));
    return out;
}

std::string availability_text(const AvailabilityReport& r, const std::string& title) {
    std::ostringstream os;
    os << title << ": " << r.total << " entries, " << r.with_code << " with example code ("
       << format_percent(100.0 * r.any_language_pct) << "%)\n";
    for (const auto& [lang, pct] : r.per_language_pct) {
        os << "  " << std::left << std::setw(12) << lang << std::right << std::setw(6) << r.per_language_count.at(lang)
           << "  " << format_percent(100.0 * pct) << "%\n";
    }
    return os.str();
}

int cmd_stats(const Common& common, const std::vector<std::string>& langs, const std::string& rule_name) {
    auto cfg = common.load();
    AvailabilityOptions opts;
    if (rule_name == "any") opts.rule = LanguageRule::AnyCodeBlock;
    auto languages = parse_languages(langs.empty() ? cfg.languages : langs);
    json out = json::object();
    std::string text;
    std::optional<CweCatalog> cwes;
    if (!cfg.cwe_path.empty()) {
        cwes = load_cwes(cfg);
        warn_rejects(*cwes, "CWE");
        auto all = code_availability(*cwes, languages, opts);
        auto active = code_availability(filter_active(*cwes), languages, opts);
        out["cwe"] = {{"all", to_json(all)}, {"active", to_json(active)}};
        text += availability_text(all, "CWE " + cwes->version) + availability_text(active, "CWE (active only)");
    }
    if (!cfg.capec_path.empty()) {
        auto capecs = load_capecs(cfg);
        warn_rejects(capecs, "CAPEC");
        const CweCatalog* linked = cwes ? &*cwes : nullptr;
        auto all = code_availability(capecs, languages, linked, opts);
        auto active = code_availability(filter_active(capecs), languages, linked, opts);
        out["capec"] = {{"all", to_json(all)}, {"active", to_json(active)}};
        text += availability_text(all, "CAPEC " + capecs.version) + availability_text(active, "CAPEC (active only)");
    }
    if (out.empty()) throw InputError("stats needs at least one catalog (--capec, --cwe or --config)");
    if (common.as_json()) std::cout << out.dump(2) << '\n';
    else std::cout << "counting rule: " << to_string(opts.rule) << '\n' << text;
    return 0;
}

std::map<CapecId, RelatedCweSelection> compute_selections(const Config& cfg, const CapecCatalog& capecs,
                                                          const CweCatalog& cwes, json& fingerprint) {
    auto embedder = make_embedder(cfg.text_embedder);
    auto sel = select_all(capecs, filter_active(cwes), *embedder, cfg.k);
    fingerprint = embedder_fingerprint(cfg.text_embedder, *embedder);
    return sel;
}

int cmd_map(const Common& common, const std::string& out_path, std::size_t preview) {
    auto cfg = common.load();
    auto capecs = filter_active(load_capecs(cfg));
    auto cwes = load_cwes(cfg);
    json fp;
    auto sel = compute_selections(cfg, capecs, cwes, fp);
    if (!out_path.empty()) write_file(out_path, selections_to_jsonl(sel));
    auto tokens = token_count_report(capecs, cwes, sel, cfg.tokenizer);
    if (common.as_json()) {
        json j{{"embedder", fp}, {"k", cfg.k}, {"capec_count", sel.size()}, {"tokens", to_json(tokens)}};
        std::cout << j.dump(2) << '\n';
        return 0;
    }
    std::map<CapecId, RelatedCweSelection> head;
    for (const auto& [id, s] : sel) {
        if (head.size() >= preview) break;
        head.emplace(id, s);
    }
    std::cout << selections_table(capecs, head);
    std::size_t short_count = 0;
    for (const auto& [id, s] : sel) short_count += s.short_of_k;
    std::cout << sel.size() << " CAPECs mapped with k=" << cfg.k << " (" << short_count << " short of k)\n";
    auto line = [](const char* label, const TokenSummary& s) {
        std::cout << "  " << std::left << std::setw(11) << label << "min " << s.min << "  mean " << std::fixed
                  << std::setprecision(1) << s.mean << "  median " << s.median << "  max " << s.max << '\n';
    };
    std::cout << "tokens (" << tokens.tokenizer << "):\n";
    line("CAPEC", tokens.capec_only);
    line("+MITRE", tokens.capec_plus_all_mitre);
    line("+selected", tokens.capec_plus_selected);
    if (!out_path.empty()) std::cout << "selections written to " << out_path << '\n';
    return 0;
}

int cmd_generate(const Common& common, const std::string& provider_name, std::vector<std::string> langs,
                 std::string dataset_id, bool resume, const std::string& selections_path) {
    auto cfg = common.load();
    const auto& pcfg = cfg.provider(provider_name);
    auto provider = make_provider(pcfg);  // fails fast on missing credentials
    auto capecs = filter_active(load_capecs(cfg));
    auto cwes = load_cwes(cfg);
    auto tmpl = cfg.prompt_template ? PromptTemplate::load(*cfg.prompt_template) : PromptTemplate::default_template();
    if (langs.empty()) langs = cfg.languages;
    for (auto& l : langs) l = Language::parse(l).name();
    if (dataset_id.empty()) dataset_id = cfg.dataset_id.value_or(pcfg.name);

    json fp;
    std::map<CapecId, RelatedCweSelection> sel;
    if (!selections_path.empty()) {
        sel = selections_from_jsonl(read_file(selections_path));
        fp = {{"kind", "precomputed"}, {"selections_sha256", sha256_hex(read_file(selections_path))}};
    } else {
        sel = compute_selections(cfg, capecs, cwes, fp);
    }

    GenerationInputs in{&capecs, &cwes, &sel, &tmpl, fp, cfg.k};
    DatasetStore store(cfg.output_dir, dataset_id);
    GenerationOptions opts{resume, cfg.max_in_flight};
    json report = json::object();
    for (const auto& lang : langs) {
        auto s = generate_dataset(in, lang, *provider, store, opts);
        for (const auto& w : s.warnings) std::cerr << "warning: " << w << '\n';
        report[lang] = {{"requested", s.requested},
                        {"provider_calls", s.provider_calls},
                        {"new_records", s.new_records},
                        {"existing_records", s.existing_records},
                        {"rejects", s.rejects}};
        if (!common.as_json()) {
            std::cout << lang << ": " << s.new_records << " new, " << s.existing_records << " existing, " << s.rejects
                      << " rejected (" << s.provider_calls << " provider calls)\n";
        }
    }
    if (common.as_json()) std::cout << json{{"dataset", store.dir().string()}, {"languages", report}}.dump(2) << '\n';
    else std::cout << "dataset written to " << store.dir().string() << '\n';
    return 0;
}

std::vector<Dataset> load_datasets(const std::vector<std::string>& paths) {
    std::vector<Dataset> out;
    for (const auto& p : paths) {
        auto r = read_dataset(p);
        for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
        out.push_back(std::move(r.dataset));
    }
    return out;
}

int cmd_validate(const Common& common, const std::vector<std::string>& paths, std::optional<std::size_t> sample,
                 std::uint64_t seed) {
    auto datasets = load_datasets(paths);
    auto rep = compile_report(datasets, SampleSpec{sample}, default_checks(), seed);
    if (common.as_json()) std::cout << to_json(rep).dump(2) << '\n';
    else std::cout << compile_table(rep);
    return 0;
}

int cmd_evaluate(const Common& common, const std::vector<std::string>& paths, std::optional<std::string> language,
                 const std::string& embedder_kind, const std::string& endpoint) {
    auto cfg = common.load();
    auto ecfg = cfg.code_embedder;
    if (embedder_kind == "fallback") ecfg.kind = EmbedderConfig::Kind::Fallback;
    else if (embedder_kind == "remote") ecfg.kind = EmbedderConfig::Kind::Remote;
    if (!endpoint.empty()) ecfg.endpoint = endpoint;
    auto embedder = make_embedder(ecfg);
    auto datasets = load_datasets(paths);
    if (language) *language = Language::parse(*language).name();
    auto m = similarity_matrix(datasets, *embedder, language);
    if (common.as_json()) std::cout << to_json(m).dump(2) << '\n';
    else {
        std::cout << matrix_table(m);
        for (const auto& [ij, s] : m.pairs) {
            if (!s.only_in_a.empty() || !s.only_in_b.empty()) {
                std::cout << m.labels[ij.first] << " vs " << m.labels[ij.second] << ": " << s.per_capec.size()
                          << " compared, " << s.only_in_a.size() + s.only_in_b.size() << " not compared\n";
            }
        }
        std::cout << "embedder: " << m.embedder_model << '\n';
    }
    return 0;
}

int cmd_agreement(const Common& common, const std::string& path) {
    auto table = parse_rater_csv(read_file(path));
    auto apa = average_pairwise_agreement(table);
    auto by_lang = apa_by_language(table);
    auto summary = rater_summaries(table);
    if (common.as_json()) {
        json j{{"apa", apa}, {"apa_by_language", by_lang}, {"summary", to_json(summary)}};
        std::cout << j.dump(2) << '\n';
        return 0;
    }
    std::cout << "APA (all): " << format_percent(apa) << "%\n";
    for (const auto& [lang, v] : by_lang) std::cout << "APA (" << lang << "): " << format_percent(v) << "%\n";
    std::cout << '\n' << rater_table_text(summary);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CAPEC-driven secure-code dataset generation"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--config", common.config_path, "JSON run configuration");
    app.add_option("--format", common.format, "Output format")->check(CLI::IsMember({"table", "json"}));

    auto* stats = app.add_subcommand("stats", "Example-code availability per catalog and language");
    std::vector<std::string> stats_langs;
    std::string rule = "first";
    stats->add_option("--capec", common.capec_path, "CAPEC XML");
    stats->add_option("--cwe", common.cwe_path, "CWE XML");
    stats->add_option("--languages", stats_langs, "Languages to count");
    stats->add_option("--language-rule", rule, "Which code blocks decide an entry's language")
        ->check(CLI::IsMember({"first", "any"}));

    auto* map = app.add_subcommand("map", "Select related CWEs for every active CAPEC");
    std::string map_out;
    std::size_t preview = 10;
    map->add_option("--capec", common.capec_path, "CAPEC XML");
    map->add_option("--cwe", common.cwe_path, "CWE XML");
    map->add_option("--out", map_out, "Write selections as JSON lines");
    map->add_option("--preview", preview, "Rows to show in the table");

    auto* gen = app.add_subcommand("generate", "Generate a code dataset with one provider");
    std::string provider_name, dataset_id, selections_path;
    std::vector<std::string> gen_langs;
    bool resume = false;
    gen->add_option("--provider", provider_name, "Provider name from the config")->required();
    gen->add_option("--language", gen_langs, "Target language (repeatable; default: config languages)");
    gen->add_option("--dataset-id", dataset_id, "Dataset directory name (default: provider name)");
    gen->add_option("--selections", selections_path, "Use selections written by 'map --out'");
    gen->add_flag("--resume", resume, "Skip CAPECs that already have a record");
    gen->add_option("--capec", common.capec_path, "CAPEC XML");
    gen->add_option("--cwe", common.cwe_path, "CWE XML");

    auto* val = app.add_subcommand("validate", "Compile-check generated snippets");
    std::vector<std::string> val_paths;
    std::optional<std::size_t> sample;
    std::uint64_t seed = 42;
    val->add_option("--dataset", val_paths, "Dataset directory or JSONL file (repeatable)")->required();
    val->add_option("--sample", sample, "Check a seeded random sample of this many CAPECs per language");
    val->add_option("--seed", seed, "Sampling seed");

    auto* ev = app.add_subcommand("evaluate", "Pairwise cosine similarity of generated code across datasets");
    std::vector<std::string> ev_paths;
    std::optional<std::string> ev_lang;
    std::string ev_kind, ev_endpoint;
    ev->add_option("--datasets", ev_paths, "Two or more dataset directories or JSONL files")->required()->expected(2, -1);
    ev->add_option("--language", ev_lang, "Language to compare (default: the one language all datasets share)");
    ev->add_option("--embedder", ev_kind, "Override embedder kind")->check(CLI::IsMember({"fallback", "remote"}));
    ev->add_option("--endpoint", ev_endpoint, "Embedding service endpoint");

    auto* agr = app.add_subcommand("agreement", "Average pairwise agreement and rater summaries");
    std::string raters;
    agr->add_option("--raters", raters, "Rater CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        auto rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ExitCode::InputError);
    }

    try {
        if (*stats) return cmd_stats(common, stats_langs, rule);
        if (*map) return cmd_map(common, map_out, preview);
        if (*gen) return cmd_generate(common, provider_name, gen_langs, dataset_id, resume, selections_path);
        if (*val) return cmd_validate(common, val_paths, sample, seed);
        if (*ev) return cmd_evaluate(common, ev_paths, ev_lang, ev_kind, ev_endpoint);
        if (*agr) return cmd_agreement(common, raters);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(e.exit_code());
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::InternalError);
    }
    return static_cast<int>(ExitCode::InternalError);
}
