#include "support.hpp"

#include "capecgen/pipeline.hpp"

#include <catch_amalgamated.hpp>

#include <atomic>
#include <fstream>

using namespace capecgen;
using testing::ScratchDir;

namespace {

// Wraps a provider and counts calls; optionally throws instead of answering.
class CountingProvider final : public Provider {
public:
    enum class Fault { None, Transport, Credentials };

    explicit CountingProvider(ProviderConfig cfg, Fault fault = Fault::None) : inner_(std::move(cfg)), fault_(fault) {}

    Completion complete(const RenderedPrompt& p) override {
        ++calls;
        if (fault_ == Fault::Transport) throw TransportError("connection refused", 3);
        if (fault_ == Fault::Credentials) throw CredentialError("bad key");
        return inner_.complete(p);
    }
    const ProviderConfig& config() const override { return inner_.config(); }

    std::atomic<int> calls{0};

private:
    MockProvider inner_;
    Fault fault_;
};

struct Fixture {
    CapecCatalog capecs;
    CweCatalog cwes = testing::fixture_cwes();
    std::map<CapecId, RelatedCweSelection> selections;
    PromptTemplate tmpl = PromptTemplate::default_template();
    FallbackEmbedder embedder{256};

    explicit Fixture(std::vector<CapecId> ids = {2, 18, 469}) {
        auto all = testing::fixture_capecs();
        capecs = CapecCatalog{CatalogKind::Capec, all.version, {}, {}};
        for (auto id : ids) capecs.entries.emplace(id, all.at(id));
        selections = select_all(capecs, filter_active(cwes), embedder, 5);
    }

    GenerationInputs inputs(std::size_t k = 5) const {
        return {&capecs, &cwes, &selections, &tmpl, {{"kind", "fallback"}, {"dim", 256}}, k};
    }
};

std::vector<std::string> lines_of(const std::filesystem::path& p) {
    std::vector<std::string> out;
    std::ifstream in(p);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

}  // namespace

TEST_CASE("pipeline: one record per CAPEC") {
    Fixture fx;
    ScratchDir dir;
    DatasetStore store(dir.path(), "run");
    CountingProvider provider({.name = "mock"});
    auto s = generate_dataset(fx.inputs(), "Python", provider, store);
    REQUIRE(s.new_records == 3);
    REQUIRE(s.rejects == 0);
    REQUIRE(provider.calls == 3);

    auto ds = read_dataset(store.dir()).dataset;
    REQUIRE(ds.records.size() == 3);
    REQUIRE(ds.dataset_id == "run");
    REQUIRE(ds.manifest);
    REQUIRE(ds.manifest->completed.at("Python") == 3);
    REQUIRE(ds.manifest->k == 5);
    REQUIRE(ds.manifest->template_id == fx.tmpl.id());
    for (const auto& r : ds.records) {
        REQUIRE(r.language == "Python");
        REQUIRE(r.attempt == 1);
        REQUIRE(r.selection == fx.selections.at(r.capec_id));
        REQUIRE(r.context_hash == recompute_context_hash(r, fx.capecs, fx.cwes));
        REQUIRE(r.created_at.size() == 20);
    }
    REQUIRE_FALSE(std::filesystem::exists(store.rejects_path()));
}

TEST_CASE("pipeline: malformed replies are rejected after one corrective retry") {
    Fixture fx;
    ScratchDir dir;
    DatasetStore store(dir.path(), "run");
    CountingProvider provider({.name = "mock", .mock_behavior = MockBehavior::Malformed});
    auto s = generate_dataset(fx.inputs(), "Java", provider, store);
    REQUIRE(s.new_records == 0);
    REQUIRE(s.rejects == 3);
    REQUIRE(provider.calls == 6);
    auto rejects = lines_of(store.rejects_path());
    REQUIRE(rejects.size() == 3);
    for (const auto& line : rejects) {
        auto j = nlohmann::json::parse(line);
        REQUIRE(j["error_class"] == "format");
        REQUIRE(j["language"] == "Java");
    }
    REQUIRE(read_dataset(store.dir()).dataset.records.empty());
}

TEST_CASE("pipeline: corrective retry recovers") {
    Fixture fx;
    ScratchDir dir;
    DatasetStore store(dir.path(), "run");
    CountingProvider provider({.name = "mock", .mock_behavior = MockBehavior::MalformedUntilCorrected});
    auto s = generate_dataset(fx.inputs(), "Java", provider, store);
    REQUIRE(s.new_records == 3);
    REQUIRE(provider.calls == 6);
    for (const auto& r : read_dataset(store.dir()).dataset.records) REQUIRE(r.attempt == 2);
}

TEST_CASE("pipeline: per-CAPEC failures do not stop the run") {
    SECTION("unresolvable CWE in the context") {
        Fixture fx({1, 2});
        ScratchDir dir;
        DatasetStore store(dir.path(), "run");
        CountingProvider provider({.name = "mock"});
        auto s = generate_dataset(fx.inputs(), "Java", provider, store);
        REQUIRE(s.new_records == 1);
        REQUIRE(s.rejects == 1);
        auto j = nlohmann::json::parse(lines_of(store.rejects_path()).at(0));
        REQUIRE(j["capec_id"] == 1);
        REQUIRE(j["error_class"] == "context");
        REQUIRE(j["message"].get<std::string>().find("CWE-276") != std::string::npos);
    }
    SECTION("transport failures") {
        Fixture fx;
        ScratchDir dir;
        DatasetStore store(dir.path(), "run");
        CountingProvider provider({.name = "mock"}, CountingProvider::Fault::Transport);
        auto s = generate_dataset(fx.inputs(), "Java", provider, store);
        REQUIRE(s.rejects == 3);
        REQUIRE(nlohmann::json::parse(lines_of(store.rejects_path()).at(0))["error_class"] == "transport");
    }
    SECTION("credential failures abort") {
        Fixture fx;
        ScratchDir dir;
        DatasetStore store(dir.path(), "run");
        CountingProvider provider({.name = "mock"}, CountingProvider::Fault::Credentials);
        REQUIRE_THROWS_AS(generate_dataset(fx.inputs(), "Java", provider, store, {false, 1}), CredentialError);
    }
}

TEST_CASE("pipeline: resume") {
    Fixture fx;
    ScratchDir dir;
    DatasetStore store(dir.path(), "run");
    CountingProvider first({.name = "mock"});
    generate_dataset(fx.inputs(), "Python", first, store);
    auto path = store.records_path("Python");

    SECTION("existing records without --resume are refused") {
        CountingProvider again({.name = "mock"});
        REQUIRE_THROWS_AS(generate_dataset(fx.inputs(), "Python", again, store), RefusalError);
        REQUIRE(again.calls == 0);
    }
    SECTION("only missing CAPECs are requested") {
        auto lines = lines_of(path);
        lines.pop_back();
        std::string kept;
        for (const auto& l : lines) kept += l + "\n";
        write_file(path, kept);

        CountingProvider again({.name = "mock"});
        auto s = generate_dataset(fx.inputs(), "Python", again, store, {true, 4});
        REQUIRE(again.calls == 1);
        REQUIRE(s.existing_records == 2);
        REQUIRE(s.new_records == 1);
        REQUIRE(read_dataset(store.dir()).dataset.records.size() == 3);
    }
    SECTION("a crash-truncated tail is dropped and regenerated") {
        auto text = read_file(path);
        auto last = text.rfind('\n', text.size() - 2);
        write_file(path, text.substr(0, last + 1) + text.substr(last + 1, 40));  // half a line

        auto rr = read_dataset(store.dir());
        REQUIRE(rr.dataset.records.size() == 2);
        REQUIRE(rr.warnings.size() == 1);

        CountingProvider again({.name = "mock"});
        generate_dataset(fx.inputs(), "Python", again, store, {true, 4});
        REQUIRE(again.calls == 1);
        auto after = read_dataset(store.dir());
        REQUIRE(after.dataset.records.size() == 3);
        REQUIRE(after.warnings.empty());
    }
    SECTION("changed settings are refused") {
        CountingProvider again({.name = "mock"});
        REQUIRE_THROWS_WITH(generate_dataset(fx.inputs(4), "Python", again, store, {true, 4}),
                            Catch::Matchers::ContainsSubstring("k: existing 5, requested 4"));
        CountingProvider other({.name = "mock", .model_id = "mock-2"});
        REQUIRE_THROWS_AS(generate_dataset(fx.inputs(), "Python", other, store, {true, 4}), RefusalError);
        REQUIRE(again.calls == 0);
    }
    SECTION("another language joins the same dataset") {
        CountingProvider again({.name = "mock"});
        generate_dataset(fx.inputs(), "JavaScript", again, store);
        auto ds = read_dataset(store.dir()).dataset;
        REQUIRE(ds.records.size() == 6);
        REQUIRE(ds.languages() == std::set<std::string>{"JavaScript", "Python"});
        REQUIRE(ds.manifest->languages == std::vector<std::string>{"Python", "JavaScript"});
    }
}

TEST_CASE("pipeline: corrupt lines are reported by number") {
    Fixture fx;
    ScratchDir dir;
    DatasetStore store(dir.path(), "run");
    CountingProvider provider({.name = "mock"});
    generate_dataset(fx.inputs(), "Python", provider, store);
    auto lines = lines_of(store.records_path("Python"));
    lines[1] = "{\"capec_id\": oops}";
    std::string text;
    for (const auto& l : lines) text += l + "\n";
    write_file(store.records_path("Python"), text);
    REQUIRE_THROWS_WITH(read_dataset(store.dir()), Catch::Matchers::ContainsSubstring("line 2"));
    REQUIRE_THROWS_AS(read_dataset(dir.path() / "missing.jsonl"), InputError);
}

TEST_CASE("pipeline: concurrent runs are deterministic up to order") {
    Fixture fx({2, 7, 18, 19, 66, 165, 257, 469});
    ScratchDir a, b;
    DatasetStore sa(a.path(), "run"), sb(b.path(), "run");
    CountingProvider pa({.name = "mock"}), pb({.name = "mock"});
    generate_dataset(fx.inputs(), "Java", pa, sa, {false, 4});
    generate_dataset(fx.inputs(), "Java", pb, sb, {false, 1});
    auto da = read_dataset(sa.dir()).dataset;
    auto db = read_dataset(sb.dir()).dataset;
    REQUIRE(da.records.size() == 8);
    REQUIRE(canonical_dump(da) == canonical_dump(db));
}

TEST_CASE("pipeline: record JSON round trip") {
    GenerationRecord r;
    r.dataset_id = "d";
    r.capec_id = 66;
    r.language = "Java";
    r.model_id = "m";
    r.provider_kind = "mock";
    r.code_snippet = "class A {}";
    r.description = "desc";
    r.selection.capec_id = 66;
    r.selection.selected = {{89, Provenance::MitreLink, std::nullopt}, {20, Provenance::SimilarityAdded, 0.5}};
    r.prompt_template_id = "t";
    r.context_hash = "c";
    r.created_at = "2024-01-01T00:00:00Z";
    REQUIRE(nlohmann::json(r).get<GenerationRecord>() == r);
    auto j = nlohmann::json(r);
    j["code_snippet"] = "";
    REQUIRE_THROWS_AS(j.get<GenerationRecord>(), InputError);
}
