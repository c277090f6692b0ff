// Runs the capecgen binary and checks exit codes and output.

#include "support.hpp"

#include <catch_amalgamated.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>

#include <sys/wait.h>

namespace {

struct Run {
    int code = -1;
    std::string out;
};

Run run(const std::string& args, bool merge_stderr = true) {
    std::string cmd = std::string(CAPECGEN_CLI) + " " + args + (merge_stderr ? " 2>&1" : " 2>/dev/null");
    Run r;
    FILE* p = ::popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    char buf[4096];
    while (auto n = std::fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
    int status = ::pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

std::string offline_config(const std::filesystem::path& dir) {
    auto cfg = nlohmann::json::parse(capecgen::read_file(std::filesystem::path(CAPECGEN_SOURCE_DIR) / "config/offline.json"));
    cfg["catalogs"]["capec_path"] = testing::data_path("capec_fixture.xml").string();
    cfg["catalogs"]["cwe_path"] = testing::data_path("cwe_fixture.xml").string();
    cfg["output_dir"] = (dir / "out").string();
    auto path = dir / "config.json";
    capecgen::write_file(path, cfg.dump(2));
    return q(path);
}

}  // namespace

TEST_CASE("cli: usage errors") {
    REQUIRE(run("").code == 2);
    REQUIRE(run("frobnicate").code == 2);
    REQUIRE(run("--help").code == 0);
    REQUIRE(run("stats --format xml").code == 2);
}

TEST_CASE("cli: stats") {
    auto r = run("stats --cwe " + q(testing::data_path("cwe_fixture.xml")) + " --capec " +
                 q(testing::data_path("capec_fixture.xml")));
    REQUIRE(r.code == 0);
    REQUIRE(r.out.find("counting rule: first-code-block") != std::string::npos);
    REQUIRE(r.out.find("CWE 4.14: 10 entries, 5 with example code (50.00%)") != std::string::npos);

    auto j = run("--format json stats --language-rule any --cwe " + q(testing::data_path("cwe_fixture.xml")), false);
    REQUIRE(j.code == 0);
    auto doc = nlohmann::json::parse(j.out);
    REQUIRE(doc["cwe"]["all"]["per_language_count"]["Java"] == 3);

    REQUIRE(run("stats --cwe /nonexistent.xml").code == 2);
    REQUIRE(run("stats").code == 2);
    testing::ScratchDir dir;
    capecgen::write_file(dir.path() / "bad.xml", "<Weakness_Catalog><Weaknesses>");
    auto bad = run("stats --cwe " + q(dir.path() / "bad.xml"));
    REQUIRE(bad.code == 2);
    REQUIRE(bad.out.find("at byte") != std::string::npos);
}

TEST_CASE("cli: map is reproducible") {
    testing::ScratchDir dir;
    auto cfg = offline_config(dir.path());
    auto a = run("--config " + cfg + " map --out " + q(dir.path() / "a.jsonl"));
    REQUIRE(a.code == 0);
    REQUIRE(a.out.find("9 CAPECs mapped with k=5") != std::string::npos);
    REQUIRE(run("--config " + cfg + " map --out " + q(dir.path() / "b.jsonl")).code == 0);
    REQUIRE(capecgen::read_file(dir.path() / "a.jsonl") == capecgen::read_file(dir.path() / "b.jsonl"));
}

TEST_CASE("cli: generate, validate, evaluate") {
    testing::ScratchDir dir;
    auto cfg = offline_config(dir.path());
    auto g = run("--config " + cfg + " generate --provider mock --language Python --language JavaScript");
    REQUIRE(g.code == 0);
    REQUIRE(g.out.find("Python: 8 new, 0 existing, 1 rejected") != std::string::npos);
    auto ds = dir.path() / "out" / "mock";
    REQUIRE(std::filesystem::exists(ds / "python.jsonl"));
    REQUIRE(std::filesystem::exists(ds / "manifest.json"));

    SECTION("rerun needs --resume") {
        REQUIRE(run("--config " + cfg + " generate --provider mock --language Python").code == 4);
        auto again = run("--config " + cfg + " generate --provider mock --language Python --resume");
        REQUIRE(again.code == 0);
        REQUIRE(again.out.find("Python: 0 new, 8 existing, 1 rejected") != std::string::npos);
        REQUIRE(run("--config " + cfg + " generate --provider nope").code == 2);
    }
    SECTION("compile checks") {
        auto v = run("--format json validate --dataset " + q(ds) + " --sample 3 --seed 1", false);
        REQUIRE(v.code == 0);
        auto rep = nlohmann::json::parse(v.out);
        REQUIRE(rep["cells"].size() == 2);
        for (const auto& c : rep["cells"]) {
            if (c["environment_error"].is_null()) REQUIRE(c["passed"] == 3);
            REQUIRE(c["sample"].size() == 3);
        }
    }
    SECTION("similarity") {
        REQUIRE(run("--config " + cfg + " generate --provider mock-b --language Python").code == 0);
        auto e = run("--config " + cfg + " evaluate --datasets " + q(ds) + " " + q(dir.path() / "out" / "mock-b") +
                     " --language Python");
        REQUIRE(e.code == 0);
        REQUIRE(e.out.find("Cosine similarity (Python)") != std::string::npos);
        // ds holds two languages, so the language must be named.
        REQUIRE(run("evaluate --datasets " + q(ds) + " " + q(dir.path() / "out" / "mock-b")).code == 2);
        REQUIRE(run("evaluate --datasets " + q(ds)).code == 2);
    }
}

TEST_CASE("cli: missing credentials fail before any work") {
    auto src = std::filesystem::path(CAPECGEN_SOURCE_DIR);
    auto cmd = std::string("env -u OPENAI_API_KEY ") + CAPECGEN_CLI + " --config " + q(src / "config/default.json") +
               " generate --provider gpt >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(status));
    REQUIRE(WEXITSTATUS(status) == 3);
}

TEST_CASE("cli: agreement") {
    auto r = run("agreement --raters " + q(testing::data_path("raters_grid.csv")));
    REQUIRE(r.code == 0);
    REQUIRE(r.out.find("APA (all): 95.83%") != std::string::npos);
    auto j = run("--format json agreement --raters " + q(testing::data_path("raters_small.csv")), false);
    REQUIRE(nlohmann::json::parse(j.out)["apa"] == 75.0);
    testing::ScratchDir dir;
    capecgen::write_file(dir.path() / "bad.csv", "rater_id,item_id,language,dataset_id,relevant,readability\na,1,J,d,yes,9\n");
    REQUIRE(run("agreement --raters " + q(dir.path() / "bad.csv")).code == 2);
    REQUIRE(run("--config /nonexistent.json map").code == 2);
}
