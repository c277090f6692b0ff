#include "paper_rows.hpp"
#include "support.hpp"

#include "capecgen/promptkit.hpp"
#include "capecgen/tokenizer.hpp"

#include <catch_amalgamated.hpp>

using namespace capecgen;

TEST_CASE("promptkit: default template") {
    auto t = PromptTemplate::default_template();
    REQUIRE(count_tokens(t.body()) == 78);
    REQUIRE(t.body().find("Respond in JSON format with 'code_snippet' and 'description' keys.") != std::string::npos);
    REQUIRE(t.id() == sha256_hex(t.body()));
    auto shipped = PromptTemplate::load(std::filesystem::path(CAPECGEN_SOURCE_DIR) / "templates/code_generation.txt");
    REQUIRE(shipped.body() == t.body());
    REQUIRE(shipped.id() == t.id());
}

TEST_CASE("promptkit: placeholder validation") {
    REQUIRE_THROWS_AS(PromptTemplate::from_text("no placeholders"), InputError);
    REQUIRE_THROWS_AS(PromptTemplate::from_text("[insert_capec_cwes] only"), InputError);
    REQUIRE_THROWS_AS(
        PromptTemplate::from_text("[insert_capec_cwes] [insert_programming_language] [insert_programming_language]"),
        InputError);
    REQUIRE_NOTHROW(PromptTemplate::from_text("[insert_programming_language] then [insert_capec_cwes]"));
}

TEST_CASE("promptkit: rendering") {
    auto t = PromptTemplate::default_template();
    auto p = render_prompt(t, "CAPEC-66: SQL Injection", "Python", 66);
    REQUIRE(p.text.find("generate a Python code snippet") != std::string::npos);
    REQUIRE(p.text.find("CAPEC-66: SQL Injection") != std::string::npos);
    REQUIRE(p.text.find("[insert_") == std::string::npos);
    REQUIRE(p.context_hash == sha256_hex("CAPEC-66: SQL Injection"));
    REQUIRE(p.prompt_hash == sha256_hex(p.text));
    REQUIRE(p.template_id == t.id());
    REQUIRE(p.capec_id == 66);

    SECTION("placeholder text inside the context is not re-expanded") {
        auto q = render_prompt(t, "ctx [insert_programming_language] ctx", "Java");
        REQUIRE(q.text.find("ctx [insert_programming_language] ctx") != std::string::npos);
        REQUIRE(q.text.find("generate a Java code snippet") != std::string::npos);
    }
    SECTION("language checks") {
        REQUIRE_THROWS_AS(render_prompt(t, "x", ""), InputError);
        REQUIRE_THROWS_AS(render_prompt(t, "x", "Rust", 1, {"Java", "Python"}), InputError);
        REQUIRE_NOTHROW(render_prompt(t, "x", "Java", 1, {"Java", "Python"}));
    }
}

TEST_CASE("promptkit: context block") {
    auto capecs = testing::fixture_capecs();
    auto cwes = testing::fixture_cwes();
    auto sel = select_related_cwes(capecs.at(66), testing::ranking_from_order({20, 80}), 4);
    REQUIRE(sel.ids() == std::vector<CweId>{89, 1286, 20, 80});
    auto ctx = build_context_block(capecs.at(66), sel, cwes);
    std::string expected = "CAPEC-66: SQL Injection\nDescription: " + capecs.at(66).description +
                           "\n\nCWE-89: " + cwes.at(89).name + "\nDescription: " + cwes.at(89).description +
                           "\nExtended Description: " + *cwes.at(89).extended_description +
                           "\n\nCWE-1286: " + cwes.at(1286).name + "\nDescription: " + cwes.at(1286).description +
                           "\n\nCWE-20: " + cwes.at(20).name + "\nDescription: " + cwes.at(20).description +
                           "\nExtended Description: " + *cwes.at(20).extended_description +
                           "\n\nCWE-80: " + cwes.at(80).name + "\nDescription: " + cwes.at(80).description;
    REQUIRE(ctx == expected);

    auto dangling = select_related_cwes(capecs.at(1), {}, 5);
    REQUIRE_THROWS_WITH(build_context_block(capecs.at(1), dangling, cwes),
                        Catch::Matchers::ContainsSubstring("CWE-276"));
}
