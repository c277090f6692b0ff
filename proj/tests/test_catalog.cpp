#include "support.hpp"

#include "capecgen/catalog.hpp"

#include <catch_amalgamated.hpp>

using namespace capecgen;
using testing::fixture_capecs;
using testing::fixture_cwes;

namespace {

std::set<Language> langs(std::initializer_list<const char*> names) {
    std::set<Language> out;
    for (auto n : names) out.insert(Language::parse(n));
    return out;
}

const std::vector<Language> kTargets{Language::parse("Java"), Language::parse("Python"),
                                     Language::parse("JavaScript")};

}  // namespace

TEST_CASE("catalog: CAPEC fixture fields") {
    auto cat = fixture_capecs();
    REQUIRE(cat.kind == CatalogKind::Capec);
    REQUIRE(cat.version == "3.9");
    REQUIRE(cat.size() == 10);
    REQUIRE(cat.rejects.empty());

    const auto& sqli = cat.at(66);
    REQUIRE(sqli.name == "SQL Injection");
    REQUIRE(sqli.related_cwe_ids == std::vector<CweId>{89, 1286});
    REQUIRE(sqli.description ==
            "This attack exploits target software that constructs SQL statements based on user input. An attacker "
            "crafts input strings so that when the target software constructs SQL statements based on the input, the "
            "resulting SQL statement performs actions other than those the application intended.");
    REQUIRE(sqli.extended_description == "SQL Injection results from failure of the application to appropriately "
                                         "validate input.");
    REQUIRE(sqli.example_languages == langs({"Java"}));
    REQUIRE(sqli.code_blocks == 1);

    REQUIRE(cat.at(165).related_cwe_ids.empty());
    REQUIRE(cat.at(257).related_cwe_ids.empty());
    REQUIRE(cat.at(1).related_cwe_ids.size() == 16);
    REQUIRE(cat.at(1).related_cwe_ids.front() == 276);
    REQUIRE(cat.at(1).related_cwe_ids.back() == 1327);
    REQUIRE(cat.at(7).related_cwe_ids == std::vector<CweId>{89, 20});  // duplicate link dropped
    REQUIRE(cat.at(469).related_cwe_ids == std::vector<CweId>{770, 772});
    REQUIRE(cat.at(469).code_blocks == 1);
    REQUIRE(cat.at(469).example_languages.empty());
    REQUIRE(cat.at(18).description.find("image tags (<img>)") != std::string::npos);
    REQUIRE(cat.at(99).status.kind == StatusKind::Deprecated);
    REQUIRE(cat.at(2).status.kind == StatusKind::Draft);
    REQUIRE_FALSE(cat.at(2).extended_description);
}

TEST_CASE("catalog: CWE fixture fields") {
    auto cat = fixture_cwes();
    REQUIRE(cat.kind == CatalogKind::Cwe);
    REQUIRE(cat.version == "4.14");
    REQUIRE(cat.size() == 10);
    REQUIRE(cat.rejects.empty());

    REQUIRE(cat.at(20).example_languages == langs({"Java", "Python"}));
    REQUIRE(cat.at(20).first_code_language == Language::parse("Java"));
    REQUIRE(cat.at(20).extended_description ==
            "Input validation is a frequently-used technique for checking potentially dangerous inputs.");
    REQUIRE(cat.at(22).example_languages == langs({"JavaScript", "Java"}));
    REQUIRE(cat.at(79).example_languages == langs({"PHP"}));
    REQUIRE(cat.at(80).example_languages.empty());
    REQUIRE(cat.at(80).code_blocks == 0);
    REQUIRE(cat.at(89).first_code_language == Language::parse("C#"));
    REQUIRE(cat.at(89).extended_description->starts_with("Without sufficient removal"));
    REQUIRE(cat.at(534).status.retired());
    REQUIRE(cat.at(534).description.empty());
    REQUIRE(cat.at(1286).status.label == "Incomplete");
    REQUIRE(cat.find(9999) == nullptr);
    REQUIRE_THROWS_AS(cat.at(9999), InputError);
}

TEST_CASE("catalog: entry-level problems are collected, parse continues") {
    auto raw = R"(<Attack_Pattern_Catalog Version="3.9"><Attack_Patterns>
        <Attack_Pattern ID="5" Name="Ok"><Description>fine</Description></Attack_Pattern>
        <Attack_Pattern Name="No id"><Description>x</Description></Attack_Pattern>
        <Attack_Pattern ID="abc" Name="Bad id"><Description>x</Description></Attack_Pattern>
        <Attack_Pattern ID="6"><Description>x</Description></Attack_Pattern>
        <Attack_Pattern ID="7" Name="Empty" Status="Draft"><Description>  </Description></Attack_Pattern>
        <Attack_Pattern ID="8" Name="Bad link"><Description>x</Description>
           <Related_Weaknesses><Related_Weakness CWE_ID="x"/></Related_Weaknesses></Attack_Pattern>
        <Attack_Pattern ID="5" Name="Dup"><Description>again</Description></Attack_Pattern>
    </Attack_Patterns></Attack_Pattern_Catalog>)";
    auto cat = parse_capec_catalog(raw);
    REQUIRE(cat.size() == 1);
    REQUIRE(cat.at(5).name == "Ok");
    REQUIRE(cat.rejects.size() == 6);
    REQUIRE(cat.rejects[0].reason == "missing ID attribute");
    REQUIRE(cat.rejects[1].id == "abc");
    REQUIRE(cat.rejects[2].reason == "missing Name attribute");
    REQUIRE(cat.rejects[3].reason == "empty Description on active entry");
    REQUIRE(cat.rejects[4].reason == "invalid CWE_ID on Related_Weakness");
    REQUIRE(cat.rejects[5].reason == "duplicate ID");
    for (const auto& r : cat.rejects) REQUIRE(r.offset > 0);
}

TEST_CASE("catalog: document-level problems throw") {
    REQUIRE_THROWS_AS(parse_capec_catalog("<Attack_Pattern_Catalog><Attack_Patterns>"), XmlError);
    REQUIRE_THROWS_AS(parse_capec_catalog("<Weakness_Catalog/>"), XmlError);
    REQUIRE_THROWS_AS(parse_cwe_catalog("<Attack_Pattern_Catalog/>"), XmlError);
    REQUIRE(parse_cwe_catalog("<Weakness_Catalog Version=\"1\"/>").empty());
}

TEST_CASE("catalog: filter_active") {
    auto cat = fixture_capecs();
    auto active = filter_active(cat);
    REQUIRE(active.size() == 9);
    REQUIRE(active.find(99) == nullptr);
    REQUIRE(cat.size() == 10);  // original untouched
    REQUIRE(filter_active(active) == active);

    auto all_dep = parse_cwe_catalog(R"(<Weakness_Catalog><Weaknesses>
        <Weakness ID="1" Name="a" Status="Deprecated"/><Weakness ID="2" Name="b" Status="Obsolete"/>
        </Weaknesses></Weakness_Catalog>)");
    REQUIRE(all_dep.size() == 2);
    REQUIRE(filter_active(all_dep).empty());
}

TEST_CASE("catalog: JSON round trip") {
    auto capecs = fixture_capecs();
    auto back = catalog_from_json<CapecEntry>(catalog_to_json(capecs));
    REQUIRE(back == capecs);
    auto cwes = fixture_cwes();
    REQUIRE(catalog_from_json<CweEntry>(catalog_to_json(cwes)) == cwes);
}

TEST_CASE("catalog: code availability on the CWE fixture") {
    auto cwes = fixture_cwes();

    SECTION("first code block decides the language") {
        auto r = code_availability(cwes, kTargets);
        REQUIRE(r.total == 10);
        REQUIRE(r.with_code == 5);  // 20, 22, 79, 89, 770
        REQUIRE(r.any_language_pct == Catch::Approx(0.5));
        REQUIRE(r.per_language_count.at("Java") == 1);
        REQUIRE(r.per_language_count.at("JavaScript") == 1);
        REQUIRE(r.per_language_count.at("Python") == 1);
        REQUIRE(r.metadata.at("language_rule") == "first-code-block");
    }
    SECTION("any code block counts") {
        auto r = code_availability(cwes, kTargets, {LanguageRule::AnyCodeBlock});
        REQUIRE(r.with_code == 5);
        REQUIRE(r.per_language_count.at("Java") == 3);  // 20, 22, 89
        REQUIRE(r.per_language_count.at("JavaScript") == 1);
        REQUIRE(r.per_language_count.at("Python") == 2);  // 20, 770
        for (const auto& [l, pct] : r.per_language_pct) REQUIRE(pct <= r.any_language_pct);
    }
    SECTION("active entries only") {
        auto r = code_availability(filter_active(cwes), kTargets);
        REQUIRE(r.total == 9);
        REQUIRE(r.with_code == 5);
    }
    SECTION("empty catalog is an error") {
        REQUIRE_THROWS_AS(code_availability(CweCatalog{CatalogKind::Cwe, "", {}, {}}, kTargets), InputError);
    }
}

TEST_CASE("catalog: CAPEC availability with linked CWEs") {
    auto capecs = fixture_capecs();
    auto cwes = fixture_cwes();

    auto own = code_availability(capecs, kTargets, nullptr);
    REQUIRE(own.total == 10);
    REQUIRE(own.with_code == 2);  // 66 (Java), 469 (untagged pre)
    REQUIRE(own.per_language_count.at("Java") == 1);

    // 66 keeps its own Java block and 469 its untagged one. 7 borrows C#
    // from CWE-89 (its first linked CWE with code), 19 borrows Java from
    // CWE-20. 2 and 18 link only code-less CWEs; 1 links none in the fixture.
    auto linked = code_availability(capecs, kTargets, &cwes);
    REQUIRE(linked.with_code == 4);
    REQUIRE(linked.per_language_count.at("Java") == 2);
    REQUIRE(linked.per_language_count.at("Python") == 0);
}
