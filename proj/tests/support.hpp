#pragma once

#include "capecgen/catalog.hpp"
#include "capecgen/io.hpp"
#include "capecgen/validation.hpp"

#include <filesystem>
#include <string>

namespace testing {

inline std::filesystem::path data_path(const std::string& name) {
    return std::filesystem::path(CAPECGEN_TEST_DATA) / name;
}

inline capecgen::CapecCatalog fixture_capecs() {
    return capecgen::parse_capec_catalog(capecgen::read_file(data_path("capec_fixture.xml")));
}

inline capecgen::CweCatalog fixture_cwes() {
    return capecgen::parse_cwe_catalog(capecgen::read_file(data_path("cwe_fixture.xml")));
}

// Scratch directory removed on scope exit.
using ScratchDir = capecgen::detail::TempDir;

}  // namespace testing
