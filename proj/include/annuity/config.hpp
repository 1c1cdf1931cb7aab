#pragma once

#include <string>

#include "annuity/valuation.hpp"

namespace annuity {

/// Scenario from YAML text. Errors are ConfigError with "source:line: field: reason".
Scenario parse_scenario(const std::string& text, const std::string& source = "<string>");

/// Reads and parses a scenario file.
Scenario load_scenario(const std::string& path);

}  // namespace annuity
