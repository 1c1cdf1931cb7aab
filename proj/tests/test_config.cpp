#include <fstream>
#include <sstream>
#include <string>

#include "annuity/config.hpp"
#include "annuity/errors.hpp"
#include "doctest.h"

using namespace annuity;

namespace {

const char* kBase = R"(name: t
horizon: 5
alpha: 0.05
sizes: [1, 3]
hazard: {kind: constant, floor: 0.01, reference_excess: 0.03}
rates: {kind: constant, level: 0.04}
grid: {hazard_nodes: 40, steps_per_year: 20}
probes:
  - {lambda: 0.04, t: 1}
)";

std::string replace(std::string text, const std::string& from, const std::string& to) {
    const auto pos = text.find(from);
    REQUIRE(pos != std::string::npos);
    return text.replace(pos, from.size(), to);
}

std::string error_of(const std::string& text) {
    try {
        parse_scenario(text, "case.yaml");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("scenario YAML round trip of the basic fields") {
    const Scenario sc = parse_scenario(kBase, "case.yaml");
    CHECK(sc.name == "t");
    CHECK(sc.horizon == 5);
    CHECK(sc.alpha == 0.05);
    CHECK(sc.sizes == std::vector<int>{1, 3});
    CHECK(sc.hazard.floor() == 0.01);
    CHECK(sc.mode() == RateMode::deterministic_rate);
    REQUIRE(sc.probes.size() == 1);
    CHECK(sc.probes[0].r == 0.04);  // defaults to the rate level
    CHECK(sc.probes[0].t == 1);
    CHECK(sc.grid.hazard_nodes == 40);
    CHECK(!sc.eta);
}

TEST_CASE("stochastic kinds parse") {
    std::string text = replace(kBase, "{kind: constant, floor: 0.01, reference_excess: 0.03}",
                               "{kind: brownian_makeham, floor: 0.01, g: 0.01, m: 0.5, sigma: 0.2, lambda0: 0.05}");
    text = replace(text, "{kind: constant, level: 0.04}",
                   "{kind: vasicek, kappa: 0.2, theta: 0.05, vol: 0.01, mpr: 0.3, r0: 0.05}");
    text = replace(text, "{lambda: 0.04, t: 1}", "{r: 0.05, lambda: 0.04, t: 1}");
    const Scenario sc = parse_scenario(text, "case.yaml");
    CHECK(sc.mode() == RateMode::two_factor);
    CHECK(sc.rate0 == 0.05);
    CHECK(sc.hazard.kind() == HazardKind::brownian_makeham);
    CHECK(sc.hazard.vol(1.0) == doctest::Approx(0.2));
}

TEST_CASE("missing alpha names the field and line") {
    const std::string msg = error_of(replace(kBase, "alpha: 0.05\n", ""));
    CHECK(msg.find("case.yaml:") == 0);
    CHECK(msg.find("alpha: missing required field") != std::string::npos);
}

TEST_CASE("alpha above the square root of the floor is rejected") {
    const std::string msg = error_of(replace(kBase, "alpha: 0.05", "alpha: 0.2"));
    CHECK(msg.find("sqrt(hazard floor)") != std::string::npos);
    CHECK(error_of(replace(kBase, "alpha: 0.05", "alpha: 0.1")).empty());
    CHECK(!error_of(replace(kBase, "alpha: 0.05", "alpha: -0.01")).empty());
}

TEST_CASE("unknown fields and kinds are rejected") {
    CHECK(error_of(replace(kBase, "horizon: 5", "horizon: 5\nhorizn: 6")).find("horizn") != std::string::npos);
    CHECK(error_of(replace(kBase, "steps_per_year: 20", "steps_per_year: 20, nodes: 3")).find("grid.nodes") !=
          std::string::npos);
    CHECK(error_of(replace(kBase, "kind: constant, level", "kind: hull_white, level")).find("hull_white") !=
          std::string::npos);
}

TEST_CASE("bad values and syntax") {
    CHECK(error_of(replace(kBase, "horizon: 5", "horizon: five")).find("horizon") != std::string::npos);
    CHECK(error_of(replace(kBase, "{lambda: 0.04, t: 1}", "{lambda: 0.005, t: 1}")).find("floor") !=
          std::string::npos);
    CHECK(error_of(replace(kBase, "{lambda: 0.04, t: 1}", "{lambda: 0.04, t: 7}")).find("horizon") !=
          std::string::npos);
    CHECK(error_of("horizon: [1,\n").find("case.yaml:") == 0);
    CHECK_THROWS_AS(load_scenario("/nonexistent/file.yaml"), ConfigError);
}
