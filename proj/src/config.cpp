#include "annuity/config.hpp"

#include <fstream>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "annuity/errors.hpp"

namespace annuity {

namespace {

class Reader {
public:
    explicit Reader(std::string source) : source_(std::move(source)) {}

    [[noreturn]] void fail(const YAML::Node& at, const std::string& field, const std::string& why) const {
        std::ostringstream msg;
        msg << source_;
        if (at.IsDefined() && at.Mark().line >= 0) msg << ':' << at.Mark().line + 1;
        msg << ": " << field << ": " << why;
        throw ConfigError(msg.str());
    }

    YAML::Node required(const YAML::Node& parent, const std::string& key, const std::string& path) const {
        if (!parent.IsMap()) fail(parent, path, "expected a mapping");
        YAML::Node n = parent[key];
        if (!n.IsDefined() || n.IsNull()) fail(parent, path + key, "missing required field");
        return n;
    }

    template <typename T>
    T as(const YAML::Node& n, const std::string& field) const {
        try {
            return n.as<T>();
        } catch (const YAML::Exception&) {
            fail(n, field, "cannot read value '" + (n.IsScalar() ? n.Scalar() : std::string("<node>")) + "'");
        }
    }

    template <typename T>
    T get(const YAML::Node& parent, const std::string& key, const std::string& path) const {
        return as<T>(required(parent, key, path), path + key);
    }

    template <typename T>
    T get_or(const YAML::Node& parent, const std::string& key, const std::string& path, T fallback) const {
        if (!parent.IsDefined() || parent.IsNull()) return fallback;
        if (!parent.IsMap()) fail(parent, path, "expected a mapping");
        YAML::Node n = parent[key];
        if (!n.IsDefined() || n.IsNull()) return fallback;
        return as<T>(n, path + key);
    }

    void known(const YAML::Node& map, const std::string& path, std::initializer_list<const char*> keys) const {
        if (!map.IsDefined() || map.IsNull()) return;
        if (!map.IsMap()) fail(map, path, "expected a mapping");
        for (const auto& kv : map) {
            const std::string k = kv.first.as<std::string>();
            bool ok = false;
            for (const char* key : keys) ok = ok || k == key;
            if (!ok) fail(kv.first, path + k, "unknown field");
        }
    }

    // Runs `build`, re-raising model validation errors against the given node.
    template <typename Fn>
    auto checked(const YAML::Node& at, const std::string& field, Fn&& build) const {
        try {
            return build();
        } catch (const ConfigError& e) {
            fail(at, field, e.what());
        }
    }

private:
    std::string source_;
};

HazardModel read_hazard(const Reader& in, const YAML::Node& h) {
    const std::string p = "hazard.";
    const auto kind = in.get<std::string>(h, "kind", p);
    const double floor = in.get<double>(h, "floor", p);
    if (kind == "constant") {
        in.known(h, p, {"kind", "floor", "reference_excess"});
        const double ref = in.get_or<double>(h, "reference_excess", p, 0.03);
        return in.checked(h, "hazard", [&] { return HazardModel::constant(floor, ref); });
    }
    if (kind == "brownian_makeham") {
        in.known(h, p, {"kind", "floor", "g", "m", "sigma", "lambda0"});
        BrownianMakehamParams bm;
        bm.g = in.get<double>(h, "g", p);
        bm.m = in.get<double>(h, "m", p);
        bm.sigma = in.get<double>(h, "sigma", p);
        bm.lambda0 = in.get<double>(h, "lambda0", p);
        return in.checked(h, "hazard", [&] { return HazardModel::brownian_makeham(bm, floor); });
    }
    in.fail(h["kind"], p + "kind", "unknown hazard kind '" + kind + "' (constant, brownian_makeham)");
}

ShortRateModel read_rates(const Reader& in, const YAML::Node& r, double& rate0) {
    const std::string p = "rates.";
    const auto kind = in.get<std::string>(r, "kind", p);
    if (kind == "constant") {
        in.known(r, p, {"kind", "level"});
        const double level = in.get<double>(r, "level", p);
        rate0 = level;
        return ShortRateModel::constant(level);
    }
    if (kind == "vasicek" || kind == "cir") {
        in.known(r, p, {"kind", "kappa", "theta", "vol", "mpr", "r0"});
        const double kappa = in.get<double>(r, "kappa", p), theta = in.get<double>(r, "theta", p);
        const double vol = in.get<double>(r, "vol", p), mpr = in.get_or<double>(r, "mpr", p, 0.0);
        rate0 = in.get_or<double>(r, "r0", p, theta);
        if (kind == "vasicek")
            return in.checked(r, "rates", [&] { return ShortRateModel::vasicek({kappa, theta, vol, mpr}); });
        return in.checked(r, "rates", [&] { return ShortRateModel::cir({kappa, theta, vol, mpr}); });
    }
    in.fail(r["kind"], p + "kind", "unknown rate kind '" + kind + "' (constant, vasicek, cir)");
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& source) {
    Reader in(source);
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ": syntax: " + e.msg);
    }
    if (!root.IsMap()) throw ConfigError(source + ": top level must be a mapping");
    in.known(root, "", {"name", "horizon", "alpha", "sizes", "eta", "hazard", "rates", "grid", "solver", "paths",
                        "quadrature", "hedge", "probes"});

    Scenario sc;
    sc.name = in.get_or<std::string>(root, "name", "", "scenario");
    sc.horizon = in.get<double>(root, "horizon", "");
    sc.alpha = in.get<double>(root, "alpha", "");
    if (root["sizes"].IsDefined()) sc.sizes = in.as<std::vector<int>>(root["sizes"], "sizes");
    if (root["eta"].IsDefined() && !root["eta"].IsNull()) sc.eta = in.as<double>(root["eta"], "eta");
    sc.hazard = read_hazard(in, in.required(root, "hazard", ""));
    sc.rates = read_rates(in, in.required(root, "rates", ""), sc.rate0);

    const YAML::Node g = root["grid"];
    in.known(g, "grid.", {"r_min", "r_max", "r_nodes", "hazard_nodes", "hazard_lower", "hazard_upper",
                          "hazard_reference", "steps_per_year"});
    sc.grid.r_min = in.get_or(g, "r_min", "grid.", sc.grid.r_min);
    sc.grid.r_max = in.get_or(g, "r_max", "grid.", sc.grid.r_max);
    sc.grid.r_nodes = in.get_or(g, "r_nodes", "grid.", sc.grid.r_nodes);
    sc.grid.hazard_nodes = in.get_or(g, "hazard_nodes", "grid.", sc.grid.hazard_nodes);
    sc.grid.hazard_lower = in.get_or(g, "hazard_lower", "grid.", sc.grid.hazard_lower);
    sc.grid.hazard_upper = in.get_or(g, "hazard_upper", "grid.", sc.grid.hazard_upper);
    sc.grid.hazard_reference = in.get_or(g, "hazard_reference", "grid.", sc.grid.hazard_reference);
    sc.grid.steps_per_year = in.get_or(g, "steps_per_year", "grid.", sc.grid.steps_per_year);

    const YAML::Node s = root["solver"];
    in.known(s, "solver.", {"theta", "max_picard", "picard_tol", "save_every", "payment_rate"});
    sc.solver.theta = in.get_or(s, "theta", "solver.", sc.solver.theta);
    sc.solver.max_picard = in.get_or(s, "max_picard", "solver.", sc.solver.max_picard);
    sc.solver.picard_tol = in.get_or(s, "picard_tol", "solver.", sc.solver.picard_tol);
    sc.solver.save_every = in.get_or(s, "save_every", "solver.", sc.solver.save_every);
    sc.solver.payment_rate = in.get_or(s, "payment_rate", "solver.", sc.solver.payment_rate);

    const YAML::Node mc = root["paths"];
    in.known(mc, "paths.", {"count", "steps_per_year", "seed", "antithetic", "workers"});
    sc.paths.paths = in.get_or(mc, "count", "paths.", sc.paths.paths);
    sc.paths.steps_per_year = in.get_or(mc, "steps_per_year", "paths.", sc.paths.steps_per_year);
    sc.paths.seed = in.get_or(mc, "seed", "paths.", sc.paths.seed);
    sc.paths.antithetic = in.get_or(mc, "antithetic", "paths.", sc.paths.antithetic);
    sc.paths.workers = in.get_or(mc, "workers", "paths.", sc.paths.workers);

    const YAML::Node q = root["quadrature"];
    in.known(q, "quadrature.", {"intervals", "hazard_nodes", "steps_per_year"});
    sc.quadrature.intervals = in.get_or(q, "intervals", "quadrature.", sc.quadrature.intervals);
    sc.quadrature.hazard_nodes = in.get_or(q, "hazard_nodes", "quadrature.", sc.quadrature.hazard_nodes);
    sc.quadrature.steps_per_year = in.get_or(q, "steps_per_year", "quadrature.", sc.quadrature.steps_per_year);

    const YAML::Node h = root["hedge"];
    in.known(h, "hedge.", {"interval"});
    sc.hedge_interval = in.get_or(h, "interval", "hedge.", sc.hedge_interval);

    const YAML::Node probes = in.required(root, "probes", "");
    if (!probes.IsSequence() || probes.size() == 0) in.fail(probes, "probes", "expected a non-empty list");
    for (std::size_t i = 0; i < probes.size(); ++i) {
        const std::string p = "probes[" + std::to_string(i) + "].";
        const YAML::Node n = probes[i];
        in.known(n, p, {"r", "lambda", "t"});
        Probe pr;
        pr.r = in.get_or<double>(n, "r", p, sc.rate0);
        pr.lambda = in.get<double>(n, "lambda", p);
        pr.t = in.get_or<double>(n, "t", p, 0.0);
        sc.probes.push_back(pr);
    }
    in.checked(root, "scenario", [&] {
        sc.validate();
        return 0;
    });
    return sc;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(path + ": cannot open scenario file");
    std::stringstream buf;
    buf << f.rdbuf();
    return parse_scenario(buf.str(), path);
}

}  // namespace annuity
