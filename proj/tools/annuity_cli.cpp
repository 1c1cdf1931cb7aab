// annuity: batch front end for scenario files.
//
//   annuity <value|check|bidask|endow|limit|hedge> --config FILE [--out DIR] [--seed N]
//           [--paths N] [--grid-scale F] [--workers N]
//
// Exit codes: 0 success, 1 numerical failure (or failed checks), 2 configuration error.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "annuity/config.hpp"
#include "annuity/errors.hpp"
#include "annuity/montecarlo.hpp"
#include "annuity/valuation.hpp"

namespace fs = std::filesystem;
using namespace annuity;

namespace {

constexpr const char* kVersion = "1.0.0";
constexpr int kOk = 0, kNumerical = 1, kConfig = 2;

struct Options {
    std::string config;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    std::optional<long> paths;
    std::optional<int> workers;
    double grid_scale = 1.0;
};

struct RunManifest {
    std::string scenario_path;
    std::string subcommand;
    std::string out_dir;
    std::uint64_t seed = 0;
    std::string timestamp;
    std::string checksum;

    void write_header(std::ostream& out) const {
        out << "# scenario: " << scenario_path << "\n"
            << "# subcommand: " << subcommand << "\n"
            << "# out: " << out_dir << "\n"
            << "# seed: " << seed << "\n"
            << "# timestamp: " << timestamp << "\n"
            << "# version: " << kVersion << "\n"
            << "# config_checksum: " << checksum << "\n";
    }
};

std::string utc_now() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

std::string file_checksum(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::stringstream buf;
    buf << f.rdbuf();
    const std::string bytes = buf.str();
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(bytes.data(), bytes.size());
    return s.str();
}

class Run {
public:
    Run(const Options& opt, const std::string& sub) : opt_(opt) {
        scenario_ = load_scenario(opt.config);
        if (const char* env = std::getenv("ANNUITY_SEED")) {
            try {
                scenario_.paths.seed = std::stoull(env);
            } catch (const std::exception&) {
                throw ConfigError(std::string("ANNUITY_SEED is not an unsigned integer: ") + env);
            }
        }
        if (opt.seed) scenario_.paths.seed = *opt.seed;
        if (opt.paths) scenario_.paths.paths = *opt.paths;
        if (opt.workers) scenario_.paths.workers = *opt.workers;
        scenario_.grid.scale = opt.grid_scale;
        scenario_.validate();

        std::error_code ec;
        fs::create_directories(opt.out, ec);
        if (ec || !fs::is_directory(opt.out)) throw ConfigError("cannot create output directory " + opt.out);
        manifest_ = {opt.config, sub, opt.out, scenario_.paths.seed, utc_now(), file_checksum(opt.config)};
    }

    const Scenario& scenario() const { return scenario_; }

    std::ofstream open(const std::string& name) const {
        const fs::path p = fs::path(opt_.out) / name;
        std::ofstream f(p);
        if (!f) throw ConfigError("cannot write " + p.string());
        f.precision(17);
        manifest_.write_header(f);
        return f;
    }

    void note(const std::string& name) const { std::cout << "wrote " << (fs::path(opt_.out) / name).string() << "\n"; }

private:
    Options opt_;
    Scenario scenario_;
    RunManifest manifest_;
};

void write_probe_header(std::ostream& out) { out << "r,lambda,t"; }
void write_probe(std::ostream& out, const Probe& p) {
    out << format_number(p.r) << ',' << format_number(p.lambda) << ',' << format_number(p.t);
}

int cmd_value(const Run& run) {
    const Scenario& sc = run.scenario();
    const int N = sc.max_size();
    auto v = value_portfolio(sc, N);
    for (int n : sc.sizes) {
        const std::string name = "value_a" + std::to_string(n) + ".csv";
        auto f = run.open(name);
        v.stack.level(n).write_csv(f);
        run.note(name);
    }
    {
        auto f = run.open("value_probes.csv");
        f << "n,";
        write_probe_header(f);
        f << ",value,per_annuity\n";
        for (int n : sc.sizes)
            for (std::size_t i = 0; i < v.probes.size(); ++i) {
                const double a = v.values[static_cast<std::size_t>(n)][i];
                f << n << ',';
                write_probe(f, v.probes[i]);
                f << ',' << format_number(a) << ',' << (n ? format_number(a / n) : std::string()) << '\n';
            }
        run.note("value_probes.csv");
    }
    std::vector<double> exact, quad;
    if (sc.eta) {
        const auto g = sc.grids();
        Surface ip = solve_indifference(sc.hazard, sc.rates, *sc.eta, g, sc.mode(), IndifferenceForm::exact, sc.solver);
        Surface iq =
            solve_indifference(sc.hazard, sc.rates, *sc.eta, g, sc.mode(), IndifferenceForm::quadratic, sc.solver);
        auto f = run.open("value_indifference.csv");
        write_probe_header(f);
        f << ",eta,exact,quadratic\n";
        for (const auto& p : v.probes) {
            exact.push_back(ip(p.r, p.lambda, p.t));
            quad.push_back(iq(p.r, p.lambda, p.t));
            write_probe(f, p);
            f << ',' << format_number(*sc.eta) << ',' << format_number(exact.back()) << ','
              << format_number(quad.back()) << '\n';
        }
        run.note("value_indifference.csv");
    }
    {
        auto f = run.open("value_report.md");
        f.precision(8);
        f << "\n## Valuation: " << sc.name << "\n\n";
        f << "alpha = " << sc.alpha << ", horizon = " << sc.horizon << "\n\n";
        f << "| r | lambda | t |";
        for (int n : sc.sizes) f << " a(" << n << ") |";
        f << "\n|---|---|---|";
        for (std::size_t i = 0; i < sc.sizes.size(); ++i) f << "---|";
        f << "\n";
        for (std::size_t i = 0; i < v.probes.size(); ++i) {
            f << "| " << v.probes[i].r << " | " << v.probes[i].lambda << " | " << v.probes[i].t << " |";
            for (int n : sc.sizes) f << ' ' << v.values[static_cast<std::size_t>(n)][i] << " |";
            f << "\n";
        }
        for (const auto& d : v.stack.diagnostics())
            f << "\nlevel " << d.level << ": max Picard iterations " << d.max_picard_iterations
              << ", final change " << d.worst_final_change;
        f << "\n";
        run.note("value_report.md");
    }
    return kOk;
}

int cmd_check(const Run& run) {
    const Scenario& sc = run.scenario();
    SuiteData data;
    PropertyReport rep = run_property_suite(sc, {}, &data);
    {
        auto f = run.open("check_properties.csv");
        rep.write_csv(f);
        run.note("check_properties.csv");
    }
    std::vector<RiskChargeReport> charges;
    const auto& probes = data.main->probes;
    for (int n : sc.sizes) {
        if (n < 1) continue;
        for (std::size_t i = 0; i < probes.size(); ++i)
            charges.push_back(make_risk_charge(n, probes[i], data.main->values[static_cast<std::size_t>(n)][i],
                                               data.beta_integral[i], data.base[i]));
    }
    {
        auto f = run.open("check_risk_charges.csv");
        write_risk_charges_csv(f, charges);
        run.note("check_risk_charges.csv");
    }

    // Monte Carlo cross-checks at every probe
    const auto g = sc.grids();
    Surface limit = solve_limit(sc.hazard, sc.rates, sc.alpha, g, sc.mode(), sc.solver);
    Surface beta = solve_beta(sc.hazard, sc.alpha, g.hazard, g.time, sc.solver);
    auto controls = extract_controls(data.main->stack.level(1), sc.hazard, sc.alpha).function();
    bool mc_ok = true;
    {
        auto f = run.open("check_mc.csv");
        f << "quantity,";
        write_probe_header(f);
        f << ",pde,mc_mean,mc_se,tolerance,status\n";
        for (std::size_t i = 0; i < probes.size(); ++i) {
            const Probe& p = probes[i];
            auto row = [&](const std::string& what, double pde, const McEstimate& e) {
                const double tol = std::max(3 * e.se, 2e-3);
                const bool ok = std::abs(pde - e.mean) <= tol;
                mc_ok = mc_ok && ok;
                f << what << ',';
                write_probe(f, p);
                f << ',' << format_number(pde) << ',' << format_number(e.mean) << ',' << format_number(e.se) << ','
                  << format_number(tol) << ',' << (ok ? "pass" : "fail") << '\n';
            };
            row("annuity_alpha0", data.base[i],
                mc_annuity_alpha0(sc.hazard, sc.rates, p.r, p.lambda, p.t, sc.horizon, sc.paths));
            row("limit", limit(p.r, p.lambda, p.t),
                mc_limit(sc.hazard, sc.rates, sc.alpha, p.r, p.lambda, p.t, sc.horizon, sc.paths));
            row("survival_tilde", beta(0.0, p.lambda, p.t),
                mc_survival(sc.hazard, sc.alpha, p.lambda, p.t, sc.horizon, sc.paths));
            row("good_deal", data.main->values[1][i],
                mc_good_deal(sc.hazard, sc.rates, sc.alpha, controls, p.r, p.lambda, p.t, sc.horizon, sc.paths));
        }
        run.note("check_mc.csv");
    }
    {
        auto f = run.open("check_report.md");
        f.precision(8);
        f << "\n";
        rep.write_markdown(f);
        f << "\n## Risk charges\n\n| n | r | lambda | t | per annuity | int F beta | a(alpha0) | finite-portfolio | "
             "stochastic-hazard |\n|---|---|---|---|---|---|---|---|---|\n";
        for (const auto& c : charges)
            f << "| " << c.n << " | " << c.probe.r << " | " << c.probe.lambda << " | " << c.probe.t << " | "
              << c.per_annuity << " | " << c.beta_integral << " | " << c.base << " | " << c.finite_charge << " | "
              << c.hazard_charge << " |\n";
        f << "\nMonte Carlo cross-checks: " << (mc_ok ? "pass" : "FAIL") << " (see check_mc.csv)\n";
        run.note("check_report.md");
    }
    const bool ok = rep.all_passed() && mc_ok;
    std::cout << "check: " << (ok ? "all pass" : "FAILED") << "\n";
    return ok ? kOk : kNumerical;
}

int cmd_bidask(const Run& run) {
    auto rows = bid_ask(run.scenario());
    bool ordered = true;
    auto f = run.open("bidask.csv");
    write_probe_header(f);
    f << ",bid,base,ask\n";
    for (const auto& b : rows) {
        ordered = ordered && b.bid <= b.base + 1e-9 && b.base <= b.ask + 1e-9;
        write_probe(f, b.probe);
        f << ',' << format_number(b.bid) << ',' << format_number(b.base) << ',' << format_number(b.ask) << '\n';
    }
    run.note("bidask.csv");
    if (!ordered) std::cerr << "bid <= a(alpha0) <= ask violated at some probe\n";
    return ordered ? kOk : kNumerical;
}

int cmd_endow(const Run& run) {
    const Scenario& sc = run.scenario();
    const auto g = sc.grids();
    auto stack = solve_pure_endowment(sc.hazard, sc.sharpe(), sc.max_size(), g.hazard, g.time, sc.solver);
    for (int n : sc.sizes) {
        const std::string name = "endow_phi" + std::to_string(n) + ".csv";
        auto f = run.open(name);
        stack.level(n).write_csv(f);
        run.note(name);
    }
    auto f = run.open("endow_probes.csv");
    f << "n,";
    write_probe_header(f);
    f << ",phi\n";
    for (int n : sc.sizes)
        for (const auto& p : sc.resolved_probes()) {
            f << n << ',';
            write_probe(f, p);
            f << ',' << format_number(stack.level(n)(0.0, p.lambda, p.t)) << '\n';
        }
    run.note("endow_probes.csv");
    return kOk;
}

int cmd_limit(const Run& run) {
    const Scenario& sc = run.scenario();
    Surface p = solve_limit(sc.hazard, sc.rates, sc.alpha, sc.grids(), sc.mode(), sc.solver);
    {
        auto f = run.open("limit_surface.csv");
        p.write_csv(f);
        run.note("limit_surface.csv");
    }
    auto f = run.open("limit_probes.csv");
    write_probe_header(f);
    f << ",value\n";
    for (const auto& q : sc.resolved_probes()) {
        write_probe(f, q);
        f << ',' << format_number(p(q.r, q.lambda, q.t)) << '\n';
    }
    run.note("limit_probes.csv");
    return kOk;
}

int cmd_hedge(const Run& run) {
    const Scenario& sc = run.scenario();
    auto v = value_portfolio(sc, 1);
    auto f = run.open("hedge.csv");
    write_probe_header(f);
    f << ",drift,drift_se,predicted_drift,variance,variance_se,predicted_variance,sharpe,sharpe_se,hedge_ratio,"
         "deaths,paths,seed\n";
    for (const auto& p : v.probes) {
        auto h = simulate_hedged_portfolio(sc.hazard, sc.rates, sc.alpha, v.stack.level(1), p.r, p.lambda, p.t,
                                           sc.hedge_interval, sc.paths);
        write_probe(f, p);
        for (double x : {h.drift, h.drift_se, h.predicted_drift, h.variance, h.variance_se, h.predicted_variance,
                         h.sharpe, h.sharpe_se, h.hedge_ratio, h.deaths})
            f << ',' << format_number(x);
        f << ',' << h.paths << ',' << h.seed << '\n';
    }
    run.note("hedge.csv");
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Life annuity valuation under stochastic hazard and interest rates"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    Options opt;
    std::string chosen;
    using Handler = int (*)(const Run&);
    const std::vector<std::tuple<const char*, const char*, Handler>> commands = {
        {"value", "solve a(n) for every portfolio size and tabulate the probes", cmd_value},
        {"check", "property suite, risk charges and Monte Carlo cross-checks", cmd_check},
        {"bidask", "buyer and seller values with a(alpha0)", cmd_bidask},
        {"endow", "pure-endowment stack phi(n) maturing at the horizon", cmd_endow},
        {"limit", "limit surface p of the per-annuity value", cmd_limit},
        {"hedge", "one-step hedged-portfolio simulation at each probe", cmd_hedge},
    };
    for (const auto& [name, help, fn] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opt.config, "scenario YAML file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", opt.out, "output directory")->capture_default_str();
        sub->add_option("--seed", opt.seed, "base seed (overrides ANNUITY_SEED and the file)");
        sub->add_option("--paths", opt.paths, "Monte Carlo path count")->check(CLI::PositiveNumber);
        sub->add_option("--workers", opt.workers, "Monte Carlo worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--grid-scale", opt.grid_scale, "multiply grid nodes and time steps")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        sub->callback([&chosen, n = std::string(name)] { chosen = n; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        Run run(opt, chosen);
        for (const auto& [name, help, fn] : commands)
            if (chosen == name) return fn(run);
        return kConfig;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kConfig;
    } catch (const SolverError& e) {
        std::cerr << "solver failure at level " << e.level() << ", time index " << e.time_index() << ": " << e.what()
                  << "\n";
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumerical;
    }
}
