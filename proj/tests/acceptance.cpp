// Acceptance suite. `acceptance` runs every criterion; `acceptance N` runs criterion N.
// Each criterion prints its measurements and ends with one PASS/FAIL line.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "annuity/config.hpp"
#include "annuity/montecarlo.hpp"
#include "annuity/pde.hpp"
#include "annuity/valuation.hpp"
#include "oracles.hpp"

using namespace annuity;

namespace {

Scenario constant_scenario() { return load_scenario(ANNUITY_SOURCE_DIR "/scenarios/constant.yaml"); }
Scenario stochastic_scenario() { return load_scenario(ANNUITY_SOURCE_DIR "/scenarios/stochastic.yaml"); }

class Criterion {
public:
    explicit Criterion(int id) : id_(id), start_(std::chrono::steady_clock::now()) {}

    // One measured check; all must hold for the criterion to pass.
    void check(const std::string& what, bool ok, const std::string& detail = "") {
        ok_ = ok_ && ok;
        std::printf("  [%s] %s%s%s\n", ok ? "ok" : "FAIL", what.c_str(), detail.empty() ? "" : ": ", detail.c_str());
        std::fflush(stdout);
    }

    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

    void budget(double limit) {
        const double s = seconds();
        check("runtime under " + fmt(limit, 0) + " s", s < limit, fmt(s, 1) + " s");
    }

    bool finish(const std::string& title) const {
        std::printf("%s criterion %d: %s (%.1f s)\n", ok_ ? "PASS" : "FAIL", id_, title.c_str(), seconds());
        std::fflush(stdout);
        return ok_;
    }

    static std::string fmt(double v, int digits = 6) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.*f", digits, v);
        return buf;
    }
    static std::string sci(double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3e", v);
        return buf;
    }

private:
    int id_;
    bool ok_ = true;
    std::chrono::steady_clock::time_point start_;
};

std::string where(const Probe& p) {
    return "(r=" + Criterion::fmt(p.r, 3) + ", lambda=" + Criterion::fmt(p.lambda, 3) + ", t=" +
           Criterion::fmt(p.t, 1) + ")";
}

bool mc_agrees(Criterion& c, const std::string& what, double pde, const McEstimate& e) {
    const double tol = std::max(3 * e.se, 2e-3);
    const double err = std::abs(pde - e.mean);
    c.check(what, err <= tol,
            "pde " + Criterion::fmt(pde) + ", mc " + Criterion::fmt(e.mean) + " (se " + Criterion::sci(e.se) +
                "), |diff| " + Criterion::sci(err) + " <= " + Criterion::sci(tol));
    return err <= tol;
}

// 1. Constant coefficients against the scalar closed forms.
bool criterion1() {
    Criterion c(1);
    Scenario sc = constant_scenario();
    sc.sizes = {1};
    sc.probes = {{0.05, 0.04, 0.0}};
    sc.eta.reset();
    auto seller = value_portfolio(sc, 1);
    const double k = 0.05 + 0.04 - 0.1 * 0.2;
    const double s = seller.values[1][0];
    c.check("seller a(1)", std::abs(s - oracle::level_annuity(k, 10)) <= 2e-3,
            Criterion::fmt(s) + " vs " + Criterion::fmt(oracle::level_annuity(k, 10)));
    auto buyer = solve_annuity(sc.hazard, sc.rates, SharpeConfig(sc.alpha, sc.hazard.floor(), true), 1, sc.grids(),
                               sc.mode(), sc.solver);
    const Probe p = sc.resolved_probes()[0];
    const double b = buyer.level(1)(p.r, p.lambda, p.t);
    const double kb = 0.05 + 0.04 + 0.1 * 0.2;
    c.check("buyer a(1)", std::abs(b - oracle::level_annuity(kb, 10)) <= 2e-3,
            Criterion::fmt(b) + " vs " + Criterion::fmt(oracle::level_annuity(kb, 10)));
    c.budget(5);
    return c.finish("closed-form constant case");
}

// 2. With alpha = 0 the seller value is n a(alpha0).
bool criterion2() {
    Criterion c(2);
    Scenario sc = stochastic_scenario();
    sc.alpha = 0;
    sc.sizes = {1, 2, 5};
    sc.probes = {sc.probes[0], sc.probes[3], sc.probes[5]};
    auto v = value_portfolio(sc, 5);
    const auto base = integrate_beta(sc.hazard, sc.rates, 0.0, sc.horizon, v.probes, sc.quadrature_config());
    for (std::size_t i = 0; i < v.probes.size(); ++i)
        for (int n : sc.sizes) {
            const double a = v.values[static_cast<std::size_t>(n)][i];
            c.check("a(" + std::to_string(n) + ") = n a(alpha0) at " + where(v.probes[i]),
                    std::abs(a - n * base[i]) <= 2e-3 * n,
                    Criterion::fmt(a) + " vs " + Criterion::fmt(n * base[i]));
        }
    for (std::size_t i : {std::size_t{0}, std::size_t{2}}) {
        const Probe& p = v.probes[i];
        mc_agrees(c, "a(alpha0) vs Monte Carlo at " + where(p), base[i],
                  mc_annuity_alpha0(sc.hazard, sc.rates, p.r, p.lambda, p.t, sc.horizon, sc.paths));
    }
    c.budget(180);
    return c.finish("alpha = 0 gives n a(alpha0)");
}

// 3. n int F beta <= a(n) <= int F phi(n).
bool criterion3() {
    Criterion c(3);
    Scenario sc = stochastic_scenario();
    const int N = 10;
    auto v = value_portfolio(sc, N);
    const auto q = sc.quadrature_config();
    const auto beta = integrate_beta(sc.hazard, sc.rates, sc.alpha, sc.horizon, v.probes, q);
    const auto phi = integrate_pure_endowment(sc.hazard, sc.rates, sc.sharpe(), N, sc.horizon, v.probes, q);
    double worst_lower = -1e300, worst_upper = -1e300;
    for (int n : {1, 2, 5, 10}) {
        bool ok = true;
        for (std::size_t i = 0; i < v.probes.size(); ++i) {
            const double a = v.values[static_cast<std::size_t>(n)][i];
            const double lower = (n * beta[i] - a) / n, upper = (a - phi[i][static_cast<std::size_t>(n)]) / n;
            worst_lower = std::max(worst_lower, lower);
            worst_upper = std::max(worst_upper, upper);
            ok = ok && lower <= 1e-3 && upper <= 1e-3;
        }
        c.check("sandwich for n = " + std::to_string(n) + " at " + std::to_string(v.probes.size()) + " probes", ok);
    }
    c.check("worst per-annuity violations", worst_lower <= 1e-3 && worst_upper <= 1e-3,
            "lower " + Criterion::sci(worst_lower) + ", upper " + Criterion::sci(worst_upper));
    return c.finish("sandwich bounds");
}

// 4. Per-annuity value decreases toward its limit.
bool criterion4() {
    Criterion c(4);
    const std::vector<int> sizes{1, 2, 5, 10, 20};
    {
        Scenario sc = stochastic_scenario();
        auto v = value_portfolio(sc, 20);
        const auto beta = integrate_beta(sc.hazard, sc.rates, sc.alpha, sc.horizon, v.probes, sc.quadrature_config());
        for (std::size_t i = 0; i < v.probes.size(); ++i) {
            bool decreasing = true;
            for (std::size_t j = 1; j < sizes.size(); ++j)
                decreasing = decreasing && v.values[static_cast<std::size_t>(sizes[j])][i] / sizes[j] <
                                               v.values[static_cast<std::size_t>(sizes[j - 1])][i] / sizes[j - 1];
            const double g5 = v.values[5][i] / 5 - beta[i], g20 = v.values[20][i] / 20 - beta[i];
            c.check("stochastic " + where(v.probes[i]), decreasing && g20 <= 0.6 * g5,
                    std::string(decreasing ? "decreasing" : "NOT decreasing") + ", gap(20)/gap(5) = " +
                        Criterion::fmt(g20 / g5, 4));
        }
    }
    {
        // no hazard volatility: the limit is a(alpha0)
        Scenario sc = constant_scenario();
        sc.probes = {{0.05, 0.04, 0.0}};
        auto v = value_portfolio(sc, 20);
        const double base = oracle::level_annuity(0.09, 10);
        bool decreasing = true;
        for (std::size_t j = 1; j < sizes.size(); ++j)
            decreasing = decreasing && v.values[static_cast<std::size_t>(sizes[j])][0] / sizes[j] <
                                           v.values[static_cast<std::size_t>(sizes[j - 1])][0] / sizes[j - 1];
        const double g1 = v.values[1][0] - base, g20 = v.values[20][0] / 20 - base;
        c.check("sigma = 0 decreasing over n", decreasing);
        c.check("sigma = 0 gap(20) <= 2% of gap(1)", g20 <= 0.02 * g1,
                "gap(1) " + Criterion::fmt(g1) + ", gap(20) " + Criterion::fmt(g20) + ", ratio " +
                    Criterion::fmt(g20 / g1, 4));
    }
    return c.finish("per-annuity value trend");
}

// 5. Good-deal representation of the seller value.
bool criterion5() {
    Criterion c(5);
    Scenario sc = stochastic_scenario();
    sc.probes = {sc.probes[0]};
    auto v = value_portfolio(sc, 1);
    const Probe p = v.probes[0];
    const double seller = v.values[1][0];
    auto field = extract_controls(v.stack.level(1), sc.hazard, sc.alpha);
    mc_agrees(c, "good deal at extracted controls " + where(p), seller,
              mc_good_deal(sc.hazard, sc.rates, sc.alpha, field.function(), p.r, p.lambda, p.t, sc.horizon,
                           sc.paths));

    // Random admissible controls, constant in (delta, gamma sqrt(lambda)).
    std::mt19937_64 rng(20080220);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    PathConfig cfg = sc.paths;
    cfg.paths = 10000;
    double worst = -1e300;
    bool ok = true;
    for (int i = 0; i < 20; ++i) {
        const double rho = std::sqrt(u(rng)), theta = 2 * std::numbers::pi * u(rng);
        const double d = sc.alpha * rho * std::cos(theta), g = sc.alpha * rho * std::sin(theta);
        ControlFn fn = [d, g](double, double lambda, double, double& delta, double& gamma) {
            delta = d;
            gamma = g / std::sqrt(lambda);
        };
        auto e = mc_good_deal(sc.hazard, sc.rates, sc.alpha, fn, p.r, p.lambda, p.t, sc.horizon, cfg);
        worst = std::max(worst, (e.mean - seller) / e.se);
        ok = ok && e.mean <= seller + 3 * e.se;
    }
    c.check("20 random admissible controls stay below the seller value", ok,
            "max (estimate - seller) / se = " + Criterion::fmt(worst, 2));
    return c.finish("good-deal equivalence");
}

// 6. delta^2 + lambda gamma^2 = alpha^2 and gamma > -1.
bool criterion6() {
    Criterion c(6);
    for (Scenario sc : {constant_scenario(), stochastic_scenario()}) {
        auto v = value_portfolio(sc, 1);
        auto field = extract_controls(v.stack.level(1), sc.hazard, sc.alpha);
        const auto id = field.check_identity();
        c.check(sc.name + ": identity on >= 99.9% of nodes", id.fraction() >= 0.999,
                std::to_string(id.passed) + "/" + std::to_string(id.checked) + ", worst " +
                    Criterion::sci(id.worst_identity) + ", min gamma " + Criterion::fmt(id.min_gamma, 4) + ", " +
                    std::to_string(field.flagged().size()) + " flagged");
    }
    return c.finish("control identity");
}

// 7. Realized Sharpe ratio and local variance of the hedged portfolio.
bool criterion7() {
    Criterion c(7);
    for (Scenario sc : {constant_scenario(), stochastic_scenario()}) {
        sc.probes = {sc.probes[0]};
        auto v = value_portfolio(sc, 1);
        const Probe p = v.probes[0];
        auto h = simulate_hedged_portfolio(sc.hazard, sc.rates, sc.alpha, v.stack.level(1), p.r, p.lambda, p.t,
                                           sc.hedge_interval, sc.paths);
        c.check(sc.name + ": Sharpe ratio = alpha", std::abs(h.sharpe - sc.alpha) <= 3 * h.sharpe_se,
                Criterion::fmt(h.sharpe, 4) + " +- " + Criterion::fmt(h.sharpe_se, 4) + " vs " +
                    Criterion::fmt(sc.alpha, 4));
        c.check(sc.name + ": local variance", std::abs(h.variance - h.predicted_variance) <= 3 * h.variance_se,
                Criterion::fmt(h.variance, 4) + " +- " + Criterion::fmt(h.variance_se, 4) + " vs " +
                    Criterion::fmt(h.predicted_variance, 4) + ", deaths " + Criterion::sci(h.deaths) +
                    ", bonds " + Criterion::fmt(h.hedge_ratio, 4));
    }
    return c.finish("hedged portfolio");
}

// 8. Comparative statics.
bool criterion8() {
    Criterion c(8);
    for (const Scenario& sc : {constant_scenario(), stochastic_scenario()}) {
        const PropertyReport rep = run_property_suite(sc);
        for (const auto& r : rep.results) {
            const bool ok = r.status == PropertyStatus::pass ||
                            (r.id == "P7" && r.status == PropertyStatus::not_applicable && !r.detail.empty());
            const bool listed = r.id != "upper_bound" && r.id != "lower_bound" && r.id != "size_trend";
            if (!listed) continue;
            c.check(sc.name + " " + r.id + " " + to_string(r.status), ok,
                    "worst " + Criterion::sci(r.worst_violation) + (r.location.empty() ? "" : " at " + r.location) +
                        (r.status == PropertyStatus::not_applicable ? "; " + r.detail : ""));
        }
    }
    return c.finish("property suite");
}

// 9. Indifference pricing.
bool criterion9() {
    Criterion c(9);
    Scenario sc = stochastic_scenario();
    sc.probes.resize(5);
    const auto probes = sc.resolved_probes();
    const auto g = sc.grids();
    const auto base = integrate_beta(sc.hazard, sc.rates, 0.0, sc.horizon, probes, sc.quadrature_config());
    Surface zero = solve_indifference(sc.hazard, sc.rates, 0.0, g, sc.mode(), IndifferenceForm::exact, sc.solver);
    for (std::size_t i = 0; i < probes.size(); ++i) {
        const double z = zero(probes[i].r, probes[i].lambda, probes[i].t);
        c.check("eta = 0 equals a(alpha0) at " + where(probes[i]), std::abs(z - base[i]) <= 2e-3,
                Criterion::fmt(z) + " vs " + Criterion::fmt(base[i]));
    }
    auto gap = [&](double eta) {
        Surface e = solve_indifference(sc.hazard, sc.rates, eta, g, sc.mode(), IndifferenceForm::exact, sc.solver);
        Surface q = solve_indifference(sc.hazard, sc.rates, eta, g, sc.mode(), IndifferenceForm::quadratic, sc.solver);
        std::vector<double> out;
        for (const auto& p : probes) out.push_back(std::abs(e(p.r, p.lambda, p.t) - q(p.r, p.lambda, p.t)));
        return out;
    };
    const auto g2 = gap(0.02), g1 = gap(0.01);
    for (std::size_t i = 0; i < probes.size(); ++i) {
        const double f = g2[i] / g1[i];
        c.check("halving eta shrinks |exact - quadratic| at " + where(probes[i]), f >= 3 && f <= 5,
                Criterion::sci(g2[i]) + " -> " + Criterion::sci(g1[i]) + ", factor " + Criterion::fmt(f, 3));
    }
    return c.finish("indifference consistency");
}

// 10. Decomposition of the risk charge.
bool criterion10() {
    Criterion c(10);
    {
        Scenario sc = constant_scenario();
        auto v = value_portfolio(sc, 1);
        const auto q = sc.quadrature_config();
        const auto beta = integrate_beta(sc.hazard, sc.rates, sc.alpha, sc.horizon, v.probes, q);
        const auto base = integrate_beta(sc.hazard, sc.rates, 0.0, sc.horizon, v.probes, q);
        for (std::size_t i = 0; i < v.probes.size(); ++i) {
            const auto r = make_risk_charge(1, v.probes[i], v.values[1][i], beta[i], base[i]);
            c.check("sigma = 0 stochastic-hazard charge at " + where(r.probe), std::abs(r.hazard_charge) <= 1e-3,
                    Criterion::sci(r.hazard_charge));
        }
    }
    Scenario sc = stochastic_scenario();
    auto v = value_portfolio(sc, 20);
    const auto q = sc.quadrature_config();
    const auto beta = integrate_beta(sc.hazard, sc.rates, sc.alpha, sc.horizon, v.probes, q);
    const auto base = integrate_beta(sc.hazard, sc.rates, 0.0, sc.horizon, v.probes, q);
    for (std::size_t i = 0; i < v.probes.size(); ++i) {
        std::vector<RiskChargeReport> r;
        for (int n : {1, 5, 20})
            r.push_back(make_risk_charge(n, v.probes[i], v.values[static_cast<std::size_t>(n)][i], beta[i], base[i]));
        const bool ok = r[0].hazard_charge > 0 && r[0].finite_charge > r[1].finite_charge &&
                        r[1].finite_charge > r[2].finite_charge;
        c.check("stochastic " + where(v.probes[i]), ok,
                "hazard charge " + Criterion::fmt(r[0].hazard_charge) + ", finite charge n=1,5,20: " +
                    Criterion::fmt(r[0].finite_charge) + ", " + Criterion::fmt(r[1].finite_charge) + ", " +
                    Criterion::fmt(r[2].finite_charge));
    }
    return c.finish("risk-charge decomposition");
}

// 11. PDE and Monte Carlo agree on beta and the limit.
bool criterion11() {
    Criterion c(11);
    Scenario sc = stochastic_scenario();
    sc.probes = {sc.probes[0], sc.probes[4], sc.probes[5], sc.probes[7], sc.probes[8]};
    const auto probes = sc.resolved_probes();
    const auto g = sc.grids();
    Surface beta = solve_beta(sc.hazard, sc.alpha, g.hazard, g.time, sc.solver);
    Surface limit = solve_limit(sc.hazard, sc.rates, sc.alpha, g, sc.mode(), sc.solver);
    for (const auto& p : probes) {
        mc_agrees(c, "beta vs tilde survival at " + where(p), beta(p.r, p.lambda, p.t),
                  mc_survival(sc.hazard, sc.alpha, p.lambda, p.t, sc.horizon, sc.paths));
        mc_agrees(c, "limit vs hat expectation at " + where(p), limit(p.r, p.lambda, p.t),
                  mc_limit(sc.hazard, sc.rates, sc.alpha, p.r, p.lambda, p.t, sc.horizon, sc.paths));
    }
    c.budget(600);
    return c.finish("PDE and Monte Carlo triangle");
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::function<bool()>> criteria = {criterion1, criterion2, criterion3, criterion4,
                                                         criterion5, criterion6, criterion7, criterion8,
                                                         criterion9, criterion10, criterion11};
    std::vector<int> run;
    for (int i = 1; i < argc; ++i) {
        const int k = std::atoi(argv[i]);
        if (k < 1 || k > static_cast<int>(criteria.size())) {
            std::cerr << "usage: acceptance [criterion 1-" << criteria.size() << "]...\n";
            return 2;
        }
        run.push_back(k);
    }
    if (run.empty())
        for (int k = 1; k <= static_cast<int>(criteria.size()); ++k) run.push_back(k);

    int failed = 0;
    for (int k : run) {
        try {
            if (!criteria[static_cast<std::size_t>(k - 1)]()) ++failed;
        } catch (const std::exception& e) {
            std::printf("FAIL criterion %d: %s\n", k, e.what());
            ++failed;
        }
    }
    return failed ? 1 : 0;
}
