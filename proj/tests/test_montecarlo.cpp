#include <cmath>
#include <sstream>

#include "annuity/errors.hpp"
#include "annuity/montecarlo.hpp"
#include "annuity/pde.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace annuity;

namespace {

constexpr double kR = 0.05, kLam = 0.04, kFloor = 0.01, kT = 10.0;

HazardModel bm() { return HazardModel::brownian_makeham({0.01, 0.5, 0.2, 0.05}, 0.01); }

PathConfig small(long paths = 4000, int spy = 52) {
    PathConfig c;
    c.paths = paths;
    c.steps_per_year = spy;
    return c;
}

bool same(const McEstimate& a, const McEstimate& b) { return a.mean == b.mean && a.se == b.se && a.paths == b.paths; }

}  // namespace

TEST_CASE("config validation and seeding") {
    PathConfig c;
    c.paths = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = PathConfig{};
    c.steps_per_year = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(path_seed(1, 0) != path_seed(1, 1));
    CHECK(path_seed(1, 0) != path_seed(2, 0));
    CHECK(path_seed(7, 3) == path_seed(7, 3));
}

TEST_CASE("sample statistics") {
    auto s = sample_stats({1, 2, 3, 4, 10});
    CHECK(s.mean == doctest::Approx(4.0));
    CHECK(s.variance == doctest::Approx(12.5));
    CHECK(s.m3 == doctest::Approx(36.0));
    CHECK(s.m4 == doctest::Approx(278.8));
    CHECK(sample_stats({}).n == 0);
}

TEST_CASE("path simulation") {
    auto haz = bm();
    auto rates = ShortRateModel::vasicek({0.2, 0.05, 0.01, 0.3});
    auto cfg = small(200, 52);
    CHECK_THROWS_AS(simulate_paths(haz, rates, MeasureSpec::physical(), cfg, 0, 1, 0.05, 0.01), DomainError);
    CHECK_THROWS_AS(simulate_paths(haz, rates, MeasureSpec::physical(), cfg, 1, 1, 0.05, 0.05), DomainError);

    auto a = simulate_paths(haz, rates, MeasureSpec::physical(), cfg, 0, 5, 0.05, 0.05);
    auto b = simulate_paths(haz, rates, MeasureSpec::physical(), cfg, 0, 5, 0.05, 0.05);
    CHECK(a.hazards == b.hazards);
    CHECK(a.rates == b.rates);
    long violations = 0;
    for (const auto& p : a.hazards)
        for (double l : p) violations += !(l > 0.01);
    CHECK(violations == 0);

    SUBCASE("degenerate diffusion follows the ODE flow") {
        auto flat = HazardModel::constant(kFloor);
        auto det = ShortRateModel::vasicek({0.2, 0.05, 0.0, 0.0});
        auto p = simulate_paths(flat, det, MeasureSpec::physical(), cfg, 0, 2, 0.02, kLam);
        for (std::size_t i = 1; i < p.hazards.size(); ++i) {
            CHECK(p.hazards[i] == p.hazards[0]);
            CHECK(p.rates[i] == p.rates[0]);
        }
        // Euler on r' = 0.2 (0.05 - r)
        double r = 0.02;
        const double dt = 2.0 / 104;
        for (int k = 0; k < 104; ++k) r += 0.2 * (0.05 - r) * dt;
        CHECK(p.rates[0].back() == doctest::Approx(r).epsilon(1e-12));
        CHECK(p.hazards[0].back() == doctest::Approx(kLam).epsilon(1e-12));
    }

    SUBCASE("tilde shifts the log-hazard mean by -alpha sigma t") {
        // Constant mu keeps the drift of y = ln(lambda - floor) free of the state
        auto h = HazardModel::custom(
            0.01, [](double, double) { return 0.02; }, [](double) { return 0.2; }, 0.03);
        auto c = small(4000, 52);
        auto p = simulate_paths(h, rates, MeasureSpec::physical(), c, 0, 2, 0.05, 0.05);
        auto q = simulate_paths(h, rates, MeasureSpec::tilde(0.1), c, 0, 2, 0.05, 0.05);
        std::vector<double> diff;
        for (std::size_t i = 0; i < p.hazards.size(); ++i)
            diff.push_back(std::log(q.hazards[i].back() - 0.01) - std::log(p.hazards[i].back() - 0.01));
        auto st = sample_stats(diff);
        CHECK(std::abs(st.mean - (-0.1 * 0.2 * 2)) <= 3 * std::sqrt(st.variance / st.n) + 1e-12);
    }
}

TEST_CASE("survival estimates") {
    auto flat = HazardModel::constant(kFloor);
    auto cfg = small(50);
    auto e = mc_survival(flat, 0.0, kLam, 0, 10, cfg);
    CHECK(e.mean == doctest::Approx(0.670320046).epsilon(1e-9));
    CHECK(e.se == 0.0);
    CHECK(mc_survival(flat, 0.0, kLam, 3, 3, cfg).mean == 1.0);

    auto haz = bm();
    cfg = small(2000);
    CHECK(same(mc_survival(haz, 0.0, 0.05, 0, 5, cfg), mc_survival(haz, 0.0 * 0.1, 0.05, 0, 5, cfg)));

    SUBCASE("worker count and reruns leave estimates unchanged") {
        auto one = mc_survival(haz, 0.1, 0.05, 0, 5, cfg);
        auto multi = cfg;
        multi.workers = 3;
        CHECK(same(one, mc_survival(haz, 0.1, 0.05, 0, 5, multi)));
        CHECK(same(one, mc_survival(haz, 0.1, 0.05, 0, 5, cfg)));
        auto anti = cfg;
        anti.antithetic = true;
        auto ea = mc_survival(haz, 0.1, 0.05, 0, 5, anti);
        CHECK(ea.paths == 2000);
        CHECK(std::abs(ea.mean - one.mean) < 3 * (ea.se + one.se));
    }

    SUBCASE("adjusted survival matches the beta solve") {
        auto c = small(20000, 100);
        auto e2 = mc_survival(haz, 0.1, 0.05, 0, 5, c);
        Surface beta = solve_beta(haz, 0.1, HazardGrid::around(0.01, 0.04, 160, 1e-3, 30), TimeMesh(5.0, 500));
        CHECK(std::abs(e2.mean - beta(0, 0.05, 0.0)) <= 3 * e2.se);
    }

    SUBCASE("standard errors scale as one over root paths") {
        auto a = mc_survival(haz, 0.0, 0.05, 0, 5, small(2000));
        auto b = mc_survival(haz, 0.0, 0.05, 0, 5, small(8000));
        CHECK(a.se / b.se == doctest::Approx(2.0).epsilon(0.2));
    }
}

TEST_CASE("annuity, limit and good-deal estimators in the constant setting") {
    auto flat = HazardModel::constant(kFloor);
    auto rates = ShortRateModel::constant(kR);
    auto cfg = small(20, 252);
    const double a0 = oracle::level_annuity(0.09, kT);
    CHECK(a0 == doctest::Approx(6.593670).epsilon(1e-6));
    CHECK(std::abs(mc_annuity_alpha0(flat, rates, kR, kLam, 0, kT, cfg).mean - a0) < 1e-6);
    CHECK(mc_annuity_alpha0(flat, rates, kR, kLam, kT, kT, cfg).mean == 0.0);
    // trapezoid-in-time bias on a smooth exponential, O(dt^2)
    CHECK(std::abs(mc_limit(flat, rates, 0.1, kR, kLam, 0, kT, cfg).mean - a0) < 1e-5);
    CHECK(mc_limit(flat, rates, 0.1, kR, kLam, kT, kT, cfg).mean == 0.0);

    ControlFn none = [](double, double, double, double& d, double& g) { d = g = 0; };
    CHECK(std::abs(mc_good_deal(flat, rates, 0.1, none, kR, kLam, 0, kT, cfg).mean - a0) < 1e-5);
    ControlFn opt = [](double, double l, double, double& d, double& g) {
        d = 0;
        g = -0.1 / std::sqrt(l);
    };
    CHECK(std::abs(mc_good_deal(flat, rates, 0.1, opt, kR, kLam, 0, kT, cfg).mean - oracle::level_annuity(0.07, kT)) < 1e-5);
    ControlFn bad = [](double, double, double, double& d, double& g) {
        d = 0.2;
        g = 0;
    };
    CHECK_THROWS_AS(mc_good_deal(flat, rates, 0.1, bad, kR, kLam, 0, kT, cfg), ContractError);
    ControlFn below = [](double, double, double, double& d, double& g) {
        d = 0;
        g = -1.5;
    };
    CHECK_THROWS_AS(mc_good_deal(flat, rates, 10.0, below, kR, kLam, 0, kT, cfg), ContractError);
}

TEST_CASE("stochastic estimators against the PDE") {
    auto haz = bm();
    auto rates = ShortRateModel::vasicek({0.2, 0.05, 0.01, 0.3});
    AnnuityGrids g{RateGrid::uniform(0.005, 0.12, 60), HazardGrid::around(0.01, 0.04, 60, 0.05, 20),
                   TimeMesh(5.0, 250)};
    auto cfg = small(10000, 100);
    auto stack = solve_annuity(haz, rates, SharpeConfig(0.0, 0.01), 1, g, RateMode::two_factor);
    auto e = mc_annuity_alpha0(haz, rates, 0.05, 0.05, 0, 5.0, cfg);
    CHECK(std::abs(e.mean - stack.level(1)(0.05, 0.05, 0.0)) <= std::max(3 * e.se, 2e-3));

    Surface p = solve_limit(haz, rates, 0.05, g, RateMode::two_factor);
    auto l = mc_limit(haz, rates, 0.05, 0.05, 0.05, 0, 5.0, cfg);
    CHECK(std::abs(l.mean - p(0.05, 0.05, 0.0)) <= 3 * l.se);

    // at alpha = 0 the limit and the zero-control good-deal bound use the same paths
    ControlFn none = [](double, double, double, double& d, double& gm) { d = gm = 0; };
    CHECK(same(mc_limit(haz, rates, 0.0, 0.05, 0.05, 0, 2.0, small(500)),
               [&] {
                   auto x = mc_good_deal(haz, rates, 0.0, none, 0.05, 0.05, 0, 2.0, small(500));
                   x.label = "limit";
                   return x;
               }()));
}

TEST_CASE("hedged portfolio") {
    auto flat = HazardModel::constant(kFloor);
    auto rates = ShortRateModel::constant(kR);
    AnnuityGrids g{RateGrid::fixed(kR), HazardGrid::around(kFloor, 0.03, 200, 1e-3, 30), TimeMesh(kT, 2520)};
    auto stack = solve_annuity(flat, rates, SharpeConfig(0.1, kFloor), 1, g, RateMode::deterministic_rate);
    PathConfig cfg = small(100000);
    auto rep = simulate_hedged_portfolio(flat, rates, 0.1, stack.level(1), kR, kLam, 0.0, 1.0 / 252, cfg);
    CHECK(rep.predicted_variance == doctest::Approx(0.04 * 7.19165 * 7.19165).epsilon(1e-5));
    CHECK(std::abs(rep.variance - rep.predicted_variance) <= 3 * rep.variance_se);
    CHECK(std::abs(rep.sharpe - 0.1) <= 3 * rep.sharpe_se);
    CHECK(std::abs(rep.drift - rep.predicted_drift) <= 3 * rep.drift_se);
    CHECK(rep.hedge_ratio == 0.0);
    CHECK(rep.paths == 100000);

    auto end = simulate_hedged_portfolio(flat, rates, 0.1, stack.level(1), kR, kLam, kT, 1.0 / 252, cfg);
    CHECK(end.drift == 0.0);
    CHECK(end.variance == 0.0);
}

TEST_CASE("estimate CSV") {
    std::ostringstream out;
    write_estimates_csv(out, {McEstimate{0.5, 0.01, 100, 7, "x"}});
    CHECK(out.str() == "label,mean,se,paths,seed\nx,0.5,0.01,100,7\n");
}
