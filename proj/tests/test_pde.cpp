#include <cmath>

#include "annuity/errors.hpp"
#include "annuity/pde.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace annuity;

namespace {

constexpr double kR = 0.05, kLam = 0.04, kFloor = 0.01, kT = 10.0;

AnnuityGrids constant_grids(long ny = 400, long nt = 2000) {
    return {RateGrid::fixed(kR), HazardGrid::around(kFloor, 0.03, ny, 1e-3, 30), TimeMesh(kT, nt)};
}

HazardModel bm() { return HazardModel::brownian_makeham({0.01, 0.5, 0.2, 0.05}, 0.01); }

}  // namespace

TEST_CASE("constant setting: annuity levels against closed forms and the ODE chain") {
    auto haz = HazardModel::constant(kFloor);
    auto rates = ShortRateModel::constant(kR);
    auto g = constant_grids();
    SharpeConfig seller(0.1, kFloor);

    auto stack = solve_annuity(haz, rates, seller, 2, g, RateMode::deterministic_rate);
    REQUIRE(stack.max_level() == 2);
    CHECK((stack.level(0).slice(0) == 0).all());
    const double a1 = stack.level(1)(kR, kLam, 0.0);
    const double a2 = stack.level(2)(kR, kLam, 0.0);
    CHECK(a1 == doctest::Approx(oracle::level_annuity(0.07, kT)).epsilon(1e-6));
    auto chain = oracle::annuity_chain(kR, kLam, 0.1, kT, 2);
    CHECK(chain[1] == doctest::Approx(7.191638517265559).epsilon(1e-9));
    CHECK(chain[2] == doctest::Approx(14.045080508898298).epsilon(1e-9));
    CHECK(a2 == doctest::Approx(chain[2]).epsilon(1e-4));
    for (int n = 1; n <= 2; ++n) CHECK((stack.level(n).terminal() == 0).all());

    auto buyer = solve_annuity(haz, rates, seller.as_buyer(), 1, g, RateMode::deterministic_rate);
    CHECK(buyer.level(1)(kR, kLam, 0.0) == doctest::Approx(oracle::level_annuity(0.11, kT)).epsilon(1e-6));
}

TEST_CASE("constant setting: pure endowment, beta, limit, indifference") {
    auto haz = HazardModel::constant(kFloor);
    auto rates = ShortRateModel::constant(kR);
    auto g = constant_grids();

    auto phi = solve_pure_endowment(haz, SharpeConfig(0.1, kFloor), 3, g.hazard, g.time);
    CHECK(phi.level(1)(0, kLam, 0.0) == doctest::Approx(std::exp(-0.2)).epsilon(1e-6));
    for (int n = 0; n <= 3; ++n) CHECK((phi.level(n).terminal() == n).all());
    auto phi0 = solve_pure_endowment(haz, SharpeConfig(0.0, kFloor), 3, g.hazard, g.time);
    for (int n = 1; n <= 3; ++n)
        CHECK(phi0.level(n)(0, kLam, 0.0) == doctest::Approx(n * std::exp(-0.4)).epsilon(1e-6));

    Surface beta = solve_beta(haz, 0.1, g.hazard, g.time);
    CHECK(beta(0, kLam, 0.0) == doctest::Approx(std::exp(-0.4)).epsilon(1e-6));
    CHECK((beta.terminal() == 1).all());

    Surface p = solve_limit(haz, rates, 0.1, g, RateMode::deterministic_rate);
    CHECK(p(kR, kLam, 0.0) == doctest::Approx(oracle::level_annuity(0.09, kT)).epsilon(1e-6));
    CHECK((p.terminal() == 0).all());

    Surface ip = solve_indifference(haz, rates, 0.0, g, RateMode::deterministic_rate, IndifferenceForm::exact);
    CHECK(ip(kR, kLam, 0.0) == doctest::Approx(oracle::level_annuity(0.09, kT)).epsilon(1e-6));
    Surface ipx = solve_indifference(haz, rates, 0.01, g, RateMode::deterministic_rate, IndifferenceForm::exact);
    Surface ipq = solve_indifference(haz, rates, 0.01, g, RateMode::deterministic_rate, IndifferenceForm::quadratic);
    CHECK(ipx(kR, kLam, 0.0) > ip(kR, kLam, 0.0));
    // e^{-x} - 1 + x < x^2 / 2 for x > 0, so the exact price sits just below the quadratic one
    CHECK(ipx(kR, kLam, 0.0) < ipq(kR, kLam, 0.0));
    CHECK(ipq(kR, kLam, 0.0) - ipx(kR, kLam, 0.0) < 3e-3);
}

TEST_CASE("scaling by the payment rate is exact") {
    auto g = AnnuityGrids{RateGrid::fixed(kR), HazardGrid::around(0.01, 0.04, 80, 0.05, 20), TimeMesh(kT, 400)};
    SolverConfig unit, scaled;
    scaled.payment_rate = 2.5;
    auto h = bm();
    auto rates = ShortRateModel::constant(kR);
    SharpeConfig s(0.05, 0.01);
    auto a = solve_annuity(h, rates, s, 3, g, RateMode::deterministic_rate, unit);
    auto b = solve_annuity(h, rates, s, 3, g, RateMode::deterministic_rate, scaled);
    double worst = 0;
    for (int n = 1; n <= 3; ++n)
        for (std::size_t k = 0; k < a.level(n).slice_count(); ++k)
            worst = std::max(worst, (b.level(n).slice(k) - 2.5 * a.level(n).slice(k)).abs().maxCoeff() / (2.5 * n));
    CHECK(worst < 1e-12);
}

TEST_CASE("residuals") {
    auto h = bm();
    auto rates = ShortRateModel::constant(kR);
    HazardGrid hg = HazardGrid::around(0.01, 0.04, 120, 1e-3, 30);
    SolverConfig cfg;

    Surface beta = solve_beta(h, 0.1, hg, TimeMesh(5.0, 500), cfg);
    EquationSpec eb;
    eb.equation = SurfaceLabel::beta;
    eb.alpha = 0.1;
    CHECK(pde_residual(beta, eb, h, rates, cfg) <= 10 * cfg.picard_tol);

    AnnuityGrids g{RateGrid::fixed(kR), hg, TimeMesh(kT, 500)};
    auto stack = solve_annuity(h, rates, SharpeConfig(0.1, 0.01), 2, g, RateMode::deterministic_rate, cfg);
    EquationSpec ea;
    ea.alpha = 0.1;
    ea.level = 2;
    ea.previous = &stack.level(1);
    ea.mode = RateMode::deterministic_rate;
    CHECK(pde_residual(stack.level(2), ea, h, rates, cfg) < 1e-8);

    EquationSpec e1;
    e1.alpha = 0.1;
    Surface zero = stack.level(0);
    CHECK(pde_residual(stack.level(0), e1, h, rates, cfg) == doctest::Approx(1.0));
    CHECK_THROWS_AS(pde_residual(beta, e1, h, rates, cfg), ContractError);
}

TEST_CASE("generator probe") {
    auto haz = HazardModel::constant(kFloor);
    auto rates = ShortRateModel::constant(kR);
    HazardGrid hg = HazardGrid::around(kFloor, 0.03, 21, 0.1, 10);
    RateGrid rg = RateGrid::uniform(0.01, 0.09, 21);
    TimeMesh mesh(kT, 2000);
    std::vector<double> times;
    std::vector<Surface::Slice> zero, konst, expo;
    for (long j = 0; j <= mesh.steps(); ++j) {
        const double t = mesh.time(j);
        times.push_back(t);
        zero.push_back(Surface::Slice::Zero(rg.size(), hg.size()));
        konst.push_back(Surface::Slice::Constant(rg.size(), hg.size(), 3.0));
        Surface::Slice e(rg.size(), hg.size());
        for (Eigen::Index i = 0; i < rg.size(); ++i)
            for (Eigen::Index y = 0; y < hg.size(); ++y) e(i, y) = std::exp(-(rg.r(i) + hg.lambda(y)) * (kT - t));
        expo.push_back(e);
    }
    Surface z(SurfaceLabel::generic, 0, rg, hg, times, zero);
    Surface c(SurfaceLabel::generic, 0, rg, hg, times, konst);
    Surface e(SurfaceLabel::generic, 0, rg, hg, times, expo);
    for (Eigen::Index i : {1, 7, 19})
        for (Eigen::Index y : {1, 10, 19}) {
            CHECK(apply_generator(z, DriftChoice::physical, haz, rates, i, y, 100) == 0.0);
            CHECK(apply_generator(c, DriftChoice::physical, haz, rates, i, y, 100) ==
                  doctest::Approx(-(rg.r(i) + hg.lambda(y)) * 3.0));
            CHECK(std::abs(apply_generator(e, DriftChoice::risk_neutral, haz, rates, i, y, 700)) < 1e-6);
        }
    CHECK_THROWS_AS(apply_generator(z, DriftChoice::physical, haz, rates, 0, 5, 10), DomainError);
    CHECK_THROWS_AS(apply_generator(z, DriftChoice::physical, haz, rates, 5, 20, 10), DomainError);
}

TEST_CASE("two-factor alpha = 0 reproduces the bond-weighted survival integral") {
    auto haz = HazardModel::constant(kFloor);
    auto rates = ShortRateModel::vasicek({0.2, 0.05, 0.01, 0.3});
    AnnuityGrids g{RateGrid::uniform(0.005, 0.12, 60), HazardGrid::around(kFloor, 0.03, 40, 0.1, 10), TimeMesh(kT, 400)};
    auto stack = solve_annuity(haz, rates, SharpeConfig(0.0, kFloor), 2, g, RateMode::two_factor);
    // a^(alpha0) = int F(r,0;s) e^{-lambda s} ds, Simpson on 2000 intervals
    const int N = 2000;
    double ref = 0;
    for (int i = 0; i <= N; ++i) {
        const double s = kT * i / N;
        const double w = (i == 0 || i == N) ? 1 : (i % 2 ? 4 : 2);
        ref += w * bond_price(rates, 0.05, 0, s) * std::exp(-kLam * s);
    }
    ref *= kT / N / 3;
    CHECK(stack.level(1)(0.05, kLam, 0.0) == doctest::Approx(ref).epsilon(2e-4));
    CHECK(stack.level(2)(0.05, kLam, 0.0) == doctest::Approx(2 * ref).epsilon(2e-4));
}
