#include "annuity/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "annuity/errors.hpp"
#include "annuity/pde.hpp"

namespace annuity {

std::string to_string(HazardKind kind) {
    switch (kind) {
        case HazardKind::constant: return "constant";
        case HazardKind::brownian_makeham: return "brownian_makeham";
        case HazardKind::custom: return "custom";
    }
    return "custom";
}

std::string to_string(RateKind kind) {
    switch (kind) {
        case RateKind::constant: return "constant";
        case RateKind::vasicek: return "vasicek";
        case RateKind::cir: return "cir";
        case RateKind::custom: return "custom";
    }
    return "custom";
}

HazardModel::HazardModel(HazardKind kind, double floor, DriftFn drift, VolFn vol, double reference_excess)
    : kind_(kind), floor_(floor), drift_(std::move(drift)), vol_(std::move(vol)),
      reference_excess_(reference_excess) {
    if (!(floor_ >= 0) || !std::isfinite(floor_)) throw ConfigError("hazard floor must be finite and >= 0");
    if (!(reference_excess_ > 0)) throw ConfigError("hazard reference excess must be positive");
}

void HazardModel::validate(double horizon) {
    constexpr int kTimeSamples = 257;
    double vmin = std::numeric_limits<double>::infinity(), vmax = 0;
    for (int k = 0; k < kTimeSamples; ++k) {
        const double t = horizon * k / (kTimeSamples - 1);
        const double v = vol_(t);
        if (!std::isfinite(v) || v < 0) throw ConfigError("hazard volatility must be finite and non-negative");
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
    }
    if (vmax > 0 && !(vmin > 0))
        throw ConfigError("hazard volatility must be identically zero or bounded away from zero");
    deterministic_ = vmax == 0;
    if (deterministic_) return;

    // Drift condition: mu > 0 just above the floor.
    const double eps = 1e-4 * reference_excess_;
    for (int k = 0; k < kTimeSamples; ++k) {
        const double t = horizon * k / (kTimeSamples - 1);
        for (int j = 1; j <= 10; ++j) {
            const double lam = floor_ + eps * j / 10.0;
            const double mu = drift_(lam, t);
            if (!(mu > 0))
                throw ConfigError("hazard drift must be positive just above the floor (drift condition fails at t=" +
                                  std::to_string(t) + ")");
        }
    }
}

HazardModel HazardModel::constant(double lambda_floor, double reference_excess) {
    HazardModel m(HazardKind::constant, lambda_floor, [](double, double) { return 0.0; }, [](double) { return 0.0; },
                  reference_excess);
    m.validate(1.0);
    return m;
}

HazardModel HazardModel::brownian_makeham(const BrownianMakehamParams& p, double lambda_floor) {
    if (!(p.g >= 0)) throw ConfigError("brownian_makeham: g must be >= 0");
    if (!(p.m >= 0)) throw ConfigError("brownian_makeham: m must be >= 0");
    if (!(p.sigma > 0)) throw ConfigError("brownian_makeham: sigma must be > 0");
    if (!(p.lambda0 > lambda_floor)) throw ConfigError("brownian_makeham: lambda0 must exceed the floor");
    const double ref = p.lambda0 - lambda_floor;
    const double base = p.g + 0.5 * p.sigma * p.sigma + p.m * std::log(ref);
    auto drift = [base, p, lambda_floor](double lambda, double t) {
        return base + p.m * p.g * t - p.m * std::log(lambda - lambda_floor);
    };
    auto vol = [s = p.sigma](double) { return s; };
    HazardModel m(HazardKind::brownian_makeham, lambda_floor, drift, vol, ref);
    m.validate(100.0);
    return m;
}

HazardModel HazardModel::custom(double lambda_floor, DriftFn drift, VolFn vol, double reference_excess,
                                double validation_horizon) {
    if (!drift || !vol) throw ConfigError("custom hazard needs drift and volatility functions");
    HazardModel m(HazardKind::custom, lambda_floor, std::move(drift), std::move(vol), reference_excess);
    m.validate(validation_horizon);
    return m;
}

HazardModel HazardModel::with_drift_shift(double shift) const {
    auto base = drift_;
    HazardModel m(kind_ == HazardKind::constant ? HazardKind::custom : kind_, floor_,
                  [base, shift](double l, double t) { return base(l, t) + shift; }, vol_, reference_excess_);
    m.validate(100.0);
    return m;
}

HazardModel HazardModel::with_vol_shift(double shift) const {
    auto base = vol_;
    HazardModel m(kind_ == HazardKind::constant ? HazardKind::custom : kind_, floor_, drift_,
                  [base, shift](double t) { return base(t) + shift; }, reference_excess_);
    m.validate(100.0);
    return m;
}

ShortRateModel::ShortRateModel(RateKind kind, CoefFn drift, CoefFn vol, CoefFn mpr, double level)
    : kind_(kind), drift_(std::move(drift)), vol_(std::move(vol)), mpr_(std::move(mpr)), level_(level) {}

ShortRateModel ShortRateModel::constant(double level) {
    if (!std::isfinite(level)) throw ConfigError("constant rate must be finite");
    auto zero = [](double, double) { return 0.0; };
    ShortRateModel m(RateKind::constant, zero, zero, zero, level);
    m.deterministic_ = true;
    return m;
}

ShortRateModel ShortRateModel::vasicek(const VasicekParams& p) {
    if (!(p.kappa >= 0)) throw ConfigError("vasicek: kappa must be >= 0");
    if (!(p.vol >= 0)) throw ConfigError("vasicek: vol must be >= 0");
    if (!std::isfinite(p.theta) || !std::isfinite(p.mpr)) throw ConfigError("vasicek: theta and mpr must be finite");
    ShortRateModel m(
        RateKind::vasicek, [p](double r, double) { return p.kappa * (p.theta - r); },
        [p](double, double) { return p.vol; }, [p](double, double) { return p.mpr; }, p.theta);
    m.deterministic_ = p.vol == 0;
    m.vasicek_ = p;
    return m;
}

ShortRateModel ShortRateModel::cir(const CirParams& p) {
    if (!(p.kappa > 0)) throw ConfigError("cir: kappa must be > 0");
    if (!(p.theta > 0)) throw ConfigError("cir: theta must be > 0");
    if (!(p.vol >= 0)) throw ConfigError("cir: vol must be >= 0");
    if (2 * p.kappa * p.theta < p.vol * p.vol) throw ConfigError("cir: Feller condition 2 kappa theta >= vol^2 fails");
    if (!(p.kappa + p.mpr * p.vol > 0)) throw ConfigError("cir: risk-neutral mean reversion must be positive");
    ShortRateModel m(
        RateKind::cir, [p](double r, double) { return p.kappa * (p.theta - r); },
        [p](double r, double) { return p.vol * std::sqrt(std::max(r, 0.0)); },
        [p](double r, double) { return p.mpr * std::sqrt(std::max(r, 0.0)); }, p.theta);
    m.deterministic_ = p.vol == 0;
    m.cir_ = p;
    return m;
}

ShortRateModel ShortRateModel::custom(CoefFn drift, CoefFn vol, CoefFn mpr, double level) {
    if (!drift || !vol) throw ConfigError("custom rate model needs drift and volatility functions");
    if (!mpr) mpr = [](double, double) { return 0.0; };
    ShortRateModel m(RateKind::custom, std::move(drift), std::move(vol), std::move(mpr), level);
    bool zero = true;
    for (int i = 0; i <= 20 && zero; ++i)
        for (int k = 0; k <= 20 && zero; ++k) {
            const double c = m.vol_(0.001 + 0.2 * i / 20.0, 50.0 * k / 20.0);
            if (!std::isfinite(c) || c < 0) throw ConfigError("custom rate volatility must be finite and >= 0");
            zero = c == 0;
        }
    m.deterministic_ = zero;
    return m;
}

SharpeConfig::SharpeConfig(double alpha, double lambda_floor, bool buyer)
    : alpha_(alpha), floor_(lambda_floor), buyer_(buyer) {
    if (!(lambda_floor >= 0)) throw ConfigError("Sharpe ratio needs a non-negative hazard floor");
    if (!(alpha >= 0)) throw ConfigError("Sharpe ratio alpha must be >= 0");
    if (alpha > std::sqrt(lambda_floor) * (1 + 1e-12))
        throw ConfigError("Sharpe ratio alpha must not exceed sqrt(hazard floor)");
}

double drift_under_q(const ShortRateModel& model, double r, double t) {
    return model.drift(r, t) - model.mpr(r, t) * model.vol(r, t);
}

namespace {

struct AffineBond {
    double a_log;  // ln A(tau)
    double b;      // B(tau)
};

AffineBond vasicek_bond(double kappa, double theta_q, double c, double tau) {
    if (kappa < 1e-10) {
        // dr = theta_q dt + c dW with theta_q read as the constant Q-drift
        return {-theta_q * tau * tau / 2 + c * c * tau * tau * tau / 6, tau};
    }
    const double b = -std::expm1(-kappa * tau) / kappa;
    const double a_log = (theta_q - c * c / (2 * kappa * kappa)) * (b - tau) - c * c * b * b / (4 * kappa);
    return {a_log, b};
}

AffineBond affine_bond(const ShortRateModel& m, double tau) {
    switch (m.kind()) {
        case RateKind::constant: return {0.0, tau};
        case RateKind::vasicek: {
            const auto& p = m.vasicek_params();
            if (p.kappa < 1e-10) return vasicek_bond(0.0, -p.mpr * p.vol, p.vol, tau);
            return vasicek_bond(p.kappa, p.theta - p.mpr * p.vol / p.kappa, p.vol, tau);
        }
        case RateKind::cir: {
            const auto& p = m.cir_params();
            const double kq = p.kappa + p.mpr * p.vol;
            const double thq = p.kappa * p.theta / kq;
            if (p.vol == 0) return vasicek_bond(kq, thq, 0.0, tau);
            const double g = std::sqrt(kq * kq + 2 * p.vol * p.vol);
            const double em1 = std::expm1(g * tau);
            const double den = (g + kq) * em1 + 2 * g;
            const double b = 2 * em1 / den;
            const double a_log = (2 * kq * thq / (p.vol * p.vol)) * (std::log(2 * g / den) + (kq + g) * tau / 2);
            return {a_log, b};
        }
        case RateKind::custom: break;
    }
    throw ContractError("affine bond formula requested for a custom rate model");
}

// Bond surface for custom kinds on a default grid bracketing r.
Surface custom_bond_surface(const ShortRateModel& m, double r, double maturity) {
    const double r_hi = std::max(0.3, 3 * r);
    RateGrid grid = RateGrid::uniform(1e-4, r_hi, 301);
    TimeMesh mesh(maturity, std::max<long>(50, static_cast<long>(std::ceil(200 * maturity))));
    SolverConfig cfg;
    return solve_bond(m, maturity, grid, mesh, cfg);
}

void check_times(double t, double maturity) {
    if (!(maturity >= t)) throw DomainError("bond maturity precedes valuation time");
}

}  // namespace

double bond_price(const ShortRateModel& model, double r, double t, double maturity) {
    check_times(t, maturity);
    if (maturity == t) return 1.0;
    if (model.affine()) {
        auto ab = affine_bond(model, maturity - t);
        return std::exp(ab.a_log - ab.b * r);
    }
    return custom_bond_surface(model, r, maturity)(r, 0.0, t);
}

double bond_delta(const ShortRateModel& model, double r, double t, double maturity) {
    check_times(t, maturity);
    if (maturity == t) return 0.0;
    if (model.affine()) {
        auto ab = affine_bond(model, maturity - t);
        return -ab.b * std::exp(ab.a_log - ab.b * r);
    }
    Surface s = custom_bond_surface(model, r, maturity);
    const double h = 1e-4;
    return (s(r + h, 0.0, t) - s(r - h, 0.0, t)) / (2 * h);
}

HazardCoefficients hazard_coefficients(const HazardModel& model, double lambda, double t) {
    if (!(lambda > model.floor())) throw DomainError("hazard rate must lie above the floor");
    const double x = lambda - model.floor();
    return {model.drift(lambda, t) * x, model.vol(t) * x};
}

}  // namespace annuity
