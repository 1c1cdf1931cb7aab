#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "annuity/models.hpp"
#include "annuity/surface.hpp"

namespace annuity {

struct PathConfig {
    long paths = 100000;
    int steps_per_year = 252;
    std::uint64_t seed = 20080220;
    bool antithetic = false;
    /// Worker threads. Results do not depend on this.
    int workers = 1;

    void validate() const;
};

/// Feedback controls (delta, gamma) at (r, lambda, t).
using ControlFn = std::function<void(double r, double lambda, double t, double& delta, double& gamma)>;

enum class MeasureTag {
    physical,  // P: rate drift b, hazard drift mu
    q,         // rate drift b^Q, hazard drift mu
    hat,       // rate drift b^Q, hazard drift mu - alpha sigma
    tilde,     // hazard only, drift mu - alpha sigma
    bar        // rate drift b^Q, hazard drift mu + delta sigma, intensity lambda (1 + gamma)
};

struct MeasureSpec {
    MeasureTag tag = MeasureTag::physical;
    double alpha = 0;   // hat / tilde shift, and the bar constraint radius
    ControlFn controls; // bar only

    static MeasureSpec physical() { return {}; }
    static MeasureSpec risk_neutral() { return {MeasureTag::q, 0, {}}; }
    static MeasureSpec hat(double alpha) { return {MeasureTag::hat, alpha, {}}; }
    static MeasureSpec tilde(double alpha) { return {MeasureTag::tilde, alpha, {}}; }
    static MeasureSpec bar(double alpha, ControlFn c) { return {MeasureTag::bar, alpha, std::move(c)}; }
};

struct McEstimate {
    double mean = 0;
    double se = 0;
    long paths = 0;
    std::uint64_t seed = 0;
    std::string label;
};

/// CSV with columns label,mean,se,paths,seed.
void write_estimates_csv(std::ostream& out, const std::vector<McEstimate>& estimates, bool header = true);

/// Stored paths on the Euler grid, one row per path.
struct PathBundle {
    std::vector<double> times;
    std::vector<std::vector<double>> rates;
    std::vector<std::vector<double>> hazards;
    std::vector<std::vector<double>> gammas;  // bar measure only
};

PathBundle simulate_paths(const HazardModel& hazard, const ShortRateModel& rates, const MeasureSpec& measure,
                          const PathConfig& cfg, double t0, double t1, double r0, double lambda0);

/// E[exp(-int_t^s lambda)] with hazard drift mu - adjustment * sigma (0: physical, alpha: tilde).
McEstimate mc_survival(const HazardModel& hazard, double adjustment, double lambda, double t, double s,
                       const PathConfig& cfg);

/// a^(alpha0) = int_t^T F(r,t;s) E[exp(-int_t^s lambda)] ds, Simpson in s on `intervals` intervals.
McEstimate mc_annuity_alpha0(const HazardModel& hazard, const ShortRateModel& rates, double r, double lambda,
                             double t, double horizon, const PathConfig& cfg, int intervals = 64);

/// E-hat[int_t^T exp(-int_t^s (r + lambda)) ds].
McEstimate mc_limit(const HazardModel& hazard, const ShortRateModel& rates, double alpha, double r, double lambda,
                    double t, double horizon, const PathConfig& cfg);

/// E-bar[int_t^T exp(-int_t^s (r + lambda (1 + gamma))) ds] under the given controls. Throws
/// ContractError naming the point where delta^2 + lambda gamma^2 > alpha^2 or gamma < -1.
McEstimate mc_good_deal(const HazardModel& hazard, const ShortRateModel& rates, double alpha,
                        const ControlFn& controls, double r, double lambda, double t, double horizon,
                        const PathConfig& cfg);

struct HedgeCheckReport {
    double drift = 0, drift_se = 0;              // empirical E[dPi]/h
    double predicted_drift = 0;                  // r Pi + alpha sqrt(local variance)
    double variance = 0, variance_se = 0;        // empirical Var[dPi]/h
    double predicted_variance = 0;               // sigma^2 (lambda - floor)^2 a_lambda^2 + lambda a^2
    double sharpe = 0, sharpe_se = 0;            // realized instantaneous Sharpe ratio
    double hedge_ratio = 0;                      // pi* = a_r / F_r (bonds held)
    double deaths = 0;                           // fraction of paths with a death
    long paths = 0;
    std::uint64_t seed = 0;
};

/// One hedging interval [t, t + h] for the seller of a single annuity: wealth starts at a (so
/// Pi = 0), holds pi* T-bonds with T the surface horizon, pays 1 per year while alive, and is
/// released from the obligation at death (Bernoulli(lambda h) per path).
HedgeCheckReport simulate_hedged_portfolio(const HazardModel& hazard, const ShortRateModel& rates, double alpha,
                                           const Surface& a_surface, double r, double lambda, double t, double h,
                                           const PathConfig& cfg);

/// Summary statistics with pairwise summation (order independent).
struct SampleStats {
    double mean = 0, variance = 0, m3 = 0, m4 = 0;
    long n = 0;
};
SampleStats sample_stats(const std::vector<double>& x);

/// Per-path generator seed from (base seed, path index).
std::uint64_t path_seed(std::uint64_t base, std::uint64_t index);

}  // namespace annuity
