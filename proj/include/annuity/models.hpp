#pragma once

#include <functional>
#include <string>

namespace annuity {

enum class HazardKind { constant, brownian_makeham, custom };
enum class RateKind { constant, vasicek, cir, custom };

std::string to_string(HazardKind kind);
std::string to_string(RateKind kind);

/// Mean-reverting Brownian Makeham law: lambda_t = floor + (lambda0 - floor) exp(g t + Y_t),
/// dY = -m Y dt + sigma dW.
struct BrownianMakehamParams {
    double g = 0.0;
    double m = 0.0;
    double sigma = 0.0;
    double lambda0 = 0.0;
};

/// Hazard-rate dynamics d lambda = mu(lambda, t) (lambda - floor) dt + sigma(t) (lambda - floor) dW.
///
/// Immutable after construction. Construction checks that sigma is either identically zero or
/// bounded away from zero, and (for stochastic hazards) that mu > 0 just above the floor.
class HazardModel {
public:
    using DriftFn = std::function<double(double lambda, double t)>;
    using VolFn = std::function<double(double t)>;

    /// Deterministic, constant hazard: mu = 0, sigma = 0.
    static HazardModel constant(double lambda_floor, double reference_excess = 0.03);
    static HazardModel brownian_makeham(const BrownianMakehamParams& params, double lambda_floor);
    /// `reference_excess` is a typical lambda - floor; it sets the drift-condition probe width
    /// and default grid placement.
    static HazardModel custom(double lambda_floor, DriftFn drift, VolFn vol, double reference_excess,
                              double validation_horizon = 100.0);

    HazardKind kind() const noexcept { return kind_; }
    double floor() const noexcept { return floor_; }
    double reference_excess() const noexcept { return reference_excess_; }
    bool deterministic() const noexcept { return deterministic_; }

    /// mu(lambda, t), the drift multiplier of (lambda - floor).
    double drift(double lambda, double t) const { return drift_(lambda, t); }
    /// sigma(t).
    double vol(double t) const { return vol_(t); }

    /// Same model with mu replaced by mu + shift.
    HazardModel with_drift_shift(double shift) const;
    /// Same model with sigma replaced by sigma + shift (must keep sigma bounded below).
    HazardModel with_vol_shift(double shift) const;

private:
    HazardModel(HazardKind kind, double floor, DriftFn drift, VolFn vol, double reference_excess);
    void validate(double horizon);

    HazardKind kind_;
    double floor_;
    DriftFn drift_;
    VolFn vol_;
    double reference_excess_;
    bool deterministic_ = false;
};

struct VasicekParams {
    double kappa = 0.0;
    double theta = 0.0;
    double vol = 0.0;
    double mpr = 0.0;  // constant market price of risk q
};

/// CIR with c(r) = vol sqrt(r) and q(r) = mpr sqrt(r), which keeps the Q-dynamics affine.
struct CirParams {
    double kappa = 0.0;
    double theta = 0.0;
    double vol = 0.0;
    double mpr = 0.0;
};

/// Short-rate dynamics dr = b(r, t) dt + c(r, t) dW with market price of risk q(r, t).
class ShortRateModel {
public:
    using CoefFn = std::function<double(double r, double t)>;

    /// b = c = q = 0; `level` is the rate used when a deterministic-rate solve needs one.
    static ShortRateModel constant(double level);
    static ShortRateModel vasicek(const VasicekParams& params);
    static ShortRateModel cir(const CirParams& params);
    /// Arbitrary coefficients; bond prices come from a finite-difference solve.
    static ShortRateModel custom(CoefFn drift, CoefFn vol, CoefFn mpr, double level);

    RateKind kind() const noexcept { return kind_; }
    bool affine() const noexcept { return kind_ != RateKind::custom; }
    /// True when c == 0 identically (rates follow an ODE).
    bool deterministic() const noexcept { return deterministic_; }
    double level() const noexcept { return level_; }

    double drift(double r, double t) const { return drift_(r, t); }
    double vol(double r, double t) const { return vol_(r, t); }
    double mpr(double r, double t) const { return mpr_(r, t); }

    const VasicekParams& vasicek_params() const noexcept { return vasicek_; }
    const CirParams& cir_params() const noexcept { return cir_; }

private:
    ShortRateModel(RateKind kind, CoefFn drift, CoefFn vol, CoefFn mpr, double level);

    RateKind kind_;
    CoefFn drift_;
    CoefFn vol_;
    CoefFn mpr_;
    double level_ = 0.0;
    bool deterministic_ = false;
    VasicekParams vasicek_{};
    CirParams cir_{};
};

/// Instantaneous Sharpe ratio target. The seller prices with +alpha, the buyer with -alpha.
class SharpeConfig {
public:
    /// Throws ConfigError unless 0 <= alpha <= sqrt(lambda_floor).
    SharpeConfig(double alpha, double lambda_floor, bool buyer = false);

    double alpha() const noexcept { return alpha_; }
    bool buyer() const noexcept { return buyer_; }
    /// +alpha for the seller, -alpha for the buyer.
    double signed_alpha() const noexcept { return buyer_ ? -alpha_ : alpha_; }
    SharpeConfig as_buyer() const { return SharpeConfig(alpha_, floor_, true); }
    SharpeConfig as_seller() const { return SharpeConfig(alpha_, floor_, false); }
    SharpeConfig with_alpha(double alpha) const { return SharpeConfig(alpha, floor_, buyer_); }

private:
    double alpha_;
    double floor_;
    bool buyer_;
};

/// b^Q = b - q c.
double drift_under_q(const ShortRateModel& model, double r, double t);

/// Zero-coupon bond F(r, t; maturity). Closed form for affine kinds, finite differences otherwise.
double bond_price(const ShortRateModel& model, double r, double t, double maturity);

/// dF/dr. Closed form -B(tau) F for affine kinds, central difference otherwise.
double bond_delta(const ShortRateModel& model, double r, double t, double maturity);

struct HazardCoefficients {
    double drift = 0.0;  // mu(lambda, t) (lambda - floor)
    double vol = 0.0;    // sigma(t) (lambda - floor)
};

/// Full SDE coefficients of the hazard at (lambda, t). Throws DomainError when lambda <= floor.
HazardCoefficients hazard_coefficients(const HazardModel& model, double lambda, double t);

}  // namespace annuity
