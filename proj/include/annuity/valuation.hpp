#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "annuity/models.hpp"
#include "annuity/montecarlo.hpp"
#include "annuity/pde.hpp"

namespace annuity {

/// Grid sizing for a scenario. `scale` multiplies node counts and time steps (CLI --grid-scale).
struct GridConfig {
    double r_min = 0.005, r_max = 0.15;
    long r_nodes = 80;
    long hazard_nodes = 80;
    double hazard_lower = 1e-5, hazard_upper = 50;
    double hazard_reference = 0;  // typical lambda - floor; 0 uses the model's reference excess
    double steps_per_year = 80;
    double scale = 1;
};

/// Settings for the Simpson quadratures over payment dates.
struct QuadratureSettings {
    int intervals = 64;
    long hazard_nodes = 200;
    double steps_per_year = 100;
};

struct Scenario {
    std::string name = "scenario";
    HazardModel hazard = HazardModel::constant(0.0);
    ShortRateModel rates = ShortRateModel::constant(0.0);
    double alpha = 0;
    double horizon = 10;
    std::vector<int> sizes{1};
    std::optional<double> eta;
    /// Starting rate of the deterministic path when rates have no volatility.
    double rate0 = 0;
    GridConfig grid;
    SolverConfig solver;
    PathConfig paths;
    QuadratureSettings quadrature;
    double hedge_interval = 1.0 / 252;
    std::vector<Probe> probes;

    RateMode mode() const { return rates.deterministic() ? RateMode::deterministic_rate : RateMode::two_factor; }
    SharpeConfig sharpe() const { return SharpeConfig(alpha, hazard.floor()); }
    int max_size() const;
    AnnuityGrids grids() const;
    QuadratureConfig quadrature_config() const;
    /// Probes with r replaced by the deterministic rate path in deterministic_rate mode.
    std::vector<Probe> resolved_probes() const;
    /// Throws ConfigError unless alpha, sizes, horizon and probes are consistent with the grids.
    void validate() const;
};

struct PortfolioValuation {
    ValuationStack stack;
    std::vector<Probe> probes;
    std::vector<std::vector<double>> values;  // [level][probe]
};

/// a^(0..n) and their probe values.
PortfolioValuation value_portfolio(const Scenario& scenario, int n);

/// Optimal feedback controls delta*, gamma* of the level-1 seller value.
class ControlField {
public:
    using Slice = Surface::Slice;
    struct Node {
        Eigen::Index ir, iy;
        std::size_t k;
    };
    struct IdentityCheck {
        long checked = 0, passed = 0;
        double worst_identity = 0;  // max |delta^2 + lambda gamma^2 - alpha^2|
        double min_gamma = 0;
        double fraction() const { return checked ? double(passed) / double(checked) : 1.0; }
    };

    ControlField(RateGrid rates, HazardGrid hazard, std::vector<double> times, std::vector<Slice> delta,
                 std::vector<Slice> gamma, std::vector<Slice> radicand, std::vector<Node> flagged, double alpha);

    double alpha() const noexcept { return alpha_; }
    const std::vector<double>& times() const noexcept { return times_; }
    const Slice& delta(std::size_t k) const { return delta_.at(k); }
    const Slice& gamma(std::size_t k) const { return gamma_.at(k); }
    const Slice& radicand(std::size_t k) const { return radicand_.at(k); }
    /// Nodes where the radicand vanished; controls are (0, 0) there.
    const std::vector<Node>& flagged() const noexcept { return flagged_; }

    /// Bilinear lookup in (r, y) on the nearest slice with defined controls, projected radially
    /// onto delta^2 + lambda gamma^2 <= alpha^2.
    void operator()(double r, double lambda, double t, double& delta, double& gamma) const;
    ControlFn function() const;

    /// Identity and gamma > -1 on interior nodes with radicand above `threshold`.
    IdentityCheck check_identity(double tol = 1e-10, double threshold = 1e-12) const;

private:
    RateGrid rates_;
    HazardGrid hazard_;
    std::vector<double> times_;
    std::vector<Slice> delta_, gamma_, radicand_;
    std::vector<Node> flagged_;
    std::vector<std::size_t> valid_;  // slices with at least one defined control
    double alpha_;
};

/// Throws ContractError unless `a` is a level-1 annuity surface.
ControlField extract_controls(const Surface& a, const HazardModel& hazard, double alpha,
                              double radicand_floor = 1e-16);

/// pi* = a_r / F_r with the bond maturing at the scenario horizon. In deterministic_rate mode a_r
/// comes from re-solving with the rate path bumped by +-1e-4.
double hedge_ratio(const Surface& a, const Scenario& scenario, const Probe& probe);

struct BidAsk {
    Probe probe;
    double bid = 0, ask = 0, base = 0;  // buyer, seller, a^(alpha0)
};

std::vector<BidAsk> bid_ask(const Scenario& scenario);

struct RiskChargeReport {
    Probe probe;
    int n = 1;
    double per_annuity = 0;    // (1/n) a^(n)
    double base = 0;           // a^(alpha0)
    double beta_integral = 0;  // int F beta ds
    double finite_charge = 0;  // (1/n) a^(n) - int F beta
    double hazard_charge = 0;  // int F beta - a^(alpha0)
};

RiskChargeReport make_risk_charge(int n, const Probe& probe, double a_n, double beta_integral, double base);
RiskChargeReport risk_charge_split(const Scenario& scenario, int n, const Probe& probe);
void write_risk_charges_csv(std::ostream& out, const std::vector<RiskChargeReport>& rows);

enum class PropertyStatus { pass, fail, not_applicable };
std::string to_string(PropertyStatus s);

struct PropertyResult {
    std::string id;
    std::string title;
    PropertyStatus status = PropertyStatus::pass;
    double worst_violation = 0;  // largest amount by which the inequality is broken (<= 0: slack)
    std::string location;
    std::string detail;
};

struct PropertyReport {
    std::string scenario;
    std::vector<PropertyResult> results;

    bool all_passed() const;  // not-applicable entries count as passing
    const PropertyResult& find(const std::string& id) const;
    void write_markdown(std::ostream& out) const;
    /// Columns: property,status,worst_violation,location.
    void write_csv(std::ostream& out, bool header = true) const;
};

struct SuiteOptions {
    int comparison_levels = 5;  // levels re-solved for the alpha, mu, sigma and scaling comparisons
    double alpha_ratio = 0.5;   // property 4 compares alpha against alpha_ratio * alpha
    double drift_shift = 0.01;  // property 6: mu + shift
    double vol_shift = 0.05;    // property 7: sigma + shift
    double payment_rate = 2.5;  // property 10
    double tolerance = 1e-3;    // per annuity
};

/// Intermediate results of a suite run, for reuse by reports.
struct SuiteData {
    std::unique_ptr<PortfolioValuation> main;
    std::vector<double> base;                       // a^(alpha0) at probes (quadrature)
    std::vector<double> beta_integral;              // int F beta at probes
    std::vector<std::vector<double>> endowment;     // int F phi^(k), [probe][k]
};

PropertyReport run_property_suite(const Scenario& scenario, const SuiteOptions& options = {},
                                  SuiteData* data = nullptr);

}  // namespace annuity
