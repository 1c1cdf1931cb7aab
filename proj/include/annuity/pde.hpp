#pragma once

#include <optional>
#include <span>
#include <vector>

#include "annuity/grid.hpp"
#include "annuity/models.hpp"
#include "annuity/surface.hpp"

namespace annuity {

/// Edge closure of a truncated axis.
enum class BoundaryStyle {
    linear,     // zero second derivative: u_0 = 2 u_1 - u_2
    zero_slope  // u_0 = u_1
};

enum class RateMode {
    two_factor,        // 2-D (r, y) solve
    deterministic_rate // c == 0: r follows an ODE from r0, 1-D solve in y
};

enum class IndifferenceForm { exact, quadratic };

struct SolverConfig {
    double theta = 0.5;
    int max_picard = 50;
    double picard_tol = 1e-10;
    BoundaryStyle rate_lower = BoundaryStyle::linear;
    BoundaryStyle rate_upper = BoundaryStyle::linear;
    BoundaryStyle hazard_lower = BoundaryStyle::linear;
    BoundaryStyle hazard_upper = BoundaryStyle::linear;
    /// Keep every k-th time slice (the first and last are always kept). 0 picks 1 for 1-D solves
    /// and ~80 slices for 2-D solves.
    long save_every = 0;
    /// Payment rate k: annuity sources become k n. Surfaces scale exactly by k.
    double payment_rate = 1.0;
    /// Smoothing of the square root at the origin.
    double sqrt_epsilon = 1e-12;

    void validate() const;
};

/// Grids for the annuity-type solves. In deterministic_rate mode `rates` is RateGrid::fixed(r0).
struct AnnuityGrids {
    RateGrid rates;
    HazardGrid hazard;
    TimeMesh time;
};

struct LevelDiagnostics {
    int level = 0;
    int max_picard_iterations = 0;
    long total_picard_iterations = 0;
    double worst_final_change = 0;
};

/// a^(0..n) or phi^(0..n) on a common grid, with the models that produced them.
class ValuationStack {
public:
    ValuationStack(HazardModel hazard, ShortRateModel rates, SharpeConfig sharpe, RateMode mode,
                   std::vector<Surface> levels, std::vector<LevelDiagnostics> diagnostics)
        : hazard_(std::move(hazard)), rates_(std::move(rates)), sharpe_(sharpe), mode_(mode),
          levels_(std::move(levels)), diagnostics_(std::move(diagnostics)) {}

    int max_level() const noexcept { return static_cast<int>(levels_.size()) - 1; }
    const Surface& level(int n) const { return levels_.at(static_cast<std::size_t>(n)); }
    const Surface& top() const { return levels_.back(); }
    const std::vector<Surface>& levels() const noexcept { return levels_; }
    const std::vector<LevelDiagnostics>& diagnostics() const noexcept { return diagnostics_; }
    const HazardModel& hazard() const noexcept { return hazard_; }
    const ShortRateModel& rates() const noexcept { return rates_; }
    const SharpeConfig& sharpe() const noexcept { return sharpe_; }
    RateMode mode() const noexcept { return mode_; }

private:
    HazardModel hazard_;
    ShortRateModel rates_;
    SharpeConfig sharpe_;
    RateMode mode_;
    std::vector<Surface> levels_;
    std::vector<LevelDiagnostics> diagnostics_;
};

/// F(r, t; maturity) by solving the bond PDE in r. Label bond, no hazard axis.
Surface solve_bond(const ShortRateModel& rates, double maturity, const RateGrid& grid, const TimeMesh& time,
                   const SolverConfig& cfg = {});

/// phi^(0..n) for a pure endowment maturing at `time.horizon()`. 1-D in the hazard coordinate.
ValuationStack solve_pure_endowment(const HazardModel& hazard, const SharpeConfig& sharpe, int n,
                                    const HazardGrid& grid, const TimeMesh& time, const SolverConfig& cfg = {});

/// beta(lambda, t; s) for s = `time.horizon()`: linear, hazard drift mu - alpha sigma, terminal 1.
Surface solve_beta(const HazardModel& hazard, double alpha, const HazardGrid& grid, const TimeMesh& time,
                   const SolverConfig& cfg = {});

/// a^(0..n) for the seller, or the buyer when `sharpe.buyer()`.
ValuationStack solve_annuity(const HazardModel& hazard, const ShortRateModel& rates, const SharpeConfig& sharpe,
                             int n, const AnnuityGrids& grids, RateMode mode, const SolverConfig& cfg = {});

/// p: linear, hazard drift mu - alpha sigma, killing r + lambda, source 1.
Surface solve_limit(const HazardModel& hazard, const ShortRateModel& rates, double alpha, const AnnuityGrids& grids,
                    RateMode mode, const SolverConfig& cfg = {});

/// a^IP (exact) or its quadratic approximation A. eta = 0 gives a^(alpha0).
Surface solve_indifference(const HazardModel& hazard, const ShortRateModel& rates, double eta,
                           const AnnuityGrids& grids, RateMode mode, IndifferenceForm form,
                           const SolverConfig& cfg = {});

/// Which discrete equation a surface is checked against.
struct EquationSpec {
    SurfaceLabel equation = SurfaceLabel::annuity;
    double alpha = 0;              // signed: negative for the buyer
    double eta = 0;                // indifference only
    int level = 1;                 // n for annuity / pure endowment
    const Surface* previous = nullptr;  // a^(n-1) or phi^(n-1); null means zero
    RateMode mode = RateMode::two_factor;
};

/// Sup-norm residual of the theta-weighted discrete equation between consecutive stored slices,
/// over interior nodes. Exact scheme residual for 1-D surfaces saved every step; in 2-D it also
/// contains the splitting error.
double pde_residual(const Surface& surface, const EquationSpec& eq, const HazardModel& hazard,
                    const ShortRateModel& rates, const SolverConfig& cfg = {});

enum class DriftChoice { physical, risk_neutral };

/// D^b v at grid node (ir, iy) of slice k (v_t by a one-sided difference toward the later slice).
/// Throws DomainError at boundary nodes or at the last slice.
double apply_generator(const Surface& surface, DriftChoice drift, const HazardModel& hazard,
                       const ShortRateModel& rates, Eigen::Index ir, Eigen::Index iy, std::size_t k);

/// Evaluation point.
struct Probe {
    double r = 0;
    double lambda = 0;
    double t = 0;
};

/// Settings for quadrature over payment dates s in [t, T].
struct QuadratureConfig {
    int intervals = 64;  // Simpson, must be even
    HazardGrid hazard;   // grid for the per-maturity 1-D solves
    double steps_per_year = 100;
    SolverConfig solver;
};

/// int_t^T F(r,t;s) ds at each probe.
std::vector<double> integrate_bond(const ShortRateModel& rates, double horizon, std::span<const Probe> probes,
                                   int intervals = 64);

/// int_t^T F(r,t;s) beta(lambda,t;s) ds at each probe. With alpha = 0 this is a^(alpha0).
std::vector<double> integrate_beta(const HazardModel& hazard, const ShortRateModel& rates, double alpha,
                                   double horizon, std::span<const Probe> probes, const QuadratureConfig& q);

/// int_t^T F(r,t;s) phi^(k)(lambda,t;s) ds for k = 0..n: result[probe][k].
std::vector<std::vector<double>> integrate_pure_endowment(const HazardModel& hazard, const ShortRateModel& rates,
                                                          const SharpeConfig& sharpe, int n, double horizon,
                                                          std::span<const Probe> probes,
                                                          const QuadratureConfig& q);

/// Deterministic short-rate path r(t_j) on a mesh, integrated from r0 with RK4 (requires c == 0).
std::vector<double> deterministic_rate_path(const ShortRateModel& rates, double r0, const TimeMesh& time);

}  // namespace annuity
