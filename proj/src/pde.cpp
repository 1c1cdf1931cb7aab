#include "annuity/pde.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>

#include "theta_stepper.hpp"

namespace annuity {

using detail::AxisStencil;
using detail::LevelCoefficients;
using Eigen::ArrayXd;
using Eigen::ArrayXXd;
using Eigen::Index;

void SolverConfig::validate() const {
    if (!(theta >= 0 && theta <= 1)) throw ConfigError("solver theta must lie in [0, 1]");
    if (max_picard < 1) throw ConfigError("solver needs max_picard >= 1");
    if (!(picard_tol > 0)) throw ConfigError("solver Picard tolerance must be positive");
    if (save_every < 0) throw ConfigError("solver save_every must be >= 0");
    if (!(payment_rate > 0)) throw ConfigError("payment rate must be positive");
    if (!(sqrt_epsilon >= 0)) throw ConfigError("square-root smoothing must be >= 0");
}

namespace {

/// Per-time-level data the forcing terms need.
struct Frame {
    double t = 0;
    double sigma = 0;
    const ArrayXd* lambda = nullptr;  // hazard nodes
    ArrayXd bond;                     // F(r_i, t; T) for the indifference equations
};

/// Source plus nonlinear part of the equation.
struct Forcing {
    enum class Kind { none, annuity, endowment, limit, indifference_exact, indifference_quadratic };
    Kind kind = Kind::none;
    double n = 1;
    double alpha = 0;  // signed
    double payment = 1;
    double eps = 1e-12;
    double eta = 0;
    double dy = 1;

    bool linear() const {
        switch (kind) {
            case Kind::annuity:
            case Kind::endowment: return alpha == 0;
            case Kind::indifference_exact:
            case Kind::indifference_quadratic: return eta == 0;
            default: return true;
        }
    }

    bool needs_bond() const {
        return (kind == Kind::indifference_exact || kind == Kind::indifference_quadratic) && eta != 0;
    }

    // e^{-x} - 1 + x without cancellation.
    static double expo_penalty(double x) {
        if (std::abs(x) < 1e-3) return x * x * (0.5 - x * (1.0 / 6 - x / 24));
        return std::expm1(-x) + x;
    }

    void eval(const Frame& fr, const ArrayXXd& u, const ArrayXXd* prev, ArrayXXd& f, ArrayXXd& grad) const {
        const Index nr = u.rows(), ny = u.cols();
        const ArrayXd& lam = *fr.lambda;
        f.resize(nr, ny);
        switch (kind) {
            case Kind::none: f.setZero(); return;
            case Kind::limit: f.setConstant(payment); return;
            case Kind::annuity:
            case Kind::endowment: {
                const double base = kind == Kind::annuity ? payment * n : 0.0;
                for (Index j = 0; j < ny; ++j) {
                    if (prev)
                        f.col(j) = base + n * lam(j) * prev->col(j);
                    else
                        f.col(j).setConstant(base);
                }
                if (alpha == 0) return;
                detail::hazard_gradient(u, dy, grad);
                const double s2 = fr.sigma * fr.sigma;
                const double e = eps * (kind == Kind::annuity ? payment : 1.0);
                for (Index j = 0; j < ny; ++j)
                    for (Index i = 0; i < nr; ++i) {
                        const double d = prev ? u(i, j) - (*prev)(i, j) : u(i, j);
                        const double x = s2 * grad(i, j) * grad(i, j) + n * lam(j) * d * d;
                        f(i, j) += alpha * detail::smooth_sqrt(x, e);
                    }
                return;
            }
            case Kind::indifference_exact:
            case Kind::indifference_quadratic: {
                f.setConstant(1.0);
                if (eta == 0) return;
                detail::hazard_gradient(u, dy, grad);
                const double s2 = fr.sigma * fr.sigma;
                for (Index j = 0; j < ny; ++j)
                    for (Index i = 0; i < nr; ++i) {
                        const double F = fr.bond(i);
                        const double diff_part = eta / (2 * F) * s2 * grad(i, j) * grad(i, j);
                        if (kind == Kind::indifference_quadratic) {
                            f(i, j) += diff_part + eta / (2 * F) * lam(j) * u(i, j) * u(i, j);
                        } else {
                            const double x = eta * u(i, j) / F;
                            if (!(std::abs(x) < 600))
                                throw SolverError("indifference exponent out of range; reduce eta", 1, -1, x);
                            f(i, j) += diff_part + lam(j) * F / eta * expo_penalty(x);
                        }
                    }
                return;
            }
        }
    }
};

/// Builds the linear operator of a solve at any time.
class Discretization {
public:
    Discretization(const HazardModel* hazard, const ShortRateModel* rates, RateGrid rgrid, HazardGrid hgrid,
                   double drift_shift, bool physical_rates = false)
        : hazard_(hazard), rates_(rates), rgrid_(std::move(rgrid)), hgrid_(std::move(hgrid)),
          drift_shift_(drift_shift), physical_rates_(physical_rates) {}

    const RateGrid& rates() const { return rgrid_; }
    const HazardGrid& hazard() const { return hgrid_; }

    double sigma(double t) const { return hazard_ && hgrid_.present() ? hazard_->vol(t) : 0.0; }

    /// Coefficients at time t; `r_det` is the rate on a fixed axis.
    LevelCoefficients at(double t, double r_det) const {
        LevelCoefficients c;
        c.t = t;
        const Index nr = rgrid_.size(), ny = hgrid_.size();
        if (rgrid_.axis() == RateAxis::grid && rates_) {
            ArrayXd conv(nr), diff(nr);
            for (Index i = 0; i < nr; ++i) {
                const double r = rgrid_.r(i);
                conv(i) = physical_rates_ ? rates_->drift(r, t) : drift_under_q(*rates_, r, t);
                const double cv = rates_->vol(r, t);
                diff(i) = 0.5 * cv * cv;
            }
            c.rate = detail::build_stencil(conv, diff, rgrid_.spacing());
            c.rate_kill = rgrid_.nodes();
        } else if (rgrid_.axis() == RateAxis::fixed) {
            c.rate_kill = ArrayXd::Constant(1, r_det);
        } else {
            c.rate_kill = ArrayXd::Zero(nr);
        }
        if (hgrid_.present() && hazard_) {
            const double s = hazard_->vol(t);
            ArrayXd conv(ny), diff = ArrayXd::Constant(ny, 0.5 * s * s);
            for (Index j = 0; j < ny; ++j)
                conv(j) = hazard_->drift(hgrid_.lambda(j), t) + drift_shift_ * s - 0.5 * s * s;
            c.hazard = detail::build_stencil(conv, diff, hgrid_.spacing());
            c.hazard_kill = hgrid_.lambdas();
        } else {
            c.hazard_kill = ArrayXd::Zero(ny);
        }
        return c;
    }

private:
    const HazardModel* hazard_;
    const ShortRateModel* rates_;
    RateGrid rgrid_;
    HazardGrid hgrid_;
    double drift_shift_;
    bool physical_rates_;
};

struct LevelEquation {
    Forcing forcing;
    double kill_scale = 1;
    ArrayXXd terminal;
    int level = 1;
    double tol_scale = 1;
};

struct MarchResult {
    std::vector<double> times;                   // ascending
    std::vector<std::vector<ArrayXXd>> slices;   // [level][slice], ascending
    std::vector<LevelDiagnostics> diagnostics;
};

using BondFn = std::function<ArrayXd(double t, long j)>;

long resolve_save_every(const SolverConfig& cfg, Index nr, Index ny, long steps) {
    if (cfg.save_every > 0) return cfg.save_every;
    if (nr > 1 && ny > 1) return std::max<long>(1, steps / 80);
    return 1;
}

/// Marches all levels backward from the horizon in lockstep. When `chained`, level l sees level
/// l-1 (already advanced to the same time) as its predecessor; the first level sees zero.
MarchResult march(const Discretization& disc, const TimeMesh& mesh, const std::vector<double>* rate_path,
                  std::vector<LevelEquation> eqs, bool chained, const SolverConfig& cfg, const BondFn* bond) {
    cfg.validate();
    const Index nr = disc.rates().size(), ny = disc.hazard().size();
    const long steps = mesh.steps();
    const long save_every = resolve_save_every(cfg, nr, ny, steps);
    const std::size_t L = eqs.size();
    const ArrayXd& lam = disc.hazard().lambdas();
    auto r_at = [&](long j) { return rate_path ? (*rate_path)[static_cast<std::size_t>(j)] : 0.0; };

    detail::ThetaStepper stepper(nr, ny, disc.rates().spacing(), disc.hazard().spacing(), cfg);
    MarchResult res;
    res.slices.resize(L);
    res.diagnostics.resize(L);
    const ArrayXXd zero = ArrayXXd::Zero(nr, ny);

    auto frame_at = [&](long j) {
        Frame fr;
        fr.t = mesh.time(j);
        fr.sigma = disc.sigma(fr.t);
        fr.lambda = &lam;
        if (bond) fr.bond = (*bond)(fr.t, j);
        return fr;
    };

    std::vector<ArrayXXd> cur(L), f_late(L), next(L);
    ArrayXXd grad;
    Frame fr = frame_at(steps);
    for (std::size_t l = 0; l < L; ++l) {
        cur[l] = eqs[l].terminal;
        res.diagnostics[l].level = eqs[l].level;
        const ArrayXXd* prev = chained ? (l == 0 ? &zero : &cur[l - 1]) : nullptr;
        eqs[l].forcing.eval(fr, cur[l], prev, f_late[l], grad);
        res.slices[l].push_back(cur[l]);
    }
    res.times.push_back(mesh.time(steps));

    LevelCoefficients c_late = disc.at(mesh.time(steps), r_at(steps));
    for (long j = steps - 1; j >= 0; --j) {
        LevelCoefficients c_early = disc.at(mesh.time(j), r_at(j));
        Frame fe = frame_at(j);
        for (std::size_t l = 0; l < L; ++l) {
            const ArrayXXd* prev = chained ? (l == 0 ? &zero : &cur[l - 1]) : nullptr;
            auto& eq = eqs[l];
            auto forcing = [&](const ArrayXXd& u, ArrayXXd& f) { eq.forcing.eval(fe, u, prev, f, grad); };
            auto out = stepper.step(cur[l], f_late[l], c_late, c_early, eq.kill_scale, eq.forcing.linear(),
                                    eq.tol_scale, forcing, next[l], eq.level, j);
            cur[l].swap(next[l]);
            eq.forcing.eval(fe, cur[l], prev, f_late[l], grad);
            auto& d = res.diagnostics[l];
            d.max_picard_iterations = std::max(d.max_picard_iterations, out.iterations);
            d.total_picard_iterations += out.iterations;
            d.worst_final_change = std::max(d.worst_final_change, out.last_change);
        }
        if (j % save_every == 0) {
            for (std::size_t l = 0; l < L; ++l) res.slices[l].push_back(cur[l]);
            res.times.push_back(mesh.time(j));
        }
        c_late = std::move(c_early);
    }
    std::reverse(res.times.begin(), res.times.end());
    for (auto& s : res.slices) std::reverse(s.begin(), s.end());
    return res;
}

std::vector<Surface> to_surfaces(MarchResult& m, SurfaceLabel label, const Discretization& disc,
                                  const std::vector<int>& levels) {
    std::vector<Surface> out;
    for (std::size_t l = 0; l < m.slices.size(); ++l)
        out.emplace_back(label, levels[l], disc.rates(), disc.hazard(), m.times, std::move(m.slices[l]));
    return out;
}

Surface zero_surface(SurfaceLabel label, const Surface& like) {
    std::vector<Surface::Slice> s(like.slice_count(), Surface::Slice::Zero(like.rates().size(), like.hazard().size()));
    return Surface(label, 0, like.rates(), like.hazard(), like.times(), std::move(s));
}

void check_grids(const AnnuityGrids& g, RateMode mode, const ShortRateModel& rates) {
    if (!g.hazard.present()) throw ConfigError("annuity solve needs a hazard grid");
    if (mode == RateMode::two_factor) {
        if (g.rates.axis() != RateAxis::grid) throw ConfigError("two_factor mode needs a uniform rate grid");
    } else {
        if (g.rates.axis() != RateAxis::fixed) throw ConfigError("deterministic_rate mode needs a fixed rate r0");
        if (!rates.deterministic()) throw ConfigError("deterministic_rate mode requires zero rate volatility");
    }
}

std::vector<double> rate_path_for(const AnnuityGrids& g, RateMode mode, const ShortRateModel& rates) {
    if (mode == RateMode::deterministic_rate) return deterministic_rate_path(rates, g.rates.r(0), g.time);
    return {};
}

/// F(r_i, t; T) at each node of the rate axis, for the indifference equations.
BondFn make_bond_fn(const ShortRateModel& rates, const AnnuityGrids& g, RateMode mode,
                    const std::vector<double>& path, const SolverConfig& cfg) {
    const double T = g.time.horizon();
    if (mode == RateMode::deterministic_rate) {
        // exp(-int_t^T r) by the trapezoid rule on the RK4 path
        const long N = g.time.steps();
        auto integral = std::make_shared<std::vector<double>>(static_cast<std::size_t>(N + 1), 0.0);
        for (long j = N - 1; j >= 0; --j)
            (*integral)[j] = (*integral)[j + 1] + 0.5 * g.time.dt() * (path[j] + path[j + 1]);
        return [integral](double, long j) { return ArrayXd::Constant(1, std::exp(-(*integral)[j])); };
    }
    if (rates.affine()) {
        RateGrid rg = g.rates;
        return [&rates, rg, T](double t, long) {
            ArrayXd out(rg.size());
            for (Index i = 0; i < rg.size(); ++i) out(i) = bond_price(rates, rg.r(i), t, T);
            return out;
        };
    }
    SolverConfig bc = cfg;
    bc.save_every = 1;
    auto surf = std::make_shared<Surface>(solve_bond(rates, T, g.rates, g.time, bc));
    return [surf](double, long j) { return ArrayXd(surf->slice(static_cast<std::size_t>(j)).col(0)); };
}

}  // namespace

std::vector<double> deterministic_rate_path(const ShortRateModel& rates, double r0, const TimeMesh& time) {
    const long N = time.steps();
    std::vector<double> path(static_cast<std::size_t>(N + 1));
    path[0] = r0;
    double r = r0;
    for (long j = 0; j < N; ++j) {
        const double t = time.time(j), h = time.time(j + 1) - t;
        auto f = [&](double x, double s) { return drift_under_q(rates, x, s); };
        const double k1 = f(r, t);
        const double k2 = f(r + 0.5 * h * k1, t + 0.5 * h);
        const double k3 = f(r + 0.5 * h * k2, t + 0.5 * h);
        const double k4 = f(r + h * k3, t + h);
        r += h * (k1 + 2 * k2 + 2 * k3 + k4) / 6;
        path[static_cast<std::size_t>(j + 1)] = r;
    }
    return path;
}

Surface solve_bond(const ShortRateModel& rates, double maturity, const RateGrid& grid, const TimeMesh& time,
                   const SolverConfig& cfg) {
    if (grid.axis() != RateAxis::grid) throw ConfigError("bond solve needs a uniform rate grid");
    if (std::abs(time.horizon() - maturity) > 1e-12 * std::max(1.0, maturity))
        throw ConfigError("bond solve mesh must end at the maturity");
    Discretization disc(nullptr, &rates, grid, HazardGrid::none(), 0.0);
    LevelEquation eq;
    eq.kill_scale = 0;
    eq.level = 0;
    eq.terminal = ArrayXXd::Ones(grid.size(), 1);
    std::vector<LevelEquation> eqs{eq};
    auto m = march(disc, time, nullptr, std::move(eqs), false, cfg, nullptr);
    return std::move(to_surfaces(m, SurfaceLabel::bond, disc, {0}).front());
}

ValuationStack solve_pure_endowment(const HazardModel& hazard, const SharpeConfig& sharpe, int n,
                                    const HazardGrid& grid, const TimeMesh& time, const SolverConfig& cfg) {
    if (n < 0) throw ConfigError("pure endowment needs n >= 0");
    if (!grid.present()) throw ConfigError("pure endowment solve needs a hazard grid");
    Discretization disc(&hazard, nullptr, RateGrid::none(), grid, 0.0);
    std::vector<LevelEquation> eqs;
    std::vector<int> levels;
    for (int k = 1; k <= n; ++k) {
        LevelEquation eq;
        eq.forcing.kind = Forcing::Kind::endowment;
        eq.forcing.n = k;
        eq.forcing.alpha = sharpe.signed_alpha();
        eq.forcing.eps = cfg.sqrt_epsilon;
        eq.forcing.dy = grid.spacing();
        eq.kill_scale = k;
        eq.level = k;
        eq.terminal = ArrayXXd::Constant(1, grid.size(), k);
        eqs.push_back(std::move(eq));
        levels.push_back(k);
    }
    std::vector<Surface> surfaces;
    if (n == 0) {
        // Only the zero level: a single-step mesh is enough to carry the time axis.
        std::vector<Surface::Slice> s{Surface::Slice::Zero(1, grid.size()), Surface::Slice::Zero(1, grid.size())};
        surfaces.emplace_back(SurfaceLabel::pure_endowment, 0, RateGrid::none(), grid,
                              std::vector<double>{0.0, time.horizon()}, std::move(s));
        return ValuationStack(hazard, ShortRateModel::constant(0.0), sharpe, RateMode::deterministic_rate,
                              std::move(surfaces), {LevelDiagnostics{}});
    }
    auto m = march(disc, time, nullptr, std::move(eqs), true, cfg, nullptr);
    auto diag = m.diagnostics;
    auto levels_s = to_surfaces(m, SurfaceLabel::pure_endowment, disc, levels);
    surfaces.push_back(zero_surface(SurfaceLabel::pure_endowment, levels_s.front()));
    for (auto& s : levels_s) surfaces.push_back(std::move(s));
    diag.insert(diag.begin(), LevelDiagnostics{});
    return ValuationStack(hazard, ShortRateModel::constant(0.0), sharpe, RateMode::deterministic_rate,
                          std::move(surfaces), std::move(diag));
}

Surface solve_beta(const HazardModel& hazard, double alpha, const HazardGrid& grid, const TimeMesh& time,
                   const SolverConfig& cfg) {
    if (!(alpha >= 0)) throw ConfigError("beta needs alpha >= 0");
    if (!grid.present()) throw ConfigError("beta solve needs a hazard grid");
    Discretization disc(&hazard, nullptr, RateGrid::none(), grid, -alpha);
    LevelEquation eq;
    eq.kill_scale = 1;
    eq.terminal = ArrayXXd::Ones(1, grid.size());
    auto m = march(disc, time, nullptr, {eq}, false, cfg, nullptr);
    return std::move(to_surfaces(m, SurfaceLabel::beta, disc, {1}).front());
}

ValuationStack solve_annuity(const HazardModel& hazard, const ShortRateModel& rates, const SharpeConfig& sharpe,
                             int n, const AnnuityGrids& grids, RateMode mode, const SolverConfig& cfg) {
    if (n < 0) throw ConfigError("annuity needs n >= 0");
    check_grids(grids, mode, rates);
    auto path = rate_path_for(grids, mode, rates);
    Discretization disc(&hazard, &rates, grids.rates, grids.hazard, 0.0);
    const Index nr = grids.rates.size(), ny = grids.hazard.size();
    std::vector<LevelEquation> eqs;
    std::vector<int> levels;
    for (int k = 1; k <= n; ++k) {
        LevelEquation eq;
        eq.forcing.kind = Forcing::Kind::annuity;
        eq.forcing.n = k;
        eq.forcing.alpha = sharpe.signed_alpha();
        eq.forcing.payment = cfg.payment_rate;
        eq.forcing.eps = cfg.sqrt_epsilon;
        eq.forcing.dy = grids.hazard.spacing();
        eq.kill_scale = k;
        eq.level = k;
        eq.tol_scale = cfg.payment_rate;
        eq.terminal = ArrayXXd::Zero(nr, ny);
        eqs.push_back(std::move(eq));
        levels.push_back(k);
    }
    std::vector<Surface> surfaces;
    std::vector<LevelDiagnostics> diag;
    if (n == 0) {
        const long se = resolve_save_every(cfg, nr, ny, grids.time.steps());
        std::vector<double> times;
        for (long j = 0; j <= grids.time.steps(); j += se) times.push_back(grids.time.time(j));
        if (times.back() != grids.time.horizon()) times.push_back(grids.time.horizon());
        std::vector<Surface::Slice> s(times.size(), Surface::Slice::Zero(nr, ny));
        surfaces.emplace_back(SurfaceLabel::annuity, 0, grids.rates, grids.hazard, times, std::move(s));
        diag.push_back({});
    } else {
        auto m = march(disc, grids.time, path.empty() ? nullptr : &path, std::move(eqs), true, cfg, nullptr);
        diag = m.diagnostics;
        auto lv = to_surfaces(m, SurfaceLabel::annuity, disc, levels);
        surfaces.push_back(zero_surface(SurfaceLabel::annuity, lv.front()));
        for (auto& s : lv) surfaces.push_back(std::move(s));
        diag.insert(diag.begin(), LevelDiagnostics{});
    }
    return ValuationStack(hazard, rates, sharpe, mode, std::move(surfaces), std::move(diag));
}

Surface solve_limit(const HazardModel& hazard, const ShortRateModel& rates, double alpha, const AnnuityGrids& grids,
                    RateMode mode, const SolverConfig& cfg) {
    if (!(alpha >= 0)) throw ConfigError("limit needs alpha >= 0");
    check_grids(grids, mode, rates);
    auto path = rate_path_for(grids, mode, rates);
    Discretization disc(&hazard, &rates, grids.rates, grids.hazard, -alpha);
    LevelEquation eq;
    eq.forcing.kind = Forcing::Kind::limit;
    eq.forcing.payment = cfg.payment_rate;
    eq.kill_scale = 1;
    eq.tol_scale = cfg.payment_rate;
    eq.terminal = ArrayXXd::Zero(grids.rates.size(), grids.hazard.size());
    auto m = march(disc, grids.time, path.empty() ? nullptr : &path, {eq}, false, cfg, nullptr);
    return std::move(to_surfaces(m, SurfaceLabel::limit, disc, {1}).front());
}

Surface solve_indifference(const HazardModel& hazard, const ShortRateModel& rates, double eta,
                           const AnnuityGrids& grids, RateMode mode, IndifferenceForm form, const SolverConfig& cfg) {
    if (!(eta >= 0)) throw ConfigError("indifference needs eta >= 0");
    check_grids(grids, mode, rates);
    auto path = rate_path_for(grids, mode, rates);
    Discretization disc(&hazard, &rates, grids.rates, grids.hazard, 0.0);
    LevelEquation eq;
    eq.forcing.kind =
        form == IndifferenceForm::exact ? Forcing::Kind::indifference_exact : Forcing::Kind::indifference_quadratic;
    eq.forcing.eta = eta;
    eq.forcing.dy = grids.hazard.spacing();
    eq.kill_scale = 1;
    eq.terminal = ArrayXXd::Zero(grids.rates.size(), grids.hazard.size());
    BondFn bond;
    if (eq.forcing.needs_bond()) bond = make_bond_fn(rates, grids, mode, path, cfg);
    auto m = march(disc, grids.time, path.empty() ? nullptr : &path, {eq}, false, cfg, bond ? &bond : nullptr);
    const auto label =
        form == IndifferenceForm::exact ? SurfaceLabel::indifference : SurfaceLabel::indifference_quadratic;
    return std::move(to_surfaces(m, label, disc, {1}).front());
}

namespace {

/// Rate on a fixed axis at time t, RK4 from r0 at time 0 with steps no longer than h.
double fixed_rate_at(const ShortRateModel& rates, double r0, double t, double h) {
    if (t <= 0) return r0;
    const long steps = std::max<long>(1, static_cast<long>(std::ceil(t / h)));
    auto path = deterministic_rate_path(rates, r0, TimeMesh(t, steps));
    return path.back();
}

}  // namespace

double pde_residual(const Surface& surface, const EquationSpec& eq, const HazardModel& hazard,
                    const ShortRateModel& rates, const SolverConfig& cfg) {
    const SurfaceLabel want = eq.equation;
    if (surface.label() != want && surface.label() != SurfaceLabel::generic)
        throw ContractError("surface label '" + to_string(surface.label()) + "' does not match equation '" +
                            to_string(want) + "'");
    if (eq.previous && eq.previous->times() != surface.times())
        throw ContractError("previous level must share the surface's time slices");
    if (surface.slice_count() < 2) throw ContractError("residual needs at least two time slices");

    Forcing fo;
    double drift_shift = 0, kill_scale = 1;
    switch (want) {
        case SurfaceLabel::annuity:
            fo.kind = Forcing::Kind::annuity;
            fo.n = eq.level;
            fo.alpha = eq.alpha;
            fo.payment = cfg.payment_rate;
            kill_scale = eq.level;
            break;
        case SurfaceLabel::pure_endowment:
            fo.kind = Forcing::Kind::endowment;
            fo.n = eq.level;
            fo.alpha = eq.alpha;
            kill_scale = eq.level;
            break;
        case SurfaceLabel::beta: drift_shift = -std::abs(eq.alpha); break;
        case SurfaceLabel::limit:
            fo.kind = Forcing::Kind::limit;
            fo.payment = cfg.payment_rate;
            drift_shift = -std::abs(eq.alpha);
            break;
        case SurfaceLabel::indifference: fo.kind = Forcing::Kind::indifference_exact; fo.eta = eq.eta; break;
        case SurfaceLabel::indifference_quadratic:
            fo.kind = Forcing::Kind::indifference_quadratic;
            fo.eta = eq.eta;
            break;
        case SurfaceLabel::bond: kill_scale = 0; break;
        case SurfaceLabel::generic: throw ContractError("residual needs a concrete equation");
    }
    fo.eps = cfg.sqrt_epsilon;
    const auto& hg = surface.hazard();
    const auto& rg = surface.rates();
    fo.dy = hg.present() ? hg.spacing() : 1.0;
    if (fo.needs_bond() && !rates.affine())
        throw ContractError("indifference residual needs an affine rate model");

    const bool has_hazard = hg.present() && want != SurfaceLabel::bond;
    Discretization disc(has_hazard ? &hazard : nullptr, &rates, rg, hg, drift_shift);
    detail::ThetaStepper op(rg.size(), hg.size(), rg.spacing(), hg.spacing(), cfg);
    const auto& times = surface.times();
    const double T = times.back();
    const double r0 = rg.r(0);
    const double h_rate = (T - times.front()) / 2000.0;

    auto frame_at = [&](double t, double r_fixed) {
        Frame fr;
        fr.t = t;
        fr.sigma = has_hazard ? hazard.vol(t) : 0.0;
        fr.lambda = &hg.lambdas();
        if (fo.needs_bond()) {
            fr.bond.resize(rg.size());
            for (Index i = 0; i < rg.size(); ++i)
                fr.bond(i) = bond_price(rates, rg.axis() == RateAxis::fixed ? r_fixed : rg.r(i), t, T);
        }
        return fr;
    };

    const Index nr = rg.size(), ny = hg.size();
    const Index r_lo = rg.axis() == RateAxis::grid ? 1 : 0, r_hi = rg.axis() == RateAxis::grid ? nr - 1 : nr;
    const Index y_lo = hg.present() ? 1 : 0, y_hi = hg.present() ? ny - 1 : ny;
    const double th = cfg.theta;
    double worst = 0;
    ArrayXXd ar, ay, f0, f1, grad;
    for (std::size_t k = 0; k + 1 < times.size(); ++k) {
        const double t0 = times[k], t1 = times[k + 1];
        const double rf0 = rg.axis() == RateAxis::fixed ? fixed_rate_at(rates, r0, t0, h_rate) : 0.0;
        const double rf1 = rg.axis() == RateAxis::fixed ? fixed_rate_at(rates, r0, t1, h_rate) : 0.0;
        const auto& u0 = surface.slice(k);
        const auto& u1 = surface.slice(k + 1);
        const ArrayXXd* p0 = eq.previous ? &eq.previous->slice(k) : nullptr;
        const ArrayXXd* p1 = eq.previous ? &eq.previous->slice(k + 1) : nullptr;
        ArrayXXd zero;
        if (!eq.previous && (fo.kind == Forcing::Kind::annuity || fo.kind == Forcing::Kind::endowment)) {
            zero = ArrayXXd::Zero(nr, ny);
            p0 = p1 = &zero;
        }
        auto c0 = disc.at(t0, rf0);
        auto c1 = disc.at(t1, rf1);
        ArrayXXd res = (u1 - u0) / (t1 - t0);
        op.apply(c0, kill_scale, u0, ar, ay);
        fo.eval(frame_at(t0, rf0), u0, p0, f0, grad);
        res += th * (ar + ay + f0);
        op.apply(c1, kill_scale, u1, ar, ay);
        fo.eval(frame_at(t1, rf1), u1, p1, f1, grad);
        res += (1 - th) * (ar + ay + f1);
        for (Index j = y_lo; j < y_hi; ++j)
            for (Index i = r_lo; i < r_hi; ++i) worst = std::max(worst, std::abs(res(i, j)));
    }
    return worst;
}

double apply_generator(const Surface& s, DriftChoice drift, const HazardModel& hazard, const ShortRateModel& rates,
                       Index ir, Index iy, std::size_t k) {
    const auto& rg = s.rates();
    const auto& hg = s.hazard();
    if (k >= s.slice_count() || s.slice_count() < 2) throw DomainError("generator needs a neighbouring time slice");
    if (rg.axis() == RateAxis::grid && (ir <= 0 || ir >= rg.size() - 1))
        throw DomainError("generator probe on a rate boundary node");
    if (hg.present() && (iy <= 0 || iy >= hg.size() - 1))
        throw DomainError("generator probe on a hazard boundary node");
    if (ir < 0 || ir >= rg.size() || iy < 0 || iy >= hg.size()) throw DomainError("generator probe outside the grid");

    const auto& times = s.times();
    const std::size_t ka = k == 0 ? 0 : k - 1;
    const std::size_t kb = k + 1 < s.slice_count() ? k + 1 : k;
    const double v_t = (s.value(ir, iy, kb) - s.value(ir, iy, ka)) / (times[kb] - times[ka]);
    const double t = times[k];
    const double v = s.value(ir, iy, k);
    double out = v_t;
    double r = rg.r(ir);
    if (rg.axis() == RateAxis::grid) {
        const double h = rg.spacing();
        const double vr = (s.value(ir + 1, iy, k) - s.value(ir - 1, iy, k)) / (2 * h);
        const double vrr = (s.value(ir + 1, iy, k) - 2 * v + s.value(ir - 1, iy, k)) / (h * h);
        const double b = drift == DriftChoice::physical ? rates.drift(r, t) : drift_under_q(rates, r, t);
        const double c = rates.vol(r, t);
        out += b * vr + 0.5 * c * c * vrr;
    } else if (rg.axis() == RateAxis::none) {
        r = 0;
    }
    double lambda = 0;
    if (hg.present()) {
        const double h = hg.spacing();
        lambda = hg.lambda(iy);
        const double vy = (s.value(ir, iy + 1, k) - s.value(ir, iy - 1, k)) / (2 * h);
        const double vyy = (s.value(ir, iy + 1, k) - 2 * v + s.value(ir, iy - 1, k)) / (h * h);
        const double sg = hazard.vol(t);
        out += (hazard.drift(lambda, t) - 0.5 * sg * sg) * vy + 0.5 * sg * sg * vyy;
    }
    return out - (r + lambda) * v;
}

std::vector<double> integrate_bond(const ShortRateModel& rates, double horizon, std::span<const Probe> probes,
                                   int intervals) {
    if (intervals < 2 || intervals % 2) throw ConfigError("Simpson quadrature needs an even interval count");
    std::vector<double> out;
    for (const auto& p : probes) {
        if (p.t > horizon) throw DomainError("probe time beyond the horizon");
        const double h = (horizon - p.t) / intervals;
        double acc = 0;
        for (int i = 0; i <= intervals; ++i) {
            const double w = (i == 0 || i == intervals) ? 1 : (i % 2 ? 4 : 2);
            acc += w * bond_price(rates, p.r, p.t, p.t + i * h);
        }
        out.push_back(acc * h / 3);
    }
    return out;
}

namespace {

// Calls body(s, weight, indices) for each Simpson node of each probe-time group.
template <typename Body>
void simpson_groups(double horizon, std::span<const Probe> probes, int intervals, Body&& body) {
    if (intervals < 2 || intervals % 2) throw ConfigError("Simpson quadrature needs an even interval count");
    std::map<double, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < probes.size(); ++i) {
        if (probes[i].t > horizon || probes[i].t < 0) throw DomainError("probe time outside [0, horizon]");
        groups[probes[i].t].push_back(i);
    }
    for (const auto& [t, idx] : groups) {
        const double h = (horizon - t) / intervals;
        for (int i = 0; i <= intervals; ++i) {
            const double w = ((i == 0 || i == intervals) ? 1.0 : (i % 2 ? 4.0 : 2.0)) * h / 3;
            body(t, i == intervals ? horizon : t + i * h, w, idx);
        }
    }
}

TimeMesh mesh_to(double s, double steps_per_year) {
    return TimeMesh(s, std::max<long>(4, static_cast<long>(std::ceil(s * steps_per_year - 1e-9))));
}

}  // namespace

std::vector<double> integrate_beta(const HazardModel& hazard, const ShortRateModel& rates, double alpha,
                                   double horizon, std::span<const Probe> probes, const QuadratureConfig& q) {
    std::vector<double> out(probes.size(), 0.0);
    SolverConfig cfg = q.solver;
    cfg.save_every = 1;
    simpson_groups(horizon, probes, q.intervals, [&](double t, double s, double w, const auto& idx) {
        if (s <= t) {
            for (auto i : idx) out[i] += w;  // F = beta = 1
            return;
        }
        Surface beta = solve_beta(hazard, alpha, q.hazard, mesh_to(s, q.steps_per_year), cfg);
        for (auto i : idx) out[i] += w * bond_price(rates, probes[i].r, t, s) * beta(0.0, probes[i].lambda, t);
    });
    return out;
}

std::vector<std::vector<double>> integrate_pure_endowment(const HazardModel& hazard, const ShortRateModel& rates,
                                                          const SharpeConfig& sharpe, int n, double horizon,
                                                          std::span<const Probe> probes, const QuadratureConfig& q) {
    std::vector<std::vector<double>> out(probes.size(), std::vector<double>(static_cast<std::size_t>(n + 1), 0.0));
    SolverConfig cfg = q.solver;
    cfg.save_every = 1;
    simpson_groups(horizon, probes, q.intervals, [&](double t, double s, double w, const auto& idx) {
        if (s <= t) {
            for (auto i : idx)
                for (int k = 0; k <= n; ++k) out[i][static_cast<std::size_t>(k)] += w * k;
            return;
        }
        auto stack = solve_pure_endowment(hazard, sharpe, n, q.hazard, mesh_to(s, q.steps_per_year), cfg);
        for (auto i : idx) {
            const double F = bond_price(rates, probes[i].r, t, s);
            for (int k = 1; k <= n; ++k)
                out[i][static_cast<std::size_t>(k)] += w * F * stack.level(k)(0.0, probes[i].lambda, t);
        }
    });
    return out;
}

}  // namespace annuity
