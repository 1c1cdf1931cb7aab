#include "annuity/valuation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <sstream>
#include <tuple>

#include "annuity/errors.hpp"

namespace annuity {

namespace {

long scaled(double count, double scale, long minimum) {
    return std::max<long>(minimum, std::lround(count * scale));
}

double hazard_reference(const Scenario& sc) {
    return sc.grid.hazard_reference > 0 ? sc.grid.hazard_reference : sc.hazard.reference_excess();
}

std::string where(int n, double r, double lambda, double t) {
    std::ostringstream s;
    s << "n=" << n << " r=" << r << " lambda=" << lambda << " t=" << t;
    return s.str();
}

// Largest violation of "lhs <= rhs + tol" seen so far, with its location.
struct Worst {
    double value = -std::numeric_limits<double>::infinity();
    std::string location;
    bool any = false;

    template <typename Loc>
    void consider(double excess, Loc&& loc) {
        if (!any || excess > value) {
            value = excess;
            location = loc();
            any = true;
        }
    }
};

PropertyResult verdict(std::string id, std::string title, const Worst& w, std::string detail = {}) {
    PropertyResult r;
    r.id = std::move(id);
    r.title = std::move(title);
    r.worst_violation = w.any ? w.value : 0.0;
    r.location = w.location;
    r.status = !w.any || w.value <= 0 ? PropertyStatus::pass : PropertyStatus::fail;
    r.detail = std::move(detail);
    return r;
}

PropertyResult not_applicable(std::string id, std::string title, std::string why) {
    PropertyResult r;
    r.id = std::move(id);
    r.title = std::move(title);
    r.status = PropertyStatus::not_applicable;
    r.detail = std::move(why);
    return r;
}

// Interior nodes of a surface: every slice, rate nodes without the edges (if a rate grid is
// present), hazard nodes without the edges.
template <typename Fn>
void for_interior(const Surface& s, Fn&& fn) {
    const bool has_r = s.rates().axis() == RateAxis::grid;
    const Eigen::Index r0 = has_r ? 1 : 0, r1 = has_r ? s.rates().size() - 1 : 1;
    for (std::size_t k = 0; k < s.slice_count(); ++k)
        for (Eigen::Index ir = r0; ir < r1; ++ir)
            for (Eigen::Index iy = 1; iy + 1 < s.hazard().size(); ++iy) fn(ir, iy, k);
}

// Rate at node ir of slice k: grid node, or the deterministic path.
struct NodeRates {
    const Surface* s;
    std::vector<double> path_times, path;

    double at(Eigen::Index ir, std::size_t k) const {
        if (s->rates().axis() == RateAxis::grid) return s->rates().r(ir);
        const double t = s->times()[k];
        auto it = std::lower_bound(path_times.begin(), path_times.end(), t - 1e-12);
        const std::size_t j = std::min<std::size_t>(static_cast<std::size_t>(it - path_times.begin()), path.size() - 1);
        return path[j];
    }
};

std::pair<std::vector<double>, std::vector<double>> rate_path(const Scenario& sc) {
    const AnnuityGrids g = sc.grids();
    std::vector<double> times(static_cast<std::size_t>(g.time.steps() + 1));
    for (long j = 0; j <= g.time.steps(); ++j) times[static_cast<std::size_t>(j)] = g.time.time(j);
    return {times, deterministic_rate_path(sc.rates, sc.rate0, g.time)};
}

double bond_annuity(const ShortRateModel& rates, double r, double t, double horizon, int intervals) {
    const Probe p{r, 0.0, t};
    return integrate_bond(rates, horizon, std::span<const Probe>(&p, 1), intervals)[0];
}

}  // namespace

int Scenario::max_size() const {
    int n = 0;
    for (int s : sizes) n = std::max(n, s);
    return n;
}

AnnuityGrids Scenario::grids() const {
    const double s = grid.scale;
    const long steps = scaled(grid.steps_per_year * horizon, s, 1);
    RateGrid rg = mode() == RateMode::two_factor ? RateGrid::uniform(grid.r_min, grid.r_max, scaled(grid.r_nodes, s, 3))
                                                  : RateGrid::fixed(rate0);
    HazardGrid hg = HazardGrid::around(hazard.floor(), hazard_reference(*this), scaled(grid.hazard_nodes, s, 3),
                                       grid.hazard_lower, grid.hazard_upper);
    return {rg, hg, TimeMesh(horizon, steps)};
}

QuadratureConfig Scenario::quadrature_config() const {
    QuadratureConfig q;
    q.intervals = quadrature.intervals;
    q.hazard = HazardGrid::around(hazard.floor(), hazard_reference(*this),
                                  scaled(double(quadrature.hazard_nodes), grid.scale, 3), grid.hazard_lower,
                                  grid.hazard_upper);
    q.steps_per_year = quadrature.steps_per_year * grid.scale;
    q.solver = solver;
    return q;
}

std::vector<Probe> Scenario::resolved_probes() const {
    if (mode() == RateMode::two_factor) return probes;
    auto [times, path] = rate_path(*this);
    std::vector<Probe> out = probes;
    for (auto& p : out) {
        auto it = std::upper_bound(times.begin(), times.end(), p.t);
        const std::size_t j = std::clamp<std::size_t>(static_cast<std::size_t>(it - times.begin()), 1, times.size() - 1);
        const double w = (p.t - times[j - 1]) / (times[j] - times[j - 1]);
        p.r = (1 - w) * path[j - 1] + w * path[j];
    }
    return out;
}

void Scenario::validate() const {
    (void)sharpe();
    if (!(horizon > 0)) throw ConfigError("horizon must be positive");
    if (sizes.empty()) throw ConfigError("sizes must list at least one portfolio size");
    for (int n : sizes)
        if (n < 0) throw ConfigError("portfolio sizes must be non-negative");
    if (eta && !(*eta >= 0)) throw ConfigError("eta must be non-negative");
    if (!(grid.scale > 0)) throw ConfigError("grid scale must be positive");
    if (!(hedge_interval > 0)) throw ConfigError("hedge interval must be positive");
    if (quadrature.intervals < 2 || quadrature.intervals % 2)
        throw ConfigError("quadrature intervals must be even and at least 2");
    solver.validate();
    paths.validate();
    const AnnuityGrids g = grids();
    if (probes.empty()) throw ConfigError("at least one probe point is required");
    for (std::size_t i = 0; i < probes.size(); ++i) {
        const Probe& p = probes[i];
        const std::string tag = "probe " + std::to_string(i) + ": ";
        if (!(p.t >= 0 && p.t <= horizon)) throw ConfigError(tag + "t must lie in [0, horizon]");
        if (!(p.lambda > hazard.floor())) throw ConfigError(tag + "lambda must exceed the hazard floor");
        if (!(p.lambda > g.hazard.lambda(0) && p.lambda < g.hazard.lambda(g.hazard.size() - 1)))
            throw ConfigError(tag + "lambda lies outside the hazard grid");
        if (mode() == RateMode::two_factor && !(p.r > grid.r_min && p.r < grid.r_max))
            throw ConfigError(tag + "r lies outside the rate grid");
    }
}

PortfolioValuation value_portfolio(const Scenario& sc, int n) {
    sc.validate();
    if (n < 0) throw ConfigError("portfolio size must be non-negative");
    auto stack = solve_annuity(sc.hazard, sc.rates, sc.sharpe(), n, sc.grids(), sc.mode(), sc.solver);
    const auto probes = sc.resolved_probes();
    std::vector<std::vector<double>> values(static_cast<std::size_t>(n + 1));
    for (int l = 0; l <= n; ++l)
        for (const auto& p : probes) values[static_cast<std::size_t>(l)].push_back(stack.level(l)(p.r, p.lambda, p.t));
    return {std::move(stack), probes, std::move(values)};
}

ControlField::ControlField(RateGrid rates, HazardGrid hazard, std::vector<double> times, std::vector<Slice> delta,
                           std::vector<Slice> gamma, std::vector<Slice> radicand, std::vector<Node> flagged,
                           double alpha)
    : rates_(std::move(rates)), hazard_(std::move(hazard)), times_(std::move(times)), delta_(std::move(delta)),
      gamma_(std::move(gamma)), radicand_(std::move(radicand)), flagged_(std::move(flagged)), alpha_(alpha) {
    std::vector<long> count(times_.size(), 0);
    for (const auto& f : flagged_) ++count[f.k];
    const long cells = static_cast<long>(rates_.size() * hazard_.size());
    for (std::size_t k = 0; k < times_.size(); ++k)
        if (count[k] < cells) valid_.push_back(k);
}

void ControlField::operator()(double r, double lambda, double t, double& delta, double& gamma) const {
    delta = gamma = 0;
    if (valid_.empty()) return;
    // nearest slice with defined controls
    auto it = std::lower_bound(valid_.begin(), valid_.end(), t,
                               [&](std::size_t k, double v) { return times_[k] < v; });
    std::size_t k;
    if (it == valid_.end()) {
        k = valid_.back();
    } else if (it == valid_.begin()) {
        k = *it;
    } else {
        const std::size_t hi = *it, lo = *(it - 1);
        k = (t - times_[lo] <= times_[hi] - t) ? lo : hi;
    }
    auto bracket = [](double pos, Eigen::Index n, double& w) {
        pos = std::clamp(pos, 0.0, double(n - 1));
        Eigen::Index i = std::min<Eigen::Index>(static_cast<Eigen::Index>(pos), n - 2);
        w = pos - double(i);
        return i;
    };
    Eigen::Index ir = 0, iy = 0;
    double wr = 0, wy = 0;
    const bool has_r = rates_.axis() == RateAxis::grid;
    if (has_r) ir = bracket((r - rates_.r(0)) / rates_.spacing(), rates_.size(), wr);
    const double y = lambda > hazard_.floor() ? hazard_.to_y(lambda) : hazard_.y_min();
    iy = bracket((y - hazard_.y_min()) / hazard_.spacing(), hazard_.size(), wy);
    auto mix = [&](const Slice& s) {
        auto at = [&](Eigen::Index a, Eigen::Index b) { return s(ir + (has_r ? a : 0), iy + b); };
        return (1 - wr) * (1 - wy) * at(0, 0) + wr * (1 - wy) * at(1, 0) + (1 - wr) * wy * at(0, 1) +
               wr * wy * at(1, 1);
    };
    delta = mix(delta_[k]);
    gamma = mix(gamma_[k]);
    const double load = delta * delta + lambda * gamma * gamma;
    if (load > alpha_ * alpha_ && load > 0) {
        const double f = alpha_ / std::sqrt(load);
        delta *= f;
        gamma *= f;
    }
}

ControlFn ControlField::function() const {
    auto self = std::make_shared<const ControlField>(*this);
    return [self](double r, double lambda, double t, double& d, double& g) { (*self)(r, lambda, t, d, g); };
}

ControlField::IdentityCheck ControlField::check_identity(double tol, double threshold) const {
    IdentityCheck c;
    c.min_gamma = std::numeric_limits<double>::infinity();
    const bool has_r = rates_.axis() == RateAxis::grid;
    const Eigen::Index r0 = has_r ? 1 : 0, r1 = has_r ? rates_.size() - 1 : 1;
    for (std::size_t k = 0; k < times_.size(); ++k)
        for (Eigen::Index ir = r0; ir < r1; ++ir)
            for (Eigen::Index iy = 1; iy + 1 < hazard_.size(); ++iy) {
                if (!(radicand_[k](ir, iy) > threshold)) continue;
                const double d = delta_[k](ir, iy), g = gamma_[k](ir, iy);
                const double err = std::abs(d * d + hazard_.lambda(iy) * g * g - alpha_ * alpha_);
                ++c.checked;
                c.worst_identity = std::max(c.worst_identity, err);
                c.min_gamma = std::min(c.min_gamma, g);
                if (err <= tol && g > -1) ++c.passed;
            }
    if (!c.checked) c.min_gamma = 0;
    return c;
}

ControlField extract_controls(const Surface& a, const HazardModel& hazard, double alpha, double radicand_floor) {
    if (a.label() != SurfaceLabel::annuity || a.level() != 1)
        throw ContractError("controls are defined for the level-1 annuity surface only");
    if (!a.hazard().present()) throw ContractError("annuity surface has no hazard axis");
    const auto& hg = a.hazard();
    const Eigen::Index nr = a.rates().size(), ny = hg.size();
    const double dy = hg.spacing();
    std::vector<ControlField::Slice> delta, gamma, rad;
    std::vector<ControlField::Node> flagged;
    for (std::size_t k = 0; k < a.slice_count(); ++k) {
        const auto& s = a.slice(k);
        const double sig = hazard.vol(a.times()[k]);
        ControlField::Slice d = ControlField::Slice::Zero(nr, ny), g = d, R2 = d;
        for (Eigen::Index ir = 0; ir < nr; ++ir)
            for (Eigen::Index iy = 0; iy < ny; ++iy) {
                double ay;
                if (iy == 0)
                    ay = (s(ir, 1) - s(ir, 0)) / dy;
                else if (iy == ny - 1)
                    ay = (s(ir, iy) - s(ir, iy - 1)) / dy;
                else
                    ay = (s(ir, iy + 1) - s(ir, iy - 1)) / (2 * dy);
                const double v = s(ir, iy);
                const double r2 = sig * sig * ay * ay + hg.lambda(iy) * v * v;
                R2(ir, iy) = r2;
                if (!(r2 > radicand_floor)) {
                    flagged.push_back({ir, iy, k});
                    continue;
                }
                const double R = std::sqrt(r2);
                d(ir, iy) = alpha * sig * ay / R;
                g(ir, iy) = -alpha * v / R;
            }
        delta.push_back(std::move(d));
        gamma.push_back(std::move(g));
        rad.push_back(std::move(R2));
    }
    return ControlField(a.rates(), hg, a.times(), std::move(delta), std::move(gamma), std::move(rad),
                        std::move(flagged), alpha);
}

double hedge_ratio(const Surface& a, const Scenario& sc, const Probe& probe) {
    const double T = sc.horizon;
    if (probe.t >= T) return 0.0;
    const double Fr = bond_delta(sc.rates, probe.r, probe.t, T);
    if (Fr == 0) throw DomainError("degenerate hedge: F_r = 0 at the probe");
    if (a.rates().axis() == RateAxis::grid) return local_derivatives(a, probe.r, probe.lambda, probe.t).d_r / Fr;

    // deterministic rates: bump the starting rate and re-solve
    if (probe.t > 0 && sc.rates.kind() != RateKind::constant)
        throw ContractError("deterministic-rate hedge ratios need t = 0 or a constant rate");
    const double h = 1e-4;
    AnnuityGrids g = sc.grids();
    auto solve_at = [&](double r0) {
        g.rates = RateGrid::fixed(r0);
        auto stack = solve_annuity(sc.hazard, sc.rates, sc.sharpe(), 1, g, RateMode::deterministic_rate, sc.solver);
        return stack.level(1)(r0, probe.lambda, probe.t);
    };
    const double ar = (solve_at(probe.r + h) - solve_at(probe.r - h)) / (2 * h);
    return ar / Fr;
}

std::vector<BidAsk> bid_ask(const Scenario& sc) {
    sc.validate();
    const auto g = sc.grids();
    auto seller = solve_annuity(sc.hazard, sc.rates, sc.sharpe(), 1, g, sc.mode(), sc.solver);
    auto buyer = solve_annuity(sc.hazard, sc.rates, sc.sharpe().as_buyer(), 1, g, sc.mode(), sc.solver);
    const auto probes = sc.resolved_probes();
    const auto base = integrate_beta(sc.hazard, sc.rates, 0.0, sc.horizon, probes, sc.quadrature_config());
    std::vector<BidAsk> out;
    for (std::size_t i = 0; i < probes.size(); ++i) {
        const auto& p = probes[i];
        out.push_back({p, buyer.level(1)(p.r, p.lambda, p.t), seller.level(1)(p.r, p.lambda, p.t), base[i]});
    }
    return out;
}

RiskChargeReport make_risk_charge(int n, const Probe& probe, double a_n, double beta_integral, double base) {
    if (n < 1) throw ConfigError("risk charges need n >= 1");
    RiskChargeReport r;
    r.probe = probe;
    r.n = n;
    r.per_annuity = a_n / n;
    r.base = base;
    r.beta_integral = beta_integral;
    r.finite_charge = r.per_annuity - beta_integral;
    r.hazard_charge = beta_integral - base;
    return r;
}

RiskChargeReport risk_charge_split(const Scenario& sc, int n, const Probe& probe) {
    Scenario one = sc;
    one.probes = {probe};
    auto v = value_portfolio(one, n);
    const auto p = v.probes;
    const auto q = one.quadrature_config();
    const double beta = integrate_beta(sc.hazard, sc.rates, sc.alpha, sc.horizon, p, q)[0];
    const double base = integrate_beta(sc.hazard, sc.rates, 0.0, sc.horizon, p, q)[0];
    return make_risk_charge(n, p[0], v.values[static_cast<std::size_t>(n)][0], beta, base);
}

void write_risk_charges_csv(std::ostream& out, const std::vector<RiskChargeReport>& rows) {
    out << "n,r,lambda,t,per_annuity,base,beta_integral,finite_charge,hazard_charge\n";
    for (const auto& r : rows)
        out << r.n << ',' << format_number(r.probe.r) << ',' << format_number(r.probe.lambda) << ','
            << format_number(r.probe.t) << ',' << format_number(r.per_annuity) << ',' << format_number(r.base) << ','
            << format_number(r.beta_integral) << ',' << format_number(r.finite_charge) << ','
            << format_number(r.hazard_charge) << '\n';
}

std::string to_string(PropertyStatus s) {
    switch (s) {
        case PropertyStatus::pass: return "pass";
        case PropertyStatus::fail: return "fail";
        case PropertyStatus::not_applicable: return "not_applicable";
    }
    return "?";
}

bool PropertyReport::all_passed() const {
    return std::none_of(results.begin(), results.end(),
                        [](const PropertyResult& r) { return r.status == PropertyStatus::fail; });
}

const PropertyResult& PropertyReport::find(const std::string& id) const {
    for (const auto& r : results)
        if (r.id == id) return r;
    throw ContractError("no property '" + id + "' in the report");
}

void PropertyReport::write_markdown(std::ostream& out) const {
    out << "## Property suite: " << scenario << "\n\n";
    out << "| property | description | status | worst violation | location | detail |\n";
    out << "|---|---|---|---|---|---|\n";
    for (const auto& r : results)
        out << "| " << r.id << " | " << r.title << " | " << to_string(r.status) << " | "
            << format_number(r.worst_violation) << " | " << r.location << " | " << r.detail << " |\n";
    out << "\nOverall: " << (all_passed() ? "pass" : "FAIL") << "\n";
}

void PropertyReport::write_csv(std::ostream& out, bool header) const {
    if (header) out << "property,status,worst_violation,location\n";
    for (const auto& r : results)
        out << r.id << ',' << to_string(r.status) << ',' << format_number(r.worst_violation) << ",\"" << r.location
            << "\"\n";
}

PropertyReport run_property_suite(const Scenario& sc, const SuiteOptions& opt, SuiteData* data) {
    sc.validate();
    PropertyReport rep;
    rep.scenario = sc.name;
    const int N = std::max(1, sc.max_size());
    const int L = std::max(1, std::min(N, opt.comparison_levels));
    const double tol = opt.tolerance;
    const auto grids = sc.grids();
    const auto mode = sc.mode();

    auto main = std::make_unique<PortfolioValuation>(value_portfolio(sc, N));
    const auto& stack = main->stack;
    const auto& probes = main->probes;
    const auto q = sc.quadrature_config();
    const auto base = integrate_beta(sc.hazard, sc.rates, 0.0, sc.horizon, probes, q);
    const auto beta = integrate_beta(sc.hazard, sc.rates, sc.alpha, sc.horizon, probes, q);
    const auto endow = integrate_pure_endowment(sc.hazard, sc.rates, sc.sharpe(), N, sc.horizon, probes, q);

    const Surface& top = stack.level(N);
    NodeRates node_rates{&top, {}, {}};
    if (mode == RateMode::deterministic_rate) std::tie(node_rates.path_times, node_rates.path) = rate_path(sc);
    auto loc = [&](int n, const Surface& s, Eigen::Index ir, Eigen::Index iy, std::size_t k) {
        const Surface* sp = &s;
        return [&node_rates, sp, n, ir, iy, k] {
            return where(n, node_rates.at(ir, k), sp->hazard().lambda(iy), sp->times()[k]);
        };
    };
    auto probe_loc = [&](int n, std::size_t i) {
        return [&, n, i] { return where(n, probes[i].r, probes[i].lambda, probes[i].t); };
    };
    auto value = [&](int n, std::size_t i) { return main->values[static_cast<std::size_t>(n)][i]; };

    // P1: 0 <= a^(n) <= n int F
    {
        Worst w;
        if (sc.rates.affine()) {
            std::vector<std::vector<double>> bond_int(top.slice_count());
            const Eigen::Index nr = top.rates().size();
            for (std::size_t k = 0; k < top.slice_count(); ++k)
                for (Eigen::Index ir = 0; ir < nr; ++ir)
                    bond_int[k].push_back(
                        bond_annuity(sc.rates, node_rates.at(ir, k), top.times()[k], sc.horizon, q.intervals));
            for (int n = 1; n <= N; ++n) {
                const Surface& s = stack.level(n);
                for_interior(s, [&](Eigen::Index ir, Eigen::Index iy, std::size_t k) {
                    const double v = s.value(ir, iy, k);
                    const double t = tol * n;
                    w.consider(std::max(-v, v - n * bond_int[k][static_cast<std::size_t>(ir)]) - t,
                               loc(n, s, ir, iy, k));
                });
            }
        } else {
            const auto bi = integrate_bond(sc.rates, sc.horizon, probes, q.intervals);
            for (int n = 1; n <= N; ++n)
                for (std::size_t i = 0; i < probes.size(); ++i)
                    w.consider(std::max(-value(n, i), value(n, i) - n * bi[i]) - tol * n, probe_loc(n, i));
        }
        rep.results.push_back(verdict("P1", "No arbitrage: 0 <= a(n) <= n int F ds", w,
                                      sc.rates.affine() ? "nodewise" : "probewise (custom rates)"));
    }
    // P2: a^(n) >= a^(n-1)
    {
        Worst w;
        for (int n = 1; n <= N; ++n) {
            const Surface &s = stack.level(n), &p = stack.level(n - 1);
            for_interior(s, [&](Eigen::Index ir, Eigen::Index iy, std::size_t k) {
                w.consider(p.value(ir, iy, k) - s.value(ir, iy, k) - tol * n, loc(n, s, ir, iy, k));
            });
        }
        rep.results.push_back(verdict("P2", "Increasing in n", w, "nodewise"));
    }
    // P3: a_lambda <= 0
    {
        Worst w;
        for (int n = 1; n <= N; ++n) {
            const Surface& s = stack.level(n);
            for_interior(s, [&](Eigen::Index ir, Eigen::Index iy, std::size_t k) {
                w.consider(s.value(ir, iy + 1, k) - s.value(ir, iy, k) - tol * n, loc(n, s, ir, iy, k));
            });
        }
        rep.results.push_back(verdict("P3", "Decreasing in lambda", w, "nodewise, adjacent hazard nodes"));
    }
    auto compare = [&](const ValuationStack& low, const ValuationStack& high, int levels, Worst& w) {
        for (int n = 1; n <= levels; ++n) {
            const Surface &a = low.level(n), &b = high.level(n);
            for_interior(a, [&](Eigen::Index ir, Eigen::Index iy, std::size_t k) {
                w.consider(a.value(ir, iy, k) - b.value(ir, iy, k) - tol * n, loc(n, a, ir, iy, k));
            });
        }
    };
    // P4: increasing in alpha
    {
        Worst w;
        const double a1 = sc.alpha * opt.alpha_ratio;
        auto low = solve_annuity(sc.hazard, sc.rates, sc.sharpe().with_alpha(a1), L, grids, mode, sc.solver);
        compare(low, stack, L, w);
        std::ostringstream d;
        d << "alpha " << a1 << " vs " << sc.alpha << ", levels 1.." << L;
        rep.results.push_back(verdict("P4", "Increasing in alpha", w, d.str()));
    }
    // P5: n a^(alpha0) <= a^(n)
    {
        Worst w;
        auto zero = solve_annuity(sc.hazard, sc.rates, sc.sharpe().with_alpha(0.0), 1, grids, mode, sc.solver);
        const Surface& a0 = zero.level(1);
        for (int n = 1; n <= N; ++n) {
            const Surface& s = stack.level(n);
            for_interior(s, [&](Eigen::Index ir, Eigen::Index iy, std::size_t k) {
                w.consider(n * a0.value(ir, iy, k) - s.value(ir, iy, k) - tol * n, loc(n, s, ir, iy, k));
            });
            for (std::size_t i = 0; i < probes.size(); ++i)
                w.consider(n * base[i] - value(n, i) - tol * n, probe_loc(n, i));
        }
        rep.results.push_back(verdict("P5", "Lower bound: n a(alpha0) <= a(n)", w,
                                      "nodewise against the alpha = 0 solve, probewise against quadrature"));
    }
    // P6: decreasing in mu
    {
        Worst w;
        const HazardModel shifted = sc.hazard.with_drift_shift(opt.drift_shift);
        auto high = solve_annuity(shifted, sc.rates, sc.sharpe(), L, grids, mode, sc.solver);
        compare(high, stack, L, w);
        std::ostringstream d;
        d << "mu + " << opt.drift_shift << ", levels 1.." << L;
        rep.results.push_back(verdict("P6", "Decreasing in mu", w, d.str()));
    }
    // P7: increasing in sigma if convex in lambda
    {
        const std::string title = "Increasing in sigma if convex in lambda";
        std::optional<HazardModel> shifted;
        std::string why;
        try {
            shifted = sc.hazard.with_vol_shift(opt.vol_shift);
        } catch (const ConfigError& e) {
            why = e.what();
        }
        if (!shifted) {
            rep.results.push_back(not_applicable("P7", title, "shifted volatility is not an admissible model: " + why));
        } else {
            auto high = solve_annuity(*shifted, sc.rates, sc.sharpe(), L, grids, mode, sc.solver);
            // a_lambda_lambda has the sign of a_yy - a_y
            auto convexity = [&](const ValuationStack& st, std::string& at) {
                double worst = std::numeric_limits<double>::infinity();
                const double dy = grids.hazard.spacing();
                for (int n = 1; n <= L; ++n) {
                    const Surface& s = st.level(n);
                    for_interior(s, [&](Eigen::Index ir, Eigen::Index iy, std::size_t k) {
                        const double up = s.value(ir, iy + 1, k), mid = s.value(ir, iy, k), dn = s.value(ir, iy - 1, k);
                        const double c = (up - 2 * mid + dn) / (dy * dy) - (up - dn) / (2 * dy);
                        if (c < worst) {
                            worst = c;
                            at = where(n, node_rates.at(ir, k), s.hazard().lambda(iy), s.times()[k]);
                        }
                    });
                }
                return worst;
            };
            std::string at1, at2;
            const double c1 = convexity(stack, at1), c2 = convexity(high, at2);
            const double ctol = 1e-6;
            std::ostringstream d;
            d << "min (a_yy - a_y): " << c1 << " at " << at1 << " (sigma), " << c2 << " at " << at2
              << " (sigma + " << opt.vol_shift << ")";
            if (c1 < -ctol && c2 < -ctol) {
                rep.results.push_back(not_applicable("P7", title, "non-convex; " + d.str()));
            } else {
                Worst w;
                compare(stack, high, L, w);
                rep.results.push_back(verdict("P7", title, w, d.str()));
            }
        }
    }
    // P8: subadditive
    {
        Worst w;
        std::ostringstream d;
        for (auto [m, n] : {std::pair{1, 1}, {1, 2}, {2, 3}, {5, 5}}) {
            if (m + n > N) continue;
            d << "(" << m << "," << n << ") ";
            const Surface &s = stack.level(m + n), &a = stack.level(m), &b = stack.level(n);
            for_interior(s, [&](Eigen::Index ir, Eigen::Index iy, std::size_t k) {
                w.consider(s.value(ir, iy, k) - a.value(ir, iy, k) - b.value(ir, iy, k) - tol * (m + n),
                           loc(m + n, s, ir, iy, k));
            });
        }
        if (!w.any)
            rep.results.push_back(not_applicable("P8", "Subadditive", "portfolio sizes below 2"));
        else
            rep.results.push_back(verdict("P8", "Subadditive", w, "pairs " + d.str()));
    }
    // P9: (1/n) a^(n) decreasing
    {
        Worst w;
        for (int n = 1; n < N; ++n) {
            const Surface &s = stack.level(n + 1), &p = stack.level(n);
            for_interior(s, [&](Eigen::Index ir, Eigen::Index iy, std::size_t k) {
                w.consider(s.value(ir, iy, k) / (n + 1) - p.value(ir, iy, k) / n - tol, loc(n + 1, s, ir, iy, k));
            });
        }
        if (!w.any)
            rep.results.push_back(not_applicable("P9", "Decreasing value per risk", "portfolio sizes below 2"));
        else
            rep.results.push_back(verdict("P9", "Decreasing value per risk", w, "nodewise, consecutive n"));
    }
    // P10: scaling by the payment rate
    {
        SolverConfig cfg = sc.solver;
        cfg.payment_rate = opt.payment_rate;
        auto scaled_stack = solve_annuity(sc.hazard, sc.rates, sc.sharpe(), L, grids, mode, cfg);
        Worst w;
        for (int n = 1; n <= L; ++n) {
            const Surface &a = stack.level(n), &b = scaled_stack.level(n);
            for_interior(a, [&](Eigen::Index ir, Eigen::Index iy, std::size_t k) {
                const double rel = std::abs(b.value(ir, iy, k) - opt.payment_rate * a.value(ir, iy, k)) /
                                   (opt.payment_rate * n);
                w.consider(rel - 1e-12, loc(n, a, ir, iy, k));
            });
        }
        std::ostringstream d;
        d << "k = " << opt.payment_rate << ", |a_k - k a| / (k n) <= 1e-12";
        rep.results.push_back(verdict("P10", "Scaling", w, d.str()));
    }
    // sandwich: n int F beta <= a^(n) <= int F phi^(n)
    {
        Worst up, down;
        for (int n = 1; n <= N; ++n)
            for (std::size_t i = 0; i < probes.size(); ++i) {
                up.consider(value(n, i) - endow[i][static_cast<std::size_t>(n)] - tol * n, probe_loc(n, i));
                down.consider(n * beta[i] - value(n, i) - tol * n, probe_loc(n, i));
            }
        rep.results.push_back(verdict("upper_bound", "Upper bound: a(n) <= int F phi(n) ds", up, "probewise"));
        rep.results.push_back(verdict("lower_bound", "Lower bound: n int F beta ds <= a(n)", down, "probewise"));
    }
    // per-annuity trend over portfolio sizes
    {
        const std::string title = "Per-annuity value decreases toward int F beta";
        std::vector<int> ns;
        for (int n : sc.sizes)
            if (n >= 1) ns.push_back(n);
        std::sort(ns.begin(), ns.end());
        ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
        if (ns.size() < 2) {
            rep.results.push_back(not_applicable("size_trend", title, "needs at least two portfolio sizes"));
        } else if (sc.alpha == 0) {
            rep.results.push_back(not_applicable("size_trend", title, "alpha = 0: a(n) = n a(alpha0) for every n"));
        } else {
            Worst w;
            const int na = std::find(ns.begin(), ns.end(), 5) != ns.end() && ns.back() != 5 ? 5 : ns.front();
            const int nb = ns.back();
            double worst_ratio = 0;
            for (std::size_t i = 0; i < probes.size(); ++i) {
                for (std::size_t j = 0; j + 1 < ns.size(); ++j)
                    w.consider(value(ns[j + 1], i) / ns[j + 1] - value(ns[j], i) / ns[j], probe_loc(ns[j + 1], i));
                const double ga = value(na, i) / na - beta[i], gb = value(nb, i) / nb - beta[i];
                const double ratio = gb / ga;
                worst_ratio = std::max(worst_ratio, ratio);
                w.consider(ratio - 0.6, probe_loc(nb, i));
            }
            std::ostringstream d;
            d << "strictly decreasing over sizes; gap(n=" << nb << ") / gap(n=" << na << ") <= 0.6, worst ratio "
              << worst_ratio;
            PropertyResult r = verdict("size_trend", title, w, d.str());
            // strict decrease: zero excess is a failure
            if (w.any && w.value >= 0) r.status = PropertyStatus::fail;
            rep.results.push_back(r);
        }
    }

    if (data) {
        data->main = std::move(main);
        data->base = base;
        data->beta_integral = beta;
        data->endowment = endow;
    }
    return rep;
}

}  // namespace annuity
