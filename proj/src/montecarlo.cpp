#include "annuity/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "annuity/errors.hpp"

namespace annuity {

void PathConfig::validate() const {
    if (paths < 1) throw ConfigError("path count must be at least 1");
    if (steps_per_year < 1) throw ConfigError("steps per year must be at least 1");
    if (workers < 1) throw ConfigError("worker count must be at least 1");
}

std::uint64_t path_seed(std::uint64_t base, std::uint64_t index) {
    // splitmix64 finalizer over (base, index)
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace {

double pairwise_sum(const double* x, std::size_t n) {
    if (n <= 16) {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) s += x[i];
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

double pairwise_sum(const std::vector<double>& x) { return pairwise_sum(x.data(), x.size()); }

// Coefficient set for one measure.
struct Dynamics {
    const HazardModel* hazard = nullptr;
    const ShortRateModel* rates = nullptr;  // null: hazard only
    bool rate_q = false;                    // b^Q instead of b
    double hazard_shift = 0;                // added to mu, in units of sigma
    const ControlFn* controls = nullptr;    // bar measure
    double alpha = 0;

    bool cir() const { return rates && rates->kind() == RateKind::cir; }
};

struct NodeState {
    double t, r, lambda, gamma;
};

void check_controls(double r, double lambda, double t, double delta, double gamma, double alpha) {
    const double load = delta * delta + lambda * gamma * gamma;
    if (!(load <= alpha * alpha * (1 + 1e-9) + 1e-15) || !(gamma >= -1 - 1e-12)) {
        std::ostringstream msg;
        msg << "inadmissible controls at (r=" << r << ", lambda=" << lambda << ", t=" << t << "): delta=" << delta
            << " gamma=" << gamma << ", delta^2 + lambda gamma^2 = " << load << " vs alpha^2 = " << alpha * alpha;
        throw ContractError(msg.str());
    }
}

// Euler-Maruyama in (r, y = ln(lambda - floor)); visit(k, node) at every grid node k = 0..steps.
template <typename Visit>
void walk(const Dynamics& dyn, std::mt19937_64& rng, double sign, double t0, double t1, long steps, double r0,
          double lambda0, Visit&& visit) {
    std::normal_distribution<double> normal;
    const HazardModel& hz = *dyn.hazard;
    const double floor = hz.floor();
    const bool hazard_noise = !hz.deterministic();
    const bool rate_noise = dyn.rates && !dyn.rates->deterministic();
    const bool cir = dyn.cir();
    const double dt = (t1 - t0) / double(steps);
    const double sdt = std::sqrt(dt);
    double y = std::log(lambda0 - floor);
    double r = r0;
    for (long k = 0;; ++k) {
        const double t = k == steps ? t1 : t0 + double(k) * dt;
        const double lambda = floor + std::exp(y);
        const double rr = cir ? std::max(r, 0.0) : r;
        double delta = 0, gamma = 0;
        if (dyn.controls) {
            (*dyn.controls)(rr, lambda, t, delta, gamma);
            check_controls(rr, lambda, t, delta, gamma, dyn.alpha);
        }
        visit(k, NodeState{t, rr, lambda, gamma});
        if (k == steps) break;

        if (dyn.rates) {
            const double b = dyn.rate_q ? drift_under_q(*dyn.rates, rr, t) : dyn.rates->drift(rr, t);
            double dr = b * dt;
            if (rate_noise) dr += dyn.rates->vol(rr, t) * sdt * sign * normal(rng);
            r += dr;
        }
        const double sig = hz.vol(t);
        double dy = (hz.drift(lambda, t) - 0.5 * sig * sig + (dyn.hazard_shift + delta) * sig) * dt;
        if (hazard_noise) dy += sig * sdt * sign * normal(rng);
        y += dy;
    }
}

long steps_for(double span, int steps_per_year) {
    return std::max<long>(1, static_cast<long>(std::ceil(span * steps_per_year - 1e-9)));
}

// Runs `value(rng, sign)` per path (or antithetic pair) across workers; returns the per-unit
// values in path order so the reduction never depends on scheduling.
template <typename Value>
std::vector<double> run_units(const PathConfig& cfg, Value&& value, long& paths_used) {
    const long units = cfg.antithetic ? (cfg.paths + 1) / 2 : cfg.paths;
    paths_used = cfg.antithetic ? 2 * units : units;
    std::vector<double> out(static_cast<std::size_t>(units));
    auto work = [&](long begin, long end) {
        for (long i = begin; i < end; ++i) {
            const std::uint64_t s = path_seed(cfg.seed, static_cast<std::uint64_t>(i));
            std::mt19937_64 rng(s);
            double v = value(rng, 1.0);
            if (cfg.antithetic) {
                std::mt19937_64 twin(s);
                v = 0.5 * (v + value(twin, -1.0));
            }
            out[static_cast<std::size_t>(i)] = v;
        }
    };
    const long workers = std::min<long>(cfg.workers, units);
    if (workers <= 1) {
        work(0, units);
        return out;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    for (long w = 0; w < workers; ++w) {
        const long b = units * w / workers, e = units * (w + 1) / workers;
        pool.emplace_back([&, w, b, e] {
            try {
                work(b, e);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& err : errors)
        if (err) std::rethrow_exception(err);
    return out;
}

McEstimate summarize(const std::vector<double>& values, long paths, const PathConfig& cfg, std::string label) {
    SampleStats st = sample_stats(values);
    McEstimate e;
    e.mean = st.mean;
    e.se = st.n > 1 ? std::sqrt(st.variance / double(st.n)) : 0.0;
    e.paths = paths;
    e.seed = cfg.seed;
    e.label = std::move(label);
    return e;
}

McEstimate exact(double v, const PathConfig& cfg, std::string label) {
    McEstimate e;
    e.mean = v;
    e.paths = cfg.paths;
    e.seed = cfg.seed;
    e.label = std::move(label);
    return e;
}

void check_start(const HazardModel& hazard, double lambda) {
    if (!(lambda > hazard.floor()))
        throw DomainError("initial hazard " + std::to_string(lambda) + " is not above the floor " +
                          std::to_string(hazard.floor()));
}

void check_span(double t, double s) {
    if (!(t <= s)) throw DomainError("time interval has t > s");
}

// Integral of exp(-int rho) over the path by the trapezoid rule, with rho accumulated the same way.
template <typename Rho>
double discounted_annuity(const Dynamics& dyn, std::mt19937_64& rng, double sign, double t, double horizon,
                          long steps, double r, double lambda, Rho&& rho) {
    const double dt = (horizon - t) / double(steps);
    double integral = 0, acc = 0, last_rho = 0, last_disc = 1;
    walk(dyn, rng, sign, t, horizon, steps, r, lambda, [&](long k, const NodeState& n) {
        const double here = rho(n);
        if (k == 0) {
            last_rho = here;
            return;
        }
        integral += 0.5 * dt * (last_rho + here);
        const double disc = std::exp(-integral);
        acc += 0.5 * dt * (last_disc + disc);
        last_rho = here;
        last_disc = disc;
    });
    return acc;
}

}  // namespace

SampleStats sample_stats(const std::vector<double>& x) {
    SampleStats s;
    s.n = static_cast<long>(x.size());
    if (x.empty()) return s;
    const double n = double(x.size());
    s.mean = pairwise_sum(x) / n;
    std::vector<double> d2(x.size()), d3(x.size()), d4(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - s.mean;
        d2[i] = d * d;
        d3[i] = d2[i] * d;
        d4[i] = d2[i] * d2[i];
    }
    const double ss = pairwise_sum(d2);
    s.variance = x.size() > 1 ? ss / (n - 1) : 0.0;
    s.m3 = pairwise_sum(d3) / n;
    s.m4 = pairwise_sum(d4) / n;
    return s;
}

void write_estimates_csv(std::ostream& out, const std::vector<McEstimate>& estimates, bool header) {
    if (header) out << "label,mean,se,paths,seed\n";
    for (const auto& e : estimates)
        out << e.label << ',' << format_number(e.mean) << ',' << format_number(e.se) << ',' << e.paths << ','
            << e.seed << '\n';
}

PathBundle simulate_paths(const HazardModel& hazard, const ShortRateModel& rates, const MeasureSpec& measure,
                          const PathConfig& cfg, double t0, double t1, double r0, double lambda0) {
    cfg.validate();
    check_start(hazard, lambda0);
    if (!(t0 < t1)) throw DomainError("simulate_paths needs t0 < t1");
    Dynamics dyn;
    dyn.hazard = &hazard;
    dyn.alpha = measure.alpha;
    switch (measure.tag) {
        case MeasureTag::physical: dyn.rates = &rates; break;
        case MeasureTag::q: dyn.rates = &rates; dyn.rate_q = true; break;
        case MeasureTag::hat: dyn.rates = &rates; dyn.rate_q = true; dyn.hazard_shift = -measure.alpha; break;
        case MeasureTag::tilde: dyn.hazard_shift = -measure.alpha; break;
        case MeasureTag::bar:
            if (!measure.controls) throw ContractError("bar measure needs control fields");
            dyn.rates = &rates;
            dyn.rate_q = true;
            dyn.controls = &measure.controls;
            break;
    }
    const long steps = steps_for(t1 - t0, cfg.steps_per_year);
    PathBundle b;
    b.times.resize(static_cast<std::size_t>(steps + 1));
    for (long k = 0; k <= steps; ++k) b.times[static_cast<std::size_t>(k)] = k == steps ? t1 : t0 + k * (t1 - t0) / steps;
    const std::size_t n = static_cast<std::size_t>(cfg.antithetic ? 2 * ((cfg.paths + 1) / 2) : cfg.paths);
    b.rates.assign(n, std::vector<double>(steps + 1));
    b.hazards.assign(n, std::vector<double>(steps + 1));
    if (dyn.controls) b.gammas.assign(n, std::vector<double>(steps + 1));
    for (std::size_t p = 0; p < n; ++p) {
        const std::size_t unit = cfg.antithetic ? p / 2 : p;
        const double sign = cfg.antithetic && p % 2 ? -1.0 : 1.0;
        std::mt19937_64 rng(path_seed(cfg.seed, unit));
        walk(dyn, rng, sign, t0, t1, steps, r0, lambda0, [&](long k, const NodeState& s) {
            const auto i = static_cast<std::size_t>(k);
            b.rates[p][i] = dyn.rates ? s.r : r0;
            b.hazards[p][i] = s.lambda;
            if (dyn.controls) b.gammas[p][i] = s.gamma;
        });
    }
    return b;
}

McEstimate mc_survival(const HazardModel& hazard, double adjustment, double lambda, double t, double s,
                       const PathConfig& cfg) {
    cfg.validate();
    check_start(hazard, lambda);
    check_span(t, s);
    const std::string label = adjustment == 0 ? "survival" : "survival_tilde";
    if (s == t) return exact(1.0, cfg, label);
    Dynamics dyn;
    dyn.hazard = &hazard;
    dyn.hazard_shift = -adjustment;
    const long steps = steps_for(s - t, cfg.steps_per_year);
    const double dt = (s - t) / double(steps);
    long used = 0;
    auto values = run_units(
        cfg,
        [&](std::mt19937_64& rng, double sign) {
            double integral = 0, last = 0;
            walk(dyn, rng, sign, t, s, steps, 0.0, lambda, [&](long k, const NodeState& n) {
                if (k > 0) integral += 0.5 * dt * (last + n.lambda);
                last = n.lambda;
            });
            return std::exp(-integral);
        },
        used);
    return summarize(values, used, cfg, label);
}

McEstimate mc_annuity_alpha0(const HazardModel& hazard, const ShortRateModel& rates, double r, double lambda,
                             double t, double horizon, const PathConfig& cfg, int intervals) {
    cfg.validate();
    check_start(hazard, lambda);
    check_span(t, horizon);
    if (intervals < 2) throw ConfigError("Simpson rule needs at least 2 intervals");
    if (intervals % 2) ++intervals;
    if (t == horizon) return exact(0.0, cfg, "annuity_alpha0");
    const double span = horizon - t;
    // Euler grid refines the Simpson grid so every node is a path node
    const long per = std::max<long>(1, static_cast<long>(std::ceil(span * cfg.steps_per_year / intervals - 1e-9)));
    const long steps = per * intervals;
    const double dt = span / double(steps);
    const double hs = span / intervals;
    std::vector<double> weight(static_cast<std::size_t>(intervals + 1));
    for (int i = 0; i <= intervals; ++i) {
        const double w = (i == 0 || i == intervals) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        const double s = i == intervals ? horizon : t + i * hs;
        weight[static_cast<std::size_t>(i)] = w * hs / 3.0 * bond_price(rates, r, t, s);
    }
    Dynamics dyn;
    dyn.hazard = &hazard;
    long used = 0;
    auto values = run_units(
        cfg,
        [&](std::mt19937_64& rng, double sign) {
            double integral = 0, last = 0, acc = 0;
            walk(dyn, rng, sign, t, horizon, steps, 0.0, lambda, [&](long k, const NodeState& n) {
                if (k > 0) integral += 0.5 * dt * (last + n.lambda);
                last = n.lambda;
                if (k % per == 0) acc += weight[static_cast<std::size_t>(k / per)] * std::exp(-integral);
            });
            return acc;
        },
        used);
    return summarize(values, used, cfg, "annuity_alpha0");
}

McEstimate mc_limit(const HazardModel& hazard, const ShortRateModel& rates, double alpha, double r, double lambda,
                    double t, double horizon, const PathConfig& cfg) {
    cfg.validate();
    check_start(hazard, lambda);
    check_span(t, horizon);
    if (t == horizon) return exact(0.0, cfg, "limit");
    Dynamics dyn;
    dyn.hazard = &hazard;
    dyn.rates = &rates;
    dyn.rate_q = true;
    dyn.hazard_shift = -alpha;
    const long steps = steps_for(horizon - t, cfg.steps_per_year);
    long used = 0;
    auto values = run_units(
        cfg,
        [&](std::mt19937_64& rng, double sign) {
            return discounted_annuity(dyn, rng, sign, t, horizon, steps, r, lambda,
                                      [](const NodeState& n) { return n.r + n.lambda; });
        },
        used);
    return summarize(values, used, cfg, "limit");
}

McEstimate mc_good_deal(const HazardModel& hazard, const ShortRateModel& rates, double alpha,
                        const ControlFn& controls, double r, double lambda, double t, double horizon,
                        const PathConfig& cfg) {
    cfg.validate();
    check_start(hazard, lambda);
    check_span(t, horizon);
    if (!controls) throw ContractError("good-deal simulation needs control fields");
    if (t == horizon) return exact(0.0, cfg, "good_deal");
    Dynamics dyn;
    dyn.hazard = &hazard;
    dyn.rates = &rates;
    dyn.rate_q = true;
    dyn.controls = &controls;
    dyn.alpha = alpha;
    const long steps = steps_for(horizon - t, cfg.steps_per_year);
    long used = 0;
    auto values = run_units(
        cfg,
        [&](std::mt19937_64& rng, double sign) {
            return discounted_annuity(dyn, rng, sign, t, horizon, steps, r, lambda,
                                      [](const NodeState& n) { return n.r + n.lambda * (1 + n.gamma); });
        },
        used);
    return summarize(values, used, cfg, "good_deal");
}

HedgeCheckReport simulate_hedged_portfolio(const HazardModel& hazard, const ShortRateModel& rates, double alpha,
                                           const Surface& a_surface, double r, double lambda, double t, double h,
                                           const PathConfig& cfg) {
    cfg.validate();
    check_start(hazard, lambda);
    if (!(h > 0)) throw ConfigError("hedge interval must be positive");
    HedgeCheckReport rep;
    rep.seed = cfg.seed;
    rep.paths = cfg.paths;
    const double T = a_surface.times().back();
    if (t > T) throw DomainError("hedge start lies beyond the surface horizon");
    if (t >= T) return rep;  // nothing left to pay
    h = std::min(h, T - t);

    const LocalDerivatives d = local_derivatives(a_surface, r, lambda, t);
    const bool rate_axis = a_surface.rates().axis() == RateAxis::grid;
    const double F0 = bond_price(rates, r, t, T);
    double pi = 0;
    if (rate_axis) {
        const double Fr = bond_delta(rates, r, t, T);
        if (Fr == 0) throw DomainError("degenerate hedge: F_r = 0 at the lookup point");
        pi = d.d_r / Fr;
    }
    rep.hedge_ratio = pi;
    const double a = d.value;
    const double sig = hazard.vol(t);
    rep.predicted_variance = sig * sig * d.d_y * d.d_y + lambda * a * a;
    rep.predicted_drift = alpha * std::sqrt(rep.predicted_variance);  // r Pi with Pi = 0

    const bool rate_noise = !rates.deterministic();
    const bool hazard_noise = !hazard.deterministic();
    const bool cir = rates.kind() == RateKind::cir;
    const double sh = std::sqrt(h);
    const double cash = a - pi * F0;
    const long n = cfg.paths;
    std::vector<double> dpi(static_cast<std::size_t>(n));
    std::vector<char> died(static_cast<std::size_t>(n));
    // antithetic pairing is not used here: the statistics below need independent draws
    for (long p = 0; p < n; ++p) {
        std::mt19937_64 rng(path_seed(cfg.seed, static_cast<std::uint64_t>(p)));
        std::normal_distribution<double> normal;
        std::uniform_real_distribution<double> unif;
        const double rr = cir ? std::max(r, 0.0) : r;
        double r1 = r + rates.drift(rr, t) * h;
        if (rate_noise) r1 += rates.vol(rr, t) * sh * normal(rng);
        double y = std::log(lambda - hazard.floor()) + (hazard.drift(lambda, t) - 0.5 * sig * sig) * h;
        if (hazard_noise) y += sig * sh * normal(rng);
        const bool death = unif(rng) < lambda * h;
        const double dr = r1 - r;
        const double dl = hazard.floor() + std::exp(y) - lambda;
        const double dF = bond_price(rates, cir ? std::max(r1, 0.0) : r1, t + h, T) - F0;
        const double dV = cash * r * h + pi * dF - h;
        double v;
        if (death) {
            v = dV + a;
        } else {
            const double da = d.d_t * h + d.d_r * dr + d.d_lambda * dl + 0.5 * d.d_rr * dr * dr +
                              0.5 * d.d_lambdalambda * dl * dl + d.d_rlambda * dr * dl;
            v = dV - da;
        }
        dpi[static_cast<std::size_t>(p)] = v;
        died[static_cast<std::size_t>(p)] = death;
    }
    const SampleStats st = sample_stats(dpi);
    const double nn = double(st.n);
    long deaths = 0;
    for (char c : died) deaths += c;
    rep.deaths = double(deaths) / nn;
    rep.drift = st.mean / h;
    rep.drift_se = std::sqrt(st.variance / nn) / h;
    rep.variance = st.variance / h;
    const double s2 = st.variance;
    rep.variance_se = std::sqrt(std::max(0.0, st.m4 - s2 * s2) / nn) / h;
    // Without deaths in the sample the variance is rounding noise; the ratio is then undefined.
    if (s2 > 1e-12 * rep.predicted_variance * h) {
        const double s = std::sqrt(s2);
        const double sr = st.mean / s;  // per-step Sharpe ratio
        const double skew = st.m3 / (s2 * s), kurt = st.m4 / (s2 * s2);
        rep.sharpe = sr / sh;
        const double v = std::max(0.0, 1 - sr * skew + 0.25 * sr * sr * (kurt - 1));
        rep.sharpe_se = std::sqrt(v / nn) / sh;
    } else {
        rep.sharpe = rep.sharpe_se = std::numeric_limits<double>::quiet_NaN();
    }
    return rep;
}

}  // namespace annuity
