#pragma once

#include <Eigen/Core>

#include <cmath>
#include <string>

#include "annuity/errors.hpp"

namespace annuity {

/// Uniform grid in y = ln(lambda - floor). The proportional hazard coefficients become
/// constant-coefficient in y and the floor maps to y -> -inf.
template <typename Scalar = double>
class BasicHazardGrid {
public:
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

    /// Placeholder axis for quantities that do not depend on the hazard (bond prices).
    BasicHazardGrid() : y_(Array::Zero(1)), lambda_(Array::Zero(1)) {}
    static BasicHazardGrid none() { return BasicHazardGrid(); }

    static BasicHazardGrid uniform(Scalar floor, Scalar y_min, Scalar y_max, Eigen::Index count) {
        if (count < 3) throw ConfigError("hazard grid needs at least 3 nodes");
        if (!(y_min < y_max)) throw ConfigError("hazard grid needs y_min < y_max");
        if (!(floor >= 0)) throw ConfigError("hazard floor must be non-negative");
        BasicHazardGrid g;
        g.present_ = true;
        g.floor_ = floor;
        g.y_ = Array::LinSpaced(count, y_min, y_max);
        g.lambda_ = g.y_.exp() + floor;
        if (!(g.lambda_(0) > floor)) throw ConfigError("hazard grid lower edge collapses onto the floor");
        return g;
    }

    /// y in [ln(lower * ref), ln(upper * ref)] where ref is a typical lambda - floor.
    static BasicHazardGrid around(Scalar floor, Scalar reference_excess, Eigen::Index count,
                                  Scalar lower_factor = Scalar(1e-5), Scalar upper_factor = Scalar(50)) {
        if (!(reference_excess > 0)) throw ConfigError("hazard reference excess must be positive");
        if (!(lower_factor > 0 && lower_factor < upper_factor))
            throw ConfigError("hazard grid factors must satisfy 0 < lower < upper");
        using std::log;
        return uniform(floor, log(lower_factor * reference_excess), log(upper_factor * reference_excess), count);
    }

    bool present() const noexcept { return present_; }
    Eigen::Index size() const noexcept { return y_.size(); }
    Scalar spacing() const noexcept { return present_ ? (y_(size() - 1) - y_(0)) / Scalar(size() - 1) : Scalar(0); }
    Scalar floor() const noexcept { return floor_; }
    Scalar y_min() const noexcept { return y_(0); }
    Scalar y_max() const noexcept { return y_(size() - 1); }
    Scalar y(Eigen::Index i) const { return y_(i); }
    Scalar lambda(Eigen::Index i) const { return lambda_(i); }
    const Array& ys() const noexcept { return y_; }
    const Array& lambdas() const noexcept { return lambda_; }

    Scalar to_y(Scalar lambda) const {
        if (!(lambda > floor_)) throw DomainError("hazard rate must lie above the floor");
        using std::log;
        return log(lambda - floor_);
    }

private:
    bool present_ = false;
    Scalar floor_ = 0;
    Array y_;
    Array lambda_;
};

enum class RateAxis {
    grid,   // uniform nodes in r, two-factor solve
    fixed,  // a single deterministic rate trajectory starting at r0
    none    // quantity does not depend on r (separable hazard-only surfaces)
};

template <typename Scalar = double>
class BasicRateGrid {
public:
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

    BasicRateGrid() : axis_(RateAxis::none), r_(Array::Zero(1)) {}

    static BasicRateGrid uniform(Scalar r_min, Scalar r_max, Eigen::Index count) {
        if (count < 3) throw ConfigError("rate grid needs at least 3 nodes");
        if (!(r_min > 0)) throw ConfigError("rate grid needs r_min > 0");
        if (!(r_min < r_max)) throw ConfigError("rate grid needs r_min < r_max");
        BasicRateGrid g;
        g.axis_ = RateAxis::grid;
        g.r_ = Array::LinSpaced(count, r_min, r_max);
        return g;
    }

    static BasicRateGrid fixed(Scalar r0) {
        BasicRateGrid g;
        g.axis_ = RateAxis::fixed;
        g.r_ = Array::Constant(1, r0);
        return g;
    }

    static BasicRateGrid none() { return BasicRateGrid(); }

    RateAxis axis() const noexcept { return axis_; }
    Eigen::Index size() const noexcept { return r_.size(); }
    Scalar spacing() const noexcept {
        return axis_ == RateAxis::grid ? (r_(size() - 1) - r_(0)) / Scalar(size() - 1) : Scalar(0);
    }
    Scalar r(Eigen::Index i) const { return r_(i); }
    const Array& nodes() const noexcept { return r_; }

private:
    RateAxis axis_;
    Array r_;
};

template <typename Scalar = double>
class BasicTimeMesh {
public:
    BasicTimeMesh() = default;
    BasicTimeMesh(Scalar horizon, long steps) : horizon_(horizon), steps_(steps) {
        if (steps < 1) throw ConfigError("time mesh needs at least one step");
        if (!(horizon > 0)) throw ConfigError("time horizon must be positive");
    }

    Scalar horizon() const noexcept { return horizon_; }
    long steps() const noexcept { return steps_; }
    Scalar dt() const noexcept { return horizon_ / Scalar(steps_); }
    Scalar time(long j) const noexcept { return j == steps_ ? horizon_ : Scalar(j) * dt(); }

    /// Mesh over [0, maturity] with (at least) the same step density.
    BasicTimeMesh truncated(Scalar maturity) const {
        using std::ceil;
        long n = static_cast<long>(ceil(maturity / dt() - Scalar(1e-9)));
        return BasicTimeMesh(maturity, n < 1 ? 1 : n);
    }

private:
    Scalar horizon_ = 1;
    long steps_ = 1;
};

using HazardGrid = BasicHazardGrid<double>;
using RateGrid = BasicRateGrid<double>;
using TimeMesh = BasicTimeMesh<double>;

}  // namespace annuity
