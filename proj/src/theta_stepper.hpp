#pragma once

// Internal: one backward time step of
//   u_t + A_r u + A_y u - k u + f(u) = 0
// with a theta-weighted Douglas splitting (implicit sweeps in r, then y) and Picard iteration on
// the forcing f. In 1-D the splitting reduces to the plain theta scheme.

#include <Eigen/Core>

#include <cmath>
#include <utility>

#include "annuity/errors.hpp"
#include "annuity/pde.hpp"
#include "annuity/tridiagonal.hpp"

namespace annuity::detail {

using Eigen::ArrayXd;
using Eigen::ArrayXXd;
using Eigen::Index;

/// Three-point stencil of conv * u_x + diff * u_xx at each node of one axis.
struct AxisStencil {
    ArrayXd lower, centre, upper;
    bool active = false;
};

/// Central differences where the cell Peclet number allows a monotone stencil, first-order upwind
/// otherwise.
inline AxisStencil build_stencil(const ArrayXd& conv, const ArrayXd& diff, double h) {
    AxisStencil s;
    const Index n = conv.size();
    s.lower.resize(n);
    s.centre.resize(n);
    s.upper.resize(n);
    s.active = true;
    const double h2 = h * h;
    for (Index i = 0; i < n; ++i) {
        const double b = conv(i), d = diff(i);
        if (std::abs(b) * h <= 2.0 * d) {
            s.lower(i) = d / h2 - b / (2 * h);
            s.upper(i) = d / h2 + b / (2 * h);
            s.centre(i) = -2 * d / h2;
        } else if (b > 0) {
            s.lower(i) = d / h2;
            s.upper(i) = d / h2 + b / h;
            s.centre(i) = -2 * d / h2 - b / h;
        } else {
            s.lower(i) = d / h2 - b / h;
            s.upper(i) = d / h2;
            s.centre(i) = -2 * d / h2 + b / h;
        }
    }
    return s;
}

/// Linear operator data at one time level.
struct LevelCoefficients {
    double t = 0;
    AxisStencil rate;      // inactive when the rate axis has no dynamics
    AxisStencil hazard;    // inactive when the hazard axis is absent or frozen
    ArrayXd rate_kill;     // r_i(t) (zero when rates do not discount)
    ArrayXd hazard_kill;   // lambda_j
};

/// Boundary closure u_edge = c1 u_next + c2 u_nextnext.
inline std::pair<double, double> closure(BoundaryStyle style) {
    return style == BoundaryStyle::linear ? std::pair{2.0, -1.0} : std::pair{1.0, 0.0};
}

/// Overwrite the edge nodes of a line from its interior.
template <typename Line>
inline void close_line(Line&& u, BoundaryStyle lo, BoundaryStyle hi) {
    const Index n = u.size();
    if (n < 3) return;
    if (n == 3) {
        u(0) = u(1);
        u(2) = u(1);
        return;
    }
    auto [a1, a2] = closure(lo);
    auto [b1, b2] = closure(hi);
    u(0) = a1 * u(1) + a2 * u(2);
    u(n - 1) = b1 * u(n - 2) + b2 * u(n - 3);
}

/// Central-difference derivative along y (one-sided at the edges).
inline void hazard_gradient(const ArrayXXd& u, double dy, ArrayXXd& grad) {
    const Index ny = u.cols();
    grad.resize(u.rows(), ny);
    if (ny < 2) {
        grad.setZero();
        return;
    }
    for (Index j = 1; j + 1 < ny; ++j) grad.col(j) = (u.col(j + 1) - u.col(j - 1)) / (2 * dy);
    grad.col(0) = (u.col(1) - u.col(0)) / dy;
    grad.col(ny - 1) = (u.col(ny - 1) - u.col(ny - 2)) / dy;
}

/// Smoothed square root sqrt(x + eps^2) - eps, bounded derivative at the origin.
inline double smooth_sqrt(double x, double eps) {
    return std::sqrt(std::max(x, 0.0) + eps * eps) - eps;
}

struct StepOutcome {
    int iterations = 0;
    double last_change = 0;
};

class ThetaStepper {
public:
    ThetaStepper(Index nr, Index ny, double dr, double dy, const SolverConfig& cfg)
        : nr_(nr), ny_(ny), dr_(dr), dy_(dy), cfg_(cfg) {
        lower_.resize(std::max(nr, ny));
        diag_.resize(lower_.size());
        upper_.resize(lower_.size());
        rhs_.resize(lower_.size());
        sol_.resize(lower_.size());
        scratch_.resize(lower_.size());
    }

    /// Explicit operator (A_r + A_y - k) u, with `kill_scale` multiplying the hazard part of k.
    void apply(const LevelCoefficients& c, double kill_scale, const ArrayXXd& u, ArrayXXd& ar,
               ArrayXXd& ay) const {
        ar.setZero(nr_, ny_);
        ay.resize(nr_, ny_);
        if (c.rate.active && nr_ >= 3) {
            for (Index i = 1; i + 1 < nr_; ++i)
                ar.row(i) = c.rate.lower(i) * u.row(i - 1) + c.rate.centre(i) * u.row(i) +
                            c.rate.upper(i) * u.row(i + 1);
        }
        for (Index j = 0; j < ny_; ++j)
            ay.col(j) = -(c.rate_kill + kill_scale * c.hazard_kill(j)) * u.col(j);
        if (c.hazard.active && ny_ >= 3) {
            for (Index j = 1; j + 1 < ny_; ++j)
                ay.col(j) += c.hazard.lower(j) * u.col(j - 1) + c.hazard.centre(j) * u.col(j) +
                             c.hazard.upper(j) * u.col(j + 1);
        }
    }

    /// One step from `later` (time c_late.t) back to `out` (time c_early.t).
    /// `forcing(u, f)` fills f with source + nonlinear terms evaluated at the early time.
    template <typename Forcing>
    StepOutcome step(const ArrayXXd& later, const ArrayXXd& f_later, const LevelCoefficients& c_late,
                     const LevelCoefficients& c_early, double kill_scale, bool linear, double tol_scale,
                     Forcing&& forcing, ArrayXXd& out, int level, long time_index) {
        const double dt = c_late.t - c_early.t;
        const double th = cfg_.theta;
        apply(c_late, kill_scale, later, ar_, ay_);
        base_ = later + dt * (ar_ + ay_ + (1 - th) * f_later);
        // Explicit parts subtracted in the correction sweeps.
        ar_ *= th * dt;
        ay_ *= th * dt;

        out = later;
        StepOutcome res;
        const int max_iter = linear ? 1 : cfg_.max_picard;
        for (int it = 0; it < max_iter; ++it) {
            forcing(out, f_early_);
            y_ = base_ + th * dt * f_early_;
            sweep_rate(c_early, th * dt);
            sweep_hazard(c_early, th * dt, kill_scale);
            const double change = (y_ - out).abs().maxCoeff();
            out.swap(y_);
            res.iterations = it + 1;
            res.last_change = change;
            if (!std::isfinite(change))
                throw SolverError("non-finite values in time step", level, time_index, change);
            if (linear || change <= cfg_.picard_tol * tol_scale) return res;
        }
        throw SolverError("Picard iteration did not converge", level, time_index, res.last_change);
    }

private:
    // y_ <- (I - w A_r)^{-1} (y_ - ar_)
    void sweep_rate(const LevelCoefficients& c, double w) {
        if (!(c.rate.active && nr_ >= 3)) return;
        y_ -= ar_;
        for (Index j = 0; j < ny_; ++j) {
            auto col = y_.col(j);
            solve_line(c.rate, w, nullptr, 0.0, col, cfg_.rate_lower, cfg_.rate_upper);
        }
    }

    // y_ <- (I - w (A_y - k))^{-1} (y_ - ay_)
    void sweep_hazard(const LevelCoefficients& c, double w, double kill_scale) {
        y_ -= ay_;
        if (!(c.hazard.active && ny_ >= 3)) {
            for (Index j = 0; j < ny_; ++j)
                y_.col(j) /= 1.0 + w * (c.rate_kill + kill_scale * c.hazard_kill(j));
            return;
        }
        kill_line_.resize(ny_);
        for (Index i = 0; i < nr_; ++i) {
            kill_line_ = c.rate_kill(i) + kill_scale * c.hazard_kill;
            auto row = y_.row(i);
            solve_line(c.hazard, w, &kill_line_, 1.0, row, cfg_.hazard_lower, cfg_.hazard_upper);
        }
        if (c.rate.active && nr_ >= 3)
            for (Index j = 0; j < ny_; ++j) close_line(y_.col(j), cfg_.rate_lower, cfg_.rate_upper);
    }

    template <typename Line>
    void solve_line(const AxisStencil& s, double w, const ArrayXd* kill, double kill_on, Line&& u,
                    BoundaryStyle lo, BoundaryStyle hi) {
        const Index n = u.size();
        const Index m = n - 2;  // interior unknowns 1..n-2
        for (Index k = 0; k < m; ++k) {
            const Index i = k + 1;
            lower_(k) = -w * s.lower(i);
            upper_(k) = -w * s.upper(i);
            diag_(k) = 1.0 - w * s.centre(i) + (kill ? kill_on * w * (*kill)(i) : 0.0);
            rhs_(k) = u(i);
        }
        if (m == 1) {
            diag_(0) += lower_(0) + upper_(0);
        } else {
            auto [a1, a2] = closure(lo);
            auto [b1, b2] = closure(hi);
            diag_(0) += a1 * lower_(0);
            upper_(0) += a2 * lower_(0);
            diag_(m - 1) += b1 * upper_(m - 1);
            lower_(m - 1) += b2 * upper_(m - 1);
        }
        auto lo_seg = lower_.head(m);
        auto di_seg = diag_.head(m);
        auto up_seg = upper_.head(m);
        auto rh_seg = rhs_.head(m);
        auto so_seg = sol_.head(m);
        auto sc_seg = scratch_.head(m);
        solve_tridiagonal(lo_seg, di_seg, up_seg, rh_seg, so_seg, sc_seg);
        for (Index k = 0; k < m; ++k) u(k + 1) = sol_(k);
        close_line(u, lo, hi);
    }

    Index nr_, ny_;
    double dr_, dy_;
    SolverConfig cfg_;
    ArrayXXd ar_, ay_, base_, y_, f_early_;
    ArrayXd lower_, diag_, upper_, rhs_, sol_, scratch_, kill_line_;
};

}  // namespace annuity::detail
