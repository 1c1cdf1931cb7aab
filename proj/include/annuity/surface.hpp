#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "annuity/errors.hpp"
#include "annuity/grid.hpp"

namespace annuity {

/// Which quantity a surface holds. Used to route residual checks and to label CSV output.
enum class SurfaceLabel {
    annuity,                 // a^(n), seller or buyer
    pure_endowment,          // phi^(n)
    beta,                    // per-contract limit of phi^(n)/n
    limit,                   // p, the large-portfolio annuity value
    indifference,            // a^IP
    indifference_quadratic,  // A
    bond,                    // F
    generic
};

std::string to_string(SurfaceLabel label);
SurfaceLabel surface_label_from_string(const std::string& name);

namespace detail {

// 4-point Lagrange weights for x in node units relative to the stencil start.
template <typename Scalar>
inline void cubic_weights(Scalar s, Scalar w[4]) {
    // nodes at 0,1,2,3
    w[0] = -(s - 1) * (s - 2) * (s - 3) / Scalar(6);
    w[1] = s * (s - 2) * (s - 3) / Scalar(2);
    w[2] = -s * (s - 1) * (s - 3) / Scalar(2);
    w[3] = s * (s - 1) * (s - 2) / Scalar(6);
}

// Stencil start and offset for cubic interpolation on a uniform axis of `n` nodes.
template <typename Scalar>
inline Eigen::Index cubic_stencil(Scalar pos, Eigen::Index n, Scalar& offset) {
    Eigen::Index base = static_cast<Eigen::Index>(std::floor(pos)) - 1;
    base = std::clamp<Eigen::Index>(base, 0, n - 4);
    offset = pos - Scalar(base);
    return base;
}

}  // namespace detail

/// Discrete function of (r, lambda, t) on a tensor grid, stored as one (rate x hazard) array per
/// saved time slice, slices in ascending time. Values are immutable once a solver returns.
template <typename Scalar = double>
class BasicSurface {
public:
    using Slice = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    BasicSurface() = default;
    BasicSurface(SurfaceLabel label, int level, BasicRateGrid<Scalar> rates, BasicHazardGrid<Scalar> hazard,
                 std::vector<Scalar> times, std::vector<Slice> slices)
        : label_(label), level_(level), rates_(std::move(rates)), hazard_(std::move(hazard)),
          times_(std::move(times)), slices_(std::move(slices)) {
        if (times_.size() != slices_.size() || times_.empty())
            throw ContractError("surface needs one slice per time");
        for (const auto& s : slices_)
            if (s.rows() != rates_.size() || s.cols() != hazard_.size())
                throw ContractError("surface slice shape does not match its grids");
    }

    SurfaceLabel label() const noexcept { return label_; }
    int level() const noexcept { return level_; }
    const BasicRateGrid<Scalar>& rates() const noexcept { return rates_; }
    const BasicHazardGrid<Scalar>& hazard() const noexcept { return hazard_; }
    const std::vector<Scalar>& times() const noexcept { return times_; }
    std::size_t slice_count() const noexcept { return slices_.size(); }
    const Slice& slice(std::size_t k) const { return slices_.at(k); }
    const Slice& terminal() const { return slices_.back(); }
    Scalar value(Eigen::Index ir, Eigen::Index iy, std::size_t k) const { return slices_[k](ir, iy); }

    bool all_finite() const {
        return std::all_of(slices_.begin(), slices_.end(), [](const Slice& s) { return s.isFinite().all(); });
    }

    /// Index of the last slice with time <= t, and the linear weight toward the next slice.
    std::size_t locate_time(Scalar t, Scalar& weight) const {
        if (t <= times_.front()) {
            weight = 0;
            return 0;
        }
        if (t >= times_.back()) {
            weight = 0;
            return times_.size() - 1;
        }
        auto it = std::upper_bound(times_.begin(), times_.end(), t);
        std::size_t k = static_cast<std::size_t>(it - times_.begin()) - 1;
        weight = (t - times_[k]) / (times_[k + 1] - times_[k]);
        return k;
    }

    /// Cubic Lagrange interpolation in r and y within slice k. Coordinates outside the grid are
    /// clamped to the edge stencils (extrapolation by the edge cubic).
    Scalar interpolate_slice(std::size_t k, Scalar r, Scalar lambda) const {
        const Slice& s = slices_[k];
        Scalar wr[4] = {1, 0, 0, 0};
        Scalar wy[4] = {1, 0, 0, 0};
        Eigen::Index br = 0, by = 0;
        Eigen::Index nr = 1, ny = 1;
        if (rates_.axis() == RateAxis::grid) {
            Scalar off;
            Scalar pos = (r - rates_.r(0)) / rates_.spacing();
            if (rates_.size() >= 4) {
                br = detail::cubic_stencil(pos, rates_.size(), off);
                detail::cubic_weights(off, wr);
                nr = 4;
            } else {
                return linear_fallback(k, r, lambda);
            }
        }
        if (hazard_.present()) {
            Scalar off;
            Scalar pos = (hazard_.to_y(lambda) - hazard_.y_min()) / hazard_.spacing();
            if (hazard_.size() >= 4) {
                by = detail::cubic_stencil(pos, hazard_.size(), off);
                detail::cubic_weights(off, wy);
                ny = 4;
            } else {
                return linear_fallback(k, r, lambda);
            }
        }
        Scalar acc = 0;
        for (Eigen::Index a = 0; a < nr; ++a)
            for (Eigen::Index b = 0; b < ny; ++b) acc += wr[a] * wy[b] * s(br + a, by + b);
        return acc;
    }

    /// Value at (r, lambda, t): cubic in space, linear in time between saved slices.
    Scalar operator()(Scalar r, Scalar lambda, Scalar t) const {
        Scalar w;
        std::size_t k = locate_time(t, w);
        Scalar v0 = interpolate_slice(k, r, lambda);
        if (w == Scalar(0)) return v0;
        return (1 - w) * v0 + w * interpolate_slice(k + 1, r, lambda);
    }

    /// Columnar CSV: r,lambda,t,value,label. Absent axes print an empty field.
    void write_csv(std::ostream& out, bool header = true) const;

    /// Binary cache with grid metadata and an FNV-1a checksum of the payload.
    void save_binary(std::ostream& out) const;
    static BasicSurface load_binary(std::istream& in);

private:
    Scalar linear_fallback(std::size_t k, Scalar r, Scalar lambda) const {
        const Slice& s = slices_[k];
        auto bracket = [](Scalar pos, Eigen::Index n, Scalar& w) {
            Eigen::Index i = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(pos)), 0, n - 2);
            w = pos - Scalar(i);
            return i;
        };
        Eigen::Index ir = 0, iy = 0;
        Scalar wr = 0, wy = 0;
        bool has_r = rates_.axis() == RateAxis::grid;
        bool has_y = hazard_.present();
        if (has_r) ir = bracket((r - rates_.r(0)) / rates_.spacing(), rates_.size(), wr);
        if (has_y) iy = bracket((hazard_.to_y(lambda) - hazard_.y_min()) / hazard_.spacing(), hazard_.size(), wy);
        auto at = [&](Eigen::Index a, Eigen::Index b) { return s(ir + (has_r ? a : 0), iy + (has_y ? b : 0)); };
        return (1 - wr) * (1 - wy) * at(0, 0) + wr * (1 - wy) * at(1, 0) + (1 - wr) * wy * at(0, 1) +
               wr * wy * at(1, 1);
    }

    SurfaceLabel label_ = SurfaceLabel::generic;
    int level_ = 0;
    BasicRateGrid<Scalar> rates_;
    BasicHazardGrid<Scalar> hazard_;
    std::vector<Scalar> times_;
    std::vector<Slice> slices_;
};

using Surface = BasicSurface<double>;

/// Local Taylor data of a surface at (r, lambda, t): differences of the interpolant with steps of
/// one grid spacing (y-derivatives converted to lambda). Rate derivatives are zero without a rate
/// grid; d_t is the total time derivative along the stored slices.
struct LocalDerivatives {
    double value = 0;
    double d_t = 0;
    double d_r = 0, d_rr = 0;
    double d_lambda = 0, d_lambdalambda = 0;
    double d_rlambda = 0;
    double d_y = 0;  // derivative in y = ln(lambda - floor)
};

LocalDerivatives local_derivatives(const Surface& s, double r, double lambda, double t);

/// Shortest round-trip decimal form of a double (stable across runs).
std::string format_number(double v);

/// 64-bit FNV-1a over a byte range.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace annuity
