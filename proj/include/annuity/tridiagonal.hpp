#pragma once

#include <Eigen/Core>

namespace annuity {

/// Thomas algorithm for lower(i) x(i-1) + diag(i) x(i) + upper(i) x(i+1) = rhs(i).
/// lower(0) and upper(n-1) are ignored. `scratch` must have the size of `rhs`.
template <typename DerivedA, typename DerivedB, typename DerivedC, typename DerivedR, typename DerivedX,
          typename DerivedS>
void solve_tridiagonal(const Eigen::DenseBase<DerivedA>& lower, const Eigen::DenseBase<DerivedB>& diag,
                       const Eigen::DenseBase<DerivedC>& upper, const Eigen::DenseBase<DerivedR>& rhs,
                       Eigen::DenseBase<DerivedX>& x, Eigen::DenseBase<DerivedS>& scratch) {
    using Scalar = typename DerivedX::Scalar;
    const Eigen::Index n = rhs.size();
    Scalar beta = diag(0);
    x(0) = rhs(0) / beta;
    for (Eigen::Index i = 1; i < n; ++i) {
        scratch(i) = upper(i - 1) / beta;
        beta = diag(i) - lower(i) * scratch(i);
        x(i) = (rhs(i) - lower(i) * x(i - 1)) / beta;
    }
    for (Eigen::Index i = n - 2; i >= 0; --i) x(i) -= scratch(i + 1) * x(i + 1);
}

}  // namespace annuity
