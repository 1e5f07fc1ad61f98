#pragma once

#include <Eigen/Core>
#include <cmath>
#include <limits>

namespace mcusum {

/// Max-shifted log(sum(exp(v))). Returns -inf for an empty input or when every
/// entry is -inf; +inf entries propagate.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::DenseBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  if (v.size() == 0) return -std::numeric_limits<Scalar>::infinity();
  const Scalar shift = v.maxCoeff();
  if (!std::isfinite(shift)) return shift;
  return shift + std::log((v.derived().array() - shift).exp().sum());
}

/// Weighted variant: log(sum(w_i * exp(v_i))) with log-weights supplied.
template <typename DerivedV, typename DerivedW>
typename DerivedV::Scalar log_sum_exp(const Eigen::DenseBase<DerivedV>& v,
                                      const Eigen::DenseBase<DerivedW>& log_w) {
  return log_sum_exp(v.derived() + log_w.derived());
}

}  // namespace mcusum
