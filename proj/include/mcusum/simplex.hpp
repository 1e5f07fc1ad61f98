#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <functional>
#include <vector>

namespace mcusum {

/// Euclidean projection of v onto {x : x >= 0, sum(x) = radius}.
///
/// Sort-based: with u sorted descending, find the largest j such that
/// u_j - (sum_{i<=j} u_i - radius) / j > 0, then shift by that threshold and
/// clip at zero. O(n log n).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> project_onto_simplex(
    const Eigen::MatrixBase<Derived>& v, typename Derived::Scalar radius = 1) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = v.size();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(n);
  if (n == 0) return out;

  std::vector<Scalar> u(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) u[static_cast<std::size_t>(i)] = v(i);
  std::sort(u.begin(), u.end(), std::greater<Scalar>());

  Scalar cumsum = 0;
  Scalar theta = 0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumsum += u[j];
    const Scalar t = (cumsum - radius) / static_cast<Scalar>(j + 1);
    if (u[j] - t > 0) theta = t;
  }
  out = (v.derived().array() - theta).max(Scalar(0)).matrix();
  return out;
}

/// Euclidean projection onto {x : x >= 0, sum(x) <= radius}. Used for the
/// reduced coordinates of a probability vector, where the dropped coordinate
/// is 1 - sum(x).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> project_onto_solid_simplex(
    const Eigen::MatrixBase<Derived>& v, typename Derived::Scalar radius = 1) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> clipped = v.derived().array().max(Scalar(0)).matrix();
  if (clipped.sum() <= radius) return clipped;
  return project_onto_simplex(v, radius);
}

}  // namespace mcusum
