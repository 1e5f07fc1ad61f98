#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstddef>

namespace mcusum {

/// Two-sided 95% normal quantile.
inline constexpr double kZ95 = 1.959963984540054;

/// Mean and sum of squared deviations, elementwise over a fixed-length vector.
/// `merge` uses the pairwise update of Chan et al., so blocks may be
/// accumulated independently and combined in a fixed order.
template <typename Scalar>
class Moments {
 public:
  using Vector = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  explicit Moments(Eigen::Index dim = 1) : mean_(Vector::Zero(dim)), m2_(Vector::Zero(dim)) {}

  template <typename Derived>
  void add(const Eigen::ArrayBase<Derived>& x) {
    ++count_;
    const Scalar inv = Scalar(1) / static_cast<Scalar>(count_);
    for (Eigen::Index i = 0; i < mean_.size(); ++i) {
      const Scalar xi = x(i);
      const Scalar delta = xi - mean_(i);
      mean_(i) += delta * inv;
      m2_(i) += delta * (xi - mean_(i));
    }
  }

  void add(Scalar x) {
    ++count_;
    const Scalar delta = x - mean_(0);
    mean_(0) += delta / static_cast<Scalar>(count_);
    m2_(0) += delta * (x - mean_(0));
  }

  void merge(const Moments& o) {
    if (o.count_ == 0) return;
    if (count_ == 0) {
      *this = o;
      return;
    }
    const auto n = static_cast<Scalar>(count_ + o.count_);
    const Vector delta = o.mean_ - mean_;
    mean_ += delta * (static_cast<Scalar>(o.count_) / n);
    m2_ += o.m2_ + delta.square() * (static_cast<Scalar>(count_) * static_cast<Scalar>(o.count_) / n);
    count_ += o.count_;
  }

  std::size_t count() const { return count_; }
  const Vector& mean() const { return mean_; }
  Vector variance() const {
    return count_ > 1 ? Vector(m2_ / static_cast<Scalar>(count_ - 1)) : Vector::Zero(mean_.size());
  }
  /// Standard error of the mean.
  Vector std_error() const {
    return count_ > 1 ? Vector((variance() / static_cast<Scalar>(count_)).sqrt()) : Vector::Zero(mean_.size());
  }

 private:
  std::size_t count_ = 0;
  Vector mean_;
  Vector m2_;
};

}  // namespace mcusum
