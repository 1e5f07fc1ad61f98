#pragma once

#include <Eigen/Core>
#include <compare>
#include <cstdint>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "mcusum/random.hpp"

namespace mcusum {

/// One observation per sensor, X[k] in sensor order.
using ObservationVector = Eigen::VectorXd;

struct Gaussian {
  double mean = 0.0;
  double variance = 1.0;
  bool operator==(const Gaussian&) const = default;
};

struct Bernoulli {
  double p = 0.5;
  bool operator==(const Bernoulli&) const = default;
};

/// Marginal distribution of a single sensor's observation.
///
/// Every draw is generated from one standard-normal variate through
/// `from_noise`, so two distributions fed the same noise produce coupled
/// draws (used for common random numbers across anomaly placements).
class SensorDistribution {
 public:
  using Params = std::variant<Gaussian, Bernoulli>;

  static SensorDistribution gaussian(double mean, double variance);
  static SensorDistribution bernoulli(double p);

  const Params& params() const { return params_; }
  bool is_gaussian() const { return std::holds_alternative<Gaussian>(params_); }
  bool is_bernoulli() const { return std::holds_alternative<Bernoulli>(params_); }

  /// log pdf (Gaussian) or log pmf (Bernoulli; -inf off {0, 1}).
  double log_density(double x) const;
  double from_noise(double z) const;
  double sample(Rng& rng) const;
  /// Differential entropy (Gaussian) or Shannon entropy in nats (Bernoulli).
  double entropy() const;
  double mean() const;
  double variance() const;

  bool operator==(const SensorDistribution&) const = default;

 private:
  explicit SensorDistribution(Params p) : params_(p) {}
  Params params_;
};

/// D(f || g) in nats; both arguments must be of the same kind.
double kl_divergence(const SensorDistribution& f, const SensorDistribution& g);

/// Non-anomalous (pre) and anomalous (post) distribution of one sensor.
struct SensorModel {
  SensorModel(SensorDistribution pre, SensorDistribution post);

  /// log(post(x) / pre(x)). Throws DomainError where pre(x) = 0.
  double llr(double x) const;
  /// D(post || pre), the expected llr under the anomalous mode.
  double kl() const { return kl_divergence(post, pre); }
  /// Variance of llr(X) with X ~ pre.
  double llr_variance_pre() const;

  bool operator==(const SensorModel&) const = default;

  SensorDistribution pre;
  SensorDistribution post;
};

/// Sorted set of distinct sensor indices affected by the anomaly. Stored
/// 0-based; `one_based()` gives the external numbering.
class Placement {
 public:
  Placement() = default;
  explicit Placement(std::vector<int> zero_based);
  static Placement from_one_based(std::span<const int> indices);

  const std::vector<int>& indices() const { return indices_; }
  std::vector<int> one_based() const;
  std::size_t size() const { return indices_.size(); }
  bool contains(int sensor) const;

  auto operator<=>(const Placement&) const = default;

 private:
  std::vector<int> indices_;
};

/// Number of m-subsets of an L-set, saturating at UINT64_MAX.
std::uint64_t binomial(int n, int k);

/// Largest placement set materialized; the mixture sum is linear in its size.
inline constexpr std::uint64_t kMaxPlacements = 1'000'000;

/// All m-subsets of {0..L-1} in lexicographic order.
class PlacementSet {
 public:
  PlacementSet(int num_sensors, int anomaly_size);

  int num_sensors() const { return num_sensors_; }
  int anomaly_size() const { return anomaly_size_; }
  std::size_t size() const { return placements_.size(); }
  const Placement& operator[](std::size_t i) const { return placements_[i]; }
  auto begin() const { return placements_.begin(); }
  auto end() const { return placements_.end(); }

  /// Canonical index of a placement; throws InvalidParameter if absent.
  std::size_t index_of(const Placement& p) const;

 private:
  int num_sensors_;
  int anomaly_size_;
  std::vector<Placement> placements_;
};

PlacementSet enumerate_placements(int num_sensors, int anomaly_size);

class NetworkModel {
 public:
  NetworkModel(std::vector<SensorModel> sensors, int anomaly_size);
  static NetworkModel homogeneous(int num_sensors, int anomaly_size, const SensorModel& sensor);
  /// g = N(0, 1) everywhere, f_l = N(means[l], 1).
  static NetworkModel gaussian_shift(std::span<const double> post_means, int anomaly_size);

  int num_sensors() const { return static_cast<int>(sensors_.size()); }
  int anomaly_size() const { return anomaly_size_; }
  const SensorModel& sensor(int i) const { return sensors_[static_cast<std::size_t>(i)]; }
  const std::vector<SensorModel>& sensors() const { return sensors_; }
  const PlacementSet& placements() const { return *placements_; }
  bool is_homogeneous() const;

  /// Validates a placement against L and m and returns its canonical index.
  std::size_t placement_index(const Placement& p) const;

  bool operator==(const NetworkModel& other) const {
    return anomaly_size_ == other.anomaly_size_ && sensors_ == other.sensors_;
  }

 private:
  std::vector<SensorModel> sensors_;
  int anomaly_size_;
  std::shared_ptr<const PlacementSet> placements_;
};

/// Pre-change draw: every component from its g_l.
ObservationVector sample_observation(const NetworkModel& model, Rng& rng);
/// Post-change draw: components in `placement` from f_l, the rest from g_l.
ObservationVector sample_observation(const NetworkModel& model, const Placement& placement, Rng& rng);

/// Per-sensor llr vector, log(f_l(x_l) / g_l(x_l)) for every l.
Eigen::VectorXd sensor_llrs(const NetworkModel& model, const ObservationVector& x);

/// One-step log-likelihood ratio of the placement hypothesis: the sum of
/// per-sensor llrs over the sensors in `placement`.
double placement_llr(const NetworkModel& model, const Placement& placement,
                     const ObservationVector& x);

/// Sum of entries of `llrs` indexed by the placement.
inline double placement_sum(const Placement& p, const Eigen::VectorXd& llrs) {
  double s = 0.0;
  for (int i : p.indices()) s += llrs(i);
  return s;
}

}  // namespace mcusum
