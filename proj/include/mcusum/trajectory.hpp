#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "mcusum/detectors.hpp"
#include "mcusum/model.hpp"

namespace mcusum {

struct WorstDriftResult {
  std::size_t placement = 0;
  double drift = 0.0;
  double std_error = 0.0;
  Eigen::VectorXd drifts;
  Eigen::VectorXd drift_std_errors;
};

/// Placement with the smallest expected M-CUSUM drift under `detector_weights`.
/// Drifts within `tie_sigmas` combined standard errors of the minimum count
/// as tied; ties go to the first placement in canonical order.
WorstDriftResult worst_drift_placement(const NetworkModel& model, const WeightVector& detector_weights,
                                       std::size_t n_samples, std::uint64_t seed, unsigned workers = 1,
                                       double tie_sigmas = 3.0);

/// How the anomaly moves: S[k] for k >= 1. Placements are canonical indices
/// into the model's placement set.
class TrajectoryPolicy {
 public:
  enum class Kind { Fixed, IidRandom, Cyclic, WorstDrift };

  static TrajectoryPolicy fixed(std::size_t placement);
  static TrajectoryPolicy iid_random(const WeightVector& weights);
  static TrajectoryPolicy cyclic(std::vector<std::size_t> order);
  /// Static worst-drift approximation of the worst path: resolves the
  /// placement once and then behaves like `fixed`.
  static TrajectoryPolicy worst_drift(const NetworkModel& model, const WeightVector& detector_weights,
                                      std::size_t n_samples, std::uint64_t seed, unsigned workers = 1);

  Kind kind() const;
  /// S[k]. Only IidRandom consumes randomness.
  std::size_t next_placement(std::int64_t k, Rng& rng) const;
  /// Throws InvalidParameter if any referenced placement is outside the set
  /// or the weights do not match it.
  void validate(const NetworkModel& model) const;
  std::string label(const NetworkModel& model) const;

  /// Set only for the worst-drift policy.
  const WorstDriftResult* worst_drift_result() const;

 private:
  struct Fixed {
    std::size_t placement;
  };
  struct IidRandom {
    WeightVector weights;
    std::vector<double> cumulative;
  };
  struct Cyclic {
    std::vector<std::size_t> order;
  };
  struct WorstDrift {
    WorstDriftResult result;
  };
  using Variant = std::variant<Fixed, IidRandom, Cyclic, WorstDrift>;

  explicit TrajectoryPolicy(Variant v) : policy_(std::move(v)) {}
  Variant policy_;
};

}  // namespace mcusum
