#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mcusum/model.hpp"

namespace mcusum {

inline constexpr double kWeightSumTolerance = 1e-9;

/// Probability vector over the canonical placement set (the mixture weights).
class WeightVector {
 public:
  /// Validates: finite, nonnegative, sums to 1 within kWeightSumTolerance.
  explicit WeightVector(Eigen::VectorXd weights);

  static WeightVector uniform(std::size_t n);
  static WeightVector point_mass(std::size_t n, std::size_t at);
  /// Clips negatives to zero and rescales to unit sum.
  static WeightVector normalized(const Eigen::VectorXd& raw);

  const Eigen::VectorXd& values() const { return values_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
  double operator[](std::size_t i) const { return values_(static_cast<Eigen::Index>(i)); }

  /// Throws InvalidParameter unless size() == |placements of model|.
  void check_compatible(const NetworkModel& model) const;

 private:
  Eigen::VectorXd values_;
};

/// Evaluates log sum_E alpha_E exp(placement_llr(E, x)) with the log-weights
/// and the active support cached. Zero-weight placements are skipped.
class MixtureLlr {
 public:
  MixtureLlr(const NetworkModel& model, const WeightVector& weights);

  double operator()(const ObservationVector& x) const;
  /// Same quantity from precomputed per-sensor llrs.
  double from_sensor_llrs(const Eigen::VectorXd& llrs) const;

  const NetworkModel& model() const { return model_; }

 private:
  NetworkModel model_;
  std::vector<std::size_t> support_;
  Eigen::VectorXd log_weights_;  // over support_
  mutable Eigen::VectorXd scratch_;
};

double mixture_llr(const NetworkModel& model, const WeightVector& weights, const ObservationVector& x);

/// Running statistic of one detector. For the M-CUSUM `statistic` is log W[k];
/// for the N-/O-CUSUM it is the rectified statistic itself.
struct DetectorState {
  double statistic = 0.0;
  std::int64_t steps = 0;
  bool operator==(const DetectorState&) const = default;
};

struct StoppingDecision {
  bool stopped = false;
  std::optional<std::int64_t> stop_time;
};

/// log W[k] = max(log W[k-1], 0) + z.
inline DetectorState mcusum_update(DetectorState s, double z) {
  return {std::max(s.statistic, 0.0) + z, s.steps + 1};
}

/// W_N[k] = (W_N[k-1] + sum of all per-sensor llrs + (L - m) D(f||g))^+.
inline DetectorState ncusum_update(DetectorState s, double sum_all_llr, double correction) {
  return {std::max(s.statistic + sum_all_llr + correction, 0.0), s.steps + 1};
}

/// (L - m) D(f||g) for a homogeneous model; InvalidUse otherwise.
double ncusum_correction(const NetworkModel& model);

DetectorState ncusum_update(DetectorState s, const NetworkModel& model, const ObservationVector& x);

/// W_O[k] = (W_O[k-1] + placement_llr(S[k], x))^+ with the true placement known.
DetectorState ocusum_update(DetectorState s, const NetworkModel& model, const Placement& true_placement,
                            const ObservationVector& x);

/// Stops at the first k >= 1 with statistic >= b (inclusive).
inline StoppingDecision check_stop(const DetectorState& s, double threshold_b) {
  if (s.steps >= 1 && s.statistic >= threshold_b) return {true, s.steps};
  return {};
}

enum class DetectorKind { MCusum, NCusum, OCusum };

std::string_view to_string(DetectorKind kind);
DetectorKind parse_detector_kind(std::string_view name);

/// Type-erased detector used by the simulation harness. Each step consumes the
/// per-sensor llr vector of the current observation and, for the oracle, the
/// canonical index of the true placement.
class Detector {
 public:
  static Detector mcusum(const NetworkModel& model, const WeightVector& weights);
  static Detector ncusum(const NetworkModel& model);
  static Detector ocusum(const NetworkModel& model);

  DetectorKind kind() const { return kind_; }
  std::string_view name() const { return to_string(kind_); }
  const std::optional<WeightVector>& weights() const { return weights_; }

  DetectorState step(const DetectorState& s, const Eigen::VectorXd& llrs, std::size_t true_placement) const;

  /// Ratio Var/(2|mean|) of the one-step increment under no anomaly. 1 for the
  /// llr-scaled M- and O-CUSUM; the N-CUSUM sum of L llrs needs a wider scale.
  double threshold_scale() const { return threshold_scale_; }

 private:
  Detector(DetectorKind kind, const NetworkModel& model);

  DetectorKind kind_;
  NetworkModel model_;
  std::optional<WeightVector> weights_;
  std::optional<MixtureLlr> mixture_;
  double correction_ = 0.0;
  double threshold_scale_ = 1.0;
};

}  // namespace mcusum
