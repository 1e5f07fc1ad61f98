#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mcusum/detectors.hpp"
#include "mcusum/model.hpp"

namespace mcusum {

/// Monte-Carlo mean and its standard error.
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Expected one-step mixture llr per anomaly placement (the drift of the
/// M-CUSUM statistic when the anomaly sits at that placement), together with
/// the KL number I_alpha = sum_E alpha_E drift_E.
struct DriftReport {
  Eigen::VectorXd weights;
  Eigen::VectorXd drift;
  Eigen::VectorXd std_error;
  std::vector<bool> support;
  double kl_number = 0.0;
  double kl_std_error = 0.0;
  std::size_t samples = 0;

  double min_drift() const { return drift.minCoeff(); }
  /// max - min drift over the support.
  double support_spread() const;
};

/// Mean of mixture_llr(x) for x ~ p_E, E fixed at `placement`.
Estimate estimate_drift(const NetworkModel& model, const WeightVector& weights, const Placement& placement,
                        std::size_t n_samples, Rng& rng);

/// I_alpha estimated directly: E ~ alpha, x ~ p_E, average mixture_llr(x).
Estimate estimate_kl_number(const NetworkModel& model, const WeightVector& weights, std::size_t n_samples, Rng& rng);

/// Gradient of I over the reduced coordinates beta = alpha[0 .. K-2], the last
/// canonical placement being the dependent coordinate. Component i is
/// drift(E_i) - drift(E_last), estimated with common random numbers, so the
/// per-placement drifts and I come out of the same pass.
struct GradientEstimate {
  Eigen::VectorXd gradient;
  Eigen::VectorXd std_error;
  Eigen::VectorXd drift;
  Eigen::VectorXd drift_std_error;
  double kl_number = 0.0;
  double kl_std_error = 0.0;
};

GradientEstimate estimate_gradient(const NetworkModel& model, const WeightVector& weights, std::size_t n_samples,
                                   std::uint64_t seed, unsigned workers = 1);

/// All-placement drift report with common random numbers. Placements with
/// weight above `support_epsilon` are flagged as support.
DriftReport drift_report(const NetworkModel& model, const WeightVector& weights, std::size_t n_samples,
                         std::uint64_t seed, unsigned workers = 1, double support_epsilon = 1e-4);

struct OptimizerConfig {
  double step_size = 1.0;
  int max_iters = 400;
  /// Initial per-iteration sample count; doubled whenever the projected
  /// gradient is within noise of the stopping tolerance.
  std::size_t samples_per_gradient = 20'000;
  std::size_t max_samples_per_gradient = 640'000;
  double convergence_tol = 1e-3;
  double support_epsilon = 1e-4;
  /// Sample count of the final drift report.
  std::size_t report_samples = 1'000'000;
  std::uint64_t seed = 1;
  unsigned workers = 1;

  void validate() const;
};

struct OptimizationResult {
  WeightVector weights;
  DriftReport report;
  int iterations = 0;
  bool converged = false;
  std::optional<std::string> warning;
  double final_step_size = 0.0;
  std::size_t final_samples = 0;
  double projected_gradient_norm = 0.0;
};

/// Minimizes I_alpha over the simplex by projected gradient descent from the
/// uniform point. Never fails silently: non-convergence is reported through
/// `converged` and `warning` with the last iterate returned.
OptimizationResult optimize_weights(const NetworkModel& model, const OptimizerConfig& config);

/// Outcome of the first-order optimality check at a candidate minimizer:
///  (a) support has >= 2 placements when m >= 2 and is full when m = 1;
///  (b) drifts on the support agree within tol;
///  (c) drifts off the support exceed the common support drift minus tol;
///  (d) the common drift equals I_alpha within tol.
struct OptimalityCheck {
  bool support_ok = false;
  bool equal_on_support_ok = false;
  bool off_support_ok = false;
  bool kl_consistent_ok = false;
  std::size_t support_size = 0;
  double support_spread = 0.0;
  double common_drift = 0.0;
  double tolerance = 0.0;
  std::string detail;

  bool passed() const { return support_ok && equal_on_support_ok && off_support_ok && kl_consistent_ok; }
};

OptimalityCheck verify_optimality_conditions(const NetworkModel& model, const WeightVector& weights,
                                             const DriftReport& report, double tol);

/// 3 x the largest combined standard error sqrt(se_i^2 + se_j^2) over
/// placement pairs: the default tolerance for the optimality check.
double combined_tolerance(const DriftReport& report, double multiplier = 3.0);

}  // namespace mcusum
