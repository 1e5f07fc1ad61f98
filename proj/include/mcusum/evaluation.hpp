#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mcusum/detectors.hpp"
#include "mcusum/model.hpp"
#include "mcusum/stats.hpp"
#include "mcusum/trajectory.hpp"

namespace mcusum {

/// Whether observations come from the no-anomaly model (MTFA runs) or from
/// the anomalous model from the first sample on (delay runs, changepoint 0).
enum class Regime { PreChange, PostChange };

struct SimulationOptions {
  std::size_t n_trials = 2000;
  std::int64_t horizon = 1'000'000;
  std::uint64_t seed = 1;
  unsigned workers = 1;

  void validate() const;
};

struct TrialRecord {
  std::size_t trial = 0;
  std::optional<std::int64_t> stop_time;
  std::int64_t horizon = 0;

  bool censored() const { return !stop_time.has_value(); }
  /// Stopping time, or the horizon for a censored run.
  std::int64_t value() const { return stop_time.value_or(horizon); }
};

/// Mean stopping time over trials. Censored trials contribute the horizon, so
/// with censoring the mean is a lower bound on the true expectation.
struct RunEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double ci_half_width = 0.0;
  std::size_t censored = 0;
  std::size_t n_trials = 0;

  double lower() const { return mean - ci_half_width; }
  double upper() const { return mean + ci_half_width; }
};

RunEstimate summarize(const std::vector<TrialRecord>& records);

/// Simulated statistic paths of n independent trials, stored as their
/// running-maximum records (time, value). The statistic path does not depend
/// on the threshold, so the stopping time for any b is the time of the first
/// record >= b. Paths are extended lazily to the largest threshold queried.
/// Trial i draws from a stream derived from (seed, regime, i) only.
class FirstPassageProfile {
 public:
  FirstPassageProfile(Detector detector, NetworkModel model, TrajectoryPolicy policy, Regime regime,
                      SimulationOptions options);

  /// Simulates every trial until its statistic reaches b or the horizon.
  void extend_to(double b);
  std::vector<TrialRecord> records(double b);
  RunEstimate estimate(double b) { return summarize(records(b)); }

  const SimulationOptions& options() const { return options_; }
  const Detector& detector() const { return detector_; }

 private:
  struct Trial {
    Rng rng;
    // Lives with the trial: the distribution caches a variate between calls.
    std::normal_distribution<double> normal;
    DetectorState state;
    double max_statistic;
    std::vector<std::pair<std::int64_t, double>> record_highs;
  };

  void advance(Trial& t, double b) const;

  Detector detector_;
  NetworkModel model_;
  TrajectoryPolicy policy_;
  Regime regime_;
  SimulationOptions options_;
  std::vector<Trial> trials_;
  double reached_;
};

/// E_inf[tau] by simulation on anomaly-free data. The policy only matters for
/// the oracle detector, which is told S[k] at every step.
RunEstimate estimate_mtfa(const Detector& detector, const NetworkModel& model, const TrajectoryPolicy& policy,
                          double threshold_b, const SimulationOptions& options);

/// Mean detection delay with the anomaly active from the first sample and the
/// detector started from its initial state.
RunEstimate estimate_wadd(const Detector& detector, const NetworkModel& model, const TrajectoryPolicy& policy,
                          double threshold_b, const SimulationOptions& options);

struct CalibrationResult {
  double threshold_b = 0.0;
  RunEstimate mtfa;
  int iterations = 0;
  bool within_tolerance = false;
  std::pair<double, double> bracket;
};

/// Bisection on b so that the estimated MTFA hits gamma within rel_tol.
/// The bracket is [log(gamma)/2, 2 log(gamma) + 5] times the detector's
/// threshold scale. If MTFA at the upper end is still short of gamma the upper
/// end is doubled once before giving up with CalibrationError; if MTFA at the
/// lower end already overshoots, the search moves to [0, lower end]. When the
/// tolerance cannot be met (MTFA is a step function of b for finitely many
/// trials) the smallest b found with MTFA >= gamma is returned.
CalibrationResult calibrate_threshold(FirstPassageProfile& pre_change_profile, double gamma, double rel_tol);

CalibrationResult calibrate_threshold(const Detector& detector, const NetworkModel& model,
                                      const TrajectoryPolicy& policy, double gamma, double rel_tol,
                                      const SimulationOptions& options);

struct LabeledPolicy {
  std::string label;
  TrajectoryPolicy policy;
};

struct CurveSettings {
  /// Exactly one of thresholds / gamma_targets must be non-empty.
  std::vector<double> thresholds;
  std::vector<double> gamma_targets;
  double rel_tol = 0.05;
  std::size_t mtfa_trials = 2000;
  std::size_t delay_trials = 10000;
  /// Defaults to 50 x gamma (targets) or 50 x exp(b / scale) clamped to
  /// [1e3, 1e8] (threshold grid).
  std::optional<std::int64_t> mtfa_horizon;
  std::int64_t delay_horizon = 1'000'000;
  std::uint64_t seed = 1;
  unsigned workers = 1;

  void validate() const;
};

struct CurvePoint {
  std::string detector;
  std::string policy;
  double threshold_b = 0.0;
  std::optional<double> gamma_target;
  RunEstimate mtfa;
  RunEstimate wadd;
};

/// One point per (detector, policy, grid value), detector-major, then policy,
/// then grid order. With more than one policy an extra "max" row per
/// (detector, grid value) reports the largest delay over the listed policies.
std::vector<CurvePoint> tradeoff_curve(const NetworkModel& model, const std::vector<Detector>& detectors,
                                       const std::vector<LabeledPolicy>& policies, const CurveSettings& settings);

inline constexpr const char* kCurveCsvHeader = "detector,policy,b,mtfa,mtfa_ci,wadd,wadd_ci,n_trials,censored";

/// CSV with kCurveCsvHeader. n_trials is the delay trial count; censored adds
/// the censored MTFA and delay runs.
void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& points);

/// WADD interpolated linearly in log(MTFA) between the points of one curve
/// (extrapolated from the end segments).
double wadd_at_mtfa(std::vector<CurvePoint> curve, double mtfa);

}  // namespace mcusum
