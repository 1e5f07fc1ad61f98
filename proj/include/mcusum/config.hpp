#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcusum/detectors.hpp"
#include "mcusum/evaluation.hpp"
#include "mcusum/model.hpp"
#include "mcusum/trajectory.hpp"
#include "mcusum/weights.hpp"

namespace mcusum {

using Json = nlohmann::json;

// Model file:
//   {"sensors": [{"pre": {"gaussian": {"mean": 0, "var": 1}},
//                 "post": {"bernoulli": {"p": 0.9}}}, ...],
//    "anomaly_size": 1}
// Unknown keys are rejected with ConfigError.
Json model_to_json(const NetworkModel& model);
NetworkModel model_from_json(const Json& j);

Json drift_report_to_json(const NetworkModel& model, const DriftReport& report);
Json optimality_check_to_json(const OptimalityCheck& check);

struct PolicySpec {
  enum class Kind { Fixed, IidRandom, Cyclic, WorstDrift };
  Kind kind = Kind::Fixed;
  /// Fixed: one placement. Cyclic: the order; empty means every placement in
  /// canonical order. 1-based sensor indices.
  std::vector<std::vector<int>> placements;
  /// IidRandom: "weights" (the detector weights), "uniform", or explicit.
  std::string iid_source = "weights";
  std::vector<double> iid_weights;
  /// WorstDrift: Monte-Carlo samples per placement drift.
  std::size_t samples = 200'000;
};

enum class WeightSource { Uniform, Optimize, Explicit };

/// Everything a CLI run needs, validated in full before any computation.
struct ExperimentConfig {
  Json model_json;
  std::vector<DetectorKind> detectors{DetectorKind::MCusum};
  WeightSource weight_source = WeightSource::Uniform;
  std::vector<double> explicit_weights;
  OptimizerConfig optimizer;
  std::vector<PolicySpec> policies;
  std::vector<double> thresholds;
  std::vector<double> gamma_targets;
  double rel_tol = 0.05;
  std::size_t mtfa_trials = 2000;
  std::size_t delay_trials = 10000;
  std::optional<std::int64_t> mtfa_horizon;
  std::int64_t delay_horizon = 1'000'000;
  std::size_t drift_samples = 1'000'000;
  std::uint64_t seed = 1;
  unsigned workers = 0;
  std::string out_dir = ".";

  NetworkModel model() const { return model_from_json(model_json); }
};

ExperimentConfig parse_experiment_config(const Json& j);
/// Resolved configuration, suitable for provenance and for re-parsing.
Json to_json(const ExperimentConfig& config);

/// Uniform, explicit, or optimized weights for the M-CUSUM detector.
struct ResolvedWeights {
  WeightVector weights;
  std::optional<OptimizationResult> optimization;
};
ResolvedWeights resolve_weights(const ExperimentConfig& config, const NetworkModel& model);

std::vector<Detector> build_detectors(const ExperimentConfig& config, const NetworkModel& model,
                                      const WeightVector& weights);
std::vector<LabeledPolicy> build_policies(const ExperimentConfig& config, const NetworkModel& model,
                                          const WeightVector& detector_weights);
CurveSettings curve_settings(const ExperimentConfig& config);

}  // namespace mcusum
