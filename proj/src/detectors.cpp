#include "mcusum/detectors.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "mcusum/error.hpp"
#include "mcusum/log_sum_exp.hpp"

namespace mcusum {

WeightVector::WeightVector(Eigen::VectorXd weights) : values_(std::move(weights)) {
  if (values_.size() == 0) throw InvalidParameter("weights: empty vector");
  if (!values_.allFinite()) throw InvalidParameter("weights: non-finite entry");
  if ((values_.array() < 0.0).any()) throw InvalidParameter("weights: negative entry");
  const double sum = values_.sum();
  if (std::abs(sum - 1.0) > kWeightSumTolerance) {
    throw InvalidParameter("weights: entries sum to " + std::to_string(sum) + ", expected 1");
  }
}

WeightVector WeightVector::uniform(std::size_t n) {
  if (n == 0) throw InvalidParameter("weights: empty vector");
  return WeightVector(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n)));
}

WeightVector WeightVector::point_mass(std::size_t n, std::size_t at) {
  if (at >= n) throw InvalidParameter("weights: point mass index out of range");
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  w(static_cast<Eigen::Index>(at)) = 1.0;
  return WeightVector(std::move(w));
}

WeightVector WeightVector::normalized(const Eigen::VectorXd& raw) {
  Eigen::VectorXd w = raw.array().max(0.0).matrix();
  const double sum = w.sum();
  if (!(sum > 0.0) || !std::isfinite(sum)) throw InvalidParameter("weights: cannot normalize a zero vector");
  return WeightVector(w / sum);
}

void WeightVector::check_compatible(const NetworkModel& model) const {
  if (size() != model.placements().size()) {
    throw InvalidParameter("weights: length " + std::to_string(size()) + " does not match " +
                           std::to_string(model.placements().size()) + " placements");
  }
}

MixtureLlr::MixtureLlr(const NetworkModel& model, const WeightVector& weights) : model_(model) {
  weights.check_compatible(model);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] > 0.0) support_.push_back(i);
  }
  if (support_.empty()) throw DomainError("mixture llr: all weights are zero");
  log_weights_.resize(static_cast<Eigen::Index>(support_.size()));
  for (std::size_t j = 0; j < support_.size(); ++j) {
    log_weights_(static_cast<Eigen::Index>(j)) = std::log(weights[support_[j]]);
  }
  scratch_.resize(log_weights_.size());
}

double MixtureLlr::from_sensor_llrs(const Eigen::VectorXd& llrs) const {
  const auto& set = model_.placements();
  for (std::size_t j = 0; j < support_.size(); ++j) {
    scratch_(static_cast<Eigen::Index>(j)) = placement_sum(set[support_[j]], llrs);
  }
  const double out = log_sum_exp(scratch_, log_weights_);
  if (std::isnan(out) || out == -std::numeric_limits<double>::infinity()) {
    throw DomainError("mixture llr: every weighted term underflowed");
  }
  return out;
}

double MixtureLlr::operator()(const ObservationVector& x) const { return from_sensor_llrs(sensor_llrs(model_, x)); }

double mixture_llr(const NetworkModel& model, const WeightVector& weights, const ObservationVector& x) {
  return MixtureLlr(model, weights)(x);
}

double ncusum_correction(const NetworkModel& model) {
  if (!model.is_homogeneous()) throw InvalidUse("N-CUSUM requires homogeneous model");
  return static_cast<double>(model.num_sensors() - model.anomaly_size()) * model.sensor(0).kl();
}

DetectorState ncusum_update(DetectorState s, const NetworkModel& model, const ObservationVector& x) {
  const double correction = ncusum_correction(model);
  return ncusum_update(s, sensor_llrs(model, x).sum(), correction);
}

DetectorState ocusum_update(DetectorState s, const NetworkModel& model, const Placement& true_placement,
                            const ObservationVector& x) {
  const double z = placement_llr(model, true_placement, x);
  return {std::max(s.statistic + z, 0.0), s.steps + 1};
}

std::string_view to_string(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::MCusum:
      return "mcusum";
    case DetectorKind::NCusum:
      return "ncusum";
    case DetectorKind::OCusum:
      return "ocusum";
  }
  return "unknown";
}

DetectorKind parse_detector_kind(std::string_view name) {
  if (name == "mcusum") return DetectorKind::MCusum;
  if (name == "ncusum") return DetectorKind::NCusum;
  if (name == "ocusum") return DetectorKind::OCusum;
  throw InvalidParameter("unknown detector '" + std::string(name) + "' (expected mcusum, ncusum or ocusum)");
}

Detector::Detector(DetectorKind kind, const NetworkModel& model) : kind_(kind), model_(model) {}

Detector Detector::mcusum(const NetworkModel& model, const WeightVector& weights) {
  Detector d(DetectorKind::MCusum, model);
  d.weights_ = weights;
  d.mixture_.emplace(model, weights);
  return d;
}

Detector Detector::ncusum(const NetworkModel& model) {
  Detector d(DetectorKind::NCusum, model);
  d.correction_ = ncusum_correction(model);
  // Increment under no anomaly: mean -m D, variance L Var(llr).
  const double drift = static_cast<double>(model.anomaly_size()) * model.sensor(0).kl();
  const double var = static_cast<double>(model.num_sensors()) * model.sensor(0).llr_variance_pre();
  d.threshold_scale_ = std::max(1.0, var / (2.0 * drift));
  return d;
}

Detector Detector::ocusum(const NetworkModel& model) { return Detector(DetectorKind::OCusum, model); }

DetectorState Detector::step(const DetectorState& s, const Eigen::VectorXd& llrs, std::size_t true_placement) const {
  switch (kind_) {
    case DetectorKind::MCusum:
      return mcusum_update(s, mixture_->from_sensor_llrs(llrs));
    case DetectorKind::NCusum:
      return ncusum_update(s, llrs.sum(), correction_);
    case DetectorKind::OCusum: {
      const double z = placement_sum(model_.placements()[true_placement], llrs);
      return {std::max(s.statistic + z, 0.0), s.steps + 1};
    }
  }
  return s;
}

}  // namespace mcusum
