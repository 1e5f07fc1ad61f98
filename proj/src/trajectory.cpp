#include "mcusum/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mcusum/error.hpp"
#include "mcusum/weights.hpp"

namespace mcusum {

namespace {

std::string format_placement(const Placement& p) {
  std::ostringstream s;
  s << '[';
  const auto idx = p.one_based();
  for (std::size_t i = 0; i < idx.size(); ++i) s << (i ? " " : "") << idx[i];
  s << ']';
  return s.str();
}

}  // namespace

WorstDriftResult worst_drift_placement(const NetworkModel& model, const WeightVector& detector_weights,
                                       std::size_t n_samples, std::uint64_t seed, unsigned workers,
                                       double tie_sigmas) {
  const DriftReport r = drift_report(model, detector_weights, n_samples,
                                     derive_seed(seed, {stream_tag::kWorstDrift}), workers);
  Eigen::Index argmin = 0;
  r.drift.minCoeff(&argmin);
  const double se_min = r.std_error(argmin);
  std::size_t chosen = static_cast<std::size_t>(argmin);
  for (Eigen::Index i = 0; i < argmin; ++i) {
    if (r.drift(i) - r.drift(argmin) <= tie_sigmas * std::hypot(r.std_error(i), se_min)) {
      chosen = static_cast<std::size_t>(i);
      break;
    }
  }
  const auto c = static_cast<Eigen::Index>(chosen);
  return {chosen, r.drift(c), r.std_error(c), r.drift, r.std_error};
}

TrajectoryPolicy TrajectoryPolicy::fixed(std::size_t placement) { return TrajectoryPolicy(Fixed{placement}); }

TrajectoryPolicy TrajectoryPolicy::iid_random(const WeightVector& weights) {
  std::vector<double> cumulative(weights.size());
  double c = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) cumulative[i] = (c += weights[i]);
  return TrajectoryPolicy(IidRandom{weights, std::move(cumulative)});
}

TrajectoryPolicy TrajectoryPolicy::cyclic(std::vector<std::size_t> order) {
  if (order.empty()) throw InvalidParameter("cyclic policy: empty placement order");
  return TrajectoryPolicy(Cyclic{std::move(order)});
}

TrajectoryPolicy TrajectoryPolicy::worst_drift(const NetworkModel& model, const WeightVector& detector_weights,
                                               std::size_t n_samples, std::uint64_t seed, unsigned workers) {
  return TrajectoryPolicy(WorstDrift{worst_drift_placement(model, detector_weights, n_samples, seed, workers)});
}

TrajectoryPolicy::Kind TrajectoryPolicy::kind() const { return static_cast<Kind>(policy_.index()); }

std::size_t TrajectoryPolicy::next_placement(std::int64_t k, Rng& rng) const {
  if (k < 1) throw InvalidParameter("trajectory: time index starts at 1");
  switch (kind()) {
    case Kind::Fixed:
      return std::get<Fixed>(policy_).placement;
    case Kind::IidRandom: {
      const auto& p = std::get<IidRandom>(policy_);
      std::uniform_real_distribution<double> unit(0.0, p.cumulative.back());
      auto it = std::upper_bound(p.cumulative.begin(), p.cumulative.end(), unit(rng));
      return std::min<std::size_t>(static_cast<std::size_t>(it - p.cumulative.begin()), p.cumulative.size() - 1);
    }
    case Kind::Cyclic: {
      const auto& order = std::get<Cyclic>(policy_).order;
      return order[static_cast<std::size_t>((k - 1) % static_cast<std::int64_t>(order.size()))];
    }
    case Kind::WorstDrift:
      return std::get<WorstDrift>(policy_).result.placement;
  }
  return 0;
}

void TrajectoryPolicy::validate(const NetworkModel& model) const {
  const std::size_t K = model.placements().size();
  auto check = [&](std::size_t i) {
    if (i >= K) {
      throw InvalidParameter("trajectory: placement index " + std::to_string(i) + " outside the placement set of size " +
                             std::to_string(K));
    }
  };
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Fixed>) check(p.placement);
        if constexpr (std::is_same_v<T, IidRandom>) p.weights.check_compatible(model);
        if constexpr (std::is_same_v<T, Cyclic>) std::for_each(p.order.begin(), p.order.end(), check);
        if constexpr (std::is_same_v<T, WorstDrift>) check(p.result.placement);
      },
      policy_);
}

std::string TrajectoryPolicy::label(const NetworkModel& model) const {
  const auto& set = model.placements();
  switch (kind()) {
    case Kind::Fixed:
      return "fixed" + format_placement(set[std::get<Fixed>(policy_).placement]);
    case Kind::IidRandom:
      return "iid";
    case Kind::Cyclic:
      return "cyclic(" + std::to_string(std::get<Cyclic>(policy_).order.size()) + ")";
    case Kind::WorstDrift:
      return "worst-drift approximation" + format_placement(set[std::get<WorstDrift>(policy_).result.placement]);
  }
  return "unknown";
}

const WorstDriftResult* TrajectoryPolicy::worst_drift_result() const {
  if (const auto* w = std::get_if<WorstDrift>(&policy_)) return &w->result;
  return nullptr;
}

}  // namespace mcusum
