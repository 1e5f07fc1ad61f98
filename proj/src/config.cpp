#include "mcusum/config.hpp"

#include <algorithm>
#include <initializer_list>
#include <numeric>
#include <set>

#include "mcusum/error.hpp"

namespace mcusum {

namespace {

void expect_object(const Json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
}

void expect_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  expect_object(j, where);
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!ok.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

const Json& require(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
  return j.at(key);
}

double get_number(const Json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  return j.get<double>();
}

std::int64_t get_integer(const Json& j, const std::string& where, std::int64_t min) {
  if (!j.is_number_integer()) throw ConfigError(where + ": expected an integer");
  const auto v = j.get<std::int64_t>();
  if (v < min) throw ConfigError(where + ": must be >= " + std::to_string(min));
  return v;
}

std::vector<double> get_numbers(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_number(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<int> get_placement(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of 1-based sensor indices");
  std::vector<int> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(static_cast<int>(get_integer(j[i], where + "[" + std::to_string(i) + "]", 1)));
  }
  return out;
}

Json distribution_to_json(const SensorDistribution& d) {
  if (d.is_gaussian()) {
    const auto& g = std::get<Gaussian>(d.params());
    return {{"gaussian", {{"mean", g.mean}, {"var", g.variance}}}};
  }
  return {{"bernoulli", {{"p", std::get<Bernoulli>(d.params()).p}}}};
}

SensorDistribution distribution_from_json(const Json& j, const std::string& where) {
  expect_keys(j, {"gaussian", "bernoulli"}, where);
  if (j.size() != 1) throw ConfigError(where + ": exactly one of 'gaussian' or 'bernoulli'");
  try {
    if (j.contains("gaussian")) {
      const Json& g = j.at("gaussian");
      const std::string w = where + ".gaussian";
      expect_keys(g, {"mean", "var"}, w);
      return SensorDistribution::gaussian(get_number(require(g, "mean", w), w + ".mean"),
                                          get_number(require(g, "var", w), w + ".var"));
    }
    const Json& b = j.at("bernoulli");
    const std::string w = where + ".bernoulli";
    expect_keys(b, {"p"}, w);
    return SensorDistribution::bernoulli(get_number(require(b, "p", w), w + ".p"));
  } catch (const InvalidParameter& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

PolicySpec policy_from_json(const Json& j, const std::string& where) {
  PolicySpec p;
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "iid") {
      p.kind = PolicySpec::Kind::IidRandom;
    } else if (s == "cyclic") {
      p.kind = PolicySpec::Kind::Cyclic;
    } else if (s == "worst_drift") {
      p.kind = PolicySpec::Kind::WorstDrift;
    } else {
      throw ConfigError(where + ": unknown policy '" + s + "'");
    }
    return p;
  }
  expect_keys(j, {"fixed", "iid", "cyclic", "worst_drift"}, where);
  if (j.size() != 1) throw ConfigError(where + ": exactly one policy kind per entry");
  if (j.contains("fixed")) {
    p.kind = PolicySpec::Kind::Fixed;
    p.placements.push_back(get_placement(j.at("fixed"), where + ".fixed"));
  } else if (j.contains("iid")) {
    p.kind = PolicySpec::Kind::IidRandom;
    const Json& v = j.at("iid");
    if (v.is_string()) {
      p.iid_source = v.get<std::string>();
      if (p.iid_source != "weights" && p.iid_source != "uniform") {
        throw ConfigError(where + ".iid: expected \"weights\", \"uniform\" or an array");
      }
    } else {
      p.iid_source = "explicit";
      p.iid_weights = get_numbers(v, where + ".iid");
    }
  } else if (j.contains("cyclic")) {
    p.kind = PolicySpec::Kind::Cyclic;
    const Json& v = j.at("cyclic");
    if (v.is_string() && v.get<std::string>() == "all") return p;
    if (!v.is_array() || v.empty()) throw ConfigError(where + ".cyclic: expected \"all\" or a list of placements");
    for (std::size_t i = 0; i < v.size(); ++i) {
      p.placements.push_back(get_placement(v[i], where + ".cyclic[" + std::to_string(i) + "]"));
    }
  } else {
    p.kind = PolicySpec::Kind::WorstDrift;
    const Json& v = j.at("worst_drift");
    expect_keys(v, {"samples"}, where + ".worst_drift");
    if (v.contains("samples")) {
      p.samples = static_cast<std::size_t>(get_integer(v.at("samples"), where + ".worst_drift.samples", 2));
    }
  }
  return p;
}

Json policy_to_json(const PolicySpec& p) {
  switch (p.kind) {
    case PolicySpec::Kind::Fixed:
      return {{"fixed", p.placements.front()}};
    case PolicySpec::Kind::IidRandom:
      if (p.iid_source == "explicit") return {{"iid", p.iid_weights}};
      return {{"iid", p.iid_source}};
    case PolicySpec::Kind::Cyclic:
      if (p.placements.empty()) return {{"cyclic", "all"}};
      return {{"cyclic", p.placements}};
    case PolicySpec::Kind::WorstDrift:
      return {{"worst_drift", {{"samples", p.samples}}}};
  }
  return {};
}

}  // namespace

Json model_to_json(const NetworkModel& model) {
  Json sensors = Json::array();
  for (const auto& s : model.sensors()) {
    sensors.push_back({{"pre", distribution_to_json(s.pre)}, {"post", distribution_to_json(s.post)}});
  }
  return {{"sensors", sensors}, {"anomaly_size", model.anomaly_size()}};
}

NetworkModel model_from_json(const Json& j) {
  expect_keys(j, {"sensors", "anomaly_size"}, "model");
  const Json& sensors = require(j, "sensors", "model");
  if (!sensors.is_array() || sensors.empty()) throw ConfigError("model.sensors: expected a non-empty array");
  const int m = static_cast<int>(get_integer(require(j, "anomaly_size", "model"), "model.anomaly_size", 0));
  const int L = static_cast<int>(sensors.size());
  if (m < 1 || m > L) {
    throw ConfigError("model.anomaly_size: need 1 <= m <= L, got m=" + std::to_string(m) + " L=" + std::to_string(L));
  }
  std::vector<SensorModel> out;
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    const std::string w = "model.sensors[" + std::to_string(i) + "]";
    expect_keys(sensors[i], {"pre", "post"}, w);
    auto pre = distribution_from_json(require(sensors[i], "pre", w), w + ".pre");
    auto post = distribution_from_json(require(sensors[i], "post", w), w + ".post");
    try {
      out.emplace_back(pre, post);
    } catch (const InvalidParameter& e) {
      throw ConfigError(w + ": " + e.what());
    }
  }
  try {
    return NetworkModel(std::move(out), m);
  } catch (const InvalidParameter& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
}

Json drift_report_to_json(const NetworkModel& model, const DriftReport& report) {
  Json rows = Json::array();
  const auto& set = model.placements();
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto e = static_cast<Eigen::Index>(i);
    rows.push_back({{"placement", set[i].one_based()},
                    {"weight", report.weights(e)},
                    {"drift", report.drift(e)},
                    {"stderr", report.std_error(e)},
                    {"support", static_cast<bool>(report.support[i])}});
  }
  return {{"placements", rows},
          {"kl_number", report.kl_number},
          {"kl_stderr", report.kl_std_error},
          {"min_drift", report.min_drift()},
          {"support_spread", report.support_spread()},
          {"samples", report.samples}};
}

Json optimality_check_to_json(const OptimalityCheck& c) {
  return {{"passed", c.passed()},
          {"support", c.support_ok},
          {"equal_drifts_on_support", c.equal_on_support_ok},
          {"larger_drifts_off_support", c.off_support_ok},
          {"common_drift_matches_kl", c.kl_consistent_ok},
          {"support_size", c.support_size},
          {"support_spread", c.support_spread},
          {"common_drift", c.common_drift},
          {"tolerance", c.tolerance},
          {"detail", c.detail}};
}

ExperimentConfig parse_experiment_config(const Json& j) {
  expect_keys(j,
              {"model", "detectors", "weights", "optimizer", "policies", "thresholds", "gamma", "calibration",
               "trials", "horizon", "drift_samples", "seed", "workers", "out"},
              "config");
  ExperimentConfig c;
  c.model_json = require(j, "model", "config");
  const NetworkModel model = model_from_json(c.model_json);
  c.model_json = model_to_json(model);

  if (j.contains("detectors")) {
    const Json& d = j.at("detectors");
    if (!d.is_array() || d.empty()) throw ConfigError("detectors: expected a non-empty array");
    c.detectors.clear();
    for (const auto& name : d) {
      if (!name.is_string()) throw ConfigError("detectors: expected names");
      try {
        c.detectors.push_back(parse_detector_kind(name.get<std::string>()));
      } catch (const InvalidParameter& e) {
        throw ConfigError(std::string("detectors: ") + e.what());
      }
    }
  }

  if (j.contains("weights")) {
    const Json& w = j.at("weights");
    if (w.is_string()) {
      const auto s = w.get<std::string>();
      if (s == "uniform") {
        c.weight_source = WeightSource::Uniform;
      } else if (s == "optimize") {
        c.weight_source = WeightSource::Optimize;
      } else {
        throw ConfigError("weights: expected \"uniform\", \"optimize\" or an array");
      }
    } else {
      c.weight_source = WeightSource::Explicit;
      c.explicit_weights = get_numbers(w, "weights");
    }
  }

  if (j.contains("optimizer")) {
    const Json& o = j.at("optimizer");
    expect_keys(o,
                {"step_size", "max_iters", "samples_per_gradient", "max_samples_per_gradient", "convergence_tol",
                 "support_epsilon", "report_samples"},
                "optimizer");
    auto& oc = c.optimizer;
    if (o.contains("step_size")) oc.step_size = get_number(o.at("step_size"), "optimizer.step_size");
    if (o.contains("max_iters")) oc.max_iters = static_cast<int>(get_integer(o.at("max_iters"), "optimizer.max_iters", 1));
    if (o.contains("samples_per_gradient")) {
      oc.samples_per_gradient =
          static_cast<std::size_t>(get_integer(o.at("samples_per_gradient"), "optimizer.samples_per_gradient", 2));
      oc.max_samples_per_gradient = std::max(oc.max_samples_per_gradient, oc.samples_per_gradient);
    }
    if (o.contains("max_samples_per_gradient")) {
      oc.max_samples_per_gradient = static_cast<std::size_t>(
          get_integer(o.at("max_samples_per_gradient"), "optimizer.max_samples_per_gradient", 2));
    }
    if (o.contains("convergence_tol")) oc.convergence_tol = get_number(o.at("convergence_tol"), "optimizer.convergence_tol");
    if (o.contains("support_epsilon")) oc.support_epsilon = get_number(o.at("support_epsilon"), "optimizer.support_epsilon");
    if (o.contains("report_samples")) {
      oc.report_samples = static_cast<std::size_t>(get_integer(o.at("report_samples"), "optimizer.report_samples", 2));
    }
  }

  if (j.contains("policies")) {
    const Json& p = j.at("policies");
    if (!p.is_array()) throw ConfigError("policies: expected an array");
    for (std::size_t i = 0; i < p.size(); ++i) c.policies.push_back(policy_from_json(p[i], "policies[" + std::to_string(i) + "]"));
  }
  if (c.policies.empty()) {
    PolicySpec iid;
    iid.kind = PolicySpec::Kind::IidRandom;
    c.policies.push_back(iid);
  }

  if (j.contains("thresholds")) c.thresholds = get_numbers(j.at("thresholds"), "thresholds");
  if (j.contains("gamma")) c.gamma_targets = get_numbers(j.at("gamma"), "gamma");
  if (j.contains("calibration")) {
    const Json& cal = j.at("calibration");
    expect_keys(cal, {"rel_tol"}, "calibration");
    if (cal.contains("rel_tol")) c.rel_tol = get_number(cal.at("rel_tol"), "calibration.rel_tol");
  }
  if (j.contains("trials")) {
    const Json& t = j.at("trials");
    expect_keys(t, {"mtfa", "delay"}, "trials");
    if (t.contains("mtfa")) c.mtfa_trials = static_cast<std::size_t>(get_integer(t.at("mtfa"), "trials.mtfa", 1));
    if (t.contains("delay")) c.delay_trials = static_cast<std::size_t>(get_integer(t.at("delay"), "trials.delay", 1));
  }
  if (j.contains("horizon")) {
    const Json& h = j.at("horizon");
    expect_keys(h, {"mtfa", "delay"}, "horizon");
    if (h.contains("mtfa") && !h.at("mtfa").is_null()) c.mtfa_horizon = get_integer(h.at("mtfa"), "horizon.mtfa", 1);
    if (h.contains("delay")) c.delay_horizon = get_integer(h.at("delay"), "horizon.delay", 1);
  }
  if (j.contains("drift_samples")) {
    c.drift_samples = static_cast<std::size_t>(get_integer(j.at("drift_samples"), "drift_samples", 2));
  }
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer()) throw ConfigError("seed: expected an integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("workers")) c.workers = static_cast<unsigned>(get_integer(j.at("workers"), "workers", 0));
  if (j.contains("out")) {
    if (!j.at("out").is_string()) throw ConfigError("out: expected a directory path");
    c.out_dir = j.at("out").get<std::string>();
  }

  // Cross-field validation, before any computation.
  if (c.weight_source == WeightSource::Explicit) {
    try {
      WeightVector(Eigen::Map<const Eigen::VectorXd>(c.explicit_weights.data(),
                                                     static_cast<Eigen::Index>(c.explicit_weights.size())))
          .check_compatible(model);
    } catch (const InvalidParameter& e) {
      throw ConfigError(std::string("weights: ") + e.what());
    }
  }
  try {
    c.optimizer.validate();
  } catch (const InvalidParameter& e) {
    throw ConfigError(std::string("optimizer: ") + e.what());
  }
  for (const auto& p : c.policies) {
    for (const auto& pl : p.placements) {
      try {
        model.placement_index(Placement::from_one_based(pl));
      } catch (const InvalidParameter& e) {
        throw ConfigError(std::string("policies: ") + e.what());
      }
    }
    if (p.iid_source == "explicit" && p.iid_weights.size() != model.placements().size()) {
      throw ConfigError("policies: iid weights need one entry per placement");
    }
  }
  for (auto kind : c.detectors) {
    if (kind == DetectorKind::NCusum && !model.is_homogeneous()) {
      throw ConfigError("N-CUSUM requires homogeneous model");
    }
  }
  if (!(c.rel_tol > 0.0 && c.rel_tol < 0.5)) throw ConfigError("calibration.rel_tol: must lie in (0, 0.5)");
  for (double g : c.gamma_targets) {
    if (!(g > 1.0)) throw ConfigError("gamma: targets must exceed 1");
  }
  return c;
}

Json to_json(const ExperimentConfig& c) {
  Json detectors = Json::array();
  for (auto d : c.detectors) detectors.push_back(std::string(to_string(d)));
  Json weights;
  switch (c.weight_source) {
    case WeightSource::Uniform:
      weights = "uniform";
      break;
    case WeightSource::Optimize:
      weights = "optimize";
      break;
    case WeightSource::Explicit:
      weights = c.explicit_weights;
      break;
  }
  Json policies = Json::array();
  for (const auto& p : c.policies) policies.push_back(policy_to_json(p));
  const auto& o = c.optimizer;
  return {{"model", c.model_json},
          {"detectors", detectors},
          {"weights", weights},
          {"optimizer",
           {{"step_size", o.step_size},
            {"max_iters", o.max_iters},
            {"samples_per_gradient", o.samples_per_gradient},
            {"max_samples_per_gradient", o.max_samples_per_gradient},
            {"convergence_tol", o.convergence_tol},
            {"support_epsilon", o.support_epsilon},
            {"report_samples", o.report_samples}}},
          {"policies", policies},
          {"thresholds", c.thresholds},
          {"gamma", c.gamma_targets},
          {"calibration", {{"rel_tol", c.rel_tol}}},
          {"trials", {{"mtfa", c.mtfa_trials}, {"delay", c.delay_trials}}},
          {"horizon", {{"mtfa", c.mtfa_horizon ? Json(*c.mtfa_horizon) : Json(nullptr)}, {"delay", c.delay_horizon}}},
          {"drift_samples", c.drift_samples},
          {"seed", c.seed},
          {"workers", c.workers},
          {"out", c.out_dir}};
}

ResolvedWeights resolve_weights(const ExperimentConfig& config, const NetworkModel& model) {
  const std::size_t K = model.placements().size();
  switch (config.weight_source) {
    case WeightSource::Uniform:
      return {WeightVector::uniform(K), std::nullopt};
    case WeightSource::Explicit:
      return {WeightVector(Eigen::Map<const Eigen::VectorXd>(config.explicit_weights.data(),
                                                             static_cast<Eigen::Index>(config.explicit_weights.size()))),
              std::nullopt};
    case WeightSource::Optimize: {
      OptimizerConfig oc = config.optimizer;
      oc.seed = config.seed;
      oc.workers = config.workers;
      OptimizationResult r = optimize_weights(model, oc);
      WeightVector w = r.weights;
      return {std::move(w), std::move(r)};
    }
  }
  throw InvalidUse("unreachable weight source");
}

std::vector<Detector> build_detectors(const ExperimentConfig& config, const NetworkModel& model,
                                      const WeightVector& weights) {
  std::vector<Detector> out;
  for (auto kind : config.detectors) {
    switch (kind) {
      case DetectorKind::MCusum:
        out.push_back(Detector::mcusum(model, weights));
        break;
      case DetectorKind::NCusum:
        out.push_back(Detector::ncusum(model));
        break;
      case DetectorKind::OCusum:
        out.push_back(Detector::ocusum(model));
        break;
    }
  }
  return out;
}

std::vector<LabeledPolicy> build_policies(const ExperimentConfig& config, const NetworkModel& model,
                                          const WeightVector& detector_weights) {
  std::vector<LabeledPolicy> out;
  const std::size_t K = model.placements().size();
  for (std::size_t i = 0; i < config.policies.size(); ++i) {
    const PolicySpec& p = config.policies[i];
    std::optional<TrajectoryPolicy> policy;
    switch (p.kind) {
      case PolicySpec::Kind::Fixed:
        policy = TrajectoryPolicy::fixed(model.placement_index(Placement::from_one_based(p.placements.front())));
        break;
      case PolicySpec::Kind::IidRandom:
        if (p.iid_source == "uniform") {
          policy = TrajectoryPolicy::iid_random(WeightVector::uniform(K));
        } else if (p.iid_source == "explicit") {
          policy = TrajectoryPolicy::iid_random(WeightVector(
              Eigen::Map<const Eigen::VectorXd>(p.iid_weights.data(), static_cast<Eigen::Index>(p.iid_weights.size()))));
        } else {
          policy = TrajectoryPolicy::iid_random(detector_weights);
        }
        break;
      case PolicySpec::Kind::Cyclic: {
        std::vector<std::size_t> order;
        if (p.placements.empty()) {
          order.resize(K);
          std::iota(order.begin(), order.end(), std::size_t{0});
        } else {
          for (const auto& pl : p.placements) order.push_back(model.placement_index(Placement::from_one_based(pl)));
        }
        policy = TrajectoryPolicy::cyclic(std::move(order));
        break;
      }
      case PolicySpec::Kind::WorstDrift:
        policy = TrajectoryPolicy::worst_drift(model, detector_weights, p.samples, derive_seed(config.seed, {i}),
                                               config.workers);
        break;
    }
    out.push_back({policy->label(model), std::move(*policy)});
  }
  return out;
}

CurveSettings curve_settings(const ExperimentConfig& c) {
  CurveSettings s;
  s.thresholds = c.thresholds;
  s.gamma_targets = c.gamma_targets;
  s.rel_tol = c.rel_tol;
  s.mtfa_trials = c.mtfa_trials;
  s.delay_trials = c.delay_trials;
  s.mtfa_horizon = c.mtfa_horizon;
  s.delay_horizon = c.delay_horizon;
  s.seed = c.seed;
  s.workers = c.workers;
  return s;
}

}  // namespace mcusum
