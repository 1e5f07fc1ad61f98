#include "mcusum/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "mcusum/config.hpp"
#include "mcusum/error.hpp"
#include "mcusum/evaluation.hpp"
#include "mcusum/parallel.hpp"

namespace mcusum {

namespace {

namespace fs = std::filesystem;

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<std::string> out_dir;
  std::vector<double> gamma;
  std::vector<double> thresholds;
  std::optional<std::size_t> trials;
  bool list = false;
};

ExperimentConfig load_config(const Overrides& o) {
  std::ifstream in(o.config_path);
  if (!in) throw ConfigError("cannot open config file '" + o.config_path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config file '" + o.config_path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  // Flags override file values; apply them before validation.
  if (o.seed) j["seed"] = *o.seed;
  if (o.workers) j["workers"] = *o.workers;
  if (o.out_dir) j["out"] = *o.out_dir;
  if (!o.gamma.empty()) {
    j["gamma"] = o.gamma;
    j.erase("thresholds");
  }
  if (!o.thresholds.empty()) {
    j["thresholds"] = o.thresholds;
    j.erase("gamma");
  }
  if (o.trials) {
    j["trials"] = Json{{"mtfa", *o.trials}, {"delay", *o.trials}};
  }
  return parse_experiment_config(j);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write '" + path.string() + "'");
  f << text;
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

Json provenance(const std::string& command, const ExperimentConfig& c, const WeightVector* weights,
                const std::vector<std::string>& outputs) {
  Json p = {{"command", command},
            {"version", kVersion},
            {"seed", c.seed},
            {"workers", resolve_workers(c.workers)},
            {"config", to_json(c)},
            {"outputs", outputs}};
  if (weights) {
    const auto& v = weights->values();
    p["resolved_weights"] = std::vector<double>(v.data(), v.data() + v.size());
  }
  return p;
}

std::string placement_string(const Placement& p) {
  std::ostringstream s;
  s << '[';
  const auto idx = p.one_based();
  for (std::size_t i = 0; i < idx.size(); ++i) s << (i ? "," : "") << idx[i];
  s << ']';
  return s.str();
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

int cmd_placements(const Overrides& o, std::ostream& out) {
  const ExperimentConfig c = load_config(o);
  const NetworkModel model = c.model();
  const auto& set = model.placements();
  out << set.size() << " placements (L=" << model.num_sensors() << ", m=" << model.anomaly_size() << ")\n";
  out << "first " << placement_string(set[0]) << "\n";
  out << "last " << placement_string(set[set.size() - 1]) << "\n";
  if (o.list) {
    for (std::size_t i = 0; i < set.size(); ++i) out << i + 1 << ' ' << placement_string(set[i]) << '\n';
  }
  return kExitOk;
}

int cmd_optimize(const Overrides& o, std::ostream& out, std::ostream& err) {
  ExperimentConfig c = load_config(o);
  c.weight_source = WeightSource::Optimize;
  const NetworkModel model = c.model();
  err << "optimizing weights over " << model.placements().size() << " placements\n";
  const ResolvedWeights rw = resolve_weights(c, model);
  const OptimizationResult& r = *rw.optimization;
  const OptimalityCheck check =
      verify_optimality_conditions(model, r.weights, r.report, combined_tolerance(r.report));

  Json j = {{"weights", to_std(r.weights.values())},
            {"kl_number", r.report.kl_number},
            {"kl_stderr", r.report.kl_std_error},
            {"converged", r.converged},
            {"iterations", r.iterations},
            {"final_step_size", r.final_step_size},
            {"final_samples_per_gradient", r.final_samples},
            {"projected_gradient_norm", r.projected_gradient_norm},
            {"warning", r.warning ? Json(*r.warning) : Json(nullptr)},
            {"drift_report", drift_report_to_json(model, r.report)},
            {"optimality_check", optimality_check_to_json(check)}};
  const fs::path dir(c.out_dir);
  write_json(dir / "optimize.json", j);
  write_json(dir / "optimize.provenance.json", provenance("optimize", c, &r.weights, {"optimize.json"}));
  if (r.warning) err << "warning: " << *r.warning << "\n";
  out << "I_alpha* = " << r.report.kl_number << " (stderr " << r.report.kl_std_error << ")\n";
  out << "drift spread on support = " << r.report.support_spread() << "\n";
  out << "optimality check " << (check.passed() ? "passed" : "failed: " + check.detail) << "\n";
  out << "wrote " << (dir / "optimize.json").string() << "\n";
  return kExitOk;
}

int cmd_drift(const Overrides& o, std::ostream& out, std::ostream& err) {
  const ExperimentConfig c = load_config(o);
  const NetworkModel model = c.model();
  const ResolvedWeights rw = resolve_weights(c, model);
  err << "estimating drifts with " << c.drift_samples << " samples\n";
  const DriftReport r = drift_report(model, rw.weights, c.drift_samples, derive_seed(c.seed, {stream_tag::kDrift}),
                                     c.workers, c.optimizer.support_epsilon);
  Eigen::Index worst = 0;
  r.drift.minCoeff(&worst);
  Json j = drift_report_to_json(model, r);
  j["worst_placement"] = model.placements()[static_cast<std::size_t>(worst)].one_based();
  const fs::path dir(c.out_dir);
  write_json(dir / "drift.json", j);
  write_json(dir / "drift.provenance.json", provenance("drift", c, &rw.weights, {"drift.json"}));
  out << "I_alpha = " << r.kl_number << " (stderr " << r.kl_std_error << ")\n";
  out << "minimum drift " << r.drift(worst) << " at placement "
      << placement_string(model.placements()[static_cast<std::size_t>(worst)]) << "\n";
  return kExitOk;
}

int cmd_calibrate(const Overrides& o, std::ostream& out, std::ostream& err) {
  const ExperimentConfig c = load_config(o);
  if (c.gamma_targets.empty()) throw ConfigError("calibrate: no gamma targets (use --gamma or \"gamma\")");
  const NetworkModel model = c.model();
  const ResolvedWeights rw = resolve_weights(c, model);
  const auto detectors = build_detectors(c, model, rw.weights);
  const auto policies = build_policies(c, model, rw.weights);
  const double max_gamma = *std::max_element(c.gamma_targets.begin(), c.gamma_targets.end());
  const auto horizon = c.mtfa_horizon.value_or(static_cast<std::int64_t>(std::ceil(50.0 * max_gamma)));

  Json rows = Json::array();
  for (std::size_t d = 0; d < detectors.size(); ++d) {
    FirstPassageProfile profile(detectors[d], model, policies.front().policy, Regime::PreChange,
                                SimulationOptions{c.mtfa_trials, horizon, derive_seed(c.seed, {d, 0, 0}), c.workers});
    for (double g : c.gamma_targets) {
      err << "calibrating " << detectors[d].name() << " to gamma=" << g << "\n";
      const CalibrationResult r = calibrate_threshold(profile, g, c.rel_tol);
      rows.push_back({{"detector", std::string(detectors[d].name())},
                      {"gamma", g},
                      {"b", r.threshold_b},
                      {"mtfa", r.mtfa.mean},
                      {"mtfa_ci", r.mtfa.ci_half_width},
                      {"censored", r.mtfa.censored},
                      {"within_tolerance", r.within_tolerance},
                      {"iterations", r.iterations}});
      out << detectors[d].name() << " gamma=" << g << " b=" << r.threshold_b << " mtfa=" << r.mtfa.mean << " +- "
          << r.mtfa.ci_half_width << "\n";
    }
  }
  const fs::path dir(c.out_dir);
  write_json(dir / "calibrate.json", rows);
  write_json(dir / "calibrate.provenance.json", provenance("calibrate", c, &rw.weights, {"calibrate.json"}));
  return kExitOk;
}

int cmd_curve(const Overrides& o, const std::string& name, std::ostream& out, std::ostream& err) {
  const ExperimentConfig c = load_config(o);
  if (name == "simulate" && c.thresholds.empty()) {
    throw ConfigError("simulate: no thresholds (use --threshold or \"thresholds\")");
  }
  const NetworkModel model = c.model();
  CurveSettings settings = curve_settings(c);
  settings.validate();
  const ResolvedWeights rw = resolve_weights(c, model);
  const auto detectors = build_detectors(c, model, rw.weights);
  const auto policies = build_policies(c, model, rw.weights);
  for (const auto& p : policies) {
    if (const auto* w = p.policy.worst_drift_result()) {
      err << "worst-drift approximation: placement "
          << placement_string(model.placements()[w->placement]) << " drift " << w->drift << "\n";
    }
  }
  err << "running " << name << " for " << detectors.size() << " detector(s), " << policies.size()
      << " policy(ies)\n";
  const auto points = tradeoff_curve(model, detectors, policies, settings);
  std::ostringstream csv;
  write_curve_csv(csv, points);
  const fs::path dir(c.out_dir);
  const std::string file = name + ".csv";
  write_text(dir / file, csv.str());
  write_json(dir / (name + ".provenance.json"), provenance(name, c, &rw.weights, {file}));
  out << "wrote " << points.size() << " rows to " << (dir / file).string() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quickest detection of a moving anomaly in a sensor network", "mcusum"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Overrides o;
  std::optional<std::size_t> workers;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "Experiment config (JSON)")->required();
    sub->add_option("--seed", o.seed, "Master seed");
    sub->add_option("--workers", workers, "Worker threads (0 = all cores)");
    sub->add_option("--out", o.out_dir, "Output directory");
  };

  auto* placements = app.add_subcommand("placements", "Summarize the anomaly placement set");
  add_common(placements);
  placements->add_flag("--list", o.list, "Print every placement");

  auto* optimize = app.add_subcommand("optimize", "Find the KL-minimizing mixture weights");
  add_common(optimize);

  auto* drift = app.add_subcommand("drift", "Per-placement drift report for the configured weights");
  add_common(drift);

  auto* calibrate = app.add_subcommand("calibrate", "Calibrate thresholds to target MTFA values");
  add_common(calibrate);
  calibrate->add_option("--gamma", o.gamma, "Target MTFA (repeatable)");
  calibrate->add_option("--trials", o.trials, "Trials per estimate");

  auto* simulate = app.add_subcommand("simulate", "Estimate MTFA and WADD at given thresholds");
  add_common(simulate);
  simulate->add_option("--threshold", o.thresholds, "Threshold b (repeatable)");
  simulate->add_option("--trials", o.trials, "Trials per estimate");

  auto* curve = app.add_subcommand("curve", "WADD versus MTFA trade-off curves");
  add_common(curve);
  curve->add_option("--gamma", o.gamma, "Target MTFA grid (repeatable)");
  curve->add_option("--threshold", o.thresholds, "Threshold grid (repeatable)");
  curve->add_option("--trials", o.trials, "Trials per estimate");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfigError;
  }
  if (workers) o.workers = static_cast<unsigned>(*workers);

  try {
    if (placements->parsed()) return cmd_placements(o, out);
    if (optimize->parsed()) return cmd_optimize(o, out, err);
    if (drift->parsed()) return cmd_drift(o, out, err);
    if (calibrate->parsed()) return cmd_calibrate(o, out, err);
    if (simulate->parsed()) return cmd_curve(o, "simulate", out, err);
    if (curve->parsed()) return cmd_curve(o, "curve", out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntimeError;
  }
  return kExitConfigError;
}

}  // namespace mcusum
