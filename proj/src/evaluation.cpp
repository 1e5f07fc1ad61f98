#include "mcusum/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>

#include "mcusum/error.hpp"
#include "mcusum/parallel.hpp"

namespace mcusum {

namespace {

constexpr int kMaxBisectionSteps = 60;

std::uint64_t regime_tag(Regime r) {
  return r == Regime::PreChange ? stream_tag::kTrialPreChange : stream_tag::kTrialPostChange;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void SimulationOptions::validate() const {
  if (n_trials < 1) throw InvalidParameter("simulation: n_trials must be >= 1");
  if (horizon < 1) throw InvalidParameter("simulation: horizon must be >= 1");
}

RunEstimate summarize(const std::vector<TrialRecord>& records) {
  Moments<double> m;
  RunEstimate e;
  for (const auto& r : records) {
    m.add(static_cast<double>(r.value()));
    if (r.censored()) ++e.censored;
  }
  e.n_trials = records.size();
  e.mean = records.empty() ? 0.0 : m.mean()(0);
  e.std_error = m.std_error()(0);
  e.ci_half_width = kZ95 * e.std_error;
  return e;
}

FirstPassageProfile::FirstPassageProfile(Detector detector, NetworkModel model, TrajectoryPolicy policy,
                                         Regime regime, SimulationOptions options)
    : detector_(std::move(detector)),
      model_(std::move(model)),
      policy_(std::move(policy)),
      regime_(regime),
      options_(options),
      reached_(-std::numeric_limits<double>::infinity()) {
  options_.validate();
  policy_.validate(model_);
  trials_.reserve(options_.n_trials);
  for (std::size_t i = 0; i < options_.n_trials; ++i) {
    trials_.push_back(Trial{derive_stream(options_.seed, {regime_tag(regime_), i}), std::normal_distribution<double>{},
                            DetectorState{}, -std::numeric_limits<double>::infinity(), {}});
  }
}

void FirstPassageProfile::advance(Trial& t, double b) const {
  const int L = model_.num_sensors();
  const auto& set = model_.placements();
  const bool anomalous = regime_ == Regime::PostChange;
  Eigen::VectorXd llrs(L);
  while (t.max_statistic < b && t.state.steps < options_.horizon) {
    const std::int64_t k = t.state.steps + 1;
    const std::size_t where = policy_.next_placement(k, t.rng);
    const Placement& placement = set[where];
    for (int l = 0; l < L; ++l) {
      const auto& s = model_.sensor(l);
      const double z = t.normal(t.rng);
      const bool hit = anomalous && placement.contains(l);
      llrs(l) = s.llr((hit ? s.post : s.pre).from_noise(z));
    }
    t.state = detector_.step(t.state, llrs, where);
    if (t.state.statistic > t.max_statistic) {
      t.max_statistic = t.state.statistic;
      t.record_highs.emplace_back(t.state.steps, t.state.statistic);
    }
  }
}

void FirstPassageProfile::extend_to(double b) {
  if (b <= reached_) return;
  parallel_for(trials_.size(), options_.workers, [&](std::size_t i) { advance(trials_[i], b); });
  reached_ = b;
}

std::vector<TrialRecord> FirstPassageProfile::records(double b) {
  extend_to(b);
  std::vector<TrialRecord> out;
  out.reserve(trials_.size());
  for (std::size_t i = 0; i < trials_.size(); ++i) {
    const auto& highs = trials_[i].record_highs;
    auto it = std::lower_bound(highs.begin(), highs.end(), b,
                               [](const std::pair<std::int64_t, double>& r, double v) { return r.second < v; });
    TrialRecord r{i, std::nullopt, options_.horizon};
    if (it != highs.end()) r.stop_time = it->first;
    out.push_back(r);
  }
  return out;
}

RunEstimate estimate_mtfa(const Detector& detector, const NetworkModel& model, const TrajectoryPolicy& policy,
                          double threshold_b, const SimulationOptions& options) {
  FirstPassageProfile p(detector, model, policy, Regime::PreChange, options);
  return p.estimate(threshold_b);
}

RunEstimate estimate_wadd(const Detector& detector, const NetworkModel& model, const TrajectoryPolicy& policy,
                          double threshold_b, const SimulationOptions& options) {
  FirstPassageProfile p(detector, model, policy, Regime::PostChange, options);
  return p.estimate(threshold_b);
}

CalibrationResult calibrate_threshold(FirstPassageProfile& profile, double gamma, double rel_tol) {
  if (!(gamma > 1.0)) throw InvalidParameter("calibration: target gamma must exceed 1");
  if (!(rel_tol > 0.0 && rel_tol < 0.5)) throw InvalidParameter("calibration: rel_tol must lie in (0, 0.5)");

  const double scale = profile.detector().threshold_scale();
  const double log_gamma = std::log(gamma);
  double lo = scale * log_gamma / 2.0;
  double hi = scale * (2.0 * log_gamma + 5.0);
  const auto initial = std::make_pair(lo, hi);
  auto within = [&](const RunEstimate& e) { return std::abs(e.mean - gamma) / gamma <= rel_tol; };

  CalibrationResult result;
  result.bracket = initial;
  const RunEstimate lo_est = profile.estimate(lo);
  ++result.iterations;
  if (within(lo_est)) return {lo, lo_est, result.iterations, true, initial};

  bool widened = false;
  std::optional<RunEstimate> hi_est;
  if (lo_est.mean > gamma) {
    // The lower end already overshoots: search below it instead, down to b = 0.
    widened = true;
    hi = lo;
    hi_est = lo_est;
    lo = 0.0;
    result.bracket = {lo, hi};
  }
  for (;;) {
    for (int step = 0; step < kMaxBisectionSteps; ++step) {
      const double mid = 0.5 * (lo + hi);
      const RunEstimate e = profile.estimate(mid);
      ++result.iterations;
      if (within(e)) return {mid, e, result.iterations, true, result.bracket};
      if (e.mean < gamma) {
        lo = mid;
      } else {
        hi = mid;
        hi_est = e;
      }
      if (hi - lo <= 1e-9 * std::max(1.0, std::abs(hi))) break;
    }
    if (!hi_est) {
      hi_est = profile.estimate(hi);
      ++result.iterations;
    }
    if (hi_est->mean >= gamma) {
      return {hi, *hi_est, result.iterations, within(*hi_est), result.bracket};
    }
    if (widened) {
      throw CalibrationError("calibration: MTFA at b=" + fmt(hi) + " is " + fmt(hi_est->mean) +
                             ", still below gamma=" + fmt(gamma) + " after widening the bracket");
    }
    widened = true;
    lo = hi;
    hi = 2.0 * hi;
    hi_est.reset();
    result.bracket = {initial.first, hi};
  }
}

CalibrationResult calibrate_threshold(const Detector& detector, const NetworkModel& model,
                                      const TrajectoryPolicy& policy, double gamma, double rel_tol,
                                      const SimulationOptions& options) {
  FirstPassageProfile p(detector, model, policy, Regime::PreChange, options);
  return calibrate_threshold(p, gamma, rel_tol);
}

void CurveSettings::validate() const {
  if (thresholds.empty() == gamma_targets.empty()) {
    throw InvalidParameter("curve: give either a threshold grid or gamma targets (exactly one)");
  }
  if (mtfa_trials < 1 || delay_trials < 1) throw InvalidParameter("curve: trial counts must be >= 1");
  if (mtfa_horizon && *mtfa_horizon < 1) throw InvalidParameter("curve: mtfa horizon must be >= 1");
  if (delay_horizon < 1) throw InvalidParameter("curve: delay horizon must be >= 1");
  for (double g : gamma_targets) {
    if (!(g > 1.0)) throw InvalidParameter("curve: gamma targets must exceed 1");
  }
  for (double b : thresholds) {
    if (!std::isfinite(b)) throw InvalidParameter("curve: thresholds must be finite");
  }
}

std::vector<CurvePoint> tradeoff_curve(const NetworkModel& model, const std::vector<Detector>& detectors,
                                       const std::vector<LabeledPolicy>& policies, const CurveSettings& settings) {
  settings.validate();
  if (detectors.empty()) throw InvalidParameter("curve: no detectors");
  if (policies.empty()) throw InvalidParameter("curve: no trajectory policies");
  for (const auto& p : policies) p.policy.validate(model);

  const bool targets = !settings.gamma_targets.empty();
  const std::vector<double>& grid = targets ? settings.gamma_targets : settings.thresholds;

  std::vector<CurvePoint> out;
  for (std::size_t d = 0; d < detectors.size(); ++d) {
    const Detector& det = detectors[d];
    const bool oracle = det.kind() == DetectorKind::OCusum;

    std::int64_t mtfa_horizon = 0;
    if (settings.mtfa_horizon) {
      mtfa_horizon = *settings.mtfa_horizon;
    } else if (targets) {
      mtfa_horizon = static_cast<std::int64_t>(std::ceil(50.0 * *std::max_element(grid.begin(), grid.end())));
    } else {
      const double bmax = *std::max_element(grid.begin(), grid.end());
      mtfa_horizon = static_cast<std::int64_t>(std::clamp(50.0 * std::exp(bmax / det.threshold_scale()), 1e3, 1e8));
    }

    // Pre-change behavior depends on the policy only for the oracle.
    const std::size_t pre_profiles = oracle ? policies.size() : 1;
    std::vector<FirstPassageProfile> pre;
    for (std::size_t p = 0; p < pre_profiles; ++p) {
      pre.emplace_back(det, model, policies[p].policy, Regime::PreChange,
                       SimulationOptions{settings.mtfa_trials, mtfa_horizon, derive_seed(settings.seed, {d, p, 0}),
                                         settings.workers});
    }

    // thresholds[p][g]: the b used for grid point g under policy p.
    std::vector<std::vector<double>> b_of(pre_profiles, std::vector<double>(grid.size()));
    std::vector<std::vector<RunEstimate>> mtfa_of(pre_profiles, std::vector<RunEstimate>(grid.size()));
    for (std::size_t p = 0; p < pre_profiles; ++p) {
      for (std::size_t g = 0; g < grid.size(); ++g) {
        try {
          if (targets) {
            const CalibrationResult c = calibrate_threshold(pre[p], grid[g], settings.rel_tol);
            b_of[p][g] = c.threshold_b;
            mtfa_of[p][g] = c.mtfa;
          } else {
            b_of[p][g] = grid[g];
            mtfa_of[p][g] = pre[p].estimate(grid[g]);
          }
        } catch (const Error& e) {
          throw Error(std::string(e.what()) + " [detector=" + std::string(det.name()) + ", policy=" +
                      policies[p].label + ", " + (targets ? "gamma=" : "b=") + fmt(grid[g]) + "]");
        }
      }
    }

    std::vector<CurvePoint> maxima(grid.size());
    for (std::size_t p = 0; p < policies.size(); ++p) {
      const std::size_t pp = oracle ? p : 0;
      FirstPassageProfile post(det, model, policies[p].policy, Regime::PostChange,
                               SimulationOptions{settings.delay_trials, settings.delay_horizon,
                                                 derive_seed(settings.seed, {d, p, 1}), settings.workers});
      for (std::size_t g = 0; g < grid.size(); ++g) {
        CurvePoint pt;
        pt.detector = std::string(det.name());
        pt.policy = policies[p].label;
        pt.threshold_b = b_of[pp][g];
        if (targets) pt.gamma_target = grid[g];
        pt.mtfa = mtfa_of[pp][g];
        try {
          pt.wadd = post.estimate(pt.threshold_b);
        } catch (const Error& e) {
          throw Error(std::string(e.what()) + " [detector=" + pt.detector + ", policy=" + pt.policy +
                      ", b=" + fmt(pt.threshold_b) + "]");
        }
        if (p == 0 || pt.wadd.mean > maxima[g].wadd.mean) {
          maxima[g] = pt;
          maxima[g].policy = "max";
        }
        out.push_back(std::move(pt));
      }
    }
    if (policies.size() > 1) out.insert(out.end(), maxima.begin(), maxima.end());
  }
  return out;
}

void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& points) {
  out << kCurveCsvHeader << '\n';
  for (const auto& p : points) {
    out << p.detector << ',' << p.policy << ',' << fmt(p.threshold_b) << ',' << fmt(p.mtfa.mean) << ','
        << fmt(p.mtfa.ci_half_width) << ',' << fmt(p.wadd.mean) << ',' << fmt(p.wadd.ci_half_width) << ','
        << p.wadd.n_trials << ',' << (p.mtfa.censored + p.wadd.censored) << '\n';
  }
}

double wadd_at_mtfa(std::vector<CurvePoint> curve, double mtfa) {
  if (curve.empty()) throw InvalidParameter("wadd_at_mtfa: empty curve");
  if (curve.size() == 1) return curve.front().wadd.mean;
  std::sort(curve.begin(), curve.end(),
            [](const CurvePoint& a, const CurvePoint& b) { return a.mtfa.mean < b.mtfa.mean; });
  const double x = std::log(mtfa);
  std::size_t hi = 1;
  while (hi + 1 < curve.size() && std::log(curve[hi].mtfa.mean) < x) ++hi;
  const CurvePoint& a = curve[hi - 1];
  const CurvePoint& b = curve[hi];
  const double xa = std::log(a.mtfa.mean);
  const double xb = std::log(b.mtfa.mean);
  if (xb == xa) return 0.5 * (a.wadd.mean + b.wadd.mean);
  return a.wadd.mean + (b.wadd.mean - a.wadd.mean) * (x - xa) / (xb - xa);
}

}  // namespace mcusum
