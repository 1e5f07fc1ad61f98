#include "mcusum/weights.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mcusum/error.hpp"
#include "mcusum/log_sum_exp.hpp"
#include "mcusum/parallel.hpp"
#include "mcusum/simplex.hpp"
#include "mcusum/stats.hpp"

namespace mcusum {

namespace {

constexpr std::size_t kBlockSize = 4096;

/// Per-sample mixture llr under every placement, all driven by one
/// standard-normal noise vector. Layout of the accumulated vector:
///   [0, K)      mixture llr with the anomaly at placement i
///   [K, 2K)     entry i minus entry K-1 (paired difference to the reference)
///   2K          sum_i alpha_i * entry i
class CommonNoiseDrifts {
 public:
  CommonNoiseDrifts(const NetworkModel& model, const WeightVector& weights)
      : model_(model), set_(model.placements()), alpha_(weights.values()) {
    weights.check_compatible(model);
    for (std::size_t i = 0; i < set_.size(); ++i) {
      if (weights[i] > 0.0) {
        support_.push_back(i);
        log_alpha_.push_back(std::log(weights[i]));
      }
    }
    if (support_.empty()) throw DomainError("drift: all weights are zero");

    // For each placement E, the support placements sharing a sensor with E and
    // the shared sensors. Only these terms change when the anomaly sits at E.
    const int L = model.num_sensors();
    std::vector<char> in_e(static_cast<std::size_t>(L), 0);
    overlap_begin_.push_back(0);
    for (std::size_t i = 0; i < set_.size(); ++i) {
      for (int l : set_[i].indices()) in_e[static_cast<std::size_t>(l)] = 1;
      for (std::size_t j = 0; j < support_.size(); ++j) {
        const std::size_t first = shared_.size();
        for (int l : set_[support_[j]].indices()) {
          if (in_e[static_cast<std::size_t>(l)]) shared_.push_back(l);
        }
        if (shared_.size() > first) overlaps_.push_back({j, first, shared_.size()});
      }
      for (int l : set_[i].indices()) in_e[static_cast<std::size_t>(l)] = 0;
      overlap_begin_.push_back(overlaps_.size());
    }
  }

  Eigen::Index dim() const { return 2 * static_cast<Eigen::Index>(set_.size()) + 1; }

  Moments<double> run_block(std::size_t n, Rng& rng) const {
    const int L = model_.num_sensors();
    const auto K = static_cast<Eigen::Index>(set_.size());
    const auto S = static_cast<Eigen::Index>(support_.size());
    std::normal_distribution<double> normal;
    Eigen::VectorXd base(L), delta(L), base_sums(S), scaled(S), terms(S);
    Eigen::ArrayXd row(dim());
    Moments<double> acc(dim());

    for (std::size_t s = 0; s < n; ++s) {
      for (int l = 0; l < L; ++l) {
        const double z = normal(rng);
        const auto& sensor = model_.sensor(l);
        base(l) = sensor.llr(sensor.pre.from_noise(z));
        delta(l) = sensor.llr(sensor.post.from_noise(z)) - base(l);
      }
      for (Eigen::Index j = 0; j < S; ++j) {
        base_sums(j) = log_alpha_[static_cast<std::size_t>(j)] + placement_sum(set_[support_[static_cast<std::size_t>(j)]], base);
      }
      const double shift = base_sums.maxCoeff();
      scaled = (base_sums.array() - shift).exp().matrix();
      const double total = scaled.sum();

      for (Eigen::Index i = 0; i < K; ++i) {
        double sum = total;
        for (std::size_t o = overlap_begin_[static_cast<std::size_t>(i)]; o < overlap_begin_[static_cast<std::size_t>(i) + 1]; ++o) {
          const Overlap& ov = overlaps_[o];
          double d = 0.0;
          for (std::size_t q = ov.first; q < ov.last; ++q) d += delta(shared_[q]);
          sum += scaled(static_cast<Eigen::Index>(ov.support)) * std::expm1(d);
        }
        if (sum > 1e-8 * total && std::isfinite(sum)) {
          row(i) = shift + std::log(sum);
        } else {
          // Cancellation or overflow in the shortcut: evaluate every term.
          terms = base_sums;
          for (std::size_t o = overlap_begin_[static_cast<std::size_t>(i)]; o < overlap_begin_[static_cast<std::size_t>(i) + 1]; ++o) {
            const Overlap& ov = overlaps_[o];
            for (std::size_t q = ov.first; q < ov.last; ++q) terms(static_cast<Eigen::Index>(ov.support)) += delta(shared_[q]);
          }
          row(i) = log_sum_exp(terms);
        }
      }
      row.segment(K, K) = row.head(K) - row(K - 1);
      row(2 * K) = (alpha_.array() * row.head(K)).sum();
      acc.add(row);
    }
    return acc;
  }

  Moments<double> run(std::size_t n, std::uint64_t seed, std::uint64_t tag, unsigned workers) const {
    const std::size_t blocks = (n + kBlockSize - 1) / kBlockSize;
    std::vector<Moments<double>> parts(blocks, Moments<double>(dim()));
    parallel_for(blocks, workers, [&](std::size_t b) {
      Rng rng = derive_stream(seed, {tag, b});
      const std::size_t count = std::min(kBlockSize, n - b * kBlockSize);
      parts[b] = run_block(count, rng);
    });
    Moments<double> total(dim());
    for (const auto& p : parts) total.merge(p);
    return total;
  }

 private:
  const NetworkModel& model_;
  const PlacementSet& set_;
  Eigen::VectorXd alpha_;
  std::vector<std::size_t> support_;
  std::vector<double> log_alpha_;
  struct Overlap {
    std::size_t support, first, last;
  };
  std::vector<Overlap> overlaps_;
  std::vector<std::size_t> overlap_begin_;
  std::vector<int> shared_;
};

Estimate mean_of(const Moments<double>& m) { return {m.mean()(0), m.std_error()(0)}; }

void require_samples(std::size_t n) {
  if (n < 2) throw InvalidParameter("need at least 2 Monte-Carlo samples, got " + std::to_string(n));
}

double combined_drift_tolerance(const Eigen::VectorXd& drift_std_error, std::size_t n, std::size_t report_samples) {
  std::vector<double> se(drift_std_error.data(), drift_std_error.data() + drift_std_error.size());
  std::sort(se.begin(), se.end(), std::greater<>());
  const double a = se.empty() ? 0.0 : se[0];
  const double b = se.size() > 1 ? se[1] : 0.0;
  return 3.0 * std::hypot(a, b) * std::sqrt(static_cast<double>(n) / static_cast<double>(report_samples));
}

}  // namespace

double DriftReport::support_spread() const {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < drift.size(); ++i) {
    if (!support[static_cast<std::size_t>(i)]) continue;
    lo = std::min(lo, drift(i));
    hi = std::max(hi, drift(i));
  }
  return hi >= lo ? hi - lo : 0.0;
}

Estimate estimate_drift(const NetworkModel& model, const WeightVector& weights, const Placement& placement,
                        std::size_t n_samples, Rng& rng) {
  require_samples(n_samples);
  model.placement_index(placement);
  const MixtureLlr mixture(model, weights);
  Moments<double> acc;
  for (std::size_t s = 0; s < n_samples; ++s) acc.add(mixture(sample_observation(model, placement, rng)));
  return mean_of(acc);
}

Estimate estimate_kl_number(const NetworkModel& model, const WeightVector& weights, std::size_t n_samples,
                            Rng& rng) {
  require_samples(n_samples);
  const MixtureLlr mixture(model, weights);
  const auto& set = model.placements();
  std::vector<double> cumulative(weights.size());
  double c = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) cumulative[i] = (c += weights[i]);
  std::uniform_real_distribution<double> unit(0.0, c);
  Moments<double> acc;
  for (std::size_t s = 0; s < n_samples; ++s) {
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), unit(rng));
    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), set.size() - 1);
    acc.add(mixture(sample_observation(model, set[idx], rng)));
  }
  return mean_of(acc);
}

GradientEstimate estimate_gradient(const NetworkModel& model, const WeightVector& weights, std::size_t n_samples,
                                   std::uint64_t seed, unsigned workers) {
  require_samples(n_samples);
  const CommonNoiseDrifts pass(model, weights);
  const auto K = static_cast<Eigen::Index>(model.placements().size());
  const Moments<double> m = pass.run(n_samples, seed, stream_tag::kGradient, workers);
  const Eigen::ArrayXd se = m.std_error();
  GradientEstimate g;
  g.drift = m.mean().head(K).matrix();
  g.drift_std_error = se.head(K).matrix();
  g.gradient = m.mean().segment(K, K - 1).matrix();
  g.std_error = se.segment(K, K - 1).matrix();
  g.kl_number = m.mean()(2 * K);
  g.kl_std_error = se(2 * K);
  return g;
}

DriftReport drift_report(const NetworkModel& model, const WeightVector& weights, std::size_t n_samples,
                         std::uint64_t seed, unsigned workers, double support_epsilon) {
  require_samples(n_samples);
  const CommonNoiseDrifts pass(model, weights);
  const auto K = static_cast<Eigen::Index>(model.placements().size());
  const Moments<double> m = pass.run(n_samples, seed, stream_tag::kReport, workers);
  DriftReport r;
  r.weights = weights.values();
  r.drift = m.mean().head(K).matrix();
  r.std_error = m.std_error().head(K).matrix();
  r.kl_number = m.mean()(2 * K);
  r.kl_std_error = m.std_error()(2 * K);
  r.samples = n_samples;
  r.support.resize(static_cast<std::size_t>(K));
  for (Eigen::Index i = 0; i < K; ++i) r.support[static_cast<std::size_t>(i)] = weights.values()(i) > support_epsilon;
  return r;
}

void OptimizerConfig::validate() const {
  if (!(step_size > 0.0)) throw InvalidParameter("optimizer: step_size must be > 0");
  if (max_iters < 1) throw InvalidParameter("optimizer: max_iters must be >= 1");
  if (samples_per_gradient < 2) throw InvalidParameter("optimizer: samples_per_gradient must be >= 2");
  if (max_samples_per_gradient < samples_per_gradient) {
    throw InvalidParameter("optimizer: max_samples_per_gradient must be >= samples_per_gradient");
  }
  if (!(convergence_tol > 0.0)) throw InvalidParameter("optimizer: convergence_tol must be > 0");
  if (!(support_epsilon > 0.0)) throw InvalidParameter("optimizer: support_epsilon must be > 0");
  if (report_samples < 2) throw InvalidParameter("optimizer: report_samples must be >= 2");
}

OptimizationResult optimize_weights(const NetworkModel& model, const OptimizerConfig& config) {
  config.validate();
  const std::size_t K = model.placements().size();
  auto finish = [&](WeightVector w, int iters, bool converged, std::optional<std::string> warning, double eta,
                    std::size_t n, double pg) {
    DriftReport report = drift_report(model, w, config.report_samples, derive_seed(config.seed, {stream_tag::kReport}),
                                      config.workers, config.support_epsilon);
    return OptimizationResult{std::move(w), std::move(report), iters, converged, std::move(warning), eta, n, pg};
  };

  if (K == 1) return finish(WeightVector::uniform(1), 0, true, std::nullopt, config.step_size, 0, 0.0);

  double eta = config.step_size;
  std::size_t n = config.samples_per_gradient;
  std::uint64_t evals = 0;
  auto evaluate = [&](const Eigen::VectorXd& alpha) {
    return estimate_gradient(model, WeightVector::normalized(alpha), n,
                             derive_seed(config.seed, {stream_tag::kGradient, evals++}), config.workers);
  };

  // Descent runs on the full weight vector with the drift vector as gradient.
  // Projected onto the simplex this is the same direction as the reduced
  // gradient, but without the stiff all-ones direction that the dependent
  // last coordinate introduces, so much larger steps stay stable.
  Eigen::VectorXd alpha = WeightVector::uniform(K).values();
  GradientEstimate g = evaluate(alpha);
  double pg_norm = 0.0;

  for (int it = 1; it <= config.max_iters; ++it) {
    const Eigen::VectorXd candidate = project_onto_simplex(Eigen::VectorXd(alpha - eta * g.drift));
    pg_norm = ((alpha - candidate) / eta).lpNorm<Eigen::Infinity>();
    const double noise = g.drift_std_error.maxCoeff();
    // Drift spread on the support is about twice the projected gradient, and
    // the final report resolves spreads down to 3 combined standard errors.
    // Aim below half of that so the report can confirm equal drifts.
    const double report_tol = combined_drift_tolerance(g.drift_std_error, n, config.report_samples);
    const double target = std::min(config.convergence_tol, 0.5 * report_tol);

    if (pg_norm < target) {
      if (3.0 * noise < target || n >= config.max_samples_per_gradient) {
        return finish(WeightVector::normalized(alpha), it, true, std::nullopt, eta, n, pg_norm);
      }
      n = std::min(2 * n, config.max_samples_per_gradient);
      g = evaluate(alpha);
      continue;
    }
    // The step direction is dominated by noise: sample more before moving on.
    if (pg_norm < 3.0 * noise && n < config.max_samples_per_gradient) {
      n = std::min(2 * n, config.max_samples_per_gradient);
    }

    GradientEstimate next = evaluate(candidate);
    const double rise_tol = 3.0 * std::hypot(g.kl_std_error, next.kl_std_error);
    if (next.kl_number > g.kl_number + rise_tol) {
      eta *= 0.5;
      continue;
    }
    // I can be nearly flat along a step that still overshoots badly (two
    // near-identical placements trading weight back and forth), so also halve
    // when the slope along the step flips sign and keeps more than half its
    // size, i.e. the step went past 1.5 times the line minimum.
    const Eigen::VectorXd step = candidate - alpha;
    const double slope_before = step.dot(g.drift);
    const double slope_after = step.dot(next.drift);
    const double slope_noise = std::hypot(step.cwiseAbs().dot(g.drift_std_error),
                                          step.cwiseAbs().dot(next.drift_std_error));
    if (slope_after - 0.5 * std::abs(slope_before) > 3.0 * slope_noise) {
      eta *= 0.5;
      continue;
    }
    alpha = candidate;
    g = std::move(next);
  }

  std::ostringstream msg;
  msg << "optimizer did not converge within " << config.max_iters << " iterations (projected gradient norm "
      << pg_norm << ", tolerance " << config.convergence_tol << "); returning the last iterate";
  return finish(WeightVector::normalized(alpha), config.max_iters, false, msg.str(), eta, n, pg_norm);
}

double combined_tolerance(const DriftReport& report, double multiplier) {
  if (report.std_error.size() == 0) return 0.0;
  // The largest pairwise combined error comes from the two largest errors.
  std::vector<double> se(report.std_error.data(), report.std_error.data() + report.std_error.size());
  std::sort(se.begin(), se.end(), std::greater<>());
  const double a = se[0];
  const double b = se.size() > 1 ? se[1] : 0.0;
  return multiplier * std::hypot(a, b);
}

OptimalityCheck verify_optimality_conditions(const NetworkModel& model, const WeightVector& weights,
                                             const DriftReport& report, double tol) {
  weights.check_compatible(model);
  const std::size_t K = weights.size();
  if (static_cast<std::size_t>(report.drift.size()) != K || report.support.size() != K) {
    throw InvalidParameter("optimality check: report does not match the weight vector");
  }
  OptimalityCheck c;
  c.tolerance = tol;
  std::ostringstream detail;

  std::vector<std::size_t> on, off;
  for (std::size_t i = 0; i < K; ++i) (report.support[i] ? on : off).push_back(i);
  c.support_size = on.size();
  if (model.anomaly_size() == 1) {
    c.support_ok = on.size() == K;
    if (!c.support_ok) detail << "support has " << on.size() << " of " << K << " placements, m=1 needs all; ";
  } else {
    c.support_ok = on.size() >= std::min<std::size_t>(2, K);
    if (!c.support_ok) detail << "support is a single placement (corner point); ";
  }

  if (on.empty()) {
    c.detail = detail.str() + "empty support";
    return c;
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  double weighted = 0.0;
  double mass = 0.0;
  for (std::size_t i : on) {
    const double d = report.drift(static_cast<Eigen::Index>(i));
    lo = std::min(lo, d);
    hi = std::max(hi, d);
    weighted += weights[i] * d;
    mass += weights[i];
  }
  c.support_spread = hi - lo;
  c.common_drift = weighted / mass;
  c.equal_on_support_ok = c.support_spread <= tol;
  if (!c.equal_on_support_ok) detail << "support drift spread " << c.support_spread << " > " << tol << "; ";

  c.off_support_ok = true;
  for (std::size_t i : off) {
    const double d = report.drift(static_cast<Eigen::Index>(i));
    if (!(d > c.common_drift - tol)) {
      c.off_support_ok = false;
      detail << "placement " << i << " off support has drift " << d << " below common drift " << c.common_drift
             << "; ";
    }
  }

  c.kl_consistent_ok = std::abs(c.common_drift - report.kl_number) <= tol;
  if (!c.kl_consistent_ok) {
    detail << "common drift " << c.common_drift << " differs from I " << report.kl_number << "; ";
  }
  c.detail = detail.str();
  return c;
}

}  // namespace mcusum
