#include "mcusum/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mcusum/error.hpp"

namespace mcusum {

namespace {

double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

SensorDistribution SensorDistribution::gaussian(double mean, double variance) {
  if (!std::isfinite(mean) || !std::isfinite(variance) || !(variance > 0.0)) {
    throw InvalidParameter("gaussian: need finite mean and variance > 0, got mean=" +
                           std::to_string(mean) + " var=" + std::to_string(variance));
  }
  return SensorDistribution(Gaussian{mean, variance});
}

SensorDistribution SensorDistribution::bernoulli(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw InvalidParameter("bernoulli: p must lie strictly inside (0, 1), got " + std::to_string(p));
  }
  return SensorDistribution(Bernoulli{p});
}

double SensorDistribution::log_density(double x) const {
  return std::visit(
      Overloaded{
          [x](const Gaussian& g) {
            const double d = x - g.mean;
            return -0.5 * std::log(2.0 * std::numbers::pi * g.variance) - d * d / (2.0 * g.variance);
          },
          [x](const Bernoulli& b) {
            if (x == 1.0) return std::log(b.p);
            if (x == 0.0) return std::log1p(-b.p);
            return -std::numeric_limits<double>::infinity();
          },
      },
      params_);
}

double SensorDistribution::from_noise(double z) const {
  return std::visit(Overloaded{
                        [z](const Gaussian& g) { return g.mean + std::sqrt(g.variance) * z; },
                        [z](const Bernoulli& b) { return standard_normal_cdf(z) > 1.0 - b.p ? 1.0 : 0.0; },
                    },
                    params_);
}

double SensorDistribution::sample(Rng& rng) const {
  std::normal_distribution<double> normal;
  return from_noise(normal(rng));
}

double SensorDistribution::entropy() const {
  return std::visit(Overloaded{
                        [](const Gaussian& g) {
                          return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * g.variance);
                        },
                        [](const Bernoulli& b) { return -b.p * std::log(b.p) - (1.0 - b.p) * std::log1p(-b.p); },
                    },
                    params_);
}

double SensorDistribution::mean() const {
  return std::visit(Overloaded{[](const Gaussian& g) { return g.mean; }, [](const Bernoulli& b) { return b.p; }},
                    params_);
}

double SensorDistribution::variance() const {
  return std::visit(Overloaded{[](const Gaussian& g) { return g.variance; },
                               [](const Bernoulli& b) { return b.p * (1.0 - b.p); }},
                    params_);
}

double kl_divergence(const SensorDistribution& f, const SensorDistribution& g) {
  if (f.is_gaussian() && g.is_gaussian()) {
    const auto& a = std::get<Gaussian>(f.params());
    const auto& b = std::get<Gaussian>(g.params());
    const double d = a.mean - b.mean;
    return 0.5 * (std::log(b.variance / a.variance) + (a.variance + d * d) / b.variance - 1.0);
  }
  if (f.is_bernoulli() && g.is_bernoulli()) {
    const double p = std::get<Bernoulli>(f.params()).p;
    const double q = std::get<Bernoulli>(g.params()).p;
    return p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
  }
  throw InvalidParameter("kl_divergence: distributions must be of the same kind");
}

SensorModel::SensorModel(SensorDistribution pre_, SensorDistribution post_) : pre(pre_), post(post_) {
  if (pre.params().index() != post.params().index()) {
    throw InvalidParameter("sensor model: pre and post distributions must be of the same kind");
  }
  if (pre == post) throw InvalidParameter("sensor model: pre and post distributions must differ");
}

double SensorModel::llr(double x) const {
  const double lg = pre.log_density(x);
  if (!std::isfinite(lg)) {
    throw DomainError("llr: non-anomalous density is zero at x=" + std::to_string(x));
  }
  return post.log_density(x) - lg;
}

double SensorModel::llr_variance_pre() const {
  if (pre.is_bernoulli()) {
    const double q = std::get<Bernoulli>(pre.params()).p;
    const double spread = llr(1.0) - llr(0.0);
    return q * (1.0 - q) * spread * spread;
  }
  // llr(x) = c + b x + a x^2 with X = m + s Z:
  // Var = (2 a m s + b s)^2 + 2 a^2 s^4.
  const auto& g = std::get<Gaussian>(pre.params());
  const auto& f = std::get<Gaussian>(post.params());
  const double a = 0.5 / g.variance - 0.5 / f.variance;
  const double b = f.mean / f.variance - g.mean / g.variance;
  const double m = g.mean;
  const double s = std::sqrt(g.variance);
  const double lin = 2.0 * a * m * s + b * s;
  return lin * lin + 2.0 * a * a * s * s * s * s;
}

Placement::Placement(std::vector<int> zero_based) : indices_(std::move(zero_based)) {
  for (std::size_t i = 1; i < indices_.size(); ++i) {
    if (indices_[i] <= indices_[i - 1]) {
      throw InvalidParameter("placement: indices must be strictly increasing");
    }
  }
  if (!indices_.empty() && indices_.front() < 0) throw InvalidParameter("placement: negative sensor index");
}

Placement Placement::from_one_based(std::span<const int> indices) {
  std::vector<int> z(indices.begin(), indices.end());
  std::sort(z.begin(), z.end());
  for (int& i : z) {
    if (i < 1) throw InvalidParameter("placement: sensor indices are 1-based, got " + std::to_string(i));
    --i;
  }
  return Placement(std::move(z));
}

std::vector<int> Placement::one_based() const {
  std::vector<int> out(indices_);
  for (int& i : out) ++i;
  return out;
}

bool Placement::contains(int sensor) const { return std::binary_search(indices_.begin(), indices_.end(), sensor); }

std::uint64_t binomial(int n, int k) {
  if (k < 0 || n < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) {
    // r * (n - k + i) / i stays integral at every step.
    const auto num = static_cast<std::uint64_t>(n - k + i);
    if (r > std::numeric_limits<std::uint64_t>::max() / num) return std::numeric_limits<std::uint64_t>::max();
    r = r * num / static_cast<std::uint64_t>(i);
  }
  return r;
}

PlacementSet::PlacementSet(int num_sensors, int anomaly_size)
    : num_sensors_(num_sensors), anomaly_size_(anomaly_size) {
  if (num_sensors < 1 || anomaly_size < 1 || anomaly_size > num_sensors) {
    throw InvalidParameter("placements: need 1 <= m <= L, got L=" + std::to_string(num_sensors) +
                           " m=" + std::to_string(anomaly_size));
  }
  const std::uint64_t count = binomial(num_sensors, anomaly_size);
  if (count > kMaxPlacements) {
    throw InvalidParameter("placements: binomial(" + std::to_string(num_sensors) + ", " +
                           std::to_string(anomaly_size) + ") exceeds the cap of " +
                           std::to_string(kMaxPlacements));
  }
  placements_.reserve(static_cast<std::size_t>(count));

  std::vector<int> c(static_cast<std::size_t>(anomaly_size));
  for (int i = 0; i < anomaly_size; ++i) c[static_cast<std::size_t>(i)] = i;
  const int m = anomaly_size;
  const int n = num_sensors;
  for (;;) {
    placements_.emplace_back(c);
    // Advance to the lexicographic successor.
    int i = m - 1;
    while (i >= 0 && c[static_cast<std::size_t>(i)] == n - m + i) --i;
    if (i < 0) break;
    ++c[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < m; ++j) c[static_cast<std::size_t>(j)] = c[static_cast<std::size_t>(j - 1)] + 1;
  }
}

std::size_t PlacementSet::index_of(const Placement& p) const {
  auto it = std::lower_bound(placements_.begin(), placements_.end(), p);
  if (it == placements_.end() || *it != p) {
    throw InvalidParameter("placement is not a member of the placement set for L=" +
                           std::to_string(num_sensors_) + " m=" + std::to_string(anomaly_size_));
  }
  return static_cast<std::size_t>(it - placements_.begin());
}

PlacementSet enumerate_placements(int num_sensors, int anomaly_size) {
  return PlacementSet(num_sensors, anomaly_size);
}

NetworkModel::NetworkModel(std::vector<SensorModel> sensors, int anomaly_size)
    : sensors_(std::move(sensors)), anomaly_size_(anomaly_size) {
  if (sensors_.empty()) throw InvalidParameter("network model: need at least one sensor");
  placements_ = std::make_shared<const PlacementSet>(static_cast<int>(sensors_.size()), anomaly_size);
}

NetworkModel NetworkModel::homogeneous(int num_sensors, int anomaly_size, const SensorModel& sensor) {
  if (num_sensors < 1) throw InvalidParameter("network model: need at least one sensor");
  return NetworkModel(std::vector<SensorModel>(static_cast<std::size_t>(num_sensors), sensor), anomaly_size);
}

NetworkModel NetworkModel::gaussian_shift(std::span<const double> post_means, int anomaly_size) {
  std::vector<SensorModel> sensors;
  sensors.reserve(post_means.size());
  for (double mu : post_means) {
    sensors.emplace_back(SensorDistribution::gaussian(0.0, 1.0), SensorDistribution::gaussian(mu, 1.0));
  }
  return NetworkModel(std::move(sensors), anomaly_size);
}

bool NetworkModel::is_homogeneous() const {
  return std::all_of(sensors_.begin(), sensors_.end(), [&](const SensorModel& s) { return s == sensors_.front(); });
}

std::size_t NetworkModel::placement_index(const Placement& p) const {
  if (static_cast<int>(p.size()) != anomaly_size_) {
    throw InvalidParameter("placement has " + std::to_string(p.size()) + " sensors, anomaly size is " +
                           std::to_string(anomaly_size_));
  }
  for (int i : p.indices()) {
    if (i < 0 || i >= num_sensors()) {
      throw InvalidParameter("placement index " + std::to_string(i + 1) + " outside [1, " +
                             std::to_string(num_sensors()) + "]");
    }
  }
  return placements_->index_of(p);
}

ObservationVector sample_observation(const NetworkModel& model, Rng& rng) {
  std::normal_distribution<double> normal;
  ObservationVector x(model.num_sensors());
  for (int l = 0; l < model.num_sensors(); ++l) x(l) = model.sensor(l).pre.from_noise(normal(rng));
  return x;
}

ObservationVector sample_observation(const NetworkModel& model, const Placement& placement, Rng& rng) {
  model.placement_index(placement);
  std::normal_distribution<double> normal;
  ObservationVector x(model.num_sensors());
  for (int l = 0; l < model.num_sensors(); ++l) {
    const auto& s = model.sensor(l);
    x(l) = (placement.contains(l) ? s.post : s.pre).from_noise(normal(rng));
  }
  return x;
}

Eigen::VectorXd sensor_llrs(const NetworkModel& model, const ObservationVector& x) {
  if (x.size() != model.num_sensors()) {
    throw InvalidParameter("observation has " + std::to_string(x.size()) + " components, model has " +
                           std::to_string(model.num_sensors()) + " sensors");
  }
  Eigen::VectorXd out(x.size());
  for (int l = 0; l < model.num_sensors(); ++l) out(l) = model.sensor(l).llr(x(l));
  return out;
}

double placement_llr(const NetworkModel& model, const Placement& placement, const ObservationVector& x) {
  model.placement_index(placement);
  if (x.size() != model.num_sensors()) {
    throw InvalidParameter("observation length does not match the number of sensors");
  }
  double s = 0.0;
  for (int l : placement.indices()) s += model.sensor(l).llr(x(l));
  return s;
}

}  // namespace mcusum
