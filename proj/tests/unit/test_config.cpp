#include <doctest.h>

#include "mcusum/config.hpp"
#include "mcusum/error.hpp"

using namespace mcusum;

namespace {

Json gaussian_sensor(double mu) {
  return {{"pre", {{"gaussian", {{"mean", 0.0}, {"var", 1.0}}}}}, {"post", {{"gaussian", {{"mean", mu}, {"var", 1.0}}}}}};
}

Json homogeneous_model(int L, int m) {
  Json sensors = Json::array();
  for (int i = 0; i < L; ++i) sensors.push_back(gaussian_sensor(1.0));
  return {{"sensors", sensors}, {"anomaly_size", m}};
}

Json base_config() { return {{"model", homogeneous_model(4, 1)}, {"thresholds", {1.0, 2.0}}}; }

}  // namespace

TEST_CASE("model files round-trip losslessly") {
  const NetworkModel model(
      {SensorModel(SensorDistribution::gaussian(0.25, 1.5), SensorDistribution::gaussian(-1.0 / 3.0, 0.1)),
       SensorModel(SensorDistribution::bernoulli(0.5), SensorDistribution::bernoulli(0.9))},
      1);
  const Json j = model_to_json(model);
  const NetworkModel back = model_from_json(j);
  CHECK(back == model);
  CHECK(model_to_json(back) == j);
  CHECK(model_from_json(Json::parse(j.dump())) == model);
  CHECK(j["sensors"][1]["post"]["bernoulli"]["p"] == 0.9);
}

TEST_CASE("model files are validated") {
  Json j = homogeneous_model(3, 1);
  j["extra"] = 1;
  CHECK_THROWS_WITH_AS(model_from_json(j), doctest::Contains("unknown key 'extra'"), ConfigError);

  j = homogeneous_model(3, 0);
  CHECK_THROWS_WITH_AS(model_from_json(j), doctest::Contains("1 <= m <= L"), ConfigError);
  j = homogeneous_model(3, 4);
  CHECK_THROWS_WITH_AS(model_from_json(j), doctest::Contains("1 <= m <= L"), ConfigError);

  j = homogeneous_model(2, 1);
  j["sensors"][0]["pre"]["gaussian"]["var"] = -1.0;
  CHECK_THROWS_AS(model_from_json(j), ConfigError);
  j = homogeneous_model(2, 1);
  j["sensors"][0]["post"] = {{"poisson", {{"rate", 1.0}}}};
  CHECK_THROWS_AS(model_from_json(j), ConfigError);
  j = homogeneous_model(2, 1);
  j["sensors"][0]["pre"]["gaussian"]["sd"] = 1.0;
  CHECK_THROWS_AS(model_from_json(j), ConfigError);
  j = homogeneous_model(2, 1);
  j["sensors"][0]["post"] = j["sensors"][0]["pre"];
  CHECK_THROWS_AS(model_from_json(j), ConfigError);
  CHECK_THROWS_AS(model_from_json(Json{{"sensors", Json::array()}, {"anomaly_size", 1}}), ConfigError);
}

TEST_CASE("experiment config defaults and echo") {
  const ExperimentConfig c = parse_experiment_config(base_config());
  CHECK(c.detectors == std::vector<DetectorKind>{DetectorKind::MCusum});
  CHECK(c.weight_source == WeightSource::Uniform);
  REQUIRE(c.policies.size() == 1);
  CHECK(c.policies[0].kind == PolicySpec::Kind::IidRandom);
  CHECK(c.mtfa_trials == 2000);
  CHECK(c.delay_trials == 10000);
  CHECK(c.seed == 1);
  CHECK(c.model().num_sensors() == 4);

  const Json echo = to_json(c);
  const ExperimentConfig again = parse_experiment_config(echo);
  CHECK(to_json(again) == echo);
}

TEST_CASE("experiment config rejects bad input before any computation") {
  Json j = base_config();
  j["trails"] = 10;
  CHECK_THROWS_WITH_AS(parse_experiment_config(j), doctest::Contains("unknown key 'trails'"), ConfigError);

  j = base_config();
  j["optimizer"] = {{"stepsize", 1.0}};
  CHECK_THROWS_AS(parse_experiment_config(j), ConfigError);

  j = base_config();
  j["model"]["anomaly_size"] = 0;
  CHECK_THROWS_WITH_AS(parse_experiment_config(j), doctest::Contains("1 <= m <= L"), ConfigError);

  j = base_config();
  j["model"]["sensors"][0] = gaussian_sensor(2.0);
  j["detectors"] = {"mcusum", "ncusum"};
  CHECK_THROWS_WITH_AS(parse_experiment_config(j), "N-CUSUM requires homogeneous model", ConfigError);

  j = base_config();
  j["detectors"] = {"cusum"};
  CHECK_THROWS_AS(parse_experiment_config(j), ConfigError);

  j = base_config();
  j["weights"] = {0.5, 0.5};
  CHECK_THROWS_AS(parse_experiment_config(j), ConfigError);
  j["weights"] = {0.5, 0.5, 0.2, 0.1};
  CHECK_THROWS_AS(parse_experiment_config(j), ConfigError);

  j = base_config();
  j["policies"] = {Json{{"fixed", {5}}}};
  CHECK_THROWS_AS(parse_experiment_config(j), ConfigError);
  j["policies"] = {"spiral"};
  CHECK_THROWS_AS(parse_experiment_config(j), ConfigError);
  j["policies"] = {Json{{"iid", {0.5, 0.5}}}};
  CHECK_THROWS_AS(parse_experiment_config(j), ConfigError);

  j = base_config();
  j.erase("thresholds");
  j["gamma"] = {1.0};
  CHECK_THROWS_AS(parse_experiment_config(j), ConfigError);

  j = base_config();
  j["calibration"] = {{"rel_tol", 0.7}};
  CHECK_THROWS_AS(parse_experiment_config(j), ConfigError);

  j = base_config();
  j["trials"] = {{"mtfa", 0}};
  CHECK_THROWS_AS(parse_experiment_config(j), ConfigError);
}

TEST_CASE("policies and detectors are built from the config") {
  Json j = base_config();
  j["detectors"] = {"mcusum", "ncusum", "ocusum"};
  j["weights"] = {0.4, 0.3, 0.2, 0.1};
  j["policies"] = {"iid", Json{{"fixed", {3}}}, Json{{"cyclic", {{1}, {4}}}}, Json{{"iid", "uniform"}},
                   Json{{"cyclic", "all"}}, Json{{"worst_drift", {{"samples", 20000}}}}};
  const ExperimentConfig c = parse_experiment_config(j);
  const NetworkModel model = c.model();
  const ResolvedWeights w = resolve_weights(c, model);
  CHECK(w.weights[0] == 0.4);
  CHECK_FALSE(w.optimization.has_value());

  const auto detectors = build_detectors(c, model, w.weights);
  REQUIRE(detectors.size() == 3);
  CHECK(detectors[1].kind() == DetectorKind::NCusum);

  const auto policies = build_policies(c, model, w.weights);
  REQUIRE(policies.size() == 6);
  CHECK(policies[1].label == "fixed[3]");
  CHECK(policies[2].label == "cyclic(2)");
  CHECK(policies[4].label == "cyclic(4)");
  Rng rng(0);
  CHECK(policies[1].policy.next_placement(1, rng) == 2);
  CHECK(policies[2].policy.next_placement(2, rng) == 3);
  // The weakest coverage is at the last sensor.
  CHECK(policies[5].policy.next_placement(1, rng) == 3);

  const CurveSettings s = curve_settings(c);
  CHECK(s.thresholds == std::vector<double>{1.0, 2.0});
  CHECK(s.seed == c.seed);
}
