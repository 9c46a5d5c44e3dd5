#include <doctest.h>

#include <cmath>
#include <numbers>

#include "qfisher/error.hpp"
#include "qfisher/simulate.hpp"

using namespace qfisher;

namespace {

ExperimentConfig discrete_config(int d, int k, int n, int trials) {
  ExperimentConfig c{make_discrete(d), "discrete_grouping"};
  c.n = n;
  c.k = k;
  c.trials = trials;
  c.seed = 99;
  return c;
}

ExperimentConfig sign_config(int d, int k, int n, int trials) {
  ExperimentConfig c{make_gaussian_location(d, 1.0, 1.0), "gaussian_sign"};
  c.n = n;
  c.k = k;
  c.trials = trials;
  c.seed = 7;
  return c;
}

std::string config_error_path(const ExperimentConfig& c) {
  try {
    validate_config(c);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "";
}

}  // namespace

TEST_CASE("grouping layout") {
  const GroupingLayout two = grouping_layout(2, 1, 10);
  CHECK(two.groups == 2);
  CHECK(two.per_group == 1);

  const GroupingLayout eight = grouping_layout(8, 1, 100);
  CHECK(eight.groups == 8);
  CHECK(eight.nodes_in_group[0] == 13);
  CHECK(eight.nodes_in_group[7] == 12);

  const GroupingLayout wide = grouping_layout(5, 3, 4);
  CHECK(wide.groups == 1);
  CHECK(wide.per_group == 5);

  CHECK_THROWS_AS(grouping_layout(8, 1, 7), Error);
}

TEST_CASE("grouping risk examples") {
  Vector half(1);
  half << 0.3;
  // d = 1 with k = 1 still needs two groups since "other" takes the spare message.
  CHECK(grouping_risk(half, 1, 100) == doctest::Approx(0.3 * 0.7 / 50));
  CHECK(grouping_risk(half, 2, 100) == doctest::Approx(0.3 * 0.7 / 100));

  const Vector uniform = Vector::Constant(3, 0.25);
  CHECK(grouping_risk(uniform, 3, 400) == doctest::Approx(3 * 0.25 * 0.75 / 400));

  const Vector seven = Vector::Constant(7, 0.125);
  CHECK(grouping_risk(seven, 1, 8000) == doctest::Approx(7 * 0.125 * 0.875 * 8 / 8000));
}

TEST_CASE("discrete grouping Monte Carlo matches the binomial prediction") {
  ExperimentConfig c = discrete_config(7, 1, 10000, 400);
  c.threads = 2;
  const RiskEstimate r = run_experiment(c);
  const double predicted = grouping_risk(default_theta(c.model), 1, 10000);
  CHECK(std::abs(r.risk - predicted) < 3 * r.std_error);
  CHECK(r.trials == 400);
  CHECK(r.seeds_digest.size() == 16);
  CHECK(r.ratio == doctest::Approx(r.risk / r.bound.value));
  CHECK(r.risk + 3 * r.std_error >= r.bound.value);
}

TEST_CASE("one-sample identity scheme returns the empirical distribution") {
  const ExperimentConfig c = discrete_config(2, 2, 1, 1);
  const auto est = trial_estimates(c, default_theta(c.model), 5);
  REQUIRE(est.size() == 1);
  const Vector& e = est[0];
  CHECK((e.array() * (1.0 - e.array())).abs().maxCoeff() == 0.0);
  CHECK(e.sum() <= 1.0);
}

TEST_CASE("grouping estimates are unbiased") {
  ExperimentConfig c = discrete_config(4, 1, 500, 2000);
  Vector theta(4);
  theta << 0.1, 0.15, 0.2, 0.25;
  const auto est = trial_estimates(c, theta, 3);
  for (int j = 0; j < 4; ++j) {
    double sum = 0.0;
    double sq = 0.0;
    for (const Vector& e : est) {
      sum += e[j];
      sq += e[j] * e[j];
    }
    const double n = static_cast<double>(est.size());
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    CHECK(std::abs(mean - theta[j]) < 4 * se);
  }
}

TEST_CASE("sign scheme at theta = 0 has risk close to pi sigma^2 / (2n)") {
  ExperimentConfig c = sign_config(1, 1, 10000, 400);
  c.theta = Vector::Zero(1);
  const RiskEstimate r = run_experiment(c);
  const double predicted = std::numbers::pi / 2 / 10000;
  CHECK(std::abs(r.risk - predicted) < 3 * r.std_error + 0.02 * predicted);
}

TEST_CASE("sign scheme with k = d reports every coordinate") {
  const IndependentScheme s = scheme_gaussian_sign(3, 3, 10, 1.0, 1.0);
  CHECK(s.k == 3);
  CHECK(s.quantizers.size() == 10);
  CHECK(s.quantizers[0] == s.quantizers[9]);
  const IndependentScheme capped = scheme_gaussian_sign(2, 5, 4, 1.0, 1.0);
  CHECK(capped.k == 2);
  CHECK_THROWS_AS(scheme_gaussian_sign(4, 1, 3, 1.0, 1.0), Error);
}

TEST_CASE("sign scheme clamps degenerate frequencies") {
  const IndependentScheme s = scheme_gaussian_sign(1, 1, 100, 1.0, 2.0);
  const std::vector<Message> all_positive(100, 1);
  const Vector est = s.estimate(all_positive);
  CHECK(std::isfinite(est[0]));
  CHECK(est[0] == doctest::Approx(2.0 * normal_quantile(0.995)));
  const std::vector<Message> all_negative(100, 0);
  CHECK(s.estimate(all_negative)[0] == doctest::Approx(-2.0 * normal_quantile(0.995)));
}

TEST_CASE("histogram scheme uses the nonparametric bandwidth") {
  const HistogramScheme h = scheme_histogram_density(1.0, 1024, 1);
  CHECK(h.bandwidth.d == 7);
  CHECK(h.bandwidth.h == doctest::Approx(0.14865).epsilon(1e-4));
  CHECK(h.cells == 7);
  CHECK(h.scheme.quantizers.size() == 1024);
}

TEST_CASE("histogram risk of a uniform density is pure variance") {
  const std::vector<double> mass(4, 0.25);
  CHECK(histogram_l2_risk(1.0, mass, mass) == doctest::Approx(0.0).scale(1.0));
  const std::vector<double> off = {0.3, 0.2, 0.25, 0.25};
  // 4 * sum (p_hat - p)^2 for a flat density
  CHECK(histogram_l2_risk(1.0, mass, off) == doctest::Approx(4 * 2 * 0.0025));
}

TEST_CASE("histogram experiment stays above the nonparametric bound") {
  ExperimentConfig c{make_holder(1.0, 1.0, 4), "histogram"};
  c.n = 1024;
  c.k = 1;
  c.trials = 100;
  c.seed = 5;
  const RiskEstimate r = run_experiment(c);
  CHECK(r.risk > 0.0);
  CHECK(r.risk + 3 * r.std_error >= r.bound.value);
}

TEST_CASE("sequential refinement runs under the sequential protocol") {
  ExperimentConfig c{make_gaussian_location(1, 1.0, 1.0), "sequential_refinement"};
  c.protocol = ProtocolKind::Sequential;
  c.n = 256;
  c.k = 2;
  c.trials = 50;
  c.seed = 3;
  c.theta = Vector::Constant(1, 0.4);
  const RiskEstimate r = run_experiment(c);
  CHECK(r.risk < 0.05);
  CHECK(r.risk + 3 * r.std_error >= r.bound.value);
}

TEST_CASE("results do not depend on the worker count") {
  ExperimentConfig c = discrete_config(5, 2, 300, 64);
  c.theta_rule = ThetaRule::Grid;
  c.threads = 1;
  const RiskEstimate one = run_experiment(c);
  c.threads = 4;
  const RiskEstimate four = run_experiment(c);
  CHECK(one.risk == four.risk);
  CHECK(one.std_error == four.std_error);
  CHECK(one.seeds_digest == four.seeds_digest);
  CHECK(one.grid_points == 8);

  c.seed = 100;
  CHECK(run_experiment(c).seeds_digest != one.seeds_digest);
}

TEST_CASE("independent and blackboard execution give identical losses") {
  ExperimentConfig c = discrete_config(3, 1, 40, 30);
  const Vector theta = default_theta(c.model);
  const auto independent = trial_losses(c, theta, 11);
  c.protocol = ProtocolKind::Blackboard;
  CHECK(trial_losses(c, theta, 11) == independent);

  ExperimentConfig g = sign_config(4, 2, 64, 20);
  const auto g_ind = trial_losses(g, Vector::Zero(4), 2);
  g.protocol = ProtocolKind::Blackboard;
  CHECK(trial_losses(g, Vector::Zero(4), 2) == g_ind);
  g.protocol = ProtocolKind::Sequential;
  CHECK(trial_losses(g, Vector::Zero(4), 2) == g_ind);
}

TEST_CASE("prior draws stay in the experiment box") {
  ExperimentConfig c = discrete_config(3, 1, 200, 40);
  c.theta_rule = ThetaRule::Prior;
  const RiskEstimate r = run_experiment(c);
  CHECK(r.risk > 0.0);
  CHECK(r.theta.size() == 0);
  for (const Vector& t : theta_grid(c.model, 1)) {
    CHECK(experiment_box(c.model).contains(t));
  }
}

TEST_CASE("configuration errors carry the field path") {
  ExperimentConfig c = discrete_config(3, 1, 10, 1);
  c.trials = 0;
  CHECK(config_error_path(c) == "trials");
  c = discrete_config(3, 1, 0, 1);
  CHECK(config_error_path(c) == "n");
  c = discrete_config(3, 0, 10, 1);
  CHECK(config_error_path(c) == "k");
  c.k = 1;
  c.scheme = "gaussian_sign";
  CHECK(config_error_path(c) == "scheme");
  c.scheme = "bogus";
  CHECK(config_error_path(c) == "scheme");
  c.scheme = "discrete_grouping";
  c.theta_rule = ThetaRule::Prior;
  c.theta = Vector::Constant(3, 0.2);
  CHECK(config_error_path(c) == "theta");

  ExperimentConfig s{make_gaussian_location(1, 1.0, 1.0), "sequential_refinement"};
  CHECK(config_error_path(s) == "protocol");

  ExperimentConfig bad_theta = discrete_config(2, 1, 10, 1);
  bad_theta.theta = Vector::Constant(3, 0.2);
  try {
    run_experiment(bad_theta);
    FAIL("expected a configuration error");
  } catch (const ConfigError& e) {
    CHECK(e.path() == "theta");
  }
}

TEST_CASE("theta rules and protocols round-trip through text") {
  for (ThetaRule r : {ThetaRule::Fixed, ThetaRule::Prior, ThetaRule::Grid}) {
    CHECK(parse_theta_rule(to_string(r)) == r);
  }
  for (ProtocolKind p : {ProtocolKind::Independent, ProtocolKind::Sequential,
                         ProtocolKind::Blackboard}) {
    CHECK(parse_protocol(to_string(p)) == p);
  }
  CHECK_THROWS_AS(parse_protocol("telepathy"), Error);
}

TEST_CASE("slope fit") {
  std::vector<std::pair<double, double>> exact;
  for (double n : {100.0, 200.0, 400.0, 800.0, 1600.0}) exact.emplace_back(n, 3.0 / n);
  const SlopeFit fit = slope_fit(exact);
  CHECK(fit.slope == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(fit.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-10));
  CHECK(fit.ci_high - fit.ci_low == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
  CHECK(fit.points == 5);

  std::vector<std::pair<double, double>> noisy = {{1, 1.1}, {2, 0.45}, {4, 0.27}, {8, 0.12}};
  const SlopeFit n = slope_fit(noisy);
  CHECK(n.ci_low < n.slope);
  CHECK(n.slope < n.ci_high);

  const std::vector<std::pair<double, double>> three(exact.begin(), exact.begin() + 3);
  try {
    slope_fit(three);
    FAIL("expected insufficient-data");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InsufficientData);
  }
  const std::vector<std::pair<double, double>> same_x = {{1, 1}, {1, 2}, {1, 3}, {1, 4}};
  CHECK_THROWS_AS(slope_fit(same_x), Error);
}
