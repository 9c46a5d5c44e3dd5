#include <doctest.h>

#include <cmath>
#include <numbers>

#include "qfisher/error.hpp"
#include "qfisher/fisher.hpp"

using namespace qfisher;

TEST_CASE("Psi_2 norm of a standard normal") {
  CHECK(orlicz_norm(ScalarDistribution::normal(1.0), 2.0) ==
        doctest::Approx(std::sqrt(8.0 / 3.0)).epsilon(1e-8));
  CHECK(orlicz_norm(ScalarDistribution::normal(0.5), 2.0) ==
        doctest::Approx(0.5 * std::sqrt(8.0 / 3.0)).epsilon(1e-8));
}

TEST_CASE("the zero variable has norm zero") {
  for (double p : {1.0, 2.0, 3.5}) {
    CHECK(orlicz_norm(ScalarDistribution::point_mass(0.0), p) == 0.0);
  }
}

TEST_CASE("closed forms for Exp(1) and Rademacher") {
  const auto expo = ScalarDistribution::from_density(
      [](double x) { return std::exp(-x); }, [](double x) { return x; }, 0.0, kInf);
  // E[exp(X/K)] = K/(K-1) equals 2 at K = 2.
  CHECK(orlicz_norm(expo, 1.0) == doctest::Approx(2.0).epsilon(1e-7));

  const auto rademacher = ScalarDistribution::finite({-1.0, 1.0}, {0.5, 0.5});
  CHECK(orlicz_norm(rademacher, 2.0) ==
        doctest::Approx(1.0 / std::sqrt(std::log(2.0))).epsilon(1e-9));
}

TEST_CASE("heavy tails have infinite norm") {
  const auto cauchy = ScalarDistribution::from_density(
      [](double x) { return 1.0 / (std::numbers::pi * (1.0 + x * x)); },
      [](double x) { return x; }, -kInf, kInf);
  CHECK(std::isinf(orlicz_norm(cauchy, 1.0)));
}

TEST_CASE("psi_moment is monotone in K") {
  const auto n = ScalarDistribution::normal(1.0);
  CHECK(n.psi_moment(1.0, 2.0) > n.psi_moment(2.0, 2.0));
  CHECK(n.psi_moment(std::sqrt(8.0 / 3.0), 2.0) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("covariance score has Psi_1 norm at most 2 / sigma_min^2") {
  const Model cov = make_gaussian_covariance(1, 1.0, 2.0);
  const Vector one = Vector::Ones(1);
  const auto dist = ScalarDistribution::from_density(
      [&](double x) { return density(cov, one, Sample::Constant(1, x)); },
      [&](double x) { return score(cov, one, Sample::Constant(1, x))[0]; }, -kInf, kInf, {0.0});
  const double norm = orlicz_norm(dist, 1.0);
  CHECK(norm > 0.0);
  CHECK(norm <= 2.0);
}

TEST_CASE("orlicz_I0 per model") {
  const OrliczConstant g = orlicz_I0(make_gaussian_location(3, 2.0, 1.0));
  CHECK(g.p == 2.0);
  CHECK(g.I0 == doctest::Approx(8.0 / 12.0));

  const OrliczConstant c = orlicz_I0(make_gaussian_covariance(2, 1.0, 2.0));
  CHECK(c.p == 1.0);
  const double alpha = std::log(2.0) / (std::log(4.0) + 2.0 * (2.0 + std::sqrt(2.0)));
  CHECK(c.I0 == doctest::Approx(4.0 / (alpha * alpha)));

  const OrliczConstant b = orlicz_I0(make_bernoulli(2, BernoulliRegime::Dense, 0.25));
  CHECK(b.p == 2.0);
  CHECK(b.I0 > 0.0);

  CHECK_THROWS_AS(orlicz_I0(make_discrete(3)), Error);
  CHECK_THROWS_AS(orlicz_I0(make_bernoulli(3, BernoulliRegime::Sparse, 0.25)), Error);
}

TEST_CASE("random directions never exceed the per-model constant") {
  const Model bern = make_bernoulli(2, BernoulliRegime::Dense, 0.25);
  const double bound = orlicz_I0(bern).I0;
  const double sup = orlicz_sup_random_directions(bern, domain(bern).lower, 2.0, 25, 3);
  CHECK(sup <= bound);

  const Model gauss = make_gaussian_location(2, 1.0, 1.0);
  CHECK(orlicz_sup_random_directions(gauss, Vector::Zero(2), 2.0, 5, 1) ==
        doctest::Approx(8.0 / 3.0).epsilon(1e-8));
}
