#include <doctest.h>

#include <cmath>
#include <numbers>

#include "qfisher/bounds.hpp"
#include "qfisher/error.hpp"

using namespace qfisher;

namespace {

constexpr double kPi = std::numbers::pi;

}  // namespace

TEST_CASE("van Trees arithmetic") {
  const LowerBound one = van_trees_bound(1, 100, 1, 1.0, {BoundRegime::Variance, 1.0});
  CHECK(one.value == doctest::Approx(1.0 / (200.0 + kPi * kPi)).epsilon(1e-12));
  CHECK(one.value == doctest::Approx(4.7649e-3).epsilon(1e-4));

  const LowerBound prior_only = van_trees_bound(3, 0, 1, 2.0, {BoundRegime::Variance, 1.0});
  CHECK(prior_only.value == doctest::Approx(3.0 * 4.0 / (kPi * kPi)).epsilon(1e-12));

  const LowerBound gauss = van_trees_bound(4, 1e4, 2, 1.0, {BoundRegime::Orlicz, 8.0 / 3.0, 2.0});
  const double expected = 16.0 / (32.0 / 3.0 * 2.0 * 1e4 + 4.0 * kPi * kPi);
  CHECK(gauss.value == doctest::Approx(expected).epsilon(1e-12));
  CHECK(gauss.value == doctest::Approx(7.4986e-5).epsilon(1e-4));
  CHECK(gauss.regime == BoundRegime::Orlicz);
}

TEST_CASE("van Trees input checks") {
  CHECK_THROWS_AS(van_trees_bound(0, 1, 1, 1.0, {BoundRegime::Variance, 1.0}), Error);
  CHECK_THROWS_AS(van_trees_bound(1, -1, 1, 1.0, {BoundRegime::Variance, 1.0}), Error);
  CHECK_THROWS_AS(van_trees_bound(1, 1, 1, 0.0, {BoundRegime::Variance, 1.0}), Error);
  CHECK_THROWS_AS(van_trees_bound(1, 1, 1, 1.0, {BoundRegime::Orlicz, 1.0, 0.5}), Error);
}

TEST_CASE("van Trees monotonicity on a random grid") {
  Rng rng(13);
  const auto draw = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
  for (int i = 0; i < 200; ++i) {
    const int d = 1 + static_cast<int>(draw(0, 20));
    const double n = draw(1, 1e5);
    const int k = 1 + static_cast<int>(draw(0, 8));
    const double B = draw(0.1, 5);
    const double I0 = draw(0.1, 10);
    const VanTreesRegime r{BoundRegime::Variance, I0};
    const double base = van_trees_bound(d, n, k, B, r).value;
    CHECK(van_trees_bound(d, 2 * n, k, B, r).value < base);
    CHECK(van_trees_bound(d, n, k + 1, B, r).value < base);
    CHECK(van_trees_bound(d, n, k, B, {BoundRegime::Variance, 2 * I0}).value < base);
    CHECK(van_trees_bound(d + 1, n, k, B, r).value > base);
    CHECK(van_trees_bound(d, n, k, 2 * B, r).value > base);
  }
}

TEST_CASE("corollary rate tags") {
  const LowerBound dist = corollary_bound(make_discrete(8), 1e4, 1);
  CHECK(dist.rate == "d/(n 2^k)");
  CHECK(dist.rate_value == doctest::Approx(4e-4));

  const LowerBound g_small_k = corollary_bound(make_gaussian_location(4, 1.0, 1.0), 1e4, 2);
  CHECK(g_small_k.rate == "d^2/(n k)");
  CHECK(g_small_k.value >= 7.4986e-5);
  for (int k : {4, 5, 9}) {
    const LowerBound g = corollary_bound(make_gaussian_location(4, 1.0, 1.0), 1e4, k);
    CHECK(g.rate == "d/n");
    CHECK(g.rate_value == doctest::Approx(4e-4));
  }
}

TEST_CASE("doubling k halves the distribution communication branch") {
  const Model m = make_discrete(16);
  const double n = 1e6;
  const LowerBound k1 = corollary_bound(m, n, 1);
  const LowerBound k2 = corollary_bound(m, n, 2);
  CHECK(k2.rate_value == doctest::Approx(0.5 * k1.rate_value));
  CHECK(k2.value < k1.value);
}

TEST_CASE("the distribution branch switches where the rates cross") {
  const Model m = make_discrete(8);
  CHECK(corollary_bound(m, 1e4, 2).rate == "d/(n 2^k)");
  // d / 2^k == 1 at k = 3; ties report the centralized branch.
  CHECK(corollary_bound(m, 1e4, 3).rate == "1/n");
  CHECK(corollary_bound(m, 1e4, 4).rate == "1/n");
}

TEST_CASE("small samples raise precondition warnings") {
  CHECK_FALSE(corollary_bound(make_discrete(8), 10, 1).warnings.empty());
  CHECK(corollary_bound(make_discrete(8), 1e5, 1).warnings.empty());
}

TEST_CASE("nonparametric branches") {
  const LowerBound huge_k = nonpar_lower_bound(1.0, 1.0, 1e4, 30);
  CHECK(huge_k.rate == "n^(-2s/(2s+1))");

  const LowerBound comm = nonpar_lower_bound(1.0, 1.0, 1e6, 1);
  CHECK(comm.rate == "(n 2^k)^(-s/(s+1))");
  CHECK(comm.rate_value == doctest::Approx(7.0711e-4).epsilon(1e-4));

  const LowerBound half = nonpar_lower_bound(0.5, 1.0, 1e4, 1);
  CHECK(half.rate == "(n 2^k)^(-s/(s+1))");
  CHECK(half.rate_value == doctest::Approx(0.03684).epsilon(1e-3));
  CHECK(half.value > 0.0);
}

TEST_CASE("bandwidth fixed point") {
  const Bandwidth bw = nonpar_bandwidth(1.0, 1024, 1);
  CHECK(bw.h == doctest::Approx(0.14865).epsilon(1e-4));
  CHECK(bw.d == 7);
  CHECK(bw.converged);

  const Bandwidth one = nonpar_bandwidth(1.0, 1, 1);
  CHECK(one.d == 1);
  CHECK(one.h == doctest::Approx(1.0));

  for (double n : {1e3, 1e4, 1e5}) {
    const Bandwidth big = nonpar_bandwidth(1.0, n, 40);
    CHECK(big.h == doctest::Approx(std::pow(n * big.d, -0.25)));
    CHECK(std::abs(big.d - std::pow(n, 1.0 / 3.0)) <= 0.35 * std::pow(n, 1.0 / 3.0));
  }
}

TEST_CASE("bandwidth is consistent with its own grid") {
  for (double s : {0.5, 1.0}) {
    for (double n : {100.0, 1024.0, 5e4}) {
      for (int k : {1, 2, 3}) {
        const Bandwidth bw = nonpar_bandwidth(s, n, k);
        const double target = std::pow(n * std::min(std::ldexp(1.0, k), double(bw.d)),
                                       -1.0 / (2 * (s + 1)));
        CHECK(bw.h == doctest::Approx(target));
        if (bw.converged) CHECK(bw.d == std::max(1L, std::lround(1.0 / bw.h)));
      }
    }
  }
}

TEST_CASE("cos^2 prior") {
  const Cos2Prior unit(1.0);
  CHECK(unit.fisher_information() == doctest::Approx(kPi * kPi).epsilon(1e-9));
  CHECK(Cos2Prior(2.0).fisher_information() == doctest::Approx(kPi * kPi / 4).epsilon(1e-9));
  CHECK(unit.cdf(0.0) == doctest::Approx(0.5));
  CHECK(unit.quantile(unit.cdf(0.3)) == doctest::Approx(0.3).epsilon(1e-9));
  CHECK(unit.density(1.0) == doctest::Approx(0.0).scale(1.0));

  Rng rng(21);
  const int draws = 100000;
  double sum = 0.0;
  double sq = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double t = prior_sample(unit, rng);
    CHECK(std::abs(t) <= 1.0);
    sum += t;
    sq += t * t;
  }
  const double mean = sum / draws;
  const double se = std::sqrt((sq / draws - mean * mean) / draws);
  CHECK(std::abs(mean) < 4 * se);
  CHECK_THROWS_AS(Cos2Prior(0.0), Error);
}
