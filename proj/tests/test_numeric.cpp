#include <doctest.h>

#include <atomic>
#include <cmath>
#include <numbers>
#include <set>

#include "qfisher/error.hpp"
#include "qfisher/numeric.hpp"

using namespace qfisher;

TEST_CASE("integrate handles finite and infinite limits") {
  CHECK(integrate([](double x) { return x * x; }, 0.0, 3.0) == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(integrate([](double x) { return std::exp(-x * x); }, -kInf, kInf) ==
        doctest::Approx(std::sqrt(std::numbers::pi)).epsilon(1e-10));
  CHECK(integrate([](double x) { return std::exp(-x); }, 0.0, kInf) ==
        doctest::Approx(1.0).epsilon(1e-10));
  CHECK(integrate([](double) { return 1.0; }, 2.0, 1.0) == doctest::Approx(-1.0));
  CHECK(integrate([](double) { return 5.0; }, 1.0, 1.0) == 0.0);
}

TEST_CASE("integrate_split recovers a kinked integrand") {
  const auto tent = [](double x) { return std::max(0.0, 1.0 - std::abs(x)); };
  const double cuts[] = {0.0};
  CHECK(integrate_split(tent, -1.0, 1.0, cuts) == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("divergent integrals raise numerical-integration") {
  try {
    integrate([](double x) { return 1.0 / x; }, 0.0, 1.0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NumericalIntegration);
  }
}

TEST_CASE("normal helpers agree with each other") {
  CHECK(normal_pdf(0.0) == doctest::Approx(0.398942280401).epsilon(1e-12));
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  for (double p : {1e-6, 0.025, 0.3, 0.5, 0.9, 0.999}) {
    CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
  }
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963985).epsilon(1e-9));
}

TEST_CASE("derive_seed is deterministic and separates streams") {
  CHECK(derive_seed(7, 3) == derive_seed(7, 3));
  std::set<std::uint64_t> seen;
  for (std::uint64_t master = 0; master < 20; ++master) {
    for (std::uint64_t i = 0; i < 50; ++i) seen.insert(derive_seed(master, i));
  }
  CHECK(seen.size() == 1000);
}

TEST_CASE("uniform01 stays in [0, 1)") {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = uniform01(rng);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("pairwise_sum is exact on integers and order independent of threads") {
  std::vector<double> v(1001);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  CHECK(pairwise_sum(v) == 500500.0);
  CHECK(pairwise_sum(std::span<const double>()) == 0.0);

  std::vector<double> tiny(1 << 16, 0.1);
  CHECK(pairwise_sum(tiny) == doctest::Approx(6553.6).epsilon(1e-14));
}

TEST_CASE("parallel_for visits every index once") {
  for (unsigned threads : {1u, 3u, 8u}) {
    std::vector<std::atomic<int>> hits(257);
    parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i]++; });
    for (const auto& h : hits) CHECK(h.load() == 1);
  }
}

TEST_CASE("error kinds have stable names") {
  CHECK(to_string(ErrorKind::Parse) == "parse");
  CHECK(to_string(ErrorKind::InsufficientNodes) == "insufficient-nodes");
  const ConfigError e("sweeps[0].n", "must be >= 1");
  CHECK(e.path() == "sweeps[0].n");
  CHECK(e.kind() == ErrorKind::Configuration);
}
