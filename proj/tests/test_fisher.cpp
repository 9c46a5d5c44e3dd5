#include <doctest.h>

#include <cmath>
#include <numbers>

#include "qfisher/error.hpp"
#include "qfisher/fisher.hpp"

using namespace qfisher;

namespace {

Vector eighths() {
  Vector theta(2);
  theta << 0.125, 0.125;
  return theta;
}

}  // namespace

TEST_CASE("centroid examples") {
  const Model disc = make_discrete(2);
  const Vector c = centroid(disc, eighths(), Quantizer::identity(3), 0);
  CHECK(c[0] == doctest::Approx(8.0));
  CHECK(c[1] == doctest::Approx(0.0).scale(1.0));

  const Model gauss = make_gaussian_location(1, 1.0, 1.0);
  CHECK(centroid(gauss, Vector::Zero(1), Quantizer::sign(0.0), 1)[0] ==
        doctest::Approx(std::sqrt(2.0 / std::numbers::pi)).epsilon(1e-9));

  const Vector zero = centroid(disc, eighths(), Quantizer::one_cell(), 0);
  CHECK(zero.norm() < 1e-12);

  try {
    centroid(disc, eighths(), Quantizer::identity(3), 3);
    FAIL("expected empty-bin");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyBin);
  }
}

TEST_CASE("trace_IM examples") {
  const Model disc = make_discrete(2);
  const FisherReport id = trace_IM(disc, eighths(), Quantizer::identity(3), true);
  CHECK(id.trace == doctest::Approx(56.0 / 3.0).epsilon(1e-12));
  CHECK(id.trace == doctest::Approx(fisher_X(disc, eighths()).trace()).epsilon(1e-12));
  REQUIRE(id.matrix.has_value());
  CHECK(id.matrix->isApprox(fisher_X(disc, eighths())));
  CHECK(id.centroids.size() == 3);

  CHECK(trace_IM(disc, eighths(), Quantizer::one_cell()).trace == doctest::Approx(0.0).scale(1.0));

  const Model gauss = make_gaussian_location(1, 1.0, 1.0);
  CHECK(trace_IM(gauss, Vector::Zero(1), Quantizer::sign(0.0)).trace ==
        doctest::Approx(2.0 / std::numbers::pi).epsilon(1e-9));
  CHECK(trace_IM(gauss, Vector::Zero(1), Quantizer::one_cell()).trace < 1e-12);
}

TEST_CASE("coordinate signs on a multivariate Gaussian add up per coordinate") {
  const Model gauss = make_gaussian_location(3, 2.0, 1.0);
  const Quantizer q(2, CoordinateSign{{0, 2}, {0.0, 0.0}});
  const double per = 2.0 / (std::numbers::pi * 4.0);
  CHECK(trace_IM(gauss, Vector::Zero(3), q).trace == doctest::Approx(2 * per).epsilon(1e-9));
}

TEST_CASE("centroid trace agrees with finite differences") {
  const Model disc = make_discrete(3);
  Vector theta(3);
  theta << 0.15, 0.25, 0.2;
  const Quantizer q(2, DiscreteTable{{{0.1, 0.2, 0.3, 0.4},
                                      {0.7, 0.1, 0.1, 0.1},
                                      {0.25, 0.25, 0.25, 0.25},
                                      {0.0, 0.5, 0.0, 0.5}}});
  CHECK(trace_IM(disc, theta, q).trace ==
        doctest::Approx(trace_IM_finite_difference(disc, theta, q)).epsilon(1e-7));

  const Model gauss = make_gaussian_location(1, 1.0, 2.0);
  const Quantizer cells = Quantizer::cells({-0.5, 0.2, 1.0});
  const Vector t = Vector::Constant(1, 0.3);
  CHECK(trace_IM(gauss, t, cells).trace ==
        doctest::Approx(trace_IM_finite_difference(gauss, t, cells)).epsilon(1e-6));
}

TEST_CASE("Monte Carlo trace brackets the exact value") {
  const Model disc = make_discrete(2);
  const Quantizer q = Quantizer::identity(3);
  const MonteCarloTrace mc = trace_IM_monte_carlo(disc, eighths(), q, 200000, 42, 2);
  CHECK(mc.samples == 200000);
  CHECK(mc.std_error > 0.0);
  CHECK(std::abs(mc.trace - 56.0 / 3.0) < 4 * mc.std_error);

  const MonteCarloTrace again = trace_IM_monte_carlo(disc, eighths(), q, 200000, 42, 1);
  CHECK(again.trace == mc.trace);
  CHECK(again.std_error == mc.std_error);
}

TEST_CASE("bound_thm1 and bound_thm2 examples") {
  CHECK(bound_thm1(1.0, 3, 100.0).value == 8.0);
  CHECK(bound_thm1(5.0, 1, 4.0).value == 4.0);
  CHECK(bound_thm1(5.0, 1, 4.0).communication_term == 10.0);

  CHECK(bound_thm2(1.0, 3, 1.0, 1e6).value == doctest::Approx(36.0));
  CHECK(bound_thm2(1.0, 1, 2.0, 10.0).value == doctest::Approx(4.0));
  const BoundCertificate g = bound_thm2(8.0 / 3.0, 4, 2.0, 3.0);
  CHECK(g.value == 3.0);
  CHECK(g.communication_term == doctest::Approx(32.0 / 3.0 * 4.0));
  CHECK_THROWS_AS(bound_thm1(1.0, 0, 1.0), Error);
  CHECK_THROWS_AS(bound_thm2(1.0, 1, 0.5, 1.0), Error);
}

TEST_CASE("set partitions follow the Stirling counts") {
  const auto count = [](int size, int blocks) {
    std::uint64_t c = 0;
    for_each_set_partition(size, blocks, [&](std::span<const int>) { ++c; });
    return c;
  };
  CHECK(count(3, 3) == 5);
  CHECK(count(4, 2) == 8);   // S(4,1) + S(4,2) = 1 + 7
  CHECK(count(5, 5) == 52);  // Bell(5)
  CHECK(count(6, 3) == 1 + 31 + 90);
}

TEST_CASE("brute force examples") {
  const Model disc = make_discrete(2);
  const BruteForceResult all = brute_force_max_trace(disc, eighths(), 2);
  CHECK(all.trace == doctest::Approx(56.0 / 3.0).epsilon(1e-12));

  const BruteForceResult one = brute_force_max_trace(disc, eighths(), 1);
  CHECK(one.partitions == 4);  // the one-block partition plus the three two-block splits
  CHECK(one.min_trace == doctest::Approx(0.0).scale(1.0));
  const double I0 = variance_I0(disc, domain(make_discrete_corollary_box(2))).value;
  CHECK(one.trace <= bound_thm1(I0, 1, 56.0 / 3.0).value + 1e-9);
  CHECK(one.trace < all.trace);

  const Model bern = make_bernoulli(1, BernoulliRegime::Dense, 0.25);
  CHECK(brute_force_max_trace(bern, Vector::Constant(1, 0.5), 1).trace ==
        doctest::Approx(4.0).epsilon(1e-12));

  CHECK_THROWS_AS(brute_force_max_trace(make_discrete(12), Vector::Constant(12, 0.05), 1), Error);
  CHECK_THROWS_AS(brute_force_max_trace(make_gaussian_location(1, 1.0, 1.0), Vector::Zero(1), 1),
                  Error);
}

TEST_CASE("variance_I0 examples") {
  for (int d : {1, 3, 7}) {
    CHECK(variance_I0(make_gaussian_location(d, 1.0, 2.0)).value == 1.0);
  }
  CHECK(variance_I0(make_gaussian_location(2, 0.5, 2.0)).value == doctest::Approx(4.0));

  const I0Result disc = variance_I0(make_discrete_corollary_box(2));
  CHECK(disc.value <= 12.0);
  CHECK_FALSE(disc.unbounded);

  const I0Result sparse = variance_I0(make_bernoulli(4, BernoulliRegime::Sparse, 0.25));
  CHECK(sparse.value <= 32.0);

  const I0Result dense = variance_I0(make_bernoulli(2, BernoulliRegime::Dense, 0.25));
  CHECK(dense.value == doctest::Approx(1.0 / (0.25 * 0.75)));

  const I0Result open = variance_I0(make_discrete(2));
  CHECK(open.unbounded);
  CHECK_FALSE(open.warning.empty());
}

TEST_CASE("variance_I0 dominates tr-free projections on the box") {
  const Model disc = make_discrete_corollary_box(3);
  const double I0 = variance_I0(disc).value;
  Rng rng(5);
  const ParamDomain& box = domain(disc);
  for (int i = 0; i < 50; ++i) {
    Vector theta(3);
    for (int j = 0; j < 3; ++j) {
      theta[j] = box.lower[j] + (box.upper[j] - box.lower[j]) * uniform01(rng);
    }
    const Matrix info = fisher_X(disc, theta);
    const double top = Eigen::SelfAdjointEigenSolver<Matrix>(info).eigenvalues().maxCoeff();
    CHECK(top <= I0 * (1 + 1e-12));
  }
}

TEST_CASE("the grid dynamic program matches exhaustive search") {
  const Model gauss = make_gaussian_location(1, 1.0, 2.0);
  const Vector theta = Vector::Constant(1, 0.2);
  std::vector<double> grid;
  for (int j = -6; j <= 6; ++j) grid.push_back(0.4 * j);
  for (int k : {1, 2}) {
    const CellSearchResult dp = best_cell_partition(gauss, theta, k, grid);
    const CellSearchResult brute = brute_force_cell_partition(gauss, theta, k, grid);
    CHECK(dp.trace == doctest::Approx(brute.trace).epsilon(1e-12));
    CHECK(dp.breakpoints.size() <= (std::size_t{1} << k) - 1);
    CHECK(trace_IM(gauss, theta, Quantizer::cells(dp.breakpoints)).trace ==
          doctest::Approx(dp.trace).epsilon(1e-9));
  }
  const CellSearchResult one_bit = best_cell_partition(gauss, Vector::Zero(1), 1, grid);
  REQUIRE(one_bit.breakpoints.size() == 1);
  CHECK(one_bit.breakpoints[0] == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("blackboard trace of a random tree stays under both ceilings") {
  const Model bern = make_bernoulli(2, BernoulliRegime::Dense, 0.25);
  const double I0 = variance_I0(bern).value;
  Rng rng(77);
  for (int i = 0; i < 5; ++i) {
    const ProtocolTree tree = random_valid_tree(2, 2, support_size(bern), rng);
    const Vector theta = domain(bern).center();
    const double trace = trace_IM_blackboard(tree, bern, theta);
    CHECK(trace >= 0.0);
    CHECK(trace <= 2 * I0 * 4 + 1e-9);
    CHECK(trace <= 2 * fisher_X(bern, theta).trace() + 1e-9);
    for (double s : tree_identity(tree, bern, theta)) CHECK(s == doctest::Approx(4.0));
  }
}
