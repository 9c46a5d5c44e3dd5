#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "qfisher/error.hpp"
#include "qfisher/fisher.hpp"
#include "qfisher/verify.hpp"

namespace qfisher {

bool SuiteReport::passed() const {
  return !checks.empty() &&
         std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

double SuiteReport::max_value(const std::string& prefix) const {
  double best = -kInf;
  for (const Check& c : checks) {
    if (c.name.rfind(prefix, 0) == 0) best = std::max(best, c.value);
  }
  return best;
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"lemma2",           "tree-identity",
                                                 "thm1-dominance",   "thm2-gaussian",
                                                 "blackboard-chain", "orlicz"};
  return names;
}

namespace {

Check at_most(std::string name, double value, double limit) {
  return {std::move(name), value, limit, value <= limit};
}

Check within(std::string name, double value, double expected, double tol) {
  const double gap = std::abs(value - expected);
  return {std::move(name), gap, tol, gap <= tol};
}

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

Vector random_in_box(const ParamDomain& box, Rng& rng) {
  Vector theta(box.dim());
  for (int i = 0; i < box.dim(); ++i) theta[i] = uniform(rng, box.lower[i], box.upper[i]);
  return theta;
}

Quantizer random_table(std::size_t rows, int k, Rng& rng) {
  const int width = 1 << k;
  std::vector<std::vector<double>> table(rows, std::vector<double>(width));
  for (auto& row : table) {
    double total = 0.0;
    for (double& p : row) total += (p = 0.05 + uniform01(rng));
    for (double& p : row) p /= total;
  }
  return Quantizer(k, DiscreteTable{std::move(table)});
}

// Five points of a box: center, both corners and the two alternating corners.
std::vector<Vector> box_points(const ParamDomain& box) {
  Vector alt_a = box.lower;
  Vector alt_b = box.upper;
  for (int i = 1; i < box.dim(); i += 2) std::swap(alt_a[i], alt_b[i]);
  return {box.center(), box.lower, box.upper, alt_a, alt_b};
}

struct TreeCase {
  int n;
  int k;
  ProtocolTree tree;
};

std::vector<TreeCase> random_tree_cases(int trees, std::uint64_t seed, std::size_t support) {
  static constexpr int kShapes[4][2] = {{2, 1}, {2, 2}, {3, 1}, {3, 2}};
  std::vector<TreeCase> cases;
  for (int t = 0; t < trees; ++t) {
    Rng rng(derive_seed(seed, t));
    const int n = kShapes[t % 4][0];
    const int k = kShapes[t % 4][1];
    cases.push_back({n, k, random_valid_tree(n, k, support, rng)});
  }
  return cases;
}

}  // namespace

SuiteReport verify_lemma2(int triples, std::uint64_t seed) {
  SuiteReport report{"lemma2", {}};
  for (int t = 0; t < triples; ++t) {
    Rng rng(derive_seed(seed, t));
    Model model = make_discrete(1);
    std::string label;
    Vector theta;
    switch (t % 3) {
      case 0: {
        const int d = 1 + t % 4;
        model = make_discrete(d);
        const double hi = 0.9 / (d + 1);
        theta = random_in_box(ParamDomain::box(d, 0.05 / d, hi), rng);
        label = fmt::format("discrete d={}", d);
        break;
      }
      case 1: {
        const int d = 1 + t % 3;
        model = make_bernoulli(d, BernoulliRegime::Dense, 0.3);
        theta = random_in_box(domain(model), rng);
        label = fmt::format("bernoulli dense d={}", d);
        break;
      }
      default: {
        const int d = 2 + t % 2;
        model = make_bernoulli(d, BernoulliRegime::Sparse, 0.25);
        theta = random_in_box(domain(model), rng);
        label = fmt::format("bernoulli sparse d={}", d);
        break;
      }
    }
    const int k = 1 + static_cast<int>(uniform01(rng) * 2.0);
    const Quantizer q = random_table(support_size(model), k, rng);
    const double centroid_trace = trace_IM(model, theta, q).trace;
    const double fd_trace = trace_IM_finite_difference(model, theta, q);
    report.checks.push_back(within(fmt::format("triple {} ({}, k={})", t + 1, label, k),
                                   centroid_trace, fd_trace, 1e-5));
  }
  return report;
}

SuiteReport verify_thm1_dominance(unsigned threads) {
  struct Case {
    int d;
    int k;
    Vector theta;
  };
  std::vector<Case> cases;
  for (int d : {2, 3}) {
    const ParamDomain box = domain(make_discrete_corollary_box(d));
    for (int k : {1, 2}) {
      for (const Vector& theta : box_points(box)) cases.push_back({d, k, theta});
    }
  }
  std::vector<std::vector<Check>> slots(cases.size());
  parallel_for(cases.size(), threads, [&](std::size_t i) {
    const Case& c = cases[i];
    const Model model = make_discrete_corollary_box(c.d);
    const double I0 = variance_I0(model).value;
    const double tr_IX = fisher_X(model, c.theta).trace();
    const BruteForceResult best = brute_force_max_trace(model, c.theta, c.k);
    const BoundCertificate cert = bound_thm1(I0, c.k, tr_IX);
    const double d = c.d;
    const double ceiling = 6.0 * std::min(d * d, d * std::ldexp(1.0, c.k));
    const std::string tag = fmt::format("d={} k={} case {}", c.d, c.k, i % 5 + 1);
    slots[i].push_back(at_most("min{tr I_X, 2^k I0} " + tag, best.trace, cert.value + 1e-9));
    slots[i].push_back(at_most("6 min{d^2, d 2^k} " + tag, best.trace, ceiling));
    slots[i].push_back(at_most("data processing " + tag, best.trace, tr_IX + 1e-9));
  });
  SuiteReport report{"thm1-dominance", {}};
  for (auto& s : slots) report.checks.insert(report.checks.end(), s.begin(), s.end());
  return report;
}

SuiteReport verify_thm2_gaussian(unsigned threads) {
  struct Case {
    double sigma;
    int k;
  };
  std::vector<Case> cases;
  for (double sigma : {0.5, 1.0, 2.0}) {
    for (int k : {1, 2, 3}) cases.push_back({sigma, k});
  }
  std::vector<std::vector<Check>> slots(cases.size());
  parallel_for(cases.size(), threads, [&](std::size_t i) {
    const Case& c = cases[i];
    const Model model = make_gaussian_location(1, c.sigma, 4.0 * c.sigma);
    const Vector theta = Vector::Zero(1);
    std::vector<double> grid;
    for (int j = -80; j <= 80; ++j) grid.push_back(0.05 * c.sigma * j);
    const CellSearchResult best = best_cell_partition(model, theta, c.k, grid);
    const double limit = 32.0 / 3.0 * c.k / (c.sigma * c.sigma);
    slots[i].push_back(
        at_most(fmt::format("grid max trace sigma={} k={}", c.sigma, c.k), best.trace, limit));
    if (c.k == 1) {
      const double sign = trace_IM(model, theta, Quantizer::sign(0.0)).trace;
      slots[i].push_back(within(fmt::format("sign trace sigma={}", c.sigma), sign,
                                2.0 / (std::numbers::pi * c.sigma * c.sigma), 1e-6));
    }
  });
  SuiteReport report{"thm2-gaussian", {}};
  for (auto& s : slots) report.checks.insert(report.checks.end(), s.begin(), s.end());
  return report;
}

SuiteReport verify_orlicz() {
  SuiteReport report{"orlicz", {}};
  const double psi2 = orlicz_norm(ScalarDistribution::normal(1.0), 2.0);
  report.checks.push_back(within("Psi_2 norm of N(0,1) vs sqrt(8/3)", psi2, std::sqrt(8.0 / 3.0),
                                 1e-4));

  const Model cov = make_gaussian_covariance(1, 0.5, 2.0);
  const Vector one = Vector::Ones(1);
  const auto dist = ScalarDistribution::from_density(
      [&](double x) { return density(cov, one, Sample::Constant(1, x)); },
      [&](double x) { return score(cov, one, Sample::Constant(1, x))[0]; }, -kInf, kInf, {0.0});
  report.checks.push_back(
      at_most("Psi_1 norm of the covariance score at theta=1", orlicz_norm(dist, 1.0), 2.0));
  return report;
}

SuiteReport verify_tree_identity(int trees, std::uint64_t seed) {
  SuiteReport report{"tree-identity", {}};
  const Model model = make_discrete(3);
  const Vector theta = Vector::Constant(3, 0.2);
  for (const TreeCase& c : random_tree_cases(trees, seed, support_size(model))) {
    const std::vector<double> sums = tree_identity(c.tree, model, theta);
    const double target = std::ldexp(1.0, c.k);
    double worst = 0.0;
    for (double s : sums) worst = std::max(worst, std::abs(s - target));
    const std::string tag = fmt::format("tree {} n={} k={}", report.checks.size() / 2 + 1, c.n, c.k);
    report.checks.push_back({"identity " + tag, worst, 1e-9, worst <= 1e-9});

    double total = 0.0;
    for_each_transcript(c.tree, model, theta, [&](const TranscriptTerms& terms) {
      double p = 1.0;
      for (double m : terms.node_mass) p *= m;
      total += p;
    });
    report.checks.push_back(within("probability sum " + tag, total, 1.0, 1e-9));
  }
  return report;
}

SuiteReport verify_blackboard_chain(int trees, std::uint64_t seed) {
  SuiteReport report{"blackboard-chain", {}};
  const Model model = make_bernoulli(2, BernoulliRegime::Dense, 0.25);
  const double I0 = variance_I0(model).value;
  const OrliczConstant orlicz = orlicz_I0(model);
  Rng theta_rng(derive_seed(seed, 0xb0a2d));
  int index = 0;
  for (const TreeCase& c : random_tree_cases(trees, seed, support_size(model))) {
    ++index;
    const Vector theta = random_in_box(domain(model), theta_rng);
    const double trace = trace_IM_blackboard(c.tree, model, theta);
    const std::string tag = fmt::format("tree {} n={} k={}", index, c.n, c.k);
    report.checks.push_back(
        at_most("n I0 2^k " + tag, trace, c.n * I0 * std::ldexp(1.0, c.k) + 1e-9));
    report.checks.push_back(at_most(
        "4 I0 n k^(2/p) " + tag, trace,
        4.0 * orlicz.I0 * c.n * std::pow(static_cast<double>(c.k), 2.0 / orlicz.p) + 1e-9));
  }

  // Chain rule: an independent protocol written as a tree carries the sum of
  // the per-node traces.
  for (int t = 0; t < 10; ++t) {
    Rng rng(derive_seed(seed, 0xc4a1 + t));
    const int n = 2 + t % 2;
    const int k = 1 + (t / 2) % 2;
    std::vector<Quantizer> quantizers;
    for (int i = 0; i < n; ++i) quantizers.push_back(random_table(support_size(model), k, rng));
    const Vector theta = random_in_box(domain(model), rng);
    double sum = 0.0;
    for (const Quantizer& q : quantizers) sum += trace_IM(model, theta, q).trace;
    const double tree = trace_IM_blackboard(make_independent_tree(quantizers), model, theta);
    report.checks.push_back(
        within(fmt::format("chain rule protocol {} n={} k={}", t + 1, n, k), tree, sum, 1e-9));
  }
  return report;
}

SuiteReport run_suite(const std::string& name, std::uint64_t seed, unsigned threads) {
  if (name == "lemma2") return verify_lemma2(50, seed);
  if (name == "tree-identity") return verify_tree_identity(100, seed);
  if (name == "thm1-dominance") return verify_thm1_dominance(threads);
  if (name == "thm2-gaussian") return verify_thm2_gaussian(threads);
  if (name == "blackboard-chain") return verify_blackboard_chain(100, seed);
  if (name == "orlicz") return verify_orlicz();
  throw Error(ErrorKind::InvalidArgument, fmt::format("unknown suite '{}'", name));
}

}  // namespace qfisher
