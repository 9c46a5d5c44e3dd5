#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qfisher {

/// One measured quantity against its limit. For "within" checks the value is
/// a discrepancy and the limit its tolerance.
struct Check {
  std::string name;
  double value = 0.0;
  double limit = 0.0;
  bool pass = false;
};

struct SuiteReport {
  std::string suite;
  std::vector<Check> checks;
  bool passed() const;
  /// Largest value over checks whose name starts with `prefix`.
  double max_value(const std::string& prefix) const;
};

/// Suite names: lemma2, tree-identity, thm1-dominance, thm2-gaussian,
/// blackboard-chain, orlicz.
const std::vector<std::string>& suite_names();

/// Runs one suite; every suite is deterministic given the seed.
SuiteReport run_suite(const std::string& name, std::uint64_t seed, unsigned threads = 1);

/// Centroid-formula trace against finite differences of log p(m|theta) on
/// random discrete and product Bernoulli models with random tables.
SuiteReport verify_lemma2(int triples, std::uint64_t seed);

/// Exhaustive quantizer search against min{tr I_X, 2^k I0} and 6 min{d^2, d 2^k}
/// for the discrete model, d in {2, 3}, k in {1, 2}, five theta per box.
SuiteReport verify_thm1_dominance(unsigned threads = 1);

/// Best cell partition on a 0.05 sigma grid over [-4 sigma, 4 sigma] against
/// (32/3) k / sigma^2, plus the sign quantizer against 2 / (pi sigma^2).
SuiteReport verify_thm2_gaussian(unsigned threads = 1);

/// Psi_2 norm of N(0, 1) and the Psi_1 norm of the covariance score at theta = 1.
SuiteReport verify_orlicz();

/// Random valid trees with n in {2, 3}, k in {1, 2} on a discrete model:
/// the per-node identity equals 2^k and transcript probabilities sum to 1.
SuiteReport verify_tree_identity(int trees, std::uint64_t seed);

/// The same trees on the dense product Bernoulli model (eps = 1/4) against
/// n I0 2^k and 4 I0 n k, plus the chain rule for independent trees.
SuiteReport verify_blackboard_chain(int trees, std::uint64_t seed);

}  // namespace qfisher
