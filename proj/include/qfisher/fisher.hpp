#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qfisher/models.hpp"
#include "qfisher/quantizers.hpp"

namespace qfisher {

struct MessageCentroid {
  Message m;
  double prob;      // p(m | theta)
  Vector centroid;  // E[S_theta(X) | m]
};

struct FisherReport {
  double trace = 0.0;
  std::optional<Matrix> matrix;
  std::vector<MessageCentroid> centroids;  // messages with p(m|theta) > 0 only
};

/// p(m | theta) for every message.
std::vector<double> message_probabilities(const Quantizer& q, const Model& model,
                                          const Vector& theta);

/// E[S_theta(X) | m]; throws EmptyBin when p(m|theta) == 0.
Vector centroid(const Model& model, const Vector& theta, const Quantizer& q, Message m);

/// Exact trace of I_M(theta) = sum_m p(m|theta) ||E[S|m]||^2. Supports finite
/// supports, one-dimensional continuous models and coordinate-sign quantizers
/// on Gaussian models with distinct coordinates.
FisherReport trace_IM(const Model& model, const Vector& theta, const Quantizer& q,
                      bool with_matrix = false);

/// The same trace through S_theta(m) = grad log p(m|theta), by central
/// differences with step delta.
double trace_IM_finite_difference(const Model& model, const Vector& theta, const Quantizer& q,
                                  double delta = 1e-6);

struct MonteCarloTrace {
  double trace;
  double std_error;
  std::size_t samples;
};

/// Plug-in estimate of the trace from simulated samples; the standard error
/// comes from 20 independent batches.
MonteCarloTrace trace_IM_monte_carlo(const Model& model, const Vector& theta, const Quantizer& q,
                                     std::size_t samples, std::uint64_t seed,
                                     unsigned threads = 1);

/// Trace of the Fisher information carried by a blackboard transcript.
double trace_IM_blackboard(const ProtocolTree& tree, const Model& model, const Vector& theta);

/// For each node j: sum over transcripts y of prod_{i != j} E[p_{i,y}(X_i)].
std::vector<double> tree_identity(const ProtocolTree& tree, const Model& model,
                                  const Vector& theta);

// ---------------------------------------------------------------------------
// I0 constants and the trace upper bounds

struct I0Result {
  double value = 0.0;
  bool unbounded = false;  // supremum blows up at a singular boundary
  Vector argmax;
  std::string warning;
};

/// sup over the domain of lambda_max(I_X(theta)).
I0Result variance_I0(const Model& model, const ParamDomain& domain);
I0Result variance_I0(const Model& model);

/// Scalar law for Orlicz norms: a density with a transform V = t(X), a finite
/// distribution, or an empirical sample.
class ScalarDistribution {
 public:
  static ScalarDistribution from_density(std::function<double(double)> density,
                                         std::function<double(double)> transform, double lo,
                                         double hi, std::vector<double> kinks = {});
  static ScalarDistribution finite(std::vector<double> values, std::vector<double> probs);
  static ScalarDistribution empirical(std::vector<double> draws);
  static ScalarDistribution normal(double stdev);
  static ScalarDistribution point_mass(double value);

  /// E[exp((|V|/K)^p) - 1], +infinity when the expectation diverges.
  double psi_moment(double K, double p) const;
  bool is_zero() const;

 private:
  ScalarDistribution() = default;

  std::function<double(double)> density_;
  std::function<double(double)> transform_;
  double lo_ = 0.0;
  double hi_ = 0.0;
  std::vector<double> kinks_;
  std::vector<double> values_;
  std::vector<double> probs_;
};

/// inf{K : E[exp((|V|/K)^p) - 1] <= 1} by bisection to relative tolerance
/// 1e-10; returns +infinity for heavy tails and 0 for V == 0.
double orlicz_norm(const ScalarDistribution& dist, double p);

struct OrliczConstant {
  double I0;  // bound on the squared Psi_p norm of every unit projection
  double p;
  std::string source;
};

/// Per-model constant for the k^{2/p} bound. Defined for the Gaussian models
/// and the dense product Bernoulli model; throws Unsupported otherwise.
OrliczConstant orlicz_I0(const Model& model);

/// Heuristic cross-check: max over random unit u of ||<u, S_theta(X)>||^2_{Psi_p}.
double orlicz_sup_random_directions(const Model& model, const Vector& theta, double p,
                                    int directions, std::uint64_t seed);

enum class BoundRegime { Variance, Orlicz };

struct BoundCertificate {
  BoundRegime regime;
  double I0;
  double p;  // Orlicz exponent; 0 in the variance regime
  int k;
  double tr_IX;
  double communication_term;  // 2^k I0 or 4 k^{2/p} I0
  double value;               // min{tr_IX, communication_term}
};

/// min{tr_IX, 2^k I0}.
BoundCertificate bound_thm1(double I0, int k, double tr_IX);
/// min{tr_IX, 4 k^{2/p} I0}.
BoundCertificate bound_thm2(double I0, int k, double p, double tr_IX);

// ---------------------------------------------------------------------------
// Exhaustive and grid searches over deterministic quantizers

struct BruteForceResult {
  std::vector<int> assignment;  // support index -> block (message)
  double trace = 0.0;
  std::uint64_t partitions = 0;
  double min_trace = 0.0;  // smallest trace seen, for the data-processing check
};

/// Calls visit(rgs) for every restricted growth string of length `size`
/// with at most `max_blocks` blocks, in lexicographic order.
void for_each_set_partition(int size, int max_blocks,
                            const std::function<void(std::span<const int>)>& visit);

/// Maximum trace over all deterministic quantizers of a finite support into
/// at most 2^k messages (support <= 12).
BruteForceResult brute_force_max_trace(const Model& model, const Vector& theta, int k);

struct CellSearchResult {
  std::vector<double> breakpoints;
  double trace = 0.0;
};

/// Best CellPartition with <= 2^k cells whose breakpoints are drawn from
/// `grid`, for a one-dimensional continuous model. Exact dynamic program over
/// consecutive grid cells.
CellSearchResult best_cell_partition(const Model& model, const Vector& theta, int k,
                                     std::span<const double> grid);

/// Same search by enumerating every breakpoint subset (small grids only).
CellSearchResult brute_force_cell_partition(const Model& model, const Vector& theta, int k,
                                            std::span<const double> grid);

}  // namespace qfisher
