#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qfisher/bounds.hpp"
#include "qfisher/models.hpp"
#include "qfisher/quantizers.hpp"

namespace qfisher {

using Estimator = std::function<Vector(std::span<const Message>)>;

/// Per-node quantizers plus the estimator that reads the n messages.
/// Nodes share quantizer objects, so large n stays cheap.
struct IndependentScheme {
  std::string name;
  int k = 1;
  std::vector<std::shared_ptr<const Quantizer>> quantizers;
  Estimator estimate;
};

/// Node i picks its quantizer from the messages of nodes 1..i-1.
struct SequentialScheme {
  std::string name;
  int n = 0;
  SequentialStrategy strategy;
  Estimator estimate;
};

/// Categories 1..d+1 split into G = ceil((d+1)/(2^k-1)) contiguous groups;
/// node i reports its category within group (i mod G), or the spare message
/// 2^k-1 for "other". Estimates theta_1..theta_d.
IndependentScheme scheme_discrete_grouping(int d, int k, int n);

/// Group sizes n_g of the grouping scheme and the group of each category.
struct GroupingLayout {
  int groups = 0;
  int per_group = 0;               // categories per group, 2^k - 1 capped at d+1
  std::vector<int> group_of;       // 0-based category -> group
  std::vector<int> nodes_in_group;
};
GroupingLayout grouping_layout(int categories, int k, int n);

/// sum_j theta_j (1 - theta_j) / n_{g(j)} over the free coordinates.
double grouping_risk(const Vector& theta, int k, int n);

/// Node i sends sign(X_j) for j in {(i k' + t) mod d : t < k'}, k' = min(k, d);
/// theta_j = sigma Phi^{-1}(p_j) with p_j clamped to [1/(2m_j), 1 - 1/(2m_j)].
IndependentScheme scheme_gaussian_sign(int d, int k, int n, double B, double sigma);

struct HistogramScheme {
  Bandwidth bandwidth;
  int cells = 1;             // D = round(1/h) bins of [0, 1]
  IndependentScheme scheme;  // estimate() returns the D bin probabilities
};

/// Bins [0, 1] into D cells at the nonparametric bandwidth and estimates every
/// bin probability with the grouping scheme over D categories.
HistogramScheme scheme_histogram_density(double s, int n, int k);

/// int (f - fhat)^2 for fhat = sum_i D p_i 1(cell i), given int f^2 and the
/// true cell probabilities.
double histogram_l2_risk(double f_squared, std::span<const double> cell_mass,
                         std::span<const double> p_hat);

/// One-dimensional Gaussian location demo: node i splits the line into 2^k
/// cells at c_i + sigma Phi^{-1}(j / 2^k) and the center moves by a
/// Robbins-Monro step c_{i+1} = c_i + S(m_i) / (i I_q), clamped to [-B, B].
SequentialScheme scheme_sequential_refinement(int k, int n, double B, double sigma);

// ---------------------------------------------------------------------------
// Experiments

enum class ThetaRule { Fixed, Prior, Grid };
enum class ProtocolKind { Independent, Sequential, Blackboard };

std::string to_string(ThetaRule rule);
std::string to_string(ProtocolKind protocol);
ThetaRule parse_theta_rule(const std::string& text);
ProtocolKind parse_protocol(const std::string& text);

/// Scheme identifiers: "discrete_grouping", "gaussian_sign", "histogram",
/// "sequential_refinement".
struct ExperimentConfig {
  Model model;
  std::string scheme;
  ThetaRule theta_rule = ThetaRule::Fixed;
  std::optional<Vector> theta;  // fixed theta; defaults per model
  ProtocolKind protocol = ProtocolKind::Independent;
  int n = 1;
  int k = 1;
  int trials = 1;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct RiskEstimate {
  double risk = 0.0;
  double std_error = 0.0;
  int trials = 0;
  std::string seeds_digest;  // 16 hex digits folded over the trial seeds
  LowerBound bound;
  double ratio = 0.0;         // risk / bound.value
  Vector theta;               // the fixed theta, or the worst grid point
  int grid_points = 1;
};

/// Throws ConfigError when the scheme does not fit the model or n, k, trials
/// are out of range.
void validate_config(const ExperimentConfig& config);

/// The default fixed theta: uniform for distributions, the test density for
/// Hoelder models, the domain center otherwise.
Vector default_theta(const Model& model);

/// Box over which the prior and grid rules draw theta.
ParamDomain experiment_box(const Model& model);

/// Grid rule candidates: center, lower and upper corners, two alternating
/// corners, then prior draws up to 8 points. Points that leave the domain
/// or hit a singular boundary are skipped.
std::vector<Vector> theta_grid(const Model& model, std::uint64_t seed);

RiskEstimate run_experiment(const ExperimentConfig& config);

/// Per-trial losses ||theta_hat - theta||^2 for one theta; exposed for the
/// protocol-equivalence and unbiasedness checks.
std::vector<double> trial_losses(const ExperimentConfig& config, const Vector& theta,
                                 std::uint64_t stream);

/// Estimates theta_hat per trial (parametric schemes only).
std::vector<Vector> trial_estimates(const ExperimentConfig& config, const Vector& theta,
                                    std::uint64_t stream);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  int points = 0;
};

/// OLS of log y on log x with a 95% Student-t interval; needs >= 4 points.
SlopeFit slope_fit(std::span<const std::pair<double, double>> points);

}  // namespace qfisher
