#pragma once

#include <string>
#include <vector>

#include "qfisher/fisher.hpp"
#include "qfisher/models.hpp"

namespace qfisher {

struct LowerBoundInputs {
  int d = 0;
  double n = 0.0;
  int k = 0;
  double B = 0.0;
  double I0 = 0.0;
  double p = 0.0;  // 0 in the variance regime
};

struct LowerBound {
  double value = 0.0;       // bound on the squared l2 risk
  std::string rate;         // symbolic rate tag, e.g. "d/(n 2^k)"
  double rate_value = 0.0;  // the rate expression without its universal constant
  BoundRegime regime = BoundRegime::Variance;
  LowerBoundInputs inputs;
  std::vector<std::string> warnings;
};

/// cos^2 prior on [-B, B]: mu(t) = cos^2(pi t / (2B)) / B.
class Cos2Prior {
 public:
  explicit Cos2Prior(double B);

  double B() const { return B_; }
  double density(double t) const;
  double cdf(double t) const;
  double quantile(double u) const;
  /// I(mu) = int mu'^2 / mu by quadrature; pi^2 / B^2 in closed form.
  double fisher_information() const;

 private:
  double B_;
};

double prior_sample(const Cos2Prior& prior, Rng& rng);

struct VanTreesRegime {
  BoundRegime kind;
  double I0;
  double p = 0.0;  // Orlicz exponent, used only in the Orlicz regime
};

/// d^2 / (n I0 2^k + d pi^2/B^2) or d^2 / (4 n I0 k^{2/p} + d pi^2/B^2).
/// n = 0 gives the prior-only value d B^2 / pi^2.
LowerBound van_trees_bound(int d, double n, int k, double B, VanTreesRegime regime);

/// Lower bound for a catalog model. The value instantiates the van Trees
/// argument with the model's constants, using min{sup tr I_X, communication
/// term} per sample; the rate tag is the maximum of the two rate branches.
LowerBound corollary_bound(const Model& model, double n, int k);

struct Bandwidth {
  double h = 1.0;
  int d = 1;
  int iterations = 0;
  bool converged = true;  // false when the fixed point alternated
};

/// Fixed point of h = (n min{2^k, round(1/h)})^{-1/(2(s+1))}.
Bandwidth nonpar_bandwidth(double s, double n, int k);

/// max{n^{-2s/(2s+1)}, (n 2^k)^{-s/(s+1)}} as the rate; the value comes
/// from the bump family f_P at the bandwidth of nonpar_bandwidth.
LowerBound nonpar_lower_bound(double s, double L, double n, int k);

}  // namespace qfisher
