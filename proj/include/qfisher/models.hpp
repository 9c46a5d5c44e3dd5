#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "qfisher/numeric.hpp"

namespace qfisher {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// A sample point. Discrete categories are 1-element vectors holding 1..d+1,
/// product Bernoulli samples are 0/1 vectors, continuous samples are real.
using Sample = Eigen::VectorXd;

/// Minimum distance from a singular boundary (score blow-up) for score/Fisher.
inline constexpr double kBoundaryTol = 1e-12;

/// Box [lower, upper] optionally intersected with {sum(theta) == sum_target}.
struct ParamDomain {
  Vector lower;
  Vector upper;
  std::optional<double> sum_target;

  static ParamDomain box(int d, double lo, double hi);

  int dim() const { return static_cast<int>(lower.size()); }
  Vector center() const { return 0.5 * (lower + upper); }
  bool contains(const Vector& theta, double slack = 1e-9) const;
  /// Throws InvalidArgument if lower > upper somewhere or the constraint
  /// cannot be met inside the box.
  void validate() const;
};

/// g(x) = exp(-1/(x(1-x))) / Z on (0, 1), zero elsewhere, with unit integral.
class BumpFunction {
 public:
  BumpFunction();

  double operator()(double x) const;
  double derivative(double x) const;
  double max_value() const { return (*this)(0.5); }
  /// Smoothness certificate: sup |g'| over [0, 1].
  double max_abs_derivative() const { return max_abs_derivative_; }
  double normalizer() const { return z_; }

 private:
  double z_;
  double max_abs_derivative_;
};

struct GaussianLocation {
  int d;
  double sigma;
  ParamDomain domain;  // [-B, B]^d
};

struct GaussianCovariance {
  int d;
  double sigma_min;
  double sigma_max;
  ParamDomain domain;  // [sigma_min^2, sigma_max^2]^d
};

/// Categories 1..d+1 with free parameters theta_1..theta_d and
/// theta_{d+1} = 1 - sum(theta).
struct DiscreteDistribution {
  int d;
  ParamDomain domain;
};

enum class BernoulliRegime { Dense, Sparse };

struct ProductBernoulli {
  int d;
  BernoulliRegime regime;
  double eps;
  ParamDomain domain;
};

/// f_P(x) = 1 + sum_i ((p_i - h)/h) g((x - x_i)/h), h = 1/d, x_i = (i-1)h.
/// The parameter is P = (p_1, ..., p_d).
struct HolderDensity {
  double s;
  double L;
  int d;
  BumpFunction bump;
  double c0;  // max |p_i - h| <= c0 h^{s+1} keeps f_P in the Hoelder class
  ParamDomain domain;

  double bin_width() const { return 1.0 / d; }
};

using Model = std::variant<GaussianLocation, GaussianCovariance, DiscreteDistribution,
                           ProductBernoulli, HolderDensity>;

Model make_gaussian_location(int d, double sigma, double B);
Model make_gaussian_covariance(int d, double sigma_min, double sigma_max);
Model make_discrete(int d);
/// Discrete model restricted to the box [1/(4d), 1/(2d)]^d.
Model make_discrete_corollary_box(int d);
Model make_discrete(int d, ParamDomain domain);
Model make_bernoulli(int d, BernoulliRegime regime, double eps);
Model make_holder(double s, double L, int d);

std::string_view kind_name(const Model& model);
int param_dim(const Model& model);
int sample_dim(const Model& model);
const ParamDomain& domain(const Model& model);

bool has_finite_support(const Model& model);
/// Support points of a finite-support model, in support_index order.
std::vector<Sample> support(const Model& model);
std::size_t support_size(const Model& model);
std::size_t support_index(const Model& model, const Sample& x);

/// Continuous models with one-dimensional samples.
bool is_continuous_1d(const Model& model);
std::pair<double, double> support_interval(const Model& model);
/// Points where the density is not smooth (bump boundaries for Hoelder).
std::vector<double> density_kinks(const Model& model);

/// Throws ParameterOutOfDomain or SingularParameter unless theta is an
/// interior point of the model's domain.
void check_parameter(const Model& model, const Vector& theta);

/// f(x|theta); theta must lie in the model's ParamDomain.
double density(const Model& model, const Vector& theta, const Sample& x);
/// f(x|theta) on the natural parameter space (no ParamDomain check).
double density_unchecked(const Model& model, const Vector& theta, const Sample& x);
/// log f(x|theta) on the natural parameter space (no ParamDomain check); used
/// for finite differences that step off the domain.
double log_density(const Model& model, const Vector& theta, const Sample& x);
Vector score(const Model& model, const Vector& theta, const Sample& x);
Sample sample(const Model& model, const Vector& theta, Rng& rng);
Matrix fisher_X(const Model& model, const Vector& theta);

/// Hoelder seminorm sup |v_i - v_j| / |t_i - t_j|^s of values on a uniform grid.
double holder_seminorm(std::span<const double> values, double step, double s);
/// Largest c0 for which every f_P with max |p_i - h| <= c0 h^{s+1} has Hoelder
/// seminorm <= L, measured on a grid of step 1e-3 over three adjacent bumps.
double holder_c0(const BumpFunction& bump, double s, double L);

}  // namespace qfisher
