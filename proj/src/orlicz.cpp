#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "qfisher/error.hpp"
#include "qfisher/fisher.hpp"

namespace qfisher {

namespace {

// f * (exp(a) - 1) without overflowing when f is tiny and a is large.
double weighted_psi(double f, double a) {
  if (!(f > 0.0)) return 0.0;
  if (a < 700.0) return f * std::expm1(a);
  return std::exp(a + std::log(f)) - f;
}

}  // namespace

ScalarDistribution ScalarDistribution::from_density(std::function<double(double)> density,
                                                    std::function<double(double)> transform,
                                                    double lo, double hi,
                                                    std::vector<double> kinks) {
  if (!(lo < hi)) throw Error(ErrorKind::InvalidArgument, "density support must have lo < hi");
  ScalarDistribution dist;
  dist.density_ = std::move(density);
  dist.transform_ = std::move(transform);
  dist.lo_ = lo;
  dist.hi_ = hi;
  dist.kinks_ = std::move(kinks);
  return dist;
}

ScalarDistribution ScalarDistribution::finite(std::vector<double> values,
                                              std::vector<double> probs) {
  if (values.size() != probs.size() || values.empty()) {
    throw Error(ErrorKind::InvalidArgument, "finite distribution needs matching values and probs");
  }
  ScalarDistribution dist;
  dist.values_ = std::move(values);
  dist.probs_ = std::move(probs);
  return dist;
}

ScalarDistribution ScalarDistribution::empirical(std::vector<double> draws) {
  const std::size_t n = draws.size();
  return finite(std::move(draws), std::vector<double>(n, 1.0 / double(n)));
}

ScalarDistribution ScalarDistribution::normal(double stdev) {
  if (!(stdev > 0.0)) return point_mass(0.0);
  return from_density([stdev](double x) { return normal_pdf(x / stdev) / stdev; },
                      [](double x) { return x; }, -kInf, kInf, {0.0});
}

ScalarDistribution ScalarDistribution::point_mass(double value) { return finite({value}, {1.0}); }

bool ScalarDistribution::is_zero() const {
  if (density_) return false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i] != 0.0 && probs_[i] > 0.0) return false;
  }
  return true;
}

double ScalarDistribution::psi_moment(double K, double p) const {
  if (!density_) {
    double total = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      total += weighted_psi(probs_[i], std::pow(std::abs(values_[i]) / K, p));
    }
    return std::isfinite(total) ? total : kInf;
  }
  const auto integrand = [&](double x) {
    return weighted_psi(density_(x), std::pow(std::abs(transform_(x)) / K, p));
  };
  // Quadrature on an unbounded range can return a finite value for a divergent
  // integral, so probe the tails geometrically for overflow first.
  for (int j = 0; j <= 1020; j += 4) {
    const double x = std::ldexp(1.0, j);
    for (const double probe : {-x, x}) {
      if (probe <= lo_ || probe >= hi_) continue;
      if (!std::isfinite(integrand(probe))) return kInf;
    }
  }
  try {
    const double value = integrate_split(integrand, lo_, hi_, kinks_);
    return std::isfinite(value) && value >= 0.0 ? value : kInf;
  } catch (const Error&) {
    return kInf;
  }
}

double orlicz_norm(const ScalarDistribution& dist, double p) {
  if (!(p >= 1.0)) throw Error(ErrorKind::InvalidArgument, "Orlicz exponent must be >= 1");
  if (dist.is_zero()) return 0.0;
  const auto feasible = [&](double K) { return dist.psi_moment(K, p) <= 1.0; };

  double hi = 1.0;
  while (!feasible(hi)) {
    hi *= 2.0;
    if (hi > 1e15) return kInf;
  }
  double lo = hi / 2.0;
  while (feasible(lo)) {
    lo /= 2.0;
    if (lo < 1e-300) return 0.0;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-10 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (feasible(mid) ? hi : lo) = mid;
  }
  return hi;
}

OrliczConstant orlicz_I0(const Model& model) {
  if (const auto* m = std::get_if<GaussianLocation>(&model)) {
    // Every unit projection of the score is N(0, 1/sigma^2).
    return {8.0 / (3.0 * m->sigma * m->sigma), 2.0,
            "Gaussian projection, squared Psi_2 norm 8/(3 sigma^2)"};
  }
  if (const auto* m = std::get_if<GaussianCovariance>(&model)) {
    const double alpha = std::log(2.0) / (std::log(4.0) + 2.0 * (2.0 + std::sqrt(2.0)));
    const double norm = 2.0 / (m->sigma_min * m->sigma_min * alpha);
    return {norm * norm, 1.0,
            "sub-exponential chi-square projection, Psi_1 norm 2/(sigma_min^2 alpha)"};
  }
  if (const auto* m = std::get_if<ProductBernoulli>(&model);
      m && m->regime == BernoulliRegime::Dense) {
    // Hoeffding: each score coordinate spans an interval of length 1/(theta(1-theta)),
    // so <u,S> has variance proxy v = range^2 / 4 and squared Psi_2 norm <= 8v/3.
    const double range = 1.0 / ((0.5 - m->eps) * (0.5 + m->eps));
    return {2.0 * range * range / 3.0, 2.0,
            "Hoeffding sub-Gaussian bound for bounded independent coordinates"};
  }
  throw Error(ErrorKind::Unsupported,
              fmt::format("no Orlicz constant is available for {}; use the variance constant",
                          kind_name(model)));
}

double orlicz_sup_random_directions(const Model& model, const Vector& theta, double p,
                                    int directions, std::uint64_t seed) {
  if (directions < 1) throw Error(ErrorKind::InvalidArgument, "directions must be >= 1");
  const int d = param_dim(model);
  Rng rng(seed);
  std::normal_distribution<double> gauss;

  std::vector<Sample> points;
  std::vector<double> mass;
  std::vector<Vector> scores;
  if (has_finite_support(model)) {
    for (Sample& x : support(model)) {
      mass.push_back(density_unchecked(model, theta, x));
      scores.push_back(score(model, theta, x));
      points.push_back(std::move(x));
    }
  } else if (!is_continuous_1d(model) && !std::holds_alternative<GaussianLocation>(model)) {
    // Monte Carlo stand-in for multivariate continuous scores.
    Rng draw(derive_seed(seed, 0x5eed));
    for (int s = 0; s < 20000; ++s) scores.push_back(score(model, theta, sample(model, theta, draw)));
  }

  double best = 0.0;
  for (int r = 0; r < directions; ++r) {
    Vector u(d);
    for (int i = 0; i < d; ++i) u[i] = gauss(rng);
    u /= u.norm();
    double norm;
    if (const auto* m = std::get_if<GaussianLocation>(&model)) {
      norm = orlicz_norm(ScalarDistribution::normal(1.0 / m->sigma), p);
    } else if (!mass.empty()) {
      std::vector<double> values;
      for (const Vector& s : scores) values.push_back(u.dot(s));
      norm = orlicz_norm(ScalarDistribution::finite(values, mass), p);
    } else if (is_continuous_1d(model)) {
      const auto [lo, hi] = support_interval(model);
      norm = orlicz_norm(
          ScalarDistribution::from_density(
              [&](double x) { return density_unchecked(model, theta, Sample::Constant(1, x)); },
              [&, u](double x) { return u.dot(score(model, theta, Sample::Constant(1, x))); },
              lo, hi, density_kinks(model)),
          p);
    } else {
      std::vector<double> values;
      values.reserve(scores.size());
      for (const Vector& s : scores) values.push_back(u.dot(s));
      norm = orlicz_norm(ScalarDistribution::empirical(std::move(values)), p);
    }
    best = std::max(best, norm * norm);
  }
  return best;
}

}  // namespace qfisher
