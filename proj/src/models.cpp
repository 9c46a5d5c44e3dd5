#include "qfisher/models.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include <fmt/format.h>

#include "qfisher/error.hpp"

namespace qfisher {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_dim(const Vector& theta, int d) {
  if (theta.size() != d) {
    throw Error(ErrorKind::ParameterOutOfDomain,
                fmt::format("parameter has dimension {}, expected {}", theta.size(), d));
  }
}

void require_sample_dim(const Sample& x, int d) {
  if (x.size() != d) {
    throw Error(ErrorKind::InvalidSample,
                fmt::format("sample has dimension {}, expected {}", x.size(), d));
  }
}

double last_category(const Vector& theta) { return 1.0 - theta.sum(); }

int category_of(const DiscreteDistribution& m, const Sample& x) {
  require_sample_dim(x, 1);
  const double v = x[0];
  const int c = static_cast<int>(std::lround(v));
  if (v != static_cast<double>(c) || c < 1 || c > m.d + 1) {
    throw Error(ErrorKind::InvalidSample,
                fmt::format("category {} outside support 1..{}", v, m.d + 1));
  }
  return c;
}

void require_binary(const ProductBernoulli& m, const Sample& x) {
  require_sample_dim(x, m.d);
  for (int i = 0; i < m.d; ++i) {
    if (x[i] != 0.0 && x[i] != 1.0) {
      throw Error(ErrorKind::InvalidSample, "product Bernoulli samples must be 0/1 vectors");
    }
  }
}

double holder_unit_sample(const Sample& x) {
  require_sample_dim(x, 1);
  if (!(x[0] >= 0.0 && x[0] <= 1.0)) {
    throw Error(ErrorKind::InvalidSample, fmt::format("sample {} outside [0, 1]", x[0]));
  }
  return x[0];
}

// Index of the bump whose support contains x, and the local coordinate.
std::pair<int, double> holder_cell(const HolderDensity& m, double x) {
  const double h = m.bin_width();
  int i = static_cast<int>(std::floor(x / h));
  i = std::clamp(i, 0, m.d - 1);
  return {i, (x - i * h) / h};
}

double holder_density_raw(const HolderDensity& m, const Vector& p, double x) {
  const double h = m.bin_width();
  const auto [i, t] = holder_cell(m, x);
  return 1.0 + (p[i] - h) / h * m.bump(t);
}

void require_interior(const Model& model, const Vector& theta) {
  std::visit(
      Overloaded{
          [&](const GaussianLocation&) {},
          [&](const GaussianCovariance& m) {
            for (int i = 0; i < m.d; ++i) {
              if (theta[i] < kBoundaryTol) {
                throw Error(ErrorKind::SingularParameter,
                            fmt::format("variance theta_{} = {} is singular", i + 1, theta[i]));
              }
            }
          },
          [&](const DiscreteDistribution& m) {
            for (int i = 0; i < m.d; ++i) {
              if (theta[i] < kBoundaryTol) {
                throw Error(ErrorKind::SingularParameter,
                            fmt::format("theta_{} = {} is on the boundary", i + 1, theta[i]));
              }
            }
            if (last_category(theta) < kBoundaryTol) {
              throw Error(ErrorKind::SingularParameter,
                          fmt::format("theta_{} = 1 - sum(theta) = {} is on the boundary",
                                      m.d + 1, last_category(theta)));
            }
          },
          [&](const ProductBernoulli& m) {
            for (int i = 0; i < m.d; ++i) {
              if (theta[i] < kBoundaryTol || theta[i] > 1.0 - kBoundaryTol) {
                throw Error(ErrorKind::SingularParameter,
                            fmt::format("theta_{} = {} is on the boundary", i + 1, theta[i]));
              }
            }
          },
          [&](const HolderDensity& m) {
            const double floor = 1.0 - (theta.array() - m.bin_width()).abs().maxCoeff() /
                                           m.bin_width() * m.bump.max_value();
            if (floor < kBoundaryTol) {
              throw Error(ErrorKind::SingularParameter, "bump weights make f_P vanish");
            }
          },
      },
      model);
}

void require_in_domain(const Model& model, const Vector& theta) {
  const ParamDomain& dom = domain(model);
  require_dim(theta, dom.dim());
  if (!dom.contains(theta)) {
    throw Error(ErrorKind::ParameterOutOfDomain, "parameter lies outside the model's domain");
  }
  if (const auto* m = std::get_if<DiscreteDistribution>(&model)) {
    if (last_category(theta) < -1e-9) {
      throw Error(ErrorKind::ParameterOutOfDomain,
                  fmt::format("theta_{} = 1 - sum(theta) is negative", m->d + 1));
    }
  }
}

double density_raw(const Model& model, const Vector& theta, const Sample& x) {
  return std::visit(
      Overloaded{
          [&](const GaussianLocation& m) {
            require_sample_dim(x, m.d);
            const double z2 = (x - theta).squaredNorm() / (m.sigma * m.sigma);
            return std::exp(-0.5 * z2) / std::pow(m.sigma * std::sqrt(2.0 * M_PI), m.d);
          },
          [&](const GaussianCovariance& m) {
            require_sample_dim(x, m.d);
            double f = 1.0;
            for (int i = 0; i < m.d; ++i) {
              if (theta[i] <= 0.0) {
                throw Error(ErrorKind::SingularParameter, "variance must be positive");
              }
              f *= std::exp(-0.5 * x[i] * x[i] / theta[i]) / std::sqrt(2.0 * M_PI * theta[i]);
            }
            return f;
          },
          [&](const DiscreteDistribution& m) {
            const int c = category_of(m, x);
            return c <= m.d ? theta[c - 1] : last_category(theta);
          },
          [&](const ProductBernoulli& m) {
            require_binary(m, x);
            double f = 1.0;
            for (int i = 0; i < m.d; ++i) f *= x[i] == 1.0 ? theta[i] : 1.0 - theta[i];
            return f;
          },
          [&](const HolderDensity& m) {
            return holder_density_raw(m, theta, holder_unit_sample(x));
          },
      },
      model);
}

double bump_unnormalized(double x) {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  return std::exp(-1.0 / (x * (1.0 - x)));
}

}  // namespace

ParamDomain ParamDomain::box(int d, double lo, double hi) {
  return ParamDomain{Vector::Constant(d, lo), Vector::Constant(d, hi), std::nullopt};
}

bool ParamDomain::contains(const Vector& theta, double slack) const {
  if (theta.size() != lower.size()) return false;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    if (!(theta[i] >= lower[i] - slack && theta[i] <= upper[i] + slack)) return false;
  }
  if (sum_target && std::abs(theta.sum() - *sum_target) > slack * std::max<double>(1, dim())) {
    return false;
  }
  return true;
}

void ParamDomain::validate() const {
  if (lower.size() != upper.size()) {
    throw Error(ErrorKind::InvalidArgument, "domain bounds have different lengths");
  }
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (!(lower[i] <= upper[i])) {
      throw Error(ErrorKind::InvalidArgument,
                  fmt::format("domain lower[{}] = {} exceeds upper = {}", i, lower[i], upper[i]));
    }
  }
  if (sum_target && (lower.sum() > *sum_target + 1e-12 || upper.sum() < *sum_target - 1e-12)) {
    throw Error(ErrorKind::InvalidArgument, "sum constraint does not intersect the box");
  }
}

BumpFunction::BumpFunction() {
  z_ = integrate(bump_unnormalized, 0.0, 1.0);
  // g' > 0 on (0, 1/2) and the profile is unimodal there; grid then golden section.
  const auto abs_deriv = [this](double x) { return std::abs(derivative(x)); };
  double best_x = 0.25;
  double best = 0.0;
  for (int i = 1; i < 5000; ++i) {
    const double x = i * 1e-4;
    const double v = abs_deriv(x);
    if (v > best) {
      best = v;
      best_x = x;
    }
  }
  double a = best_x - 1e-4;
  double b = best_x + 1e-4;
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 80; ++it) {
    const double c = b - phi * (b - a);
    const double d = a + phi * (b - a);
    if (abs_deriv(c) > abs_deriv(d)) b = d; else a = c;
  }
  max_abs_derivative_ = std::max(best, abs_deriv(0.5 * (a + b)));
}

double BumpFunction::operator()(double x) const { return bump_unnormalized(x) / z_; }

double BumpFunction::derivative(double x) const {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  const double q = x * (1.0 - x);
  return (*this)(x) * (1.0 - 2.0 * x) / (q * q);
}

Model make_gaussian_location(int d, double sigma, double B) {
  if (d < 1 || !(sigma > 0.0) || !(B > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "gaussian_location needs d >= 1, sigma > 0, B > 0");
  }
  return GaussianLocation{d, sigma, ParamDomain::box(d, -B, B)};
}

Model make_gaussian_covariance(int d, double sigma_min, double sigma_max) {
  if (d < 1 || !(sigma_min > 0.0) || !(sigma_max > sigma_min)) {
    throw Error(ErrorKind::InvalidArgument,
                "gaussian_cov needs d >= 1 and sigma_max > sigma_min > 0");
  }
  return GaussianCovariance{d, sigma_min, sigma_max,
                            ParamDomain::box(d, sigma_min * sigma_min, sigma_max * sigma_max)};
}

Model make_discrete(int d) { return make_discrete(d, ParamDomain::box(d, 0.0, 1.0)); }

Model make_discrete_corollary_box(int d) {
  return make_discrete(d, ParamDomain::box(d, 1.0 / (4.0 * d), 1.0 / (2.0 * d)));
}

Model make_discrete(int d, ParamDomain domain) {
  if (d < 1) throw Error(ErrorKind::InvalidArgument, "discrete model needs d >= 1");
  if (domain.dim() != d) throw Error(ErrorKind::InvalidArgument, "domain dimension mismatch");
  domain.validate();
  if (domain.lower.minCoeff() < 0.0 || domain.lower.sum() > 1.0) {
    throw Error(ErrorKind::InvalidArgument, "discrete domain must meet the probability simplex");
  }
  return DiscreteDistribution{d, std::move(domain)};
}

Model make_bernoulli(int d, BernoulliRegime regime, double eps) {
  if (d < 1 || !(eps > 0.0 && eps < 0.5)) {
    throw Error(ErrorKind::InvalidArgument, "bernoulli needs d >= 1 and 0 < eps < 1/2");
  }
  const double scale = regime == BernoulliRegime::Dense ? 1.0 : 1.0 / d;
  return ProductBernoulli{d, regime, eps,
                          ParamDomain::box(d, (0.5 - eps) * scale, (0.5 + eps) * scale)};
}

Model make_holder(double s, double L, int d) {
  if (!(s > 0.0 && s <= 1.0) || !(L > 0.0) || d < 1) {
    throw Error(ErrorKind::InvalidArgument, "holder needs s in (0, 1], L > 0, d >= 1");
  }
  BumpFunction bump;
  const double c0 = holder_c0(bump, s, L);
  const double h = 1.0 / d;
  const double r = c0 * std::pow(h, s + 1.0);
  ParamDomain dom = ParamDomain::box(d, h - r, h + r);
  dom.sum_target = 1.0;
  return HolderDensity{s, L, d, bump, c0, std::move(dom)};
}

std::string_view kind_name(const Model& model) {
  return std::visit(Overloaded{
                        [](const GaussianLocation&) { return "gaussian_location"; },
                        [](const GaussianCovariance&) { return "gaussian_cov"; },
                        [](const DiscreteDistribution&) { return "discrete"; },
                        [](const ProductBernoulli&) { return "bernoulli"; },
                        [](const HolderDensity&) { return "holder"; },
                    },
                    model);
}

int param_dim(const Model& model) {
  return std::visit([](const auto& m) { return m.d; }, model);
}

int sample_dim(const Model& model) {
  return std::visit(Overloaded{
                        [](const GaussianLocation& m) { return m.d; },
                        [](const GaussianCovariance& m) { return m.d; },
                        [](const DiscreteDistribution&) { return 1; },
                        [](const ProductBernoulli& m) { return m.d; },
                        [](const HolderDensity&) { return 1; },
                    },
                    model);
}

const ParamDomain& domain(const Model& model) {
  return std::visit([](const auto& m) -> const ParamDomain& { return m.domain; }, model);
}

bool has_finite_support(const Model& model) {
  return std::holds_alternative<DiscreteDistribution>(model) ||
         std::holds_alternative<ProductBernoulli>(model);
}

std::size_t support_size(const Model& model) {
  if (const auto* m = std::get_if<DiscreteDistribution>(&model)) return m->d + 1;
  if (const auto* m = std::get_if<ProductBernoulli>(&model)) {
    if (m->d > 20) {
      throw Error(ErrorKind::InfeasibleEnumeration, "product Bernoulli support above 2^20");
    }
    return std::size_t{1} << m->d;
  }
  throw Error(ErrorKind::Unsupported,
              fmt::format("{} has no finite support", kind_name(model)));
}

std::vector<Sample> support(const Model& model) {
  const std::size_t n = support_size(model);
  std::vector<Sample> points;
  points.reserve(n);
  if (std::holds_alternative<DiscreteDistribution>(model)) {
    for (std::size_t c = 1; c <= n; ++c) points.push_back(Sample::Constant(1, double(c)));
  } else {
    const int d = std::get<ProductBernoulli>(model).d;
    for (std::size_t code = 0; code < n; ++code) {
      Sample x(d);
      for (int i = 0; i < d; ++i) x[i] = double((code >> i) & 1U);
      points.push_back(std::move(x));
    }
  }
  return points;
}

std::size_t support_index(const Model& model, const Sample& x) {
  if (const auto* m = std::get_if<DiscreteDistribution>(&model)) {
    return static_cast<std::size_t>(category_of(*m, x) - 1);
  }
  if (const auto* m = std::get_if<ProductBernoulli>(&model)) {
    require_binary(*m, x);
    std::size_t code = 0;
    for (int i = 0; i < m->d; ++i) code |= std::size_t(x[i] == 1.0) << i;
    return code;
  }
  throw Error(ErrorKind::Unsupported,
              fmt::format("{} has no finite support", kind_name(model)));
}

bool is_continuous_1d(const Model& model) {
  return std::visit(Overloaded{
                        [](const GaussianLocation& m) { return m.d == 1; },
                        [](const GaussianCovariance& m) { return m.d == 1; },
                        [](const DiscreteDistribution&) { return false; },
                        [](const ProductBernoulli&) { return false; },
                        [](const HolderDensity&) { return true; },
                    },
                    model);
}

std::pair<double, double> support_interval(const Model& model) {
  if (std::holds_alternative<HolderDensity>(model)) return {0.0, 1.0};
  if (!is_continuous_1d(model)) {
    throw Error(ErrorKind::Unsupported,
                fmt::format("{} is not a one-dimensional continuous model", kind_name(model)));
  }
  return {-kInf, kInf};
}

std::vector<double> density_kinks(const Model& model) {
  std::vector<double> kinks;
  if (const auto* m = std::get_if<HolderDensity>(&model)) {
    for (int i = 1; i < m->d; ++i) kinks.push_back(i * m->bin_width());
  }
  return kinks;
}

void check_parameter(const Model& model, const Vector& theta) {
  require_in_domain(model, theta);
  require_interior(model, theta);
}

double density(const Model& model, const Vector& theta, const Sample& x) {
  require_in_domain(model, theta);
  return density_raw(model, theta, x);
}

double density_unchecked(const Model& model, const Vector& theta, const Sample& x) {
  require_dim(theta, param_dim(model));
  return density_raw(model, theta, x);
}

double log_density(const Model& model, const Vector& theta, const Sample& x) {
  require_dim(theta, param_dim(model));
  return std::log(density_raw(model, theta, x));
}

Vector score(const Model& model, const Vector& theta, const Sample& x) {
  require_dim(theta, param_dim(model));
  require_interior(model, theta);
  return std::visit(
      Overloaded{
          [&](const GaussianLocation& m) -> Vector {
            require_sample_dim(x, m.d);
            return (x - theta) / (m.sigma * m.sigma);
          },
          [&](const GaussianCovariance& m) -> Vector {
            require_sample_dim(x, m.d);
            Vector s(m.d);
            for (int i = 0; i < m.d; ++i) {
              s[i] = x[i] * x[i] / (2.0 * theta[i] * theta[i]) - 1.0 / (2.0 * theta[i]);
            }
            return s;
          },
          [&](const DiscreteDistribution& m) -> Vector {
            const int c = category_of(m, x);
            if (c == m.d + 1) return Vector::Constant(m.d, -1.0 / last_category(theta));
            Vector s = Vector::Zero(m.d);
            s[c - 1] = 1.0 / theta[c - 1];
            return s;
          },
          [&](const ProductBernoulli& m) -> Vector {
            require_binary(m, x);
            Vector s(m.d);
            for (int i = 0; i < m.d; ++i) {
              s[i] = x[i] == 1.0 ? 1.0 / theta[i] : -1.0 / (1.0 - theta[i]);
            }
            return s;
          },
          [&](const HolderDensity& m) -> Vector {
            const double u = holder_unit_sample(x);
            const auto [i, t] = holder_cell(m, u);
            Vector s = Vector::Zero(m.d);
            s[i] = m.bump(t) / m.bin_width() / holder_density_raw(m, theta, u);
            return s;
          },
      },
      model);
}

Sample sample(const Model& model, const Vector& theta, Rng& rng) {
  require_in_domain(model, theta);
  require_interior(model, theta);
  return std::visit(
      Overloaded{
          [&](const GaussianLocation& m) -> Sample {
            std::normal_distribution<double> z;
            Sample x(m.d);
            for (int i = 0; i < m.d; ++i) x[i] = theta[i] + m.sigma * z(rng);
            return x;
          },
          [&](const GaussianCovariance& m) -> Sample {
            std::normal_distribution<double> z;
            Sample x(m.d);
            for (int i = 0; i < m.d; ++i) x[i] = std::sqrt(theta[i]) * z(rng);
            return x;
          },
          [&](const DiscreteDistribution& m) -> Sample {
            const double u = uniform01(rng);
            double cum = 0.0;
            for (int i = 0; i < m.d; ++i) {
              cum += theta[i];
              if (u < cum) return Sample::Constant(1, double(i + 1));
            }
            return Sample::Constant(1, double(m.d + 1));
          },
          [&](const ProductBernoulli& m) -> Sample {
            Sample x(m.d);
            for (int i = 0; i < m.d; ++i) x[i] = uniform01(rng) < theta[i] ? 1.0 : 0.0;
            return x;
          },
          [&](const HolderDensity& m) -> Sample {
            const double h = m.bin_width();
            const double envelope =
                1.0 + (theta.array() - h).abs().maxCoeff() / h * m.bump.max_value();
            while (true) {
              const double x = uniform01(rng);
              const double u = uniform01(rng);
              if (u * envelope < holder_density_raw(m, theta, x)) return Sample::Constant(1, x);
            }
          },
      },
      model);
}

Matrix fisher_X(const Model& model, const Vector& theta) {
  require_dim(theta, param_dim(model));
  require_interior(model, theta);
  return std::visit(
      Overloaded{
          [&](const GaussianLocation& m) -> Matrix {
            return Matrix::Identity(m.d, m.d) / (m.sigma * m.sigma);
          },
          [&](const GaussianCovariance&) -> Matrix {
            return (0.5 / theta.array().square()).matrix().asDiagonal();
          },
          [&](const DiscreteDistribution& m) -> Matrix {
            Matrix info = Matrix::Zero(m.d, m.d);
            for (const Sample& x : support(model)) {
              const Vector s = score(model, theta, x);
              info += density_raw(model, theta, x) * s * s.transpose();
            }
            return info;
          },
          [&](const ProductBernoulli&) -> Matrix {
            return (1.0 / (theta.array() * (1.0 - theta.array()))).matrix().asDiagonal();
          },
          [&](const HolderDensity& m) -> Matrix {
            const double h = m.bin_width();
            Matrix info = Matrix::Zero(m.d, m.d);
            for (int i = 0; i < m.d; ++i) {
              const double a = (theta[i] - h) / h;
              info(i, i) = integrate(
                  [&](double t) {
                    const double g = m.bump(t);
                    return g * g / (h * (1.0 + a * g));
                  },
                  0.0, 1.0);
            }
            return info;
          },
      },
      model);
}

double holder_seminorm(std::span<const double> values, double step, double s) {
  const std::size_t n = values.size();
  double best = 0.0;
  for (std::size_t lag = 1; lag < n; ++lag) {
    const double denom = std::pow(double(lag) * step, s);
    double worst = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) {
      worst = std::max(worst, std::abs(values[i + lag] - values[i]));
    }
    best = std::max(best, worst / denom);
  }
  return best;
}

double holder_c0(const BumpFunction& bump, double s, double L) {
  // f_P - 1 = c0 h^s sum_j sign_j g(x/h - j) in the worst case, and the Hoelder
  // seminorm is scale invariant, so c0 = L / seminorm of the unit-width pattern.
  static std::mutex mutex;
  static std::map<double, double> cache;
  std::lock_guard lock(mutex);
  if (auto it = cache.find(s); it != cache.end()) return L / it->second;

  constexpr double step = 1e-3;
  constexpr int points = 3001;
  const int patterns[4][3] = {{1, 1, 1}, {1, 1, -1}, {1, -1, 1}, {-1, 1, 1}};
  double seminorm = 0.0;
  std::vector<double> values(points);
  for (const auto& signs : patterns) {
    for (int i = 0; i < points; ++i) {
      const double t = i * step;
      values[i] = signs[0] * bump(t) + signs[1] * bump(t - 1.0) + signs[2] * bump(t - 2.0);
    }
    seminorm = std::max(seminorm, holder_seminorm(values, step, s));
  }
  cache.emplace(s, seminorm);
  return L / seminorm;
}

}  // namespace qfisher
