#include "qfisher/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "qfisher/error.hpp"

namespace qfisher {

namespace {

constexpr double kPi = M_PI;

double two_pow(int k) { return std::ldexp(1.0, std::min(k, 1000)); }

void require_positive(double v, const char* what) {
  if (!(v > 0.0)) throw Error(ErrorKind::InvalidArgument, fmt::format("{} must be positive", what));
}

// Largest half-width of a cube centred in the domain box.
double half_width(const ParamDomain& dom) {
  return 0.5 * (dom.upper - dom.lower).minCoeff();
}

// d^2 / (n * per_sample + d pi^2 / B^2).
double van_trees_value(int d, double n, double per_sample, double B) {
  return double(d) * d / (n * per_sample + d * kPi * kPi / (B * B));
}

struct Branches {
  double centralized;
  double communication;
  std::string centralized_tag;
  std::string communication_tag;
};

void set_rate(LowerBound& bound, const Branches& b, double scale) {
  // A tie reports the centralized branch.
  if (b.communication > b.centralized) {
    bound.rate = b.communication_tag;
    bound.rate_value = scale * b.communication;
  } else {
    bound.rate = b.centralized_tag;
    bound.rate_value = scale * b.centralized;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Prior

Cos2Prior::Cos2Prior(double B) : B_(B) { require_positive(B, "prior half-width B"); }

double Cos2Prior::density(double t) const {
  if (t < -B_ || t > B_) return 0.0;
  const double c = std::cos(kPi * t / (2.0 * B_));
  return c * c / B_;
}

double Cos2Prior::cdf(double t) const {
  if (t <= -B_) return 0.0;
  if (t >= B_) return 1.0;
  return (t + B_) / (2.0 * B_) + std::sin(kPi * t / B_) / (2.0 * kPi);
}

double Cos2Prior::quantile(double u) const {
  if (!(u >= 0.0 && u <= 1.0)) throw Error(ErrorKind::InvalidArgument, "quantile level outside [0, 1]");
  double lo = -B_;
  double hi = B_;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * B_; ++it) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < u ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double Cos2Prior::fisher_information() const {
  const auto integrand = [this](double t) {
    const double mu = density(t);
    if (!(mu > 0.0)) return 0.0;
    const double dmu = -kPi / (2.0 * B_ * B_) * std::sin(kPi * t / B_);
    return dmu * dmu / mu;
  };
  return integrate(integrand, -B_, B_);
}

double prior_sample(const Cos2Prior& prior, Rng& rng) { return prior.quantile(uniform01(rng)); }

// ---------------------------------------------------------------------------
// van Trees

LowerBound van_trees_bound(int d, double n, int k, double B, VanTreesRegime regime) {
  if (d < 1 || k < 1 || !(n >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "van Trees bound needs d >= 1, k >= 1, n >= 0");
  }
  require_positive(B, "B");
  if (!(regime.I0 >= 0.0)) throw Error(ErrorKind::InvalidArgument, "I0 must be >= 0");
  LowerBound bound;
  bound.regime = regime.kind;
  bound.inputs = {d, n, k, B, regime.I0, regime.p};
  double per_sample;
  if (regime.kind == BoundRegime::Variance) {
    per_sample = regime.I0 * two_pow(k);
    bound.rate = "d^2/(n I0 2^k)";
  } else {
    if (!(regime.p >= 1.0)) throw Error(ErrorKind::InvalidArgument, "Orlicz exponent p must be >= 1");
    per_sample = 4.0 * regime.I0 * std::pow(double(k), 2.0 / regime.p);
    bound.rate = "d^2/(n I0 k^(2/p))";
  }
  bound.value = van_trees_value(d, n, per_sample, B);
  bound.rate_value = n > 0.0 ? double(d) * d / (n * per_sample) : kInf;
  return bound;
}

// ---------------------------------------------------------------------------
// Catalog corollaries

LowerBound corollary_bound(const Model& model, double n, int k) {
  if (!(n > 0.0) || k < 1) throw Error(ErrorKind::InvalidArgument, "bound needs n > 0 and k >= 1");
  const int d = param_dim(model);
  const double dd = d;
  const double kk = k;
  LowerBound bound;
  bound.inputs.d = d;
  bound.inputs.n = n;
  bound.inputs.k = k;

  if (const auto* m = std::get_if<GaussianLocation>(&model)) {
    const double s2 = m->sigma * m->sigma;
    const double B = half_width(m->domain);
    const OrliczConstant oc = orlicz_I0(model);
    const double per = std::min(dd / s2, 4.0 * oc.I0 * kk);
    bound.value = van_trees_value(d, n, per, B);
    bound.regime = BoundRegime::Orlicz;
    bound.inputs.B = B;
    bound.inputs.I0 = oc.I0;
    bound.inputs.p = oc.p;
    set_rate(bound, {dd / n, dd * dd / (n * kk), "d/n", "d^2/(n k)"}, s2);
    if (n * B * B * std::min(kk, dd) < dd * s2) {
      bound.warnings.push_back("sample-size precondition n B^2 min{k,d} >= d sigma^2 fails");
    }
    return bound;
  }
  if (const auto* m = std::get_if<GaussianCovariance>(&model)) {
    const double smin2 = m->sigma_min * m->sigma_min;
    const double smax2 = m->sigma_max * m->sigma_max;
    const double B = 0.5 * (smax2 - smin2);
    const OrliczConstant oc = orlicz_I0(model);
    const double per = std::min(dd / (2.0 * smin2 * smin2), 4.0 * oc.I0 * kk * kk);
    bound.value = van_trees_value(d, n, per, B);
    bound.regime = BoundRegime::Orlicz;
    bound.inputs.B = B;
    bound.inputs.I0 = oc.I0;
    bound.inputs.p = oc.p;
    set_rate(bound, {dd / n, dd * dd / (n * kk * kk), "d/n", "d^2/(n k^2)"}, smin2 * smin2);
    if (n * (smax2 - smin2) * (smax2 - smin2) * std::min(kk * kk, dd) < dd * smin2 * smin2) {
      bound.warnings.push_back(
          "sample-size precondition n (sigma_max^2 - sigma_min^2)^2 min{k^2,d} >= d sigma_min^4 "
          "fails");
    }
    return bound;
  }
  if (std::holds_alternative<DiscreteDistribution>(model)) {
    // Prior on the box [1/(4d), 1/(2d)]^d, where Var<u,S> <= 6d and tr I_X <= 6d^2.
    const double B = 1.0 / (8.0 * dd);
    const double I0 = 6.0 * dd;
    const double per = std::min(6.0 * dd * dd, I0 * two_pow(k));
    bound.value = van_trees_value(d, n, per, B);
    bound.regime = BoundRegime::Variance;
    bound.inputs.B = B;
    bound.inputs.I0 = I0;
    set_rate(bound, {1.0 / n, dd / (n * two_pow(k)), "1/n", "d/(n 2^k)"}, 1.0);
    if (n * std::min(two_pow(k), dd) < dd * dd) {
      bound.warnings.push_back("sample-size precondition n min{2^k,d} >= d^2 fails");
    }
    return bound;
  }
  if (const auto* m = std::get_if<ProductBernoulli>(&model)) {
    const double B = 0.5 * (m->domain.upper - m->domain.lower).minCoeff();
    bound.inputs.B = B;
    const double lo = m->domain.lower.minCoeff();
    const double hi = m->domain.upper.maxCoeff();
    const double far = std::abs(lo - 0.5) >= std::abs(hi - 0.5) ? lo : hi;
    const double tr_ix = dd / (far * (1.0 - far));
    if (m->regime == BernoulliRegime::Dense) {
      const OrliczConstant oc = orlicz_I0(model);
      bound.value = van_trees_value(d, n, std::min(tr_ix, 4.0 * oc.I0 * kk), B);
      bound.regime = BoundRegime::Orlicz;
      bound.inputs.I0 = oc.I0;
      bound.inputs.p = oc.p;
      set_rate(bound, {dd / n, dd * dd / (n * kk), "d/n", "d^2/(n k)"}, 1.0);
      if (n * std::min(kk, dd) < dd) {
        bound.warnings.push_back("sample-size precondition n min{k,d} >= d fails");
      }
    } else {
      const double I0 = 2.0 * dd / (0.5 - m->eps);
      bound.value = van_trees_value(d, n, std::min(tr_ix, I0 * two_pow(k)), B);
      bound.regime = BoundRegime::Variance;
      bound.inputs.I0 = I0;
      set_rate(bound, {1.0 / n, dd / (n * two_pow(k)), "1/n", "d/(n 2^k)"}, 1.0);
      if (n * std::min(two_pow(k), dd) < dd * dd) {
        bound.warnings.push_back("sample-size precondition n min{2^k,d} >= d^2 fails");
      }
    }
    return bound;
  }
  const auto& h = std::get<HolderDensity>(model);
  return nonpar_lower_bound(h.s, h.L, n, k);
}

// ---------------------------------------------------------------------------
// Nonparametric rates

Bandwidth nonpar_bandwidth(double s, double n, int k) {
  if (!(s > 0.0 && s <= 1.0)) throw Error(ErrorKind::InvalidArgument, "s must lie in (0, 1]");
  if (!(n >= 1.0) || k < 1) throw Error(ErrorKind::InvalidArgument, "bandwidth needs n >= 1, k >= 1");
  const auto grid = [](double h) { return std::max(1, static_cast<int>(std::lround(1.0 / h))); };
  const auto step = [&](int d) {
    return std::pow(n * std::min(two_pow(k), double(d)), -1.0 / (2.0 * (s + 1.0)));
  };

  Bandwidth out;
  double h = std::pow(n, -1.0 / (2.0 * s + 1.0));
  int d = grid(h);
  std::set<int> seen{d};
  for (int it = 1; it <= 50; ++it) {
    const double next_h = step(d);
    const int next_d = grid(next_h);
    out.iterations = it;
    h = next_h;
    if (next_d == d) {
      out.h = h;
      out.d = d;
      return out;
    }
    d = next_d;
    if (!seen.insert(d).second) break;
  }
  // Alternation: keep the visited grid size with the smallest risk surrogate.
  out.converged = false;
  double best = kInf;
  for (int cand : seen) {
    const double hc = step(cand);
    const double surrogate =
        2.0 * std::pow(hc, 2.0 * s) + double(cand) * cand / (n * std::min(two_pow(k), double(cand)));
    if (surrogate < best) {
      best = surrogate;
      out.h = hc;
      out.d = cand;
    }
  }
  return out;
}

namespace {

// Fisher information of f_P in the free coordinates p_1..p_{d-1}
// (p_d = 1 - sum): diag(D_1..D_{d-1}) + D_d 1 1^T with
// D_i = int_0^1 g^2 / (h (1 + a_i g)), a_i = (p_i - h)/h.
Matrix holder_free_information(const Model& model, const Vector& p) {
  const Vector diag = fisher_X(model, p).diagonal();
  const int d = static_cast<int>(p.size());
  Matrix info = Matrix::Constant(d - 1, d - 1, diag[d - 1]);
  info.diagonal() += diag.head(d - 1);
  return info;
}

}  // namespace

LowerBound nonpar_lower_bound(double s, double L, double n, int k) {
  require_positive(L, "L");
  const Bandwidth bw = nonpar_bandwidth(s, n, k);
  LowerBound bound;
  const double central = std::pow(n, -2.0 * s / (2.0 * s + 1.0));
  const double comm = std::pow(n * two_pow(k), -s / (s + 1.0));
  set_rate(bound, {central, comm, "n^(-2s/(2s+1))", "(n 2^k)^(-s/(s+1))"}, 1.0);

  // At least two bumps are needed for a nontrivial constrained family.
  const int d = std::max(2, bw.d);
  if (d != bw.d) bound.warnings.push_back("bandwidth grid raised to two bins");
  const double h = 1.0 / d;
  const Model model = make_holder(s, L, d);
  const double c0 = std::get<HolderDensity>(model).c0;
  // Free coordinates move in [h - B, h + B]; p_d then stays within c0 h^{s+1}.
  const double B = c0 * std::pow(h, s + 1.0) / (d - 1);

  // Both lambda_max and the trace are convex in P, so scan the box vertices;
  // by symmetry only the number of coordinates at the lower corner matters.
  double sup_lambda = 0.0;
  double sup_trace = 0.0;
  for (int j = 0; j <= d - 1; ++j) {
    Vector p = Vector::Constant(d, h + B);
    p.head(j).setConstant(h - B);
    p[d - 1] = 1.0 - p.head(d - 1).sum();
    const Matrix info = holder_free_information(model, p);
    sup_trace = std::max(sup_trace, info.trace());
    sup_lambda = std::max(sup_lambda, Eigen::SelfAdjointEigenSolver<Matrix>(
                                          info, Eigen::EigenvaluesOnly)
                                          .eigenvalues()
                                          .maxCoeff());
  }
  const double free = d - 1;
  const double per = std::min(sup_trace, sup_lambda * two_pow(k));
  // ||f - f_hat||^2 >= d ||P - P_hat||^2 over the free coordinates.
  bound.value = d * free * free / (n * per + free * kPi * kPi / (B * B));
  bound.regime = BoundRegime::Variance;
  bound.inputs = {d, n, k, B, sup_lambda, 0.0};
  if (!bw.converged) bound.warnings.push_back("bandwidth fixed point alternated");
  return bound;
}

}  // namespace qfisher
