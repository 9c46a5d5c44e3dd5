#include "qfisher/fisher.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "qfisher/error.hpp"

namespace qfisher {

namespace {

// t[m] = p(m|theta) and v[m] = E[S_theta(X) p(m|X)] for every message.
struct MessageStats {
  std::vector<double> t;
  std::vector<Vector> v;
};

bool is_gaussian(const Model& model) {
  return std::holds_alternative<GaussianLocation>(model) ||
         std::holds_alternative<GaussianCovariance>(model);
}

// P(X_c > thr) and E[S_c(X) 1(X_c > thr)] for one coordinate of a Gaussian model.
std::pair<double, double> gaussian_sign_terms(const Model& model, const Vector& theta, int c,
                                              double thr) {
  if (const auto* m = std::get_if<GaussianLocation>(&model)) {
    const double z = (thr - theta[c]) / m->sigma;
    return {normal_cdf(-z), normal_pdf(z) / m->sigma};
  }
  const double var = theta[c];
  const double z = thr / std::sqrt(var);
  const double zphi = std::isfinite(z) ? z * normal_pdf(z) : 0.0;
  return {normal_cdf(-z), zphi / (2.0 * var)};
}

MessageStats coordinate_sign_stats(const Model& model, const Vector& theta, int k,
                                   const CoordinateSign& rep) {
  const int d = param_dim(model);
  (void)score(model, theta, Sample::Zero(sample_dim(model)));  // dimension and interior checks
  std::vector<int> sorted = rep.coords;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error(ErrorKind::Unsupported,
                "repeated coordinates make the sign bits dependent; use the Monte Carlo trace");
  }
  const int bits = static_cast<int>(rep.coords.size());
  std::vector<std::array<double, 2>> p(bits);
  std::vector<std::array<double, 2>> s(bits);
  for (int t = 0; t < bits; ++t) {
    const int c = rep.coords[t];
    if (c < 0 || c >= d) {
      throw Error(ErrorKind::InvalidArgument, fmt::format("coordinate {} outside the model", c));
    }
    const auto [p1, s1] = gaussian_sign_terms(model, theta, c, rep.thresholds[t]);
    p[t] = {1.0 - p1, p1};
    s[t] = {-s1, s1};
  }
  MessageStats stats{std::vector<double>(std::size_t{1} << k, 0.0),
                     std::vector<Vector>(std::size_t{1} << k, Vector::Zero(d))};
  for (std::size_t m = 0; m < (std::size_t{1} << bits); ++m) {
    double prob = 1.0;
    for (int t = 0; t < bits; ++t) prob *= p[t][(m >> t) & 1U];
    stats.t[m] = prob;
    for (int t = 0; t < bits; ++t) {
      double rest = s[t][(m >> t) & 1U];
      for (int u = 0; u < bits; ++u) {
        if (u != t) rest *= p[u][(m >> u) & 1U];
      }
      stats.v[m][rep.coords[t]] = rest;
    }
  }
  return stats;
}

MessageStats message_stats(const Model& model, const Vector& theta, const Quantizer& q) {
  if (const auto* rep = std::get_if<CoordinateSign>(&q.representation());
      rep && is_gaussian(model)) {
    return coordinate_sign_stats(model, theta, q.k(), *rep);
  }
  const std::size_t width = q.num_messages();
  const int d = param_dim(model);
  MessageStats stats{std::vector<double>(width, 0.0), std::vector<Vector>(width, Vector::Zero(d))};
  const std::vector<double> cuts = q.breakpoints();
  for (const Atom& a : atomize(model, theta, cuts)) {
    const std::vector<double> cond = q.conditional(model, a.point);
    for (std::size_t m = 0; m < width; ++m) {
      if (cond[m] == 0.0) continue;
      stats.t[m] += a.mass * cond[m];
      stats.v[m] += cond[m] * a.score_mass;
    }
  }
  return stats;
}

void check_message(const Quantizer& q, Message m) {
  if (m < 0 || m >= q.num_messages()) {
    throw Error(ErrorKind::InvalidArgument, fmt::format("message {} outside [2^{}]", m, q.k()));
  }
}

}  // namespace

std::vector<double> message_probabilities(const Quantizer& q, const Model& model,
                                          const Vector& theta) {
  return message_stats(model, theta, q).t;
}

Vector centroid(const Model& model, const Vector& theta, const Quantizer& q, Message m) {
  check_message(q, m);
  const MessageStats stats = message_stats(model, theta, q);
  if (!(stats.t[m] > 0.0)) {
    throw Error(ErrorKind::EmptyBin, fmt::format("message {} has probability zero", m + 1));
  }
  return stats.v[m] / stats.t[m];
}

FisherReport trace_IM(const Model& model, const Vector& theta, const Quantizer& q,
                      bool with_matrix) {
  const MessageStats stats = message_stats(model, theta, q);
  const int d = param_dim(model);
  FisherReport report;
  if (with_matrix) report.matrix = Matrix::Zero(d, d);
  for (std::size_t m = 0; m < stats.t.size(); ++m) {
    const double t = stats.t[m];
    if (!(t > 0.0)) continue;
    const Vector& v = stats.v[m];
    report.trace += v.squaredNorm() / t;
    if (with_matrix) *report.matrix += v * v.transpose() / t;
    report.centroids.push_back({static_cast<Message>(m), t, v / t});
  }
  return report;
}

double trace_IM_finite_difference(const Model& model, const Vector& theta, const Quantizer& q,
                                  double delta) {
  const int d = param_dim(model);
  const std::vector<double> p = message_probabilities(q, model, theta);
  std::vector<Vector> s(p.size(), Vector::Zero(d));
  for (int i = 0; i < d; ++i) {
    Vector up = theta;
    Vector down = theta;
    up[i] += delta;
    down[i] -= delta;
    const std::vector<double> pu = message_probabilities(q, model, up);
    const std::vector<double> pd = message_probabilities(q, model, down);
    for (std::size_t m = 0; m < p.size(); ++m) {
      if (p[m] > 0.0) s[m][i] = (std::log(pu[m]) - std::log(pd[m])) / (2.0 * delta);
    }
  }
  double trace = 0.0;
  for (std::size_t m = 0; m < p.size(); ++m) {
    if (p[m] > 0.0) trace += p[m] * s[m].squaredNorm();
  }
  return trace;
}

MonteCarloTrace trace_IM_monte_carlo(const Model& model, const Vector& theta, const Quantizer& q,
                                     std::size_t samples, std::uint64_t seed, unsigned threads) {
  constexpr std::size_t kBatches = 20;
  if (samples < kBatches) {
    throw Error(ErrorKind::InvalidArgument, "Monte Carlo trace needs at least 20 samples");
  }
  const std::size_t width = q.num_messages();
  const int d = param_dim(model);
  std::vector<std::vector<double>> t(kBatches, std::vector<double>(width, 0.0));
  std::vector<std::vector<Vector>> v(kBatches, std::vector<Vector>(width, Vector::Zero(d)));
  std::vector<std::size_t> counts(kBatches);

  parallel_for(kBatches, threads, [&](std::size_t b) {
    Rng rng(derive_seed(seed, b));
    const std::size_t count = samples / kBatches + (b < samples % kBatches ? 1 : 0);
    counts[b] = count;
    for (std::size_t s = 0; s < count; ++s) {
      const Sample x = sample(model, theta, rng);
      const Vector sc = score(model, theta, x);
      const std::vector<double> cond = q.conditional(model, x);
      for (std::size_t m = 0; m < width; ++m) {
        if (cond[m] == 0.0) continue;
        t[b][m] += cond[m];
        v[b][m] += cond[m] * sc;
      }
    }
  });

  const auto plug_in = [&](const std::vector<double>& tt, const std::vector<Vector>& vv,
                           double n) {
    double trace = 0.0;
    for (std::size_t m = 0; m < width; ++m) {
      if (tt[m] > 0.0) trace += (vv[m] / n).squaredNorm() / (tt[m] / n);
    }
    return trace;
  };

  std::vector<double> total_t(width, 0.0);
  std::vector<Vector> total_v(width, Vector::Zero(d));
  std::vector<double> batch_traces(kBatches);
  for (std::size_t b = 0; b < kBatches; ++b) {
    batch_traces[b] = plug_in(t[b], v[b], double(counts[b]));
    for (std::size_t m = 0; m < width; ++m) {
      total_t[m] += t[b][m];
      total_v[m] += v[b][m];
    }
  }
  const double mean = pairwise_sum(batch_traces) / kBatches;
  double ss = 0.0;
  for (double x : batch_traces) ss += (x - mean) * (x - mean);
  const double std_error = std::sqrt(ss / (kBatches - 1) / kBatches);
  return {plug_in(total_t, total_v, double(samples)), std_error, samples};
}

double trace_IM_blackboard(const ProtocolTree& tree, const Model& model, const Vector& theta) {
  double trace = 0.0;
  for_each_transcript(tree, model, theta, [&](const TranscriptTerms& terms) {
    const int n = static_cast<int>(terms.node_mass.size());
    for (int j = 0; j < n; ++j) {
      if (!(terms.node_mass[j] > 0.0)) continue;
      double others = 1.0;
      for (int i = 0; i < n; ++i) {
        if (i != j) others *= terms.node_mass[i];
      }
      trace += others * terms.node_score_mass[j].squaredNorm() / terms.node_mass[j];
    }
  });
  return trace;
}

std::vector<double> tree_identity(const ProtocolTree& tree, const Model& model,
                                  const Vector& theta) {
  std::vector<double> sums(tree.n(), 0.0);
  for_each_transcript(tree, model, theta, [&](const TranscriptTerms& terms) {
    for (int j = 0; j < tree.n(); ++j) {
      double others = 1.0;
      for (int i = 0; i < tree.n(); ++i) {
        if (i != j) others *= terms.node_mass[i];
      }
      sums[j] += others;
    }
  });
  return sums;
}

// ---------------------------------------------------------------------------
// variance_I0

namespace {

double discrete_lambda_max(const Vector& theta) {
  const int d = static_cast<int>(theta.size());
  const double last = 1.0 - theta.sum();
  Matrix info = Matrix::Constant(d, d, 1.0 / last);
  info.diagonal() += (1.0 / theta.array()).matrix();
  return Eigen::SelfAdjointEigenSolver<Matrix>(info, Eigen::EigenvaluesOnly)
      .eigenvalues()
      .maxCoeff();
}

I0Result discrete_variance_I0(const ParamDomain& dom) {
  const int d = dom.dim();
  I0Result result;
  Vector lower = dom.lower;
  Vector upper = dom.upper;
  // The matrix blows up as any theta_i or theta_{d+1} reaches 0.
  if (lower.minCoeff() < kBoundaryTol || upper.sum() > 1.0 - kBoundaryTol) {
    result.unbounded = true;
    result.warning =
        "the domain reaches a singular boundary; value is taken on the tolerance-shrunk domain";
    lower = lower.cwiseMax(kBoundaryTol);
    const double excess = upper.sum() - (1.0 - kBoundaryTol);
    if (excess > 0.0) {
      // Shrink the upper corner uniformly until theta_{d+1} >= tolerance.
      const Vector room = upper - lower;
      const double total = room.sum();
      if (total > 0.0) upper -= room * std::min(1.0, excess / total);
    }
  }
  // lambda_max is convex in theta, so the supremum sits at a vertex of the box.
  const auto consider = [&](const Vector& theta) {
    const double v = discrete_lambda_max(theta);
    if (v > result.value || result.argmax.size() == 0) {
      result.value = v;
      result.argmax = theta;
    }
  };
  const bool symmetric = (lower.array() == lower[0]).all() && (upper.array() == upper[0]).all();
  if (symmetric) {
    for (int j = 0; j <= d; ++j) {
      Vector theta = Vector::Constant(d, upper[0]);
      theta.head(j).setConstant(lower[0]);
      consider(theta);
    }
  } else {
    if (d > 20) {
      throw Error(ErrorKind::InfeasibleEnumeration,
                  "non-uniform discrete boxes above d = 20 have too many vertices");
    }
    for (std::size_t mask = 0; mask < (std::size_t{1} << d); ++mask) {
      Vector theta(d);
      for (int i = 0; i < d; ++i) theta[i] = (mask >> i) & 1U ? upper[i] : lower[i];
      consider(theta);
    }
  }
  return result;
}

}  // namespace

I0Result variance_I0(const Model& model, const ParamDomain& dom) {
  if (dom.dim() != param_dim(model)) {
    throw Error(ErrorKind::InvalidArgument, "domain dimension differs from the model");
  }
  dom.validate();
  I0Result result;
  if (const auto* m = std::get_if<GaussianLocation>(&model)) {
    result.value = 1.0 / (m->sigma * m->sigma);
    result.argmax = dom.center();
    return result;
  }
  if (std::holds_alternative<GaussianCovariance>(model)) {
    Eigen::Index i = 0;
    double lo = dom.lower.minCoeff(&i);
    if (lo < kBoundaryTol) {
      result.unbounded = true;
      result.warning = "variance domain reaches 0; value is taken at the boundary tolerance";
      lo = kBoundaryTol;
    }
    result.value = 0.5 / (lo * lo);
    result.argmax = dom.lower.cwiseMax(kBoundaryTol);
    return result;
  }
  if (std::holds_alternative<DiscreteDistribution>(model)) return discrete_variance_I0(dom);
  if (std::holds_alternative<ProductBernoulli>(model)) {
    const int d = dom.dim();
    result.argmax = Vector(d);
    for (int i = 0; i < d; ++i) {
      double lo = dom.lower[i];
      double hi = dom.upper[i];
      if (lo < kBoundaryTol || hi > 1.0 - kBoundaryTol) {
        result.unbounded = true;
        result.warning = "domain reaches theta_i in {0, 1}; value is taken at the tolerance";
        lo = std::max(lo, kBoundaryTol);
        hi = std::min(hi, 1.0 - kBoundaryTol);
      }
      // 1/(theta(1-theta)) grows away from 1/2.
      const double far = std::abs(lo - 0.5) >= std::abs(hi - 0.5) ? lo : hi;
      result.argmax[i] = far;
      result.value = std::max(result.value, 1.0 / (far * (1.0 - far)));
    }
    return result;
  }
  // Hoelder family: I_X is diagonal and entry i decreases in p_i.
  const Vector corner = dom.lower;
  const Matrix info = fisher_X(model, corner);
  result.value = info.diagonal().maxCoeff();
  result.argmax = corner;
  return result;
}

I0Result variance_I0(const Model& model) { return variance_I0(model, domain(model)); }

// ---------------------------------------------------------------------------
// Trace bounds

BoundCertificate bound_thm1(double I0, int k, double tr_IX) {
  if (!(I0 >= 0.0) || k < 1 || !(tr_IX >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "bound needs I0 >= 0, k >= 1, tr_IX >= 0");
  }
  const double comm = std::ldexp(I0, k);
  return {BoundRegime::Variance, I0, 0.0, k, tr_IX, comm, std::min(tr_IX, comm)};
}

BoundCertificate bound_thm2(double I0, int k, double p, double tr_IX) {
  if (!(I0 >= 0.0) || k < 1 || !(p >= 1.0) || !(tr_IX >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "bound needs I0 >= 0, k >= 1, p >= 1, tr_IX >= 0");
  }
  const double comm = 4.0 * std::pow(double(k), 2.0 / p) * I0;
  return {BoundRegime::Orlicz, I0, p, k, tr_IX, comm, std::min(tr_IX, comm)};
}

// ---------------------------------------------------------------------------
// Exhaustive search

void for_each_set_partition(int size, int max_blocks,
                            const std::function<void(std::span<const int>)>& visit) {
  if (size < 1 || max_blocks < 1) {
    throw Error(ErrorKind::InvalidArgument, "set partitions need size >= 1 and blocks >= 1");
  }
  std::vector<int> rgs(size, 0);
  const auto extend = [&](auto&& self, int pos, int used) -> void {
    if (pos == size) {
      visit(rgs);
      return;
    }
    const int limit = std::min(used + 1, max_blocks);
    for (int b = 0; b < limit; ++b) {
      rgs[pos] = b;
      self(self, pos + 1, std::max(used, b + 1));
    }
  };
  rgs[0] = 0;
  extend(extend, 1, 1);
}

BruteForceResult brute_force_max_trace(const Model& model, const Vector& theta, int k) {
  if (!has_finite_support(model)) {
    throw Error(ErrorKind::Unsupported, "exhaustive search needs a finite support");
  }
  constexpr std::size_t kMaxSupport = 12;
  const std::size_t size = support_size(model);
  if (size > kMaxSupport) {
    throw Error(ErrorKind::InfeasibleEnumeration,
                fmt::format("support of size {} exceeds the enumeration limit {}", size,
                            kMaxSupport));
  }
  if (k < 1 || k > 24) throw Error(ErrorKind::InvalidArgument, "k must be in [1, 24]");
  const int blocks = static_cast<int>(std::min<std::size_t>(std::size_t{1} << k, size));
  const int d = param_dim(model);

  const std::vector<Atom> atoms = atomize(model, theta, {});
  std::vector<double> w(size);
  Matrix v(d, size);
  for (std::size_t x = 0; x < size; ++x) {
    w[x] = atoms[x].mass;
    v.col(x) = atoms[x].score_mass;
  }

  BruteForceResult best;
  best.trace = -1.0;
  best.min_trace = std::numeric_limits<double>::infinity();
  std::vector<double> bw(blocks);
  Matrix bv(d, blocks);
  for_each_set_partition(static_cast<int>(size), blocks, [&](std::span<const int> rgs) {
    std::fill(bw.begin(), bw.end(), 0.0);
    bv.setZero();
    for (std::size_t x = 0; x < size; ++x) {
      bw[rgs[x]] += w[x];
      bv.col(rgs[x]) += v.col(x);
    }
    double trace = 0.0;
    for (int b = 0; b < blocks; ++b) {
      if (bw[b] > 0.0) trace += bv.col(b).squaredNorm() / bw[b];
    }
    ++best.partitions;
    best.min_trace = std::min(best.min_trace, trace);
    if (trace > best.trace) {
      best.trace = trace;
      best.assignment.assign(rgs.begin(), rgs.end());
    }
  });
  return best;
}

// ---------------------------------------------------------------------------
// Cell partitions on a grid

namespace {

struct GridCells {
  std::vector<double> grid;
  std::vector<double> w;  // per elementary cell (g_{j-1}, g_j]
  std::vector<Vector> v;
};

GridCells grid_cells(const Model& model, const Vector& theta, std::span<const double> grid) {
  if (!is_continuous_1d(model)) {
    throw Error(ErrorKind::Unsupported, "cell searches need a one-dimensional continuous model");
  }
  GridCells cells;
  cells.grid.assign(grid.begin(), grid.end());
  std::sort(cells.grid.begin(), cells.grid.end());
  cells.grid.erase(std::unique(cells.grid.begin(), cells.grid.end()), cells.grid.end());
  const int d = param_dim(model);
  const std::size_t count = cells.grid.size() + 1;
  cells.w.assign(count, 0.0);
  cells.v.assign(count, Vector::Zero(d));
  for (const Atom& a : atomize(model, theta, cells.grid)) {
    const auto j = static_cast<std::size_t>(
        std::lower_bound(cells.grid.begin(), cells.grid.end(), a.point[0]) - cells.grid.begin());
    cells.w[j] += a.mass;
    cells.v[j] += a.score_mass;
  }
  return cells;
}

}  // namespace

CellSearchResult best_cell_partition(const Model& model, const Vector& theta, int k,
                                     std::span<const double> grid) {
  if (k < 1 || k > 24) throw Error(ErrorKind::InvalidArgument, "k must be in [1, 24]");
  const GridCells cells = grid_cells(model, theta, grid);
  const std::size_t count = cells.w.size();
  const int d = param_dim(model);
  const std::size_t segments = std::min<std::size_t>(std::size_t{1} << k, count);

  std::vector<double> pw(count + 1, 0.0);
  std::vector<Vector> pv(count + 1, Vector::Zero(d));
  for (std::size_t j = 0; j < count; ++j) {
    pw[j + 1] = pw[j] + cells.w[j];
    pv[j + 1] = pv[j] + cells.v[j];
  }
  const auto gain = [&](std::size_t i, std::size_t s) {
    const double w = pw[s] - pw[i];
    return w > 0.0 ? (pv[s] - pv[i]).squaredNorm() / w : 0.0;
  };

  constexpr double kNone = -std::numeric_limits<double>::infinity();
  // best[j][s]: cells [0, s) split into exactly j segments.
  std::vector<std::vector<double>> best(segments + 1, std::vector<double>(count + 1, kNone));
  std::vector<std::vector<std::size_t>> from(segments + 1,
                                             std::vector<std::size_t>(count + 1, 0));
  best[0][0] = 0.0;
  for (std::size_t j = 1; j <= segments; ++j) {
    for (std::size_t s = j; s <= count; ++s) {
      for (std::size_t i = j - 1; i < s; ++i) {
        if (best[j - 1][i] == kNone) continue;
        const double value = best[j - 1][i] + gain(i, s);
        if (value > best[j][s]) {
          best[j][s] = value;
          from[j][s] = i;
        }
      }
    }
  }
  std::size_t used = 1;
  for (std::size_t j = 1; j <= segments; ++j) {
    if (best[j][count] > best[used][count]) used = j;
  }
  CellSearchResult result;
  result.trace = best[used][count];
  std::size_t s = count;
  for (std::size_t j = used; j > 1; --j) {
    s = from[j][s];
    result.breakpoints.push_back(cells.grid[s - 1]);
  }
  std::reverse(result.breakpoints.begin(), result.breakpoints.end());
  return result;
}

CellSearchResult brute_force_cell_partition(const Model& model, const Vector& theta, int k,
                                            std::span<const double> grid) {
  std::vector<double> points(grid.begin(), grid.end());
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());
  if (points.size() > 24) {
    throw Error(ErrorKind::InfeasibleEnumeration, "subset enumeration is limited to 24 points");
  }
  const std::size_t max_breaks = (std::size_t{1} << k) - 1;
  CellSearchResult best;
  best.trace = -1.0;
  for (std::uint32_t mask = 0; mask < (1U << points.size()); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) > max_breaks) continue;
    std::vector<double> bps;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if ((mask >> i) & 1U) bps.push_back(points[i]);
    }
    const double trace = trace_IM(model, theta, Quantizer(k, CellPartition{bps, {}})).trace;
    if (trace > best.trace) {
      best.trace = trace;
      best.breakpoints = std::move(bps);
    }
  }
  return best;
}

}  // namespace qfisher
