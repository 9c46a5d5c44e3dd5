#include "qfisher/quantizers.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "qfisher/error.hpp"

namespace qfisher {

namespace {

void require_probability_row(std::span<const double> row, std::size_t width, const char* what) {
  if (row.size() != width) {
    throw Error(ErrorKind::InvalidArgument,
                fmt::format("{} row has {} entries, expected {}", what, row.size(), width));
  }
  double total = 0.0;
  for (double p : row) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error(ErrorKind::InvalidArgument, fmt::format("{} entry {} outside [0, 1]", what, p));
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw Error(ErrorKind::InvalidArgument, fmt::format("{} row sums to {}", what, total));
  }
}

std::size_t cell_of(const std::vector<double>& breakpoints, double x) {
  if (std::isnan(x)) throw Error(ErrorKind::InvalidSample, "sample is NaN");
  return static_cast<std::size_t>(
      std::lower_bound(breakpoints.begin(), breakpoints.end(), x) - breakpoints.begin());
}

double one_dimensional(const Sample& x) {
  if (x.size() != 1) {
    throw Error(ErrorKind::InvalidSample, "cell partitions need one-dimensional samples");
  }
  return x[0];
}

}  // namespace

int bits_for(std::size_t count) {
  int k = 1;
  while ((std::size_t{1} << k) < count) ++k;
  return k;
}

Quantizer::Quantizer(int k, Representation rep) : k_(k), rep_(std::move(rep)) {
  if (k < 1 || k > 24) throw Error(ErrorKind::InvalidArgument, "k must be in [1, 24]");
  const std::size_t width = std::size_t{1} << k;
  if (const auto* t = std::get_if<DiscreteTable>(&rep_)) {
    if (t->rows.empty()) throw Error(ErrorKind::InvalidArgument, "empty quantizer table");
    for (const auto& row : t->rows) require_probability_row(row, width, "table");
  } else if (const auto* c = std::get_if<CellPartition>(&rep_)) {
    for (std::size_t i = 1; i < c->breakpoints.size(); ++i) {
      if (!(c->breakpoints[i - 1] < c->breakpoints[i])) {
        throw Error(ErrorKind::InvalidArgument, "breakpoints must be strictly increasing");
      }
    }
    const std::size_t cells = c->breakpoints.size() + 1;
    if (c->cell_probs.empty()) {
      if (cells > width) {
        throw Error(ErrorKind::InvalidArgument,
                    fmt::format("{} cells do not fit in {} bits", cells, k));
      }
    } else {
      if (c->cell_probs.size() != cells) {
        throw Error(ErrorKind::InvalidArgument, "cell_probs needs one row per cell");
      }
      for (const auto& row : c->cell_probs) require_probability_row(row, width, "cell");
    }
  } else {
    const auto& s = std::get<CoordinateSign>(rep_);
    if (s.coords.size() > static_cast<std::size_t>(k) || s.coords.size() != s.thresholds.size()) {
      throw Error(ErrorKind::InvalidArgument,
                  "coordinate-sign quantizer needs <= k coordinates, one threshold each");
    }
  }
}

Quantizer Quantizer::identity(std::size_t support_size) {
  const int k = bits_for(support_size);
  std::vector<std::vector<double>> rows(support_size, std::vector<double>(std::size_t{1} << k));
  for (std::size_t i = 0; i < support_size; ++i) rows[i][i] = 1.0;
  return Quantizer(k, DiscreteTable{std::move(rows)});
}

Quantizer Quantizer::one_cell(int k) { return Quantizer(k, CellPartition{}); }

Quantizer Quantizer::sign(double threshold) { return Quantizer(1, CellPartition{{threshold}, {}}); }

Quantizer Quantizer::cells(std::vector<double> breakpoints) {
  const int k = bits_for(breakpoints.size() + 1);
  return Quantizer(k, CellPartition{std::move(breakpoints), {}});
}

Quantizer Quantizer::from_assignment(std::span<const int> assignment, int k) {
  std::vector<std::vector<double>> rows(assignment.size(),
                                        std::vector<double>(std::size_t{1} << k));
  for (std::size_t i = 0; i < assignment.size(); ++i) rows[i].at(assignment[i]) = 1.0;
  return Quantizer(k, DiscreteTable{std::move(rows)});
}

std::vector<double> Quantizer::conditional(const Model& model, const Sample& x) const {
  const std::size_t width = std::size_t{1} << k_;
  std::vector<double> out(width, 0.0);
  if (const auto* t = std::get_if<DiscreteTable>(&rep_)) {
    const std::size_t idx = support_index(model, x);
    if (idx >= t->rows.size()) {
      throw Error(ErrorKind::InvalidSample,
                  fmt::format("support index {} has no table row", idx));
    }
    return t->rows[idx];
  }
  if (const auto* c = std::get_if<CellPartition>(&rep_)) {
    const std::size_t cell = cell_of(c->breakpoints, one_dimensional(x));
    if (c->cell_probs.empty()) {
      out[cell] = 1.0;
      return out;
    }
    return c->cell_probs[cell];
  }
  const auto& s = std::get<CoordinateSign>(rep_);
  std::size_t m = 0;
  for (std::size_t t = 0; t < s.coords.size(); ++t) {
    const int j = s.coords[t];
    if (j < 0 || j >= x.size()) {
      throw Error(ErrorKind::InvalidSample, fmt::format("sample has no coordinate {}", j));
    }
    if (x[j] > s.thresholds[t]) m |= std::size_t{1} << t;
  }
  out[m] = 1.0;
  return out;
}

std::optional<Message> Quantizer::deterministic_message(const Model& model,
                                                       const Sample& x) const {
  const auto point_mass = [](const std::vector<double>& row) -> std::optional<Message> {
    for (std::size_t m = 0; m < row.size(); ++m) {
      if (row[m] == 1.0) return static_cast<Message>(m);
    }
    return std::nullopt;
  };
  if (const auto* t = std::get_if<DiscreteTable>(&rep_)) {
    const std::size_t idx = support_index(model, x);
    if (idx >= t->rows.size()) {
      throw Error(ErrorKind::InvalidSample,
                  fmt::format("support index {} has no table row", idx));
    }
    return point_mass(t->rows[idx]);
  }
  if (const auto* c = std::get_if<CellPartition>(&rep_)) {
    const std::size_t cell = cell_of(c->breakpoints, one_dimensional(x));
    if (c->cell_probs.empty()) return static_cast<Message>(cell);
    return point_mass(c->cell_probs[cell]);
  }
  const auto& s = std::get<CoordinateSign>(rep_);
  Message m = 0;
  for (std::size_t t = 0; t < s.coords.size(); ++t) {
    const int j = s.coords[t];
    if (j < 0 || j >= x.size()) {
      throw Error(ErrorKind::InvalidSample, fmt::format("sample has no coordinate {}", j));
    }
    if (x[j] > s.thresholds[t]) m |= Message{1} << t;
  }
  return m;
}

double Quantizer::message_probability(const Model& model, const Sample& x, Message m) const {
  if (m < 0 || m >= num_messages()) {
    throw Error(ErrorKind::InvalidArgument, fmt::format("message {} outside [2^{}]", m, k_));
  }
  return conditional(model, x)[m];
}

std::vector<double> Quantizer::breakpoints() const {
  if (const auto* c = std::get_if<CellPartition>(&rep_)) return c->breakpoints;
  return {};
}

Message quantize(const Quantizer& q, const Model& model, const Sample& x, Rng& rng) {
  if (const auto m = q.deterministic_message(model, x)) return *m;
  const std::vector<double> probs = q.conditional(model, x);
  const double u = uniform01(rng);
  double cum = 0.0;
  for (std::size_t m = 0; m < probs.size(); ++m) {
    cum += probs[m];
    if (u < cum) return static_cast<Message>(m);
  }
  // Rounding left u above the cumulative sum; take the last supported message.
  for (std::size_t m = probs.size(); m-- > 0;) {
    if (probs[m] > 0.0) return static_cast<Message>(m);
  }
  return 0;
}

std::vector<Atom> atomize(const Model& model, const Vector& theta, std::span<const double> cuts) {
  std::vector<Atom> atoms;
  if (has_finite_support(model)) {
    for (Sample& x : support(model)) {
      const double mass = density_unchecked(model, theta, x);
      Vector s = score(model, theta, x);
      atoms.push_back({std::move(x), mass, mass * s});
    }
    return atoms;
  }
  if (!is_continuous_1d(model)) {
    throw Error(ErrorKind::Unsupported,
                fmt::format("exact expectations need a finite or one-dimensional support; {} "
                            "with d > 1 is evaluated by Monte Carlo",
                            kind_name(model)));
  }
  const auto [lo, hi] = support_interval(model);
  std::vector<double> edges{lo};
  for (double c : cuts) {
    if (c > lo && c < hi) edges.push_back(c);
  }
  for (double c : density_kinks(model)) edges.push_back(c);
  edges.push_back(hi);
  std::sort(edges.begin() + 1, edges.end() - 1);
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  const int d = param_dim(model);
  const auto* holder = std::get_if<HolderDensity>(&model);
  // Validates theta once (dimension, singularity) before the integrals.
  (void)score(model, theta, Sample::Constant(1, std::isfinite(lo) ? lo : 0.0));

  for (std::size_t c = 0; c + 1 < edges.size(); ++c) {
    const double a = edges[c];
    const double b = edges[c + 1];
    double mid;
    if (std::isfinite(a) && std::isfinite(b)) mid = 0.5 * (a + b);
    else if (std::isfinite(b)) mid = b - 1.0;
    else if (std::isfinite(a)) mid = a + 1.0;
    else mid = 0.0;

    const auto f = [&](double x) { return density_unchecked(model, theta, Sample::Constant(1, x)); };
    Atom atom{Sample::Constant(1, mid), integrate(f, a, b), Vector::Zero(d)};
    for (int j = 0; j < d; ++j) {
      if (holder && j != static_cast<int>(std::min(mid / holder->bin_width(), holder->d - 1.0))) {
        continue;  // bump j vanishes on this cell
      }
      atom.score_mass[j] = integrate(
          [&](double x) {
            const Sample pt = Sample::Constant(1, x);
            return density_unchecked(model, theta, pt) * score(model, theta, pt)[j];
          },
          a, b);
    }
    atoms.push_back(std::move(atom));
  }
  return atoms;
}

double message_likelihood(const Quantizer& q, const Model& model, const Vector& theta, Message m) {
  if (m < 0 || m >= q.num_messages()) {
    throw Error(ErrorKind::InvalidArgument, fmt::format("message {} outside [2^{}]", m, q.k()));
  }
  const std::vector<double> cuts = q.breakpoints();
  double total = 0.0;
  for (const Atom& a : atomize(model, theta, cuts)) {
    total += a.mass * q.message_probability(model, a.point, m);
  }
  return total;
}

SequentialStrategy::SequentialStrategy(int k, Rule default_rule)
    : k_(k), rule_(std::move(default_rule)) {}

void SequentialStrategy::set(History history, Quantizer q) {
  if (q.k() != k_) throw Error(ErrorKind::InvalidArgument, "strategy quantizers must share k");
  listed_.insert_or_assign(std::move(history), std::move(q));
}

Quantizer SequentialStrategy::for_history(std::span<const Message> history) const {
  if (auto it = listed_.find(History(history.begin(), history.end())); it != listed_.end()) {
    return it->second;
  }
  Quantizer q = rule_(history);
  if (q.k() != k_) {
    throw Error(ErrorKind::InvalidArgument,
                fmt::format("default rule produced a {}-bit quantizer, expected {}", q.k(), k_));
  }
  return q;
}

}  // namespace qfisher
