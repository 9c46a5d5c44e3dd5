#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "qfisher/error.hpp"
#include "qfisher/simulate.hpp"

namespace qfisher {

namespace {

std::vector<std::vector<double>> one_hot_rows(int rows, int width, const std::vector<int>& hot) {
  std::vector<std::vector<double>> out(rows, std::vector<double>(width, 0.0));
  for (int r = 0; r < rows; ++r) out[r][hot[r]] = 1.0;
  return out;
}

// Message of category c for a node serving group g: its rank inside the group
// or the spare index for every other category.
std::vector<int> group_messages(const GroupingLayout& layout, int categories, int g) {
  std::vector<int> hot(categories, layout.per_group);
  for (int c = 0; c < categories; ++c) {
    if (layout.group_of[c] == g) hot[c] = c - g * layout.per_group;
  }
  return hot;
}

// Reads the group counts back into one estimate per category.
Estimator grouping_estimator(const GroupingLayout& layout, int categories, int outputs) {
  return [layout, categories, outputs](std::span<const Message> messages) {
    std::vector<double> hits(categories, 0.0);
    for (std::size_t i = 0; i < messages.size(); ++i) {
      const int g = static_cast<int>(i % layout.groups);
      const int m = messages[i];
      if (m < layout.per_group) {
        const int c = g * layout.per_group + m;
        if (c < categories) hits[c] += 1.0;
      }
    }
    Vector est(outputs);
    for (int c = 0; c < outputs; ++c) {
      est[c] = hits[c] / layout.nodes_in_group[layout.group_of[c]];
    }
    return est;
  };
}

void require_k(int k) {
  if (k < 1 || k > 30) throw Error(ErrorKind::InvalidArgument, "k must be in [1, 30]");
}

}  // namespace

GroupingLayout grouping_layout(int categories, int k, int n) {
  require_k(k);
  if (categories < 2) throw Error(ErrorKind::InvalidArgument, "grouping needs >= 2 categories");
  GroupingLayout layout;
  const long long capacity = (1LL << k) - 1;
  layout.per_group = static_cast<int>(std::min<long long>(capacity, categories));
  layout.groups = (categories + layout.per_group - 1) / layout.per_group;
  if (n < layout.groups) {
    throw Error(ErrorKind::InsufficientNodes,
                fmt::format("grouping needs n >= G = {} nodes, got n = {}", layout.groups, n));
  }
  layout.group_of.resize(categories);
  for (int c = 0; c < categories; ++c) layout.group_of[c] = c / layout.per_group;
  layout.nodes_in_group.assign(layout.groups, n / layout.groups);
  for (int g = 0; g < n % layout.groups; ++g) ++layout.nodes_in_group[g];
  return layout;
}

double grouping_risk(const Vector& theta, int k, int n) {
  const int d = static_cast<int>(theta.size());
  const GroupingLayout layout = grouping_layout(d + 1, k, n);
  double risk = 0.0;
  for (int j = 0; j < d; ++j) {
    risk += theta[j] * (1.0 - theta[j]) / layout.nodes_in_group[layout.group_of[j]];
  }
  return risk;
}

IndependentScheme scheme_discrete_grouping(int d, int k, int n) {
  if (d < 1) throw Error(ErrorKind::InvalidArgument, "d must be >= 1");
  const int categories = d + 1;
  const GroupingLayout layout = grouping_layout(categories, k, n);
  const int bits = bits_for(static_cast<std::size_t>(layout.per_group) + 1);

  std::vector<std::shared_ptr<const Quantizer>> per_group;
  for (int g = 0; g < layout.groups; ++g) {
    per_group.push_back(std::make_shared<const Quantizer>(
        bits, DiscreteTable{one_hot_rows(categories, 1 << bits,
                                         group_messages(layout, categories, g))}));
  }
  IndependentScheme scheme;
  scheme.name = "discrete_grouping";
  scheme.k = bits;
  scheme.quantizers.reserve(n);
  for (int i = 0; i < n; ++i) scheme.quantizers.push_back(per_group[i % layout.groups]);
  scheme.estimate = grouping_estimator(layout, categories, d);
  return scheme;
}

IndependentScheme scheme_gaussian_sign(int d, int k, int n, double B, double sigma) {
  require_k(k);
  if (d < 1 || n < 1) throw Error(ErrorKind::InvalidArgument, "sign scheme needs d, n >= 1");
  if (!(sigma > 0.0) || !(B > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "sign scheme needs sigma > 0 and B > 0");
  }
  const int kk = std::min(k, d);
  std::vector<long long> reports(d, 0);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < kk; ++t) ++reports[(static_cast<long long>(i) * kk + t) % d];
  }
  for (int j = 0; j < d; ++j) {
    if (reports[j] == 0) {
      throw Error(ErrorKind::InsufficientNodes,
                  fmt::format("coordinate {} receives no reports with n = {}, k = {}", j + 1, n,
                              kk));
    }
  }

  std::vector<std::shared_ptr<const Quantizer>> by_start(d);
  IndependentScheme scheme;
  scheme.name = "gaussian_sign";
  scheme.k = kk;
  scheme.quantizers.reserve(n);
  for (int i = 0; i < n; ++i) {
    const int start = static_cast<int>((static_cast<long long>(i) * kk) % d);
    if (!by_start[start]) {
      CoordinateSign rep;
      for (int t = 0; t < kk; ++t) {
        rep.coords.push_back((start + t) % d);
        rep.thresholds.push_back(0.0);
      }
      by_start[start] = std::make_shared<const Quantizer>(kk, std::move(rep));
    }
    scheme.quantizers.push_back(by_start[start]);
  }
  scheme.estimate = [d, kk, sigma, reports](std::span<const Message> messages) {
    std::vector<double> positive(d, 0.0);
    for (std::size_t i = 0; i < messages.size(); ++i) {
      const int start = static_cast<int>((static_cast<long long>(i) * kk) % d);
      for (int t = 0; t < kk; ++t) {
        if ((messages[i] >> t) & 1) positive[(start + t) % d] += 1.0;
      }
    }
    Vector est(d);
    for (int j = 0; j < d; ++j) {
      const double m = static_cast<double>(reports[j]);
      const double delta = 1.0 / (2.0 * m);
      const double p = std::clamp(positive[j] / m, delta, 1.0 - delta);
      est[j] = -sigma * normal_quantile(1.0 - p);
    }
    return est;
  };
  return scheme;
}

HistogramScheme scheme_histogram_density(double s, int n, int k) {
  require_k(k);
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "histogram scheme needs n >= 1");
  HistogramScheme out;
  out.bandwidth = nonpar_bandwidth(s, n, k);
  const int D = std::max(2, out.bandwidth.d);
  out.cells = D;

  const GroupingLayout layout = grouping_layout(D, k, n);
  const int bits = bits_for(static_cast<std::size_t>(layout.per_group) + 1);
  std::vector<double> edges;
  for (int j = 1; j < D; ++j) edges.push_back(static_cast<double>(j) / D);

  std::vector<std::shared_ptr<const Quantizer>> per_group;
  for (int g = 0; g < layout.groups; ++g) {
    per_group.push_back(std::make_shared<const Quantizer>(
        bits, CellPartition{edges, one_hot_rows(D, 1 << bits, group_messages(layout, D, g))}));
  }
  out.scheme.name = "histogram";
  out.scheme.k = bits;
  out.scheme.quantizers.reserve(n);
  for (int i = 0; i < n; ++i) out.scheme.quantizers.push_back(per_group[i % layout.groups]);
  out.scheme.estimate = grouping_estimator(layout, D, D);
  return out;
}

double histogram_l2_risk(double f_squared, std::span<const double> cell_mass,
                         std::span<const double> p_hat) {
  if (cell_mass.size() != p_hat.size()) {
    throw Error(ErrorKind::InvalidArgument, "cell masses and estimates differ in length");
  }
  const double D = static_cast<double>(p_hat.size());
  double cross = 0.0;
  double self = 0.0;
  for (std::size_t i = 0; i < p_hat.size(); ++i) {
    cross += p_hat[i] * cell_mass[i];
    self += p_hat[i] * p_hat[i];
  }
  return std::max(0.0, f_squared - 2.0 * D * cross + D * self);
}

SequentialScheme scheme_sequential_refinement(int k, int n, double B, double sigma) {
  require_k(k);
  if (k > 16) throw Error(ErrorKind::InvalidArgument, "sequential refinement supports k <= 16");
  if (n < 1 || !(B > 0.0) || !(sigma > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "sequential refinement needs n >= 1, B, sigma > 0");
  }
  const int cells = 1 << k;
  std::vector<double> z(cells - 1);
  for (int j = 1; j < cells; ++j) z[j - 1] = normal_quantile(static_cast<double>(j) / cells);

  // Conditional score of each cell when the center equals theta.
  std::vector<double> cell_score(cells);
  double info = 0.0;
  for (int m = 0; m < cells; ++m) {
    const double lo = m == 0 ? 0.0 : normal_pdf(z[m - 1]);
    const double hi = m == cells - 1 ? 0.0 : normal_pdf(z[m]);
    cell_score[m] = (lo - hi) / sigma * cells;
    info += cell_score[m] * cell_score[m] / cells;
  }
  const auto center_after = [cell_score, info, B](std::span<const Message> history) {
    double c = 0.0;
    for (std::size_t i = 0; i < history.size(); ++i) {
      c = std::clamp(c + cell_score[history[i]] / (static_cast<double>(i + 1) * info), -B, B);
    }
    return c;
  };
  SequentialStrategy strategy(k, [k, z, sigma, center_after](std::span<const Message> history) {
    const double c = center_after(history);
    std::vector<double> breaks(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) breaks[j] = c + sigma * z[j];
    return Quantizer(k, CellPartition{std::move(breaks), {}});
  });
  SequentialScheme scheme{"sequential_refinement", n, std::move(strategy), nullptr};
  scheme.estimate = [center_after](std::span<const Message> messages) {
    return Vector::Constant(1, center_after(messages));
  };
  return scheme;
}

}  // namespace qfisher
