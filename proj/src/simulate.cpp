#include <algorithm>
#include <cmath>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "qfisher/error.hpp"
#include "qfisher/simulate.hpp"

namespace qfisher {

std::string to_string(ThetaRule rule) {
  switch (rule) {
    case ThetaRule::Fixed: return "fixed";
    case ThetaRule::Prior: return "prior";
    case ThetaRule::Grid: return "grid";
  }
  return "?";
}

std::string to_string(ProtocolKind protocol) {
  switch (protocol) {
    case ProtocolKind::Independent: return "independent";
    case ProtocolKind::Sequential: return "sequential";
    case ProtocolKind::Blackboard: return "blackboard";
  }
  return "?";
}

ThetaRule parse_theta_rule(const std::string& text) {
  if (text == "fixed") return ThetaRule::Fixed;
  if (text == "prior") return ThetaRule::Prior;
  if (text == "grid") return ThetaRule::Grid;
  throw Error(ErrorKind::InvalidArgument,
              fmt::format("unknown theta rule '{}' (fixed, prior, grid)", text));
}

ProtocolKind parse_protocol(const std::string& text) {
  if (text == "independent") return ProtocolKind::Independent;
  if (text == "sequential") return ProtocolKind::Sequential;
  if (text == "blackboard") return ProtocolKind::Blackboard;
  throw Error(ErrorKind::InvalidArgument,
              fmt::format("unknown protocol '{}' (independent, sequential, blackboard)", text));
}

namespace {

const GaussianLocation* gaussian_of(const ExperimentConfig& config) {
  return std::get_if<GaussianLocation>(&config.model);
}

bool is_usable(const Model& model, const Vector& theta) {
  try {
    check_parameter(model, theta);
    return true;
  } catch (const Error&) {
    return false;
  }
}

Vector project_to_constraint(const ParamDomain& dom, Vector theta) {
  if (dom.sum_target) theta.array() -= (theta.sum() - *dom.sum_target) / theta.size();
  return theta;
}

// Everything a trial needs, built once per run and shared read-only.
struct Plan {
  std::optional<IndependentScheme> independent;
  std::optional<SequentialScheme> sequential;
  std::optional<IndependentTree> tree;
  int histogram_cells = 0;
};

Plan make_plan(const ExperimentConfig& config) {
  Plan plan;
  if (config.scheme == "discrete_grouping") {
    const auto& m = std::get<DiscreteDistribution>(config.model);
    plan.independent = scheme_discrete_grouping(m.d, config.k, config.n);
  } else if (config.scheme == "gaussian_sign") {
    const auto* m = gaussian_of(config);
    plan.independent = scheme_gaussian_sign(m->d, config.k, config.n,
                                            m->domain.upper.cwiseAbs().maxCoeff(), m->sigma);
  } else if (config.scheme == "histogram") {
    const auto& m = std::get<HolderDensity>(config.model);
    HistogramScheme hist = scheme_histogram_density(m.s, config.n, config.k);
    plan.histogram_cells = hist.cells;
    plan.independent = std::move(hist.scheme);
  } else {
    const auto* m = gaussian_of(config);
    plan.sequential = scheme_sequential_refinement(config.k, config.n,
                                                   m->domain.upper.cwiseAbs().maxCoeff(), m->sigma);
  }
  if (plan.independent && config.protocol == ProtocolKind::Blackboard) {
    plan.tree.emplace(plan.independent->k, plan.independent->quantizers);
  }
  if (plan.independent && config.protocol == ProtocolKind::Sequential) {
    auto quantizers = plan.independent->quantizers;
    SequentialStrategy strategy(plan.independent->k,
                                [quantizers](std::span<const Message> history) {
                                  return *quantizers[history.size()];
                                });
    plan.sequential = SequentialScheme{plan.independent->name, config.n, std::move(strategy),
                                       plan.independent->estimate};
  }
  return plan;
}

// True density summaries for the L2 loss of the histogram estimator.
struct DensityTarget {
  double f_squared = 0.0;
  std::vector<double> cell_mass;
};

DensityTarget density_target(const Model& model, const Vector& theta, int cells) {
  const auto f = [&](double x) { return density_unchecked(model, theta, Sample::Constant(1, x)); };
  std::vector<double> cuts = density_kinks(model);
  for (int j = 1; j < cells; ++j) cuts.push_back(static_cast<double>(j) / cells);
  std::sort(cuts.begin(), cuts.end());
  DensityTarget target;
  target.f_squared = integrate_split([&](double x) { return f(x) * f(x); }, 0.0, 1.0, cuts);
  for (int j = 0; j < cells; ++j) {
    const double a = static_cast<double>(j) / cells;
    const double b = static_cast<double>(j + 1) / cells;
    std::vector<double> inner;
    for (double c : cuts) {
      if (c > a && c < b) inner.push_back(c);
    }
    target.cell_mass.push_back(integrate_split(f, a, b, inner));
  }
  return target;
}

Vector draw_prior_theta(const Model& model, Rng& rng) {
  const ParamDomain box = experiment_box(model);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Vector theta(box.dim());
    for (int i = 0; i < box.dim(); ++i) {
      const double half = 0.5 * (box.upper[i] - box.lower[i]);
      const double center = 0.5 * (box.upper[i] + box.lower[i]);
      theta[i] = half > 0.0 ? center + prior_sample(Cos2Prior(half), rng) : center;
    }
    theta = project_to_constraint(domain(model), std::move(theta));
    if (is_usable(model, theta)) return theta;
  }
  throw Error(ErrorKind::Configuration, "prior draws keep leaving the parameter domain");
}

// Draws the samples, runs the protocol and returns the estimate.
Vector run_trial(const ExperimentConfig& config, const Plan& plan, const Vector& theta,
                 std::uint64_t trial_seed) {
  Rng sample_rng(derive_seed(trial_seed, 1));
  Rng protocol_rng(derive_seed(trial_seed, 2));
  std::vector<Sample> samples;
  samples.reserve(config.n);
  for (int i = 0; i < config.n; ++i) samples.push_back(sample(config.model, theta, sample_rng));

  std::vector<Message> messages(config.n);
  switch (config.protocol) {
    case ProtocolKind::Independent:
      for (int i = 0; i < config.n; ++i) {
        messages[i] = quantize(*plan.independent->quantizers[i], config.model, samples[i],
                               protocol_rng);
      }
      return plan.independent->estimate(messages);
    case ProtocolKind::Blackboard: {
      const auto transcript = run_tree(*plan.tree, config.model, samples, protocol_rng);
      messages = plan.tree->decode(transcript);
      return plan.independent->estimate(messages);
    }
    case ProtocolKind::Sequential:
      for (int i = 0; i < config.n; ++i) {
        const Quantizer q = plan.sequential->strategy.for_history(
            std::span<const Message>(messages.data(), static_cast<std::size_t>(i)));
        messages[i] = quantize(q, config.model, samples[i], protocol_rng);
      }
      return plan.sequential->estimate(messages);
  }
  return {};
}

struct StreamResult {
  std::vector<double> losses;
  std::vector<Vector> estimates;
  std::vector<std::uint64_t> seeds;
};

StreamResult run_stream(const ExperimentConfig& config, const Plan& plan,
                        const std::optional<Vector>& fixed_theta, std::uint64_t stream,
                        bool keep_estimates) {
  StreamResult out;
  out.losses.assign(config.trials, 0.0);
  out.seeds.resize(config.trials);
  if (keep_estimates) out.estimates.resize(config.trials);
  for (int t = 0; t < config.trials; ++t) out.seeds[t] = derive_seed(stream, t);

  std::optional<DensityTarget> fixed_target;
  if (plan.histogram_cells > 0 && fixed_theta) {
    fixed_target = density_target(config.model, *fixed_theta, plan.histogram_cells);
  }
  parallel_for(config.trials, config.threads, [&](std::size_t t) {
    Vector theta;
    if (fixed_theta) {
      theta = *fixed_theta;
    } else {
      Rng prior_rng(derive_seed(out.seeds[t], 0));
      theta = draw_prior_theta(config.model, prior_rng);
    }
    Vector est = run_trial(config, plan, theta, out.seeds[t]);
    if (plan.histogram_cells > 0) {
      const DensityTarget target =
          fixed_target ? *fixed_target : density_target(config.model, theta, plan.histogram_cells);
      out.losses[t] = histogram_l2_risk(target.f_squared, target.cell_mass,
                                        std::span<const double>(est.data(), est.size()));
    } else {
      out.losses[t] = (est - theta).squaredNorm();
    }
    if (keep_estimates) out.estimates[t] = std::move(est);
  });
  return out;
}

std::pair<double, double> mean_and_stderr(const std::vector<double>& losses) {
  const double n = static_cast<double>(losses.size());
  const double mean = pairwise_sum(losses) / n;
  if (losses.size() < 2) return {mean, 0.0};
  std::vector<double> dev(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) dev[i] = (losses[i] - mean) * (losses[i] - mean);
  return {mean, std::sqrt(pairwise_sum(dev) / (n - 1.0) / n)};
}

Vector checked_theta(const ExperimentConfig& config) {
  Vector theta = config.theta ? *config.theta : default_theta(config.model);
  if (theta.size() != param_dim(config.model)) {
    throw ConfigError("theta", fmt::format("expected {} entries, got {}",
                                           param_dim(config.model), theta.size()));
  }
  try {
    check_parameter(config.model, theta);
  } catch (const Error& e) {
    throw ConfigError("theta", e.what());
  }
  return theta;
}

}  // namespace

void validate_config(const ExperimentConfig& config) {
  if (config.trials < 1) throw ConfigError("trials", "must be >= 1");
  if (config.n < 1) throw ConfigError("n", "must be >= 1");
  if (config.k < 1 || config.k > 30) throw ConfigError("k", "must be in [1, 30]");
  const std::string& s = config.scheme;
  const bool ok = (s == "discrete_grouping" &&
                   std::holds_alternative<DiscreteDistribution>(config.model)) ||
                  (s == "gaussian_sign" && gaussian_of(config)) ||
                  (s == "histogram" && std::holds_alternative<HolderDensity>(config.model)) ||
                  (s == "sequential_refinement" && gaussian_of(config) &&
                   gaussian_of(config)->d == 1);
  if (s != "discrete_grouping" && s != "gaussian_sign" && s != "histogram" &&
      s != "sequential_refinement") {
    throw ConfigError("scheme", fmt::format("unknown scheme '{}'", s));
  }
  if (!ok) {
    throw ConfigError("scheme", fmt::format("scheme '{}' does not fit a {} model{}", s,
                                            kind_name(config.model),
                                            s == "sequential_refinement" ? " with d = 1" : ""));
  }
  if (s == "sequential_refinement" && config.protocol != ProtocolKind::Sequential) {
    throw ConfigError("protocol", "sequential_refinement needs the sequential protocol");
  }
  if (config.theta && config.theta_rule != ThetaRule::Fixed) {
    throw ConfigError("theta", "an explicit theta needs theta_rule = fixed");
  }
}

Vector default_theta(const Model& model) {
  if (const auto* m = std::get_if<DiscreteDistribution>(&model)) {
    Vector theta = Vector::Constant(m->d, 1.0 / (m->d + 1));
    return is_usable(model, theta) ? theta : experiment_box(model).center();
  }
  if (const auto* m = std::get_if<HolderDensity>(&model)) {
    const double h = m->bin_width();
    const double r = m->c0 * std::pow(h, m->s + 1.0);
    Vector theta(m->d);
    for (int i = 0; i < m->d; ++i) theta[i] = h + (i % 2 == 0 ? r : -r);
    if (m->d % 2 == 1) theta[m->d - 1] = h;
    return theta;
  }
  return domain(model).center();
}

ParamDomain experiment_box(const Model& model) {
  ParamDomain box = domain(model);
  if (const auto* m = std::get_if<DiscreteDistribution>(&model)) {
    const ParamDomain cor = ParamDomain::box(m->d, 1.0 / (4.0 * m->d), 1.0 / (2.0 * m->d));
    ParamDomain inner{box.lower.cwiseMax(cor.lower), box.upper.cwiseMin(cor.upper), std::nullopt};
    if ((inner.lower.array() <= inner.upper.array()).all()) return inner;
  }
  return box;
}

std::vector<Vector> theta_grid(const Model& model, std::uint64_t seed) {
  const ParamDomain box = experiment_box(model);
  const ParamDomain& dom = domain(model);
  const int d = box.dim();
  Vector alt_lo(d);
  Vector alt_hi(d);
  for (int i = 0; i < d; ++i) {
    alt_lo[i] = i % 2 == 0 ? box.lower[i] : box.upper[i];
    alt_hi[i] = i % 2 == 0 ? box.upper[i] : box.lower[i];
  }
  std::vector<Vector> grid;
  for (const Vector& candidate : {box.center(), box.lower, box.upper, alt_lo, alt_hi}) {
    Vector theta = project_to_constraint(dom, candidate);
    if (is_usable(model, theta)) grid.push_back(std::move(theta));
  }
  Rng rng(derive_seed(seed, 0x9e1d));
  while (grid.size() < 8) grid.push_back(draw_prior_theta(model, rng));
  return grid;
}

std::vector<double> trial_losses(const ExperimentConfig& config, const Vector& theta,
                                 std::uint64_t stream) {
  validate_config(config);
  const Plan plan = make_plan(config);
  return run_stream(config, plan, theta, stream, false).losses;
}

std::vector<Vector> trial_estimates(const ExperimentConfig& config, const Vector& theta,
                                    std::uint64_t stream) {
  validate_config(config);
  const Plan plan = make_plan(config);
  return run_stream(config, plan, theta, stream, true).estimates;
}

RiskEstimate run_experiment(const ExperimentConfig& config) {
  validate_config(config);
  const Plan plan = make_plan(config);

  std::vector<std::optional<Vector>> thetas;
  switch (config.theta_rule) {
    case ThetaRule::Fixed: thetas.emplace_back(checked_theta(config)); break;
    case ThetaRule::Prior: thetas.emplace_back(std::nullopt); break;
    case ThetaRule::Grid:
      for (Vector& t : theta_grid(config.model, config.seed)) thetas.emplace_back(std::move(t));
      break;
  }

  RiskEstimate best;
  std::uint64_t digest = 0x243f6a8885a308d3ULL;
  bool first = true;
  for (std::size_t g = 0; g < thetas.size(); ++g) {
    const StreamResult run = run_stream(config, plan, thetas[g], derive_seed(config.seed, g), false);
    for (std::uint64_t s : run.seeds) digest = mix64(digest ^ s);
    const auto [risk, err] = mean_and_stderr(run.losses);
    if (first || risk > best.risk) {
      best.risk = risk;
      best.std_error = err;
      best.theta = thetas[g] ? *thetas[g] : Vector();
      first = false;
    }
  }
  best.trials = config.trials;
  best.grid_points = static_cast<int>(thetas.size());
  best.seeds_digest = fmt::format("{:016x}", digest);
  best.bound = corollary_bound(config.model, config.n, config.k);
  best.ratio = best.bound.value > 0.0 ? best.risk / best.bound.value : kInf;
  return best;
}

SlopeFit slope_fit(std::span<const std::pair<double, double>> points) {
  if (points.size() < 4) {
    throw Error(ErrorKind::InsufficientData,
                fmt::format("slope fit needs >= 4 points, got {}", points.size()));
  }
  const double n = static_cast<double>(points.size());
  double mx = 0.0;
  double my = 0.0;
  for (const auto& [x, y] : points) {
    if (!(x > 0.0) || !(y > 0.0)) {
      throw Error(ErrorKind::InvalidArgument, "slope fit needs positive x and y");
    }
    mx += std::log(x);
    my += std::log(y);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& [x, y] : points) {
    sxx += (std::log(x) - mx) * (std::log(x) - mx);
    sxy += (std::log(x) - mx) * (std::log(y) - my);
  }
  if (!(sxx > 0.0)) throw Error(ErrorKind::InsufficientData, "slope fit needs distinct x values");

  SlopeFit fit;
  fit.points = static_cast<int>(points.size());
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double sse = 0.0;
  for (const auto& [x, y] : points) {
    const double r = std::log(y) - fit.intercept - fit.slope * std::log(x);
    sse += r * r;
  }
  fit.std_error = std::sqrt(sse / (n - 2.0) / sxx);
  const boost::math::students_t dist(n - 2.0);
  const double t = boost::math::quantile(dist, 0.975);
  fit.ci_low = fit.slope - t * fit.std_error;
  fit.ci_high = fit.slope + t * fit.std_error;
  return fit;
}

}  // namespace qfisher
