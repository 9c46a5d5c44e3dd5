#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "qfisher/error.hpp"
#include "qfisher/io.hpp"

namespace qfisher {

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  return fmt::format("{:.9g}", value);
}

double round_sig9(double value) {
  if (!std::isfinite(value)) return value;
  const std::string text = fmt::format("{:.9g}", value);
  double out = value;
  std::from_chars(text.data(), text.data() + text.size(), out);
  return out;
}

Json json_number(double value) {
  if (std::isfinite(value)) return round_sig9(value);
  return format_number(value);
}

Json json_vector(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(json_number(v[i]));
  return out;
}

Json json_matrix(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(json_vector(m.row(r).transpose()));
  return out;
}

Json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Parse, fmt::format("{} is not valid JSON: {}", what, e.what()));
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::InvalidArgument, fmt::format("cannot open '{}'", path));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

Json read_json_file(const std::string& path) {
  return parse_json_text(read_text_file(path), fmt::format("'{}'", path));
}

namespace {

const Json& field(const Json& j, const std::string& path, const char* key) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw ConfigError(fmt::format("{}.{}", path, key), "required field is missing");
  return *it;
}

double number_at(const Json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  return v.get<double>();
}

int integer_at(const Json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
  const auto value = v.get<long long>();
  if (value < std::numeric_limits<int>::min() || value > std::numeric_limits<int>::max()) {
    throw ConfigError(path, "integer out of range");
  }
  return static_cast<int>(value);
}

std::string string_at(const Json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "expected a string");
  return v.get<std::string>();
}

double number_field(const Json& j, const std::string& path, const char* key) {
  return number_at(field(j, path, key), fmt::format("{}.{}", path, key));
}

int int_field(const Json& j, const std::string& path, const char* key) {
  return integer_at(field(j, path, key), fmt::format("{}.{}", path, key));
}

// Rethrows construction errors as configuration errors at `path`.
template <class F>
auto at_path(const std::string& path, F&& make) {
  try {
    return make();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(path, e.what());
  }
}

std::vector<double> array_argument(const std::string& text, const std::string& spec) {
  try {
    return nlohmann::json::parse(text).get<std::vector<double>>();
  } catch (const std::exception&) {
    throw Error(ErrorKind::Parse, fmt::format("bad array in quantizer spec '{}'", spec));
  }
}

std::string kind_label(BernoulliRegime regime) {
  return regime == BernoulliRegime::Dense ? "dense" : "sparse";
}

}  // namespace

Model parse_model(const Json& j, const std::string& path) {
  const std::string kind = string_at(field(j, path, "kind"), path + ".kind");
  if (kind == "gaussian_location") {
    const int d = int_field(j, path, "d");
    const double sigma = number_field(j, path, "sigma");
    const double B = number_field(j, path, "B");
    return at_path(path, [&] { return make_gaussian_location(d, sigma, B); });
  }
  if (kind == "gaussian_cov") {
    const int d = int_field(j, path, "d");
    const double lo = number_field(j, path, "sigma_min");
    const double hi = number_field(j, path, "sigma_max");
    return at_path(path, [&] { return make_gaussian_covariance(d, lo, hi); });
  }
  if (kind == "discrete") {
    const int d = int_field(j, path, "d");
    std::string box = "simplex";
    if (j.contains("domain")) box = string_at(j["domain"], path + ".domain");
    if (box == "simplex") return at_path(path, [&] { return make_discrete(d); });
    if (box == "corollary") return at_path(path, [&] { return make_discrete_corollary_box(d); });
    throw ConfigError(path + ".domain", "expected \"simplex\" or \"corollary\"");
  }
  if (kind == "bernoulli") {
    const int d = int_field(j, path, "d");
    const std::string regime = string_at(field(j, path, "regime"), path + ".regime");
    const double eps = number_field(j, path, "eps");
    if (regime != "dense" && regime != "sparse") {
      throw ConfigError(path + ".regime", "expected \"dense\" or \"sparse\"");
    }
    return at_path(path, [&] {
      return make_bernoulli(d, regime == "dense" ? BernoulliRegime::Dense : BernoulliRegime::Sparse,
                            eps);
    });
  }
  if (kind == "holder") {
    const double s = number_field(j, path, "s");
    const double L = number_field(j, path, "L");
    const int d = int_field(j, path, "d");
    return at_path(path, [&] { return make_holder(s, L, d); });
  }
  throw ConfigError(path + ".kind", fmt::format("unknown model kind '{}'", kind));
}

Json model_to_json(const Model& model) {
  Json j;
  j["kind"] = std::string(kind_name(model));
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, GaussianLocation>) {
          j["d"] = m.d;
          j["sigma"] = json_number(m.sigma);
          j["B"] = json_number(m.domain.upper.maxCoeff());
        } else if constexpr (std::is_same_v<T, GaussianCovariance>) {
          j["d"] = m.d;
          j["sigma_min"] = json_number(m.sigma_min);
          j["sigma_max"] = json_number(m.sigma_max);
        } else if constexpr (std::is_same_v<T, DiscreteDistribution>) {
          j["d"] = m.d;
          j["domain"] = m.domain.lower.minCoeff() > 0.0 ? "corollary" : "simplex";
        } else if constexpr (std::is_same_v<T, ProductBernoulli>) {
          j["d"] = m.d;
          j["regime"] = kind_label(m.regime);
          j["eps"] = json_number(m.eps);
        } else {
          j["s"] = json_number(m.s);
          j["L"] = json_number(m.L);
          j["d"] = m.d;
        }
      },
      model);
  return j;
}

Vector parse_vector(const std::string& text, const std::string& what) {
  std::vector<double> values;
  const auto first = text.find_first_not_of(" \t");
  if (first != std::string::npos && text[first] == '[') {
    try {
      values = nlohmann::json::parse(text).get<std::vector<double>>();
    } catch (const std::exception&) {
      throw Error(ErrorKind::Parse, fmt::format("{} is not a JSON number array", what));
    }
  } else {
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(item, &used));
        if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw Error(ErrorKind::Parse, fmt::format("{}: '{}' is not a number", what, item));
      }
    }
  }
  if (values.empty()) throw Error(ErrorKind::Parse, fmt::format("{} is empty", what));
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Quantizer load_table_csv(const std::string& path) {
  std::stringstream in(read_text_file(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error(ErrorKind::Parse, fmt::format("{}:{}: '{}' is not a number", path, line_no, cell));
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw Error(ErrorKind::Parse, fmt::format("{}:{}: expected {} columns, got {}", path, line_no,
                                                rows.front().size(), row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorKind::Parse, fmt::format("{} holds no rows", path));
  const std::size_t width = rows.front().size();
  const int k = bits_for(width);
  if ((std::size_t{1} << k) != width) {
    throw Error(ErrorKind::InvalidArgument,
                fmt::format("{}: column count {} is not a power of two", path, width));
  }
  return Quantizer(k, DiscreteTable{std::move(rows)});
}

Quantizer parse_quantizer_spec(const std::string& spec, const Model& model) {
  const auto at = spec.find('@');
  const std::string name = spec.substr(0, at);
  const std::string arg = at == std::string::npos ? "" : spec.substr(at + 1);
  const bool takes_arg = name == "sign" || name == "cells" || name == "csv" || name == "coords";
  if ((takes_arg && name != "sign" && arg.empty()) || (!takes_arg && at != std::string::npos)) {
    throw Error(ErrorKind::Parse, fmt::format("malformed quantizer spec '{}'", spec));
  }
  if (name == "identity") {
    if (!has_finite_support(model)) {
      throw Error(ErrorKind::Unsupported, "the identity quantizer needs a finite support");
    }
    return Quantizer::identity(support_size(model));
  }
  if (name == "onecell") {
    if (has_finite_support(model)) {
      return Quantizer::from_assignment(std::vector<int>(support_size(model), 0), 1);
    }
    return Quantizer::one_cell();
  }
  if (name == "sign") {
    double c = 0.0;
    if (!arg.empty()) {
      try {
        std::size_t used = 0;
        c = std::stod(arg, &used);
        if (used != arg.size()) throw std::invalid_argument(arg);
      } catch (const std::exception&) {
        throw Error(ErrorKind::Parse, fmt::format("bad threshold in '{}'", spec));
      }
    }
    if (sample_dim(model) > 1) return Quantizer(1, CoordinateSign{{0}, {c}});
    return Quantizer::sign(c);
  }
  if (name == "cells") return Quantizer::cells(array_argument(arg, spec));
  if (name == "csv") return load_table_csv(arg);
  if (name == "coords") {
    const auto values = array_argument(arg, spec);
    CoordinateSign rep;
    for (double v : values) {
      if (v != std::floor(v) || v < 1 || v > sample_dim(model)) {
        throw Error(ErrorKind::InvalidArgument,
                    fmt::format("coordinate {} outside 1..{}", v, sample_dim(model)));
      }
      rep.coords.push_back(static_cast<int>(v) - 1);
      rep.thresholds.push_back(0.0);
    }
    const int k = static_cast<int>(rep.coords.size());
    return Quantizer(k, std::move(rep));
  }
  throw Error(ErrorKind::Parse, fmt::format("unknown quantizer '{}' (identity, onecell, sign@c, "
                                            "cells@[...], csv@path, coords@[...])",
                                            name));
}

ProtocolTree parse_tree(const Json& j) {
  const std::string path = "tree";
  const int n = int_field(j, path, "n");
  const int k = int_field(j, path, "k");
  const Json& nodes = field(j, path, "nodes");
  if (!nodes.is_array()) throw ConfigError(path + ".nodes", "expected an array");
  std::vector<TreeNode> parsed;
  parsed.reserve(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string at = fmt::format("{}.nodes[{}]", path, i);
    const int label = int_field(nodes[i], at, "label");
    const std::string bit = string_at(field(nodes[i], at, "bit"), at + ".bit");
    parsed.push_back({label - 1, BitFunction::parse(bit)});
  }
  return ProtocolTree(n, k, std::move(parsed));
}

Json tree_to_json(const ProtocolTree& tree) {
  Json j;
  j["n"] = tree.n();
  j["k"] = tree.k();
  Json nodes = Json::array();
  for (const TreeNode& node : tree.nodes()) {
    nodes.push_back({{"label", node.label + 1}, {"bit", node.bit.to_string()}});
  }
  j["nodes"] = std::move(nodes);
  return j;
}

Json to_json(const FisherReport& report) {
  Json j;
  j["trace"] = json_number(report.trace);
  if (report.matrix) j["matrix"] = json_matrix(*report.matrix);
  Json centroids = Json::array();
  for (const MessageCentroid& c : report.centroids) {
    centroids.push_back(
        {{"m", c.m + 1}, {"prob", json_number(c.prob)}, {"vector", json_vector(c.centroid)}});
  }
  j["centroids"] = std::move(centroids);
  return j;
}

std::string to_string(BoundRegime regime) {
  return regime == BoundRegime::Variance ? "variance" : "orlicz";
}

Json to_json(const BoundCertificate& cert) {
  Json j;
  j["regime"] = to_string(cert.regime);
  j["I0"] = json_number(cert.I0);
  if (cert.regime == BoundRegime::Orlicz) j["p"] = json_number(cert.p);
  j["k"] = cert.k;
  j["tr_IX"] = json_number(cert.tr_IX);
  j["communication_term"] = json_number(cert.communication_term);
  j["value"] = json_number(cert.value);
  return j;
}

Json to_json(const LowerBound& bound) {
  Json j;
  j["regime"] = to_string(bound.regime);
  j["value"] = json_number(bound.value);
  j["rate"] = bound.rate;
  j["rate_value"] = json_number(bound.rate_value);
  j["B"] = json_number(bound.inputs.B);
  j["I0"] = json_number(bound.inputs.I0);
  if (bound.regime == BoundRegime::Orlicz) j["p"] = json_number(bound.inputs.p);
  j["warnings"] = bound.warnings;
  return j;
}

Json to_json(const I0Result& result) {
  Json j;
  j["value"] = json_number(result.value);
  j["unbounded"] = result.unbounded;
  j["argmax"] = json_vector(result.argmax);
  if (!result.warning.empty()) j["warning"] = result.warning;
  return j;
}

Json to_json(const SlopeFit& fit) {
  return {{"slope", json_number(fit.slope)},         {"intercept", json_number(fit.intercept)},
          {"stderr", json_number(fit.std_error)},    {"ci_low", json_number(fit.ci_low)},
          {"ci_high", json_number(fit.ci_high)},     {"points", fit.points}};
}

namespace {

std::vector<int> int_list(const Json& j, const std::string& path) {
  std::vector<int> out;
  if (j.is_array()) {
    if (j.empty()) throw ConfigError(path, "list is empty");
    for (std::size_t i = 0; i < j.size(); ++i) {
      out.push_back(integer_at(j[i], fmt::format("{}[{}]", path, i)));
    }
  } else {
    out.push_back(integer_at(j, path));
  }
  return out;
}

SweepConfig parse_sweep(const Json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  static const std::vector<std::string> known = {"model", "scheme", "protocol", "theta_rule",
                                                 "theta", "n",      "k",        "trials",
                                                 "seed",  "fit"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError(fmt::format("{}.{}", path, key), "unknown field");
    }
  }
  SweepConfig sweep;
  ExperimentConfig& c = sweep.base;
  c.model = parse_model(field(j, path, "model"), path + ".model");
  c.scheme = string_at(field(j, path, "scheme"), path + ".scheme");
  if (j.contains("protocol")) {
    c.protocol = at_path(path + ".protocol",
                         [&] { return parse_protocol(string_at(j["protocol"], path + ".protocol")); });
  }
  if (j.contains("theta_rule")) {
    c.theta_rule = at_path(path + ".theta_rule", [&] {
      return parse_theta_rule(string_at(j["theta_rule"], path + ".theta_rule"));
    });
  }
  if (j.contains("theta")) {
    const Json& t = j["theta"];
    if (!t.is_array()) throw ConfigError(path + ".theta", "expected an array of numbers");
    Vector theta(static_cast<Eigen::Index>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) {
      theta[static_cast<Eigen::Index>(i)] = number_at(t[i], fmt::format("{}.theta[{}]", path, i));
    }
    c.theta = std::move(theta);
  }
  sweep.ns = int_list(field(j, path, "n"), path + ".n");
  sweep.ks = int_list(field(j, path, "k"), path + ".k");
  c.trials = int_field(j, path, "trials");
  if (j.contains("seed")) {
    const Json& s = j["seed"];
    if (!s.is_number_unsigned()) throw ConfigError(path + ".seed", "expected a non-negative integer");
    c.seed = s.get<std::uint64_t>();
  }
  if (j.contains("fit")) {
    const std::string fit = string_at(j["fit"], path + ".fit");
    if (fit != "n" && fit != "k") throw ConfigError(path + ".fit", "expected \"n\" or \"k\"");
    sweep.fit = fit;
  }

  // Validate every point now so errors surface before any simulation runs.
  for (std::size_t a = 0; a < sweep.ns.size(); ++a) {
    for (std::size_t b = 0; b < sweep.ks.size(); ++b) {
      ExperimentConfig point = c;
      point.n = sweep.ns[a];
      point.k = sweep.ks[b];
      try {
        validate_config(point);
      } catch (const ConfigError& e) {
        std::string sub = e.path();
        if (sub == "n" && sweep.ns.size() > 1) sub = fmt::format("n[{}]", a);
        if (sub == "k" && sweep.ks.size() > 1) sub = fmt::format("k[{}]", b);
        const std::string what = e.what();
        throw ConfigError(fmt::format("{}.{}", path, sub), what.substr(e.path().size() + 2));
      }
    }
  }

  sweep.resolved = {{"model", model_to_json(c.model)},
                    {"scheme", c.scheme},
                    {"protocol", to_string(c.protocol)},
                    {"theta_rule", to_string(c.theta_rule)}};
  if (c.theta) sweep.resolved["theta"] = json_vector(*c.theta);
  sweep.resolved["n"] = sweep.ns;
  sweep.resolved["k"] = sweep.ks;
  sweep.resolved["trials"] = c.trials;
  sweep.resolved["seed"] = c.seed;
  if (sweep.fit) sweep.resolved["fit"] = *sweep.fit;
  return sweep;
}

}  // namespace

std::vector<SweepConfig> parse_simulate_config(const Json& j) {
  std::vector<SweepConfig> sweeps;
  if (j.is_object() && j.contains("sweeps")) {
    const Json& list = j["sweeps"];
    if (!list.is_array() || list.empty()) throw ConfigError("sweeps", "expected a non-empty array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      sweeps.push_back(parse_sweep(list[i], fmt::format("sweeps[{}]", i)));
    }
  } else {
    sweeps.push_back(parse_sweep(j, "$"));
  }
  return sweeps;
}

Json to_json(const ExperimentConfig& config, const RiskEstimate& estimate) {
  Json j;
  j["model"] = model_to_json(config.model);
  j["scheme"] = config.scheme;
  j["protocol"] = to_string(config.protocol);
  j["theta_rule"] = to_string(config.theta_rule);
  j["n"] = config.n;
  j["k"] = config.k;
  j["trials"] = estimate.trials;
  j["seed"] = config.seed;
  j["grid_points"] = estimate.grid_points;
  if (estimate.theta.size() > 0) j["theta"] = json_vector(estimate.theta);
  j["risk"] = json_number(estimate.risk);
  j["stderr"] = json_number(estimate.std_error);
  j["seeds_digest"] = estimate.seeds_digest;
  j["bound"] = to_json(estimate.bound);
  j["ratio"] = json_number(estimate.ratio);
  return j;
}

std::string results_csv_row(const ExperimentConfig& config, const RiskEstimate& estimate) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{}", kind_name(config.model),
                     param_dim(config.model), config.n, config.k, to_string(config.protocol),
                     config.scheme, estimate.trials, format_number(estimate.risk),
                     format_number(estimate.std_error), format_number(estimate.bound.value),
                     format_number(estimate.ratio));
}

}  // namespace qfisher
