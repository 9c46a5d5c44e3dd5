// qfisher: Fisher information, lower bounds, verification suites and
// distributed estimation experiments from the command line.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <openssl/evp.h>

#include "qfisher/bounds.hpp"
#include "qfisher/error.hpp"
#include "qfisher/fisher.hpp"
#include "qfisher/io.hpp"
#include "qfisher/simulate.hpp"
#include "qfisher/verify.hpp"

#ifndef QFISHER_VERSION
#define QFISHER_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace qfisher;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct GlobalOptions {
  std::uint64_t seed = 20240601;
  bool seed_given = false;
  unsigned threads = 1;
  std::string output_dir = ".";
  std::string format = "json";
};

void print_error(const std::string& kind, const std::string& message,
                 const std::string& path = "") {
  Json body = {{"kind", kind}, {"message", message}};
  if (!path.empty()) body["path"] = path;
  std::cout << Json{{"error", body}}.dump(2) << "\n";
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::InvalidArgument, "SHA-256 digest failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < length; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z", tm.tm_year + 1900, tm.tm_mon + 1,
                     tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
}

// Inline JSON or @path.
Json json_argument(const std::string& text, const std::string& what) {
  if (!text.empty() && text[0] == '@') return read_json_file(text.substr(1));
  return parse_json_text(text, what);
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::InvalidArgument, fmt::format("cannot write '{}'", path.string()));
  out << content;
}

void emit(const GlobalOptions& g, const Json& json, const std::string& csv) {
  if (g.format == "csv") {
    std::cout << csv;
  } else {
    std::cout << json.dump(2) << "\n";
  }
}

// ---------------------------------------------------------------------------
// fisher

struct FisherArgs {
  std::string model;
  std::string quantizer;
  std::string theta;
  std::string method = "exact";
  bool matrix = false;
  std::size_t samples = 1000000;
};

int cmd_fisher(const GlobalOptions& g, const FisherArgs& a) {
  const Model model = parse_model(json_argument(a.model, "--model"));
  const Quantizer q = parse_quantizer_spec(a.quantizer, model);
  const Vector theta = parse_vector(a.theta, "--theta");
  check_parameter(model, theta);

  if (a.method == "fd") {
    const double trace = trace_IM_finite_difference(model, theta, q);
    emit(g, Json{{"method", "fd"}, {"trace", json_number(trace)}},
         fmt::format("method,trace\nfd,{}\n", format_number(trace)));
    return kExitOk;
  }
  if (a.method == "mc") {
    const MonteCarloTrace mc = trace_IM_monte_carlo(model, theta, q, a.samples, g.seed, g.threads);
    emit(g,
         Json{{"method", "mc"},
              {"trace", json_number(mc.trace)},
              {"stderr", json_number(mc.std_error)},
              {"samples", mc.samples}},
         fmt::format("method,trace,stderr,samples\nmc,{},{},{}\n", format_number(mc.trace),
                     format_number(mc.std_error), mc.samples));
    return kExitOk;
  }
  const FisherReport report = trace_IM(model, theta, q, a.matrix);
  std::string csv = "m,prob,contribution";
  for (int i = 1; i <= param_dim(model); ++i) csv += fmt::format(",centroid_{}", i);
  csv += "\n";
  for (const MessageCentroid& c : report.centroids) {
    csv += fmt::format("{},{},{}", c.m + 1, format_number(c.prob),
                       format_number(c.prob * c.centroid.squaredNorm()));
    for (Eigen::Index i = 0; i < c.centroid.size(); ++i) csv += "," + format_number(c.centroid[i]);
    csv += "\n";
  }
  emit(g, to_json(report), csv);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// bound

int cmd_bound(const GlobalOptions& g, const std::string& model_text, double n, int k) {
  const Model model = parse_model(json_argument(model_text, "--model"));
  const LowerBound bound = corollary_bound(model, n, k);
  Json j;
  j["model"] = model_to_json(model);
  if (n == std::floor(n) && n < 9.0e15) {
    j["n"] = static_cast<std::int64_t>(n);
  } else {
    j["n"] = json_number(n);
  }
  j["k"] = k;
  j["d"] = param_dim(model);
  j.update(to_json(bound));
  emit(g, j,
       fmt::format("model,d,n,k,regime,value,rate,rate_value\n{},{},{},{},{},{},{},{}\n",
                   kind_name(model), param_dim(model), format_number(n), k,
                   to_string(bound.regime), format_number(bound.value), bound.rate,
                   format_number(bound.rate_value)));
  for (const std::string& w : bound.warnings) std::cerr << "warning: " << w << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// verify

int cmd_verify(const GlobalOptions& g, const std::string& suite) {
  std::vector<std::string> names = suite == "all" ? suite_names() : std::vector{suite};
  Json suites = Json::array();
  std::string csv = "suite,check,value,limit,pass\n";
  bool all_pass = true;
  for (const std::string& name : names) {
    const SuiteReport report = run_suite(name, g.seed, g.threads);
    Json checks = Json::array();
    for (const Check& c : report.checks) {
      checks.push_back({{"name", c.name},
                        {"value", json_number(c.value)},
                        {"limit", json_number(c.limit)},
                        {"pass", c.pass}});
      csv += fmt::format("{},\"{}\",{},{},{}\n", name, c.name, format_number(c.value),
                         format_number(c.limit), c.pass ? "true" : "false");
    }
    suites.push_back({{"suite", name}, {"passed", report.passed()}, {"checks", checks}});
    all_pass = all_pass && report.passed();
  }
  emit(g, Json{{"passed", all_pass}, {"suites", suites}}, csv);
  return all_pass ? kExitOk : kExitRuntime;
}

// ---------------------------------------------------------------------------
// bruteforce

int cmd_bruteforce(const GlobalOptions& g, const std::string& model_text,
                   const std::string& theta_text, int k, const std::string& grid_text) {
  const Model model = parse_model(json_argument(model_text, "--model"));
  const Vector theta = parse_vector(theta_text, "--theta");
  check_parameter(model, theta);
  const double tr_IX = fisher_X(model, theta).trace();

  if (has_finite_support(model)) {
    const BruteForceResult best = brute_force_max_trace(model, theta, k);
    const BoundCertificate cert = bound_thm1(variance_I0(model).value, k, tr_IX);
    Json assignment = Json::array();
    std::string joined;
    for (int m : best.assignment) {
      assignment.push_back(m + 1);
      joined += (joined.empty() ? "" : " ") + std::to_string(m + 1);
    }
    emit(g,
         Json{{"k", k},
              {"trace", json_number(best.trace)},
              {"assignment", assignment},
              {"partitions", best.partitions},
              {"min_trace", json_number(best.min_trace)},
              {"bound", to_json(cert)}},
         fmt::format("k,trace,partitions,min_trace,bound,assignment\n{},{},{},{},{},{}\n", k,
                     format_number(best.trace), best.partitions, format_number(best.min_trace),
                     format_number(cert.value), joined));
    return kExitOk;
  }
  if (!is_continuous_1d(model)) {
    throw Error(ErrorKind::Unsupported,
                "bruteforce needs a finite support or a one-dimensional continuous model");
  }
  const Vector spec = parse_vector(grid_text, "--grid");
  if (spec.size() != 3 || !(spec[2] > 0.0) || !(spec[0] < spec[1])) {
    throw Error(ErrorKind::Parse, "--grid expects lo,hi,step with lo < hi and step > 0");
  }
  std::vector<double> grid;
  const auto steps = static_cast<long>(std::floor((spec[1] - spec[0]) / spec[2] + 1e-9));
  for (long i = 0; i <= steps; ++i) grid.push_back(spec[0] + spec[2] * i);
  const CellSearchResult best = best_cell_partition(model, theta, k, grid);
  Json out = {{"k", k},
              {"trace", json_number(best.trace)},
              {"breakpoints", json_vector(Eigen::Map<const Vector>(
                                  best.breakpoints.data(),
                                  static_cast<Eigen::Index>(best.breakpoints.size())))}};
  double bound_value = tr_IX;
  try {
    const OrliczConstant c = orlicz_I0(model);
    const BoundCertificate cert = bound_thm2(c.I0, k, c.p, tr_IX);
    bound_value = cert.value;
    out["bound"] = to_json(cert);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Unsupported) throw;
  }
  std::string joined;
  for (double b : best.breakpoints) joined += (joined.empty() ? "" : " ") + format_number(b);
  emit(g, out,
       fmt::format("k,trace,bound,breakpoints\n{},{},{},{}\n", k, format_number(best.trace),
                   format_number(bound_value), joined));
  return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(const GlobalOptions& g, const std::string& config_path) {
  const std::string started = utc_timestamp();
  const std::string config_text = read_text_file(config_path);
  const Json config = parse_json_text(config_text, fmt::format("'{}'", config_path));
  std::vector<SweepConfig> sweeps = parse_simulate_config(config);

  const fs::path dir(g.output_dir);
  fs::create_directories(dir);

  std::string jsonl;
  std::string csv = std::string(kResultsCsvHeader) + "\n";
  std::string fits_csv = "sweep,axis,slope,intercept,stderr,ci_low,ci_high,points\n";
  Json fits = Json::array();
  Json resolved = Json::array();
  std::size_t records = 0;

  for (std::size_t s = 0; s < sweeps.size(); ++s) {
    SweepConfig& sweep = sweeps[s];
    const bool seed_in_file = sweep.resolved.contains("seed") &&
                              (config.contains("sweeps") ? config["sweeps"][s].contains("seed")
                                                         : config.contains("seed"));
    const std::uint64_t sweep_seed =
        g.seed_given || !seed_in_file ? derive_seed(g.seed, s) : sweep.base.seed;
    sweep.resolved["seed"] = sweep_seed;
    resolved.push_back(sweep.resolved);

    std::vector<std::pair<double, double>> points;
    std::size_t index = 0;
    for (int n : sweep.ns) {
      for (int k : sweep.ks) {
        ExperimentConfig point = sweep.base;
        point.n = n;
        point.k = k;
        point.seed = derive_seed(sweep_seed, index++);
        point.threads = g.threads;
        const RiskEstimate est = run_experiment(point);
        Json record = to_json(point, est);
        Json line = {{"config_digest", sha256_hex(Json{{"sweep", sweep.resolved},
                                                       {"n", n},
                                                       {"k", k}}
                                                      .dump())}};
        line.update(record);
        jsonl += line.dump() + "\n";
        csv += results_csv_row(point, est) + "\n";
        ++records;
        if (sweep.fit) points.emplace_back(*sweep.fit == "n" ? n : k, est.risk);
      }
    }
    if (sweep.fit) {
      const SlopeFit fit = slope_fit(points);
      Json row = {{"sweep", s + 1}, {"axis", *sweep.fit}};
      row.update(to_json(fit));
      fits.push_back(row);
      fits_csv += fmt::format("{},{},{},{},{},{},{},{}\n", s + 1, *sweep.fit,
                              format_number(fit.slope), format_number(fit.intercept),
                              format_number(fit.std_error), format_number(fit.ci_low),
                              format_number(fit.ci_high), fit.points);
    }
  }

  std::vector<std::pair<std::string, std::string>> files = {{"experiments.jsonl", jsonl},
                                                            {"results.csv", csv}};
  if (!fits.empty()) files.emplace_back("fits.csv", fits_csv);
  Json outputs = Json::array();
  for (const auto& [name, content] : files) {
    write_file(dir / name, content);
    outputs.push_back({{"file", name}, {"sha256", sha256_hex(content)}, {"bytes", content.size()}});
  }
  Json manifest = {{"tool", "qfisher"},
                   {"version", QFISHER_VERSION},
                   {"config_file", config_path},
                   {"config_sha256", sha256_hex(config_text)},
                   {"config", resolved},
                   {"seed", g.seed},
                   {"threads", g.threads},
                   {"started", started},
                   {"finished", utc_timestamp()},
                   {"outputs", outputs}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");

  emit(g,
       Json{{"output_dir", dir.string()}, {"records", records}, {"fits", fits},
            {"outputs", outputs}},
       csv);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fisher information of quantized samples, communication lower bounds and "
               "distributed estimation experiments",
               "qfisher"};
  app.set_version_flag("--version", QFISHER_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  auto* seed_opt = app.add_option("--seed", g.seed, "Master seed for every random stream")
                       ->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")
      ->check(CLI::Range(1u, 256u))
      ->capture_default_str();
  app.add_option("--output-dir", g.output_dir, "Directory for simulate outputs")
      ->capture_default_str();
  app.add_option("--format", g.format, "Standard output format")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();

  FisherArgs fisher;
  auto* fisher_cmd = app.add_subcommand("fisher", "Trace of I_M(theta) for a quantizer");
  fisher_cmd->add_option("--model", fisher.model, "Model JSON, inline or @file")->required();
  fisher_cmd
      ->add_option("--quantizer", fisher.quantizer,
                   "identity | onecell | sign@c | cells@[b,...] | csv@path | coords@[j,...]")
      ->required();
  fisher_cmd->add_option("--theta", fisher.theta, "Parameter, comma separated")->required();
  fisher_cmd->add_option("--method", fisher.method, "exact, fd or mc")
      ->check(CLI::IsMember({"exact", "fd", "mc"}))
      ->capture_default_str();
  fisher_cmd->add_option("--samples", fisher.samples, "Monte Carlo samples")->capture_default_str();
  fisher_cmd->add_flag("--matrix", fisher.matrix, "Include the full matrix");

  std::string bound_model;
  double bound_n = 0.0;
  int bound_k = 1;
  auto* bound_cmd = app.add_subcommand("bound", "Minimax lower bound for a catalog model");
  bound_cmd->add_option("--model", bound_model, "Model JSON, inline or @file")->required();
  bound_cmd->add_option("--n", bound_n, "Number of nodes")->required()->check(CLI::NonNegativeNumber);
  bound_cmd->add_option("--k", bound_k, "Bits per node")->required()->check(CLI::Range(1, 30));

  std::string suite;
  std::vector<std::string> suites = suite_names();
  suites.push_back("all");
  auto* verify_cmd = app.add_subcommand("verify", "Run an invariant suite");
  verify_cmd->add_option("suite", suite, "Suite name")->required()->check(CLI::IsMember(suites));

  std::string config_path;
  auto* simulate_cmd = app.add_subcommand("simulate", "Run experiment sweeps from a JSON config");
  simulate_cmd->add_option("--config", config_path, "Sweep configuration file")->required();

  std::string bf_model;
  std::string bf_theta;
  int bf_k = 1;
  std::string bf_grid = "-4,4,0.05";
  auto* bf_cmd = app.add_subcommand("bruteforce", "Exhaustive search for the best quantizer");
  bf_cmd->add_option("--model", bf_model, "Model JSON, inline or @file")->required();
  bf_cmd->add_option("--theta", bf_theta, "Parameter, comma separated")->required();
  bf_cmd->add_option("--k", bf_k, "Bits per node")->required()->check(CLI::Range(1, 24));
  bf_cmd->add_option("--grid", bf_grid, "lo,hi,step breakpoint grid for continuous models")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return kExitUsage;
  }
  g.seed_given = seed_opt->count() > 0;

  try {
    if (fisher_cmd->parsed()) return cmd_fisher(g, fisher);
    if (bound_cmd->parsed()) return cmd_bound(g, bound_model, bound_n, bound_k);
    if (verify_cmd->parsed()) return cmd_verify(g, suite);
    if (simulate_cmd->parsed()) return cmd_simulate(g, config_path);
    if (bf_cmd->parsed()) return cmd_bruteforce(g, bf_model, bf_theta, bf_k, bf_grid);
  } catch (const ConfigError& e) {
    print_error(std::string(to_string(e.kind())), e.what(), e.path());
    return kExitRuntime;
  } catch (const Error& e) {
    print_error(std::string(to_string(e.kind())), e.what());
    return e.kind() == ErrorKind::Parse ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
