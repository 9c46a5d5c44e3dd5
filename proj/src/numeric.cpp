#include "qfisher/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <fmt/format.h>

#include "qfisher/error.hpp"

namespace qfisher {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ParameterOutOfDomain: return "parameter-out-of-domain";
    case ErrorKind::InvalidSample: return "invalid-sample";
    case ErrorKind::SingularParameter: return "singular-parameter";
    case ErrorKind::NumericalIntegration: return "numerical-integration";
    case ErrorKind::EmptyBin: return "empty-bin";
    case ErrorKind::ProtocolInvalid: return "protocol-invalid";
    case ErrorKind::ExactComputationInfeasible: return "exact-computation-infeasible";
    case ErrorKind::InfeasibleEnumeration: return "infeasible-enumeration";
    case ErrorKind::InsufficientNodes: return "insufficient-nodes";
    case ErrorKind::InsufficientData: return "insufficient-data";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::Configuration: return "configuration";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Unsupported: return "unsupported";
  }
  return "unknown";
}

double integrate(const std::function<double(double)>& f, double a, double b) {
  if (a == b) return 0.0;
  if (a > b) return -integrate(f, b, a);
  double error = 0.0;
  double l1 = 0.0;
  double value = 0.0;
  try {
    value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        f, a, b, 15, 1e-12, &error, &l1);
  } catch (const std::exception& e) {
    throw Error(ErrorKind::NumericalIntegration,
                fmt::format("quadrature on [{}, {}] failed: {}", a, b, e.what()));
  }
  if (!std::isfinite(value) || !(error <= std::max(kQuadratureAbsTol, 1e-12 * l1))) {
    throw Error(ErrorKind::NumericalIntegration,
                fmt::format("quadrature on [{}, {}] did not converge (value {}, error {})",
                            a, b, value, error));
  }
  return value;
}

double integrate_split(const std::function<double(double)>& f, double a, double b,
                       std::span<const double> cuts) {
  std::vector<double> pts{a};
  for (double c : cuts) {
    if (c > a && c < b) pts.push_back(c);
  }
  pts.push_back(b);
  std::sort(pts.begin() + 1, pts.end() - 1);
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) total += integrate(f, pts[i], pts[i + 1]);
  return total;
}

double normal_pdf(double z) {
  static const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * M_PI);
  return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double p) {
  static const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, p);
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return mix64(mix64(master) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

double uniform01(Rng& rng) {
  // 53 random bits, [0, 1).
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& body) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  std::vector<std::exception_ptr> failures(threads);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += threads) body(i);
      } catch (...) {
        failures[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
}

}  // namespace qfisher
