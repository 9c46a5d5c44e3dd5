#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

namespace qfisher {

using Rng = std::mt19937_64;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Absolute tolerance used by every adaptive quadrature in the library.
inline constexpr double kQuadratureAbsTol = 1e-10;

/// Adaptive Gauss-Kronrod quadrature on [a, b]; either limit may be infinite.
/// Throws Error(NumericalIntegration) if the error estimate stays above
/// max(kQuadratureAbsTol, 1e-12 * L1 norm) or the result is not finite.
double integrate(const std::function<double(double)>& f, double a, double b);

/// Same as integrate() but splits [a, b] at the given interior points first.
double integrate_split(const std::function<double(double)>& f, double a, double b,
                       std::span<const double> cuts);

double normal_pdf(double z);
double normal_cdf(double z);
double normal_quantile(double p);

/// splitmix64 finalizer; used for counter-based seed derivation.
std::uint64_t mix64(std::uint64_t x);

/// Seed for stream `index` under `master`; independent of evaluation order.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

double uniform01(Rng& rng);

/// Deterministic pairwise summation; the reduction tree depends only on size.
double pairwise_sum(std::span<const double> values);

/// Runs body(i) for i in [0, count) on `threads` workers. Each index is
/// visited exactly once; callers write results into per-index slots.
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace qfisher
