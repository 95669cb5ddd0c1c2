#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "polu/json_io.hpp"
#include "polu/network.hpp"

namespace polu::regions {

using BigInt = boost::multiprecision::cpp_int;

// Exact lower bounds on the number of response regions.

/// sum_{j=0}^{n0} C(n1, j).
BigInt theorem1_bound(std::uint64_t n0, std::uint64_t n1);

struct RegionBoundSpec {
  std::uint64_t n0 = 1;
  std::vector<std::uint64_t> widths;  // n_1 .. n_L
};

/// 2^{n0 (L-1)} * prod_{i<L} floor(n_i / n0)^{n0} * theorem1_bound(n0, n_L).
/// Throws PreconditionViolated when a width is below n0.
BigInt theorem2_bound(const RegionBoundSpec& spec);

/// 2^{n0} floor(n1 / n0)^{n0}.
BigInt identified_regions_per_layer(std::uint64_t n0, std::uint64_t n1);

// The one-dimensional construction behind the deep bound.

/// f_n(x) + f_n(-x); requires n > 1.
double phi_hat(double n, double x);

/// Location of the positive minimum of phi_hat, n^{1/(n+1)} - 1.
double phi_hat_trough(double n);

struct TroughFunction {
  double n = 2.0;
  double d = 0.0;  // plateau half-width
  double a = 0.0;
  double b = 0.0;  // a * d
  double c = 0.0;  // positive trough abscissa
};

/// Solves the level condition phi(-1) = phi(0) = phi(1) for a with b = a d.
/// With s = a (1 - d) this is s + (1 + s)^{-n} = 1, s > 0.
TroughFunction solve_trough_params(double n, double d);

/// f_n(a x + b) + f_n(-a x + b).
double phi(const TroughFunction& tf, double x);

struct Extremum {
  double x = 0.0;
  double value = 0.0;
};

struct SumConstruction {
  double n = 2.0;
  std::size_t k = 0;
  std::vector<TroughFunction> components;
  std::vector<double> coeffs;
  std::vector<Extremum> minima;  // 2k, ascending in x
  std::vector<Extremum> maxima;  // the kinks 0 and +-d_i (i >= 2), ascending in x
  double residual = 0.0;         // max - min over the minimum values
  std::size_t iterations = 0;

  double operator()(double x) const;
};

struct SumOptions {
  double tolerance = 1e-6;
  std::size_t max_iterations = 500;
  double damping = 0.5;          // exponent of the multiplicative update
  std::size_t prescan = 100000;  // grid points on [0, 1]
};

/// S_k(x) = sum_i coeffs_i phi_i(x) with d_1 = 0, d_{i+1} = (c_i + 1) / 2 and
/// coefficients equalizing all 2k minima.
SumConstruction build_sum_construction(double n, std::size_t k, const SumOptions& options = {});

enum class Method { Analytic, Sampled };

struct RegionReport {
  std::size_t count = 0;
  std::vector<double> breakpoints;
  Method method = Method::Sampled;
  std::size_t resolution = 0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Evaluates f at every abscissa in `x`, writing into `y`.
using BatchFunction = std::function<void(std::span<const double> x, std::span<double> y)>;

struct ScanOptions {
  double dead_band = 1e-12;   // |first difference| at or below this counts as flat
  double kink_factor = 10.0;  // slope jump vs. local scale that marks a kink
  bool refine = true;         // polish breakpoints beyond grid resolution
};

/// Sampled count of maximal monotonic, differentiable pieces of f on [lo, hi].
/// Breakpoints are sign changes of the first difference plus detected slope
/// discontinuities. Breakpoints closer than the grid can resolve are merged.
RegionReport count_monotonic_regions(const BatchFunction& f, double lo, double hi,
                                     std::size_t resolution, const ScanOptions& options = {});
RegionReport count_monotonic_regions(const std::function<double(double)>& f, double lo, double hi,
                                     std::size_t resolution, const ScanOptions& options = {});

/// Breakpoints of S_k on [-1, 1] from the solved construction: its minima and kinks.
RegionReport analytic_regions(const SumConstruction& sc);

/// Number of monotonic pieces of S_k on [-1, 1] whose image covers [band_lo, band_hi].
/// The band must sit strictly between the common minimum and the lowest interior maximum.
std::size_t count_identified_intervals(const SumConstruction& sc, double band_lo, double band_hi);

/// Regions of logit 0 along anchor + t * direction, t in [t_lo, t_hi], inference mode.
RegionReport network_line_regions(const net::NetworkSpec& spec,
                                  const net::ParameterSet<double>& params,
                                  std::span<const double> anchor, std::span<const double> direction,
                                  double t_lo, double t_hi, std::size_t resolution);

/// 1-h-1 network on a scalar input: Dense(h), activation, Dense(1).
net::NetworkSpec line_network(std::size_t hidden, const act::ActivationSpec& activation);

/// Standard-normal weights and biases. Unlike init_parameters the biases are
/// random too, so hidden-unit breakpoints spread along the input line.
net::ParameterSet<double> random_line_parameters(const net::NetworkSpec& spec, std::uint64_t seed);

std::string_view to_string(Method method);
json to_json(const RegionReport& report);
json to_json(const TroughFunction& tf);
json to_json(const SumConstruction& sc);

}  // namespace polu::regions
