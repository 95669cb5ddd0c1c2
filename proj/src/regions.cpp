#include "polu/regions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "polu/activations.hpp"
#include "polu/error.hpp"
#include "polu/random.hpp"

namespace polu::regions {

namespace {

// Unchecked PoLU for the inner loops; callers validate n once.
inline double polu(double x, double n) { return x >= 0.0 ? x : std::expm1(-n * std::log1p(-x)); }

void require_construction_power(double n) {
  if (!std::isfinite(n) || !(n > 1.0))
    fail(ErrorKind::PreconditionViolated,
         "the trough construction needs n > 1 (a negative fixed point), got " + std::to_string(n));
}

template <class F>
double golden_section(F&& f, double a, double b, double tol) {
  constexpr double inv_phi = 0.6180339887498949;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 300 && b - a > tol; ++it) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = f(x2);
    }
  }
  return f1 <= f2 ? x1 : x2;
}

double eval1(const BatchFunction& f, double x) {
  double y = 0.0;
  f(std::span<const double>(&x, 1), std::span<double>(&y, 1));
  return y;
}

// Zooms onto a slope discontinuity inside [l, r] by repeatedly keeping the
// sub-cell pair with the largest second difference.
double refine_kink(const BatchFunction& f, double l, double r) {
  constexpr std::size_t kPts = 9;
  std::vector<double> xs(kPts), ys(kPts);
  for (int it = 0; it < 80; ++it) {
    const double w = r - l;
    if (w <= 1e-10 * std::max(1.0, std::abs(l))) break;
    const double h = w / static_cast<double>(kPts - 1);
    for (std::size_t i = 0; i < kPts; ++i) xs[i] = l + h * static_cast<double>(i);
    xs.back() = r;
    f(xs, ys);
    std::size_t best = 0;
    double best_jump = -1.0;
    for (std::size_t i = 0; i + 2 < kPts; ++i) {
      const double jump = std::abs((ys[i + 2] - ys[i + 1]) - (ys[i + 1] - ys[i]));
      if (jump > best_jump) {
        best_jump = jump;
        best = i;
      }
    }
    if (!(best_jump > 0.0)) break;
    l = xs[best];
    r = xs[best + 2];
  }
  return 0.5 * (l + r);
}

enum class Cand { Transition, Extremum, Kink };

struct Candidate {
  std::size_t pos;  // grid index of the breakpoint
  Cand kind;
  bool minimum;  // for Extremum: decreasing then increasing
};

std::vector<double> trough_grid(std::size_t points) {
  std::vector<double> xs(points);
  for (std::size_t j = 0; j < points; ++j)
    xs[j] = static_cast<double>(j) / static_cast<double>(points - 1);
  return xs;
}

}  // namespace

// ---- bounds -------------------------------------------------------------

BigInt theorem1_bound(std::uint64_t n0, std::uint64_t n1) {
  if (n0 == 0 || n1 == 0) fail(ErrorKind::InvalidArgument, "n0 and n1 must be positive");
  BigInt sum = 0;
  BigInt term = 1;  // C(n1, 0)
  for (std::uint64_t j = 0; j <= std::min(n0, n1); ++j) {
    if (j > 0) {
      term *= n1 - j + 1;
      term /= j;
    }
    sum += term;
  }
  return sum;
}

BigInt theorem2_bound(const RegionBoundSpec& spec) {
  if (spec.n0 == 0) fail(ErrorKind::InvalidArgument, "n0 must be positive");
  if (spec.widths.empty()) fail(ErrorKind::InvalidArgument, "widths must be non-empty");
  for (std::size_t i = 0; i < spec.widths.size(); ++i)
    if (spec.widths[i] < spec.n0)
      fail(ErrorKind::PreconditionViolated, "width n" + std::to_string(i + 1) + " = " +
                                                std::to_string(spec.widths[i]) + " is below n0 = " +
                                                std::to_string(spec.n0));
  const std::uint64_t n0 = spec.n0;
  BigInt r = theorem1_bound(n0, spec.widths.back());
  for (std::size_t i = 0; i + 1 < spec.widths.size(); ++i) {
    const BigInt per_unit = 2 * BigInt(spec.widths[i] / n0);
    r *= boost::multiprecision::pow(per_unit, static_cast<unsigned>(n0));
  }
  return r;
}

BigInt identified_regions_per_layer(std::uint64_t n0, std::uint64_t n1) {
  if (n0 == 0) fail(ErrorKind::InvalidArgument, "n0 must be positive");
  if (n1 < n0)
    fail(ErrorKind::PreconditionViolated,
         "n1 = " + std::to_string(n1) + " is below n0 = " + std::to_string(n0));
  return boost::multiprecision::pow(2 * BigInt(n1 / n0), static_cast<unsigned>(n0));
}

// ---- trough functions -----------------------------------------------------

double phi_hat(double n, double x) {
  require_construction_power(n);
  return act::polu_forward(x, n) + act::polu_forward(-x, n);
}

double phi_hat_trough(double n) {
  require_construction_power(n);
  return std::expm1(std::log(n) / (n + 1.0));
}

TroughFunction solve_trough_params(double n, double d) {
  require_construction_power(n);
  if (!std::isfinite(d) || d < 0.0 || d >= 1.0)
    fail(ErrorKind::InvalidArgument, "d must lie in [0, 1), got " + std::to_string(d));

  // g(s) = s + (1+s)^{-n} - 1 vanishes at s = 0, dips below zero until its
  // minimum at s = m and is positive at s = 1, so [m, 1] brackets the root.
  const double m = phi_hat_trough(n);
  auto g = [n](double s) { return s + std::expm1(-n * std::log1p(s)); };
  double lo = m, hi = 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) < 0.0 ? lo : hi) = mid;
  }
  const double s = 0.5 * (lo + hi);

  TroughFunction tf;
  tf.n = n;
  tf.d = d;
  tf.a = s / (1.0 - d);
  tf.b = tf.a * d;
  tf.c = d + m / tf.a;
  if (!(tf.c < 1.0))
    fail(ErrorKind::ConstructionInfeasible,
         "trough at c = " + format_real(tf.c, 17) + " is not below 1 for d = " + format_real(d, 17));
  return tf;
}

double phi(const TroughFunction& tf, double x) {
  return polu(tf.a * x + tf.b, tf.n) + polu(-tf.a * x + tf.b, tf.n);
}

// ---- sum construction -----------------------------------------------------

double SumConstruction::operator()(double x) const {
  double s = 0.0;
  for (std::size_t i = 0; i < components.size(); ++i) s += coeffs[i] * phi(components[i], x);
  return s;
}

SumConstruction build_sum_construction(double n, std::size_t k, const SumOptions& options) {
  require_construction_power(n);
  if (k == 0) fail(ErrorKind::InvalidArgument, "k must be positive");
  if (options.prescan < 1000) fail(ErrorKind::InvalidArgument, "prescan needs >= 1000 points");

  SumConstruction sc;
  sc.n = n;
  sc.k = k;
  double d = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (i > 0) {
      const double prev_c = sc.components.back().c;
      d = 0.5 * (prev_c + 1.0);
      if (!(d > prev_c && d < 1.0))
        fail(ErrorKind::ConstructionInfeasible,
             "no room for component " + std::to_string(i + 1) + " after c = " +
                 format_real(prev_c, 17));
    }
    const TroughFunction tf = solve_trough_params(n, d);
    if (!(tf.c > tf.d))
      fail(ErrorKind::ConstructionInfeasible,
           "component " + std::to_string(i + 1) + " has its trough inside its plateau");
    sc.components.push_back(tf);
  }
  sc.coeffs.assign(k, 1.0);

  // Each component's values on the [0, 1] grid are computed once; S is then a
  // weighted sum that is cheap to re-form after every coefficient update.
  const std::vector<double> xs = trough_grid(options.prescan);
  std::vector<std::vector<double>> comp(k, std::vector<double>(xs.size()));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < xs.size(); ++j) comp[i][j] = phi(sc.components[i], xs[j]);

  std::vector<double> s(xs.size());
  std::vector<Extremum> found;
  const double h = xs[1] - xs[0];
  for (std::size_t it = 0;; ++it) {
    std::fill(s.begin(), s.end(), 0.0);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < xs.size(); ++j) s[j] += sc.coeffs[i] * comp[i][j];

    found.clear();
    for (std::size_t j = 1; j + 1 < xs.size(); ++j) {
      if (s[j] < s[j - 1] && s[j] <= s[j + 1]) {
        const double x = golden_section(sc, xs[j] - h, xs[j] + h, 1e-12);
        found.push_back({x, sc(x)});
      }
    }
    if (found.size() != k)
      fail(ErrorKind::ConvergenceFailure, "expected " + std::to_string(k) +
                                              " minima on (0, 1), found " +
                                              std::to_string(found.size()) + " at iteration " +
                                              std::to_string(it));

    // spread of the minimum values, so any two agree to within the tolerance
    const auto [lo_m, hi_m] = std::minmax_element(
        found.begin(), found.end(), [](const Extremum& a, const Extremum& b) { return a.value < b.value; });
    const double residual = hi_m->value - lo_m->value;
    sc.residual = residual;
    sc.iterations = it;
    if (residual < options.tolerance) break;
    if (it + 1 >= options.max_iterations)
      fail(ErrorKind::ConvergenceFailure, "minima not equalized after " + std::to_string(it + 1) +
                                              " iterations, residual " + format_real(residual, 6));

    // Depths below the common level S(0); deeper-than-first troughs get their
    // coefficient shrunk, shallower ones grown.
    const double s0 = sc(0.0);
    const double ref = found[0].value - s0;
    for (std::size_t i = 1; i < k; ++i) {
      const double depth = found[i].value - s0;
      if (!(ref < 0.0 && depth < 0.0))
        fail(ErrorKind::ConvergenceFailure, "trough " + std::to_string(i + 1) +
                                                " rose above the central level");
      sc.coeffs[i] *= std::pow(ref / depth, options.damping);
    }
  }

  sc.minima.clear();
  for (auto it = found.rbegin(); it != found.rend(); ++it) sc.minima.push_back({-it->x, it->value});
  for (const auto& m : found) sc.minima.push_back(m);

  sc.maxima.clear();
  for (std::size_t i = k; i-- > 1;) sc.maxima.push_back({-sc.components[i].d, 0.0});
  sc.maxima.push_back({0.0, 0.0});
  for (std::size_t i = 1; i < k; ++i) sc.maxima.push_back({sc.components[i].d, 0.0});
  for (auto& m : sc.maxima) m.value = sc(m.x);
  return sc;
}

// ---- sampled region counting ----------------------------------------------

RegionReport count_monotonic_regions(const BatchFunction& f, double lo, double hi,
                                     std::size_t resolution, const ScanOptions& options) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi))
    fail(ErrorKind::InvalidArgument, "scan interval must satisfy lo < hi");
  if (resolution < 1000) fail(ErrorKind::InvalidArgument, "resolution must be >= 1000");

  const std::size_t n = resolution;
  const double h = (hi - lo) / static_cast<double>(n - 1);
  std::vector<double> xs(n), ys(n);
  for (std::size_t j = 0; j < n; ++j) xs[j] = lo + h * static_cast<double>(j);
  xs.back() = hi;
  f(xs, ys);
  for (std::size_t j = 0; j < n; ++j)
    if (!std::isfinite(ys[j]))
      fail(ErrorKind::InvalidArgument, "function is not finite at x = " + format_real(xs[j], 17));

  const std::size_t cells = n - 1;
  std::vector<int> sign(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    const double df = ys[i + 1] - ys[i];
    sign[i] = std::abs(df) <= options.dead_band ? 0 : (df > 0.0 ? 1 : -1);
  }

  // Runs of equal sign.
  struct Run {
    int sign;
    std::size_t begin, end;  // cells [begin, end)
  };
  std::vector<Run> runs;
  for (std::size_t i = 0; i < cells; ++i) {
    if (runs.empty() || runs.back().sign != sign[i]) runs.push_back({sign[i], i, i + 1});
    else runs.back().end = i + 1;
  }

  // Short flat runs are rounding artefacts at extrema or inflections, not
  // genuine constant pieces.
  std::vector<Candidate> cands;
  {
    std::vector<Run> merged;
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const Run& run = runs[r];
      const bool short_flat = run.sign == 0 && run.end - run.begin <= 2;
      const bool interior = r > 0 && r + 1 < runs.size();
      if (short_flat && !interior) {
        if (!merged.empty()) merged.back().end = run.end;
        else if (r + 1 < runs.size()) runs[r + 1].begin = run.begin;
        continue;
      }
      // Flat between two runs of the same sign is still one monotonic piece
      // (x^3 at 0); any slope break there is left to the kink detector.
      if (run.sign == 0 && interior && merged.back().sign == runs[r + 1].sign) {
        merged.back().end = runs[r + 1].end;
        ++r;
        continue;
      }
      if (short_flat && interior) {
        const int before = merged.back().sign;
        const int after = runs[r + 1].sign;
        if (before != 0 && after != 0) {
          // Extremum hidden in a flat cell or two: one breakpoint mid-run.
          cands.push_back({(run.begin + run.end) / 2, Cand::Extremum, before < 0});
          merged.back().end = run.end;
          continue;
        }
      }
      if (!merged.empty() && merged.back().sign == run.sign) merged.back().end = run.end;
      else merged.push_back(run);
    }
    for (std::size_t r = 1; r < merged.size(); ++r) {
      const int a = merged[r - 1].sign, b = merged[r].sign;
      const bool strict = a != 0 && b != 0;
      cands.push_back({merged[r].begin, strict ? Cand::Extremum : Cand::Transition, a < 0});
    }
  }

  // Slope discontinuities: second differences far above their neighbourhood,
  // excluding the immediate neighbours that share a split kink.
  {
    std::vector<double> jump(cells > 1 ? cells - 1 : 0);
    for (std::size_t i = 0; i + 1 < cells; ++i)
      jump[i] = std::abs((ys[i + 2] - ys[i + 1]) - (ys[i + 1] - ys[i])) / h;
    const double floor = 100.0 * options.dead_band / h;
    constexpr std::size_t kWindow = 6;
    for (std::size_t i = 0; i < jump.size(); ++i) {
      if (!(jump[i] > floor)) continue;
      double scale = 0.0;
      const std::size_t from = i >= kWindow ? i - kWindow : 0;
      const std::size_t to = std::min(jump.size() - 1, i + kWindow);
      for (std::size_t j = from; j <= to; ++j)
        if (j + 1 < i || j > i + 1) scale = std::max(scale, jump[j]);
      if (jump[i] > options.kink_factor * scale) cands.push_back({i + 1, Cand::Kink, false});
    }
  }

  std::sort(cands.begin(), cands.end(),
            [](const Candidate& a, const Candidate& b) { return a.pos < b.pos; });

  RegionReport report;
  report.method = Method::Sampled;
  report.resolution = resolution;
  report.lo = lo;
  report.hi = hi;

  for (std::size_t c = 0; c < cands.size();) {
    std::size_t e = c + 1;
    while (e < cands.size() && cands[e].pos - cands[e - 1].pos <= 2) ++e;
    const std::size_t first = cands[c].pos, last = cands[e - 1].pos;
    const Candidate* extremum = nullptr;
    bool kink = false;
    for (std::size_t i = c; i < e; ++i) {
      if (cands[i].kind == Cand::Extremum && !extremum) extremum = &cands[i];
      if (cands[i].kind == Cand::Kink) kink = true;
    }
    double x = xs[(first + last) / 2];
    if (options.refine) {
      const double l = xs[first >= 3 ? first - 3 : 0];
      const double r = xs[std::min(n - 1, last + 3)];
      if (extremum) {
        const double sgn = extremum->minimum ? 1.0 : -1.0;
        x = golden_section([&](double t) { return sgn * eval1(f, t); }, l, r, 1e-12);
      } else if (kink) {
        x = refine_kink(f, l, r);
      }
    }
    if (x > lo && x < hi) report.breakpoints.push_back(x);
    c = e;
  }
  std::sort(report.breakpoints.begin(), report.breakpoints.end());
  report.count = report.breakpoints.size() + 1;
  return report;
}

RegionReport count_monotonic_regions(const std::function<double(double)>& f, double lo, double hi,
                                     std::size_t resolution, const ScanOptions& options) {
  BatchFunction batch = [&f](std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  };
  return count_monotonic_regions(batch, lo, hi, resolution, options);
}

RegionReport analytic_regions(const SumConstruction& sc) {
  RegionReport report;
  report.method = Method::Analytic;
  report.lo = -1.0;
  report.hi = 1.0;
  for (const auto& m : sc.minima) report.breakpoints.push_back(m.x);
  for (const auto& m : sc.maxima) report.breakpoints.push_back(m.x);
  std::sort(report.breakpoints.begin(), report.breakpoints.end());
  report.count = report.breakpoints.size() + 1;
  return report;
}

std::size_t count_identified_intervals(const SumConstruction& sc, double band_lo, double band_hi) {
  if (sc.minima.empty() || sc.maxima.empty())
    fail(ErrorKind::InvalidArgument, "construction has no solved extrema");
  double floor_value = -std::numeric_limits<double>::infinity();
  for (const auto& m : sc.minima) floor_value = std::max(floor_value, m.value);
  double ceiling = std::numeric_limits<double>::infinity();
  for (const auto& m : sc.maxima) ceiling = std::min(ceiling, m.value);
  if (!std::isfinite(band_lo) || !std::isfinite(band_hi) || !(band_lo < band_hi))
    fail(ErrorKind::InvalidArgument, "band must satisfy band_lo < band_hi");
  if (!(floor_value < band_lo && band_hi < ceiling))
    fail(ErrorKind::InvalidArgument, "band [" + format_real(band_lo, 9) + ", " +
                                         format_real(band_hi, 9) + "] must lie strictly between " +
                                         format_real(floor_value, 9) + " and " +
                                         format_real(ceiling, 9));

  std::vector<double> pts = analytic_regions(sc).breakpoints;
  pts.insert(pts.begin(), -1.0);
  pts.push_back(1.0);
  std::size_t count = 0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double u = sc(pts[i]), v = sc(pts[i + 1]);
    if (std::min(u, v) <= band_lo && std::max(u, v) >= band_hi) ++count;
  }
  return count;
}

RegionReport network_line_regions(const net::NetworkSpec& spec,
                                  const net::ParameterSet<double>& params,
                                  std::span<const double> anchor, std::span<const double> direction,
                                  double t_lo, double t_hi, std::size_t resolution) {
  const std::size_t dim = net::element_count(spec.input_shape());
  if (anchor.size() != dim || direction.size() != dim)
    fail(ErrorKind::InvalidArgument, "anchor and direction need " + std::to_string(dim) +
                                         " components, got " + std::to_string(anchor.size()) +
                                         " and " + std::to_string(direction.size()));
  if (std::all_of(direction.begin(), direction.end(), [](double v) { return v == 0.0; }))
    fail(ErrorKind::InvalidArgument, "direction must be nonzero");
  try {
    net::check_parameters(spec, params);
  } catch (const Error& e) {
    fail(ErrorKind::InvalidArgument, e.what());
  }

  std::vector<double> a(anchor.begin(), anchor.end()), dir(direction.begin(), direction.end());
  BatchFunction f = [&spec, &params, a, dir, dim](std::span<const double> t, std::span<double> y) {
    constexpr std::size_t kChunk = 2048;
    for (std::size_t start = 0; start < t.size(); start += kChunk) {
      const std::size_t m = std::min(kChunk, t.size() - start);
      net::Shape shape = spec.input_shape();
      shape.insert(shape.begin(), m);
      net::Tensor<double> batch(shape);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t k = 0; k < dim; ++k) batch[r * dim + k] = a[k] + t[start + r] * dir[k];
      const auto result = net::forward(spec, params, batch, net::Mode::Infer);
      const auto& logits = result.cache.logits;
      const std::size_t cols = logits.size() / m;
      for (std::size_t r = 0; r < m; ++r) y[start + r] = logits[r * cols];
    }
  };
  return count_monotonic_regions(f, t_lo, t_hi, resolution);
}

net::NetworkSpec line_network(std::size_t hidden, const act::ActivationSpec& activation) {
  if (hidden == 0) fail(ErrorKind::InvalidArgument, "hidden width must be positive");
  activation.validate();
  net::NetworkSpec spec;
  spec.height = spec.width = spec.channels = 1;
  spec.layers = {net::LayerSpec::flatten(), net::LayerSpec::dense(hidden),
                 net::LayerSpec::activation_layer(activation), net::LayerSpec::dense(1)};
  return spec;
}

net::ParameterSet<double> random_line_parameters(const net::NetworkSpec& spec, std::uint64_t seed) {
  auto params = net::init_parameters<double>(spec, seed);
  std::mt19937_64 gen(derive_seed(seed, "line"));
  std::normal_distribution<double> normal;
  for (auto& t : params.tensors)
    for (std::size_t i = 0; i < t.value.size(); ++i) t.value[i] = normal(gen);
  return params;
}

// ---- JSON -----------------------------------------------------------------

std::string_view to_string(Method method) {
  return method == Method::Analytic ? "analytic" : "sampled";
}

json to_json(const RegionReport& report) {
  return json{{"count", report.count},
              {"breakpoints", report.breakpoints},
              {"method", to_string(report.method)},
              {"resolution", report.resolution},
              {"lo", report.lo},
              {"hi", report.hi}};
}

json to_json(const TroughFunction& tf) {
  return json{{"n", tf.n}, {"d", tf.d}, {"a", tf.a}, {"b", tf.b}, {"c", tf.c}};
}

json to_json(const SumConstruction& sc) {
  json comps = json::array();
  for (const auto& tf : sc.components) comps.push_back(to_json(tf));
  auto extrema = [](const std::vector<Extremum>& v) {
    json out = json::array();
    for (const auto& e : v) out.push_back(json{{"x", e.x}, {"value", e.value}});
    return out;
  };
  return json{{"n", sc.n},
              {"k", sc.k},
              {"components", comps},
              {"coeffs", sc.coeffs},
              {"minima", extrema(sc.minima)},
              {"maxima", extrema(sc.maxima)},
              {"residual", sc.residual},
              {"iterations", sc.iterations}};
}

}  // namespace polu::regions
