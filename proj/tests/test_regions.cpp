#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "polu/error.hpp"
#include "polu/regions.hpp"

using namespace polu;
using namespace polu::regions;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::IoError;
}

// phi'(x) from the plain derivative formula.
double trough_slope(const TroughFunction& t, double x) {
  auto df = [&](double u) { return u >= 0 ? 1.0 : t.n * std::pow(1.0 - u, -t.n - 1); };
  return t.a * df(t.a * x + t.b) - t.a * df(-t.a * x + t.b);
}

double band_mid(const SumConstruction& sc, double frac) {
  double top = INFINITY;
  for (const auto& m : sc.maxima)
    if (std::abs(m.x) < 1) top = std::min(top, m.value);
  double bottom = -INFINITY;
  for (const auto& m : sc.minima) bottom = std::max(bottom, m.value);
  return bottom + frac * (top - bottom);
}

}  // namespace

TEST(Bounds, Examples) {
  EXPECT_EQ(theorem1_bound(1, 3), 4);
  EXPECT_EQ(theorem1_bound(2, 4), 11);
  EXPECT_EQ(theorem1_bound(1, 1), 2);
  EXPECT_EQ(theorem2_bound({2, {4}}), 11);
  EXPECT_EQ(theorem2_bound({2, {4, 4, 4}}), 2816);
  EXPECT_EQ(theorem2_bound({1, {2, 2}}), 12);
  EXPECT_EQ(identified_regions_per_layer(1, 2), 4);
  EXPECT_EQ(identified_regions_per_layer(2, 4), 16);
  EXPECT_EQ(identified_regions_per_layer(2, 2), 4);
}

TEST(Bounds, Preconditions) {
  EXPECT_EQ(kind_of([] { theorem2_bound({3, {4, 2}}); }), ErrorKind::PreconditionViolated);
  EXPECT_EQ(kind_of([] { identified_regions_per_layer(3, 2); }), ErrorKind::PreconditionViolated);
  EXPECT_THROW(theorem2_bound({2, {}}), Error);
  EXPECT_THROW(theorem1_bound(0, 3), Error);
}

TEST(Bounds, MatchBigIntegerOracle) {
  std::mt19937_64 gen(42);
  int cases = 0;
  // Fixed corners first, then seeded random shapes up to 50 cases in total.
  std::vector<std::pair<std::uint64_t, std::vector<std::uint64_t>>> matrix = {
      {2, {4, 4, 4}}, {1, {1}}, {1, {2, 2}}, {3, {3}}, {5, {7, 200}}, {10, {64, 64, 64, 64}},
      {1, {1000}}, {32, {512, 512, 512, 512, 512, 512}}, {7, {7, 8, 9, 10}}, {2, {3}}};
  while (matrix.size() < 50) {
    const std::uint64_t n0 = 1 + gen() % 12;
    const std::size_t layers = 1 + gen() % 6;
    std::vector<std::uint64_t> w;
    for (std::size_t i = 0; i < layers; ++i) w.push_back(n0 + gen() % 300);
    matrix.push_back({n0, w});
  }
  for (const auto& [n0, w] : matrix) {
    EXPECT_EQ(theorem2_bound({n0, w}).str(), oracle::thm2(n0, w)) << n0;
    EXPECT_EQ(theorem1_bound(n0, w.back()).str(), oracle::thm1(n0, w.back()));
    if (w.size() == 1) { EXPECT_EQ(theorem2_bound({n0, w}), theorem1_bound(n0, w[0])); }
    ++cases;
  }
  EXPECT_EQ(cases, 50);
}

TEST(Bounds, MonotoneInWidthAndDepth) {
  for (std::uint64_t n0 : {1, 2, 3}) {
    std::vector<std::uint64_t> w{6, 6, 6};
    const BigInt base = theorem2_bound({n0, w});
    for (std::size_t i = 0; i < w.size(); ++i) {
      auto wider = w;
      ++wider[i];
      EXPECT_GE(theorem2_bound({n0, wider}), base);
    }
    auto deeper = w;
    deeper.insert(deeper.begin(), 2 * n0);
    EXPECT_GE(theorem2_bound({n0, deeper}), base * (BigInt(1) << (2 * n0)));
  }
}

TEST(PhiHat, ExamplesAndPrecondition) {
  EXPECT_EQ(phi_hat(2, 0), 0.0);
  EXPECT_NEAR(phi_hat(2, 1), 0.25, 1e-15);
  EXPECT_NEAR(phi_hat_trough(2), std::cbrt(2.0) - 1, 1e-15);
  EXPECT_EQ(kind_of([] { phi_hat(1.0, 0.5); }), ErrorKind::PreconditionViolated);
  EXPECT_EQ(kind_of([] { phi_hat(0.5, 0.5); }), ErrorKind::PreconditionViolated);
}

TEST(Trough, GoldenRatioCase) {
  const auto t = solve_trough_params(2, 0);
  const auto o = oracle::trough(2, 0);
  EXPECT_NEAR(t.a, (std::sqrt(5.0) - 1) / 2, 1e-9);
  EXPECT_NEAR(t.a, o.a, 1e-9);
  EXPECT_EQ(t.b, 0.0);
  EXPECT_NEAR(t.c, o.c, 1e-7);
  // The listed 0.420564 is a rounding of the true 0.4205611; both oracles agree on the latter.
  EXPECT_NEAR(t.c, 0.420564, 5e-6);
}

TEST(Trough, HalfPlateauCase) {
  const auto t = solve_trough_params(2, 0.5);
  const auto o = oracle::trough(2, 0.5);
  EXPECT_NEAR(t.a, 1.2360679775, 1e-9);
  EXPECT_NEAR(t.b, 0.6180339887, 1e-9);
  EXPECT_NEAR(t.a, o.a, 1e-9);
  EXPECT_NEAR(t.c, o.c, 1e-7);
  EXPECT_NEAR(t.c, 0.710282, 5e-6);
  EXPECT_NEAR(phi(t, 0), 1.2360679775, 1e-9);
  EXPECT_NEAR(phi(t, 1), phi(t, 0), 1e-10);
}

TEST(Trough, InvariantsAcrossParameters) {
  for (double n : {1.2, 1.5, 2.0, 3.0, 5.0}) {
    for (double d : {0.0, 0.1, 0.3, 0.5, 0.7}) {
      TroughFunction t;
      try {
        t = solve_trough_params(n, d);
      } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ConstructionInfeasible);
        continue;
      }
      const auto o = oracle::trough(n, d);
      EXPECT_NEAR(t.a, o.a, 1e-9) << n << " " << d;
      EXPECT_NEAR(t.c, o.c, 1e-7) << n << " " << d;
      EXPECT_NEAR(t.b, t.a * d, 1e-12);
      EXPECT_GT(t.c, d);
      EXPECT_LT(t.c, 1.0);
      EXPECT_NEAR(phi(t, -1), phi(t, 0), 1e-10);
      EXPECT_NEAR(phi(t, 1), phi(t, 0), 1e-10);
      for (double x = -1.5; x <= 1.5; x += 0.01) EXPECT_NEAR(phi(t, x), phi(t, -x), 1e-12);
      for (double x = -d; x <= d; x += d / 50 + 1e-9) EXPECT_LT(std::abs(phi(t, x) - 2 * t.b), 1e-12);
      EXPECT_LT(std::abs(trough_slope(t, t.c)), 1e-10);
      EXPECT_GT(trough_slope(t, t.c + 1e-4), 0.0);
      EXPECT_LT(trough_slope(t, t.c - 1e-4), 0.0);
    }
  }
}

TEST(Trough, Errors) {
  EXPECT_EQ(kind_of([] { solve_trough_params(2, 1.0); }), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of([] { solve_trough_params(2, -0.1); }), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of([] { solve_trough_params(1.0, 0.2); }), ErrorKind::PreconditionViolated);
  // c = d + m (1 - d) / s stays below 1 for every admissible d
  const auto wide = solve_trough_params(2, 0.99);
  EXPECT_GT(wide.c, 0.99);
  EXPECT_LT(wide.c, 1.0);
}

TEST(SumConstruction, SingleComponent) {
  const auto sc = build_sum_construction(2, 1);
  ASSERT_EQ(sc.minima.size(), 2u);
  EXPECT_NEAR(sc.minima[0].x, -sc.minima[1].x, 1e-10);
  EXPECT_NEAR(sc.minima[1].x, oracle::trough(2, 0).c, 1e-7);
  EXPECT_NEAR(sc.minima[0].value, sc.minima[1].value, 1e-12);
}

TEST(SumConstruction, EqualMinimaAndInterleaving) {
  for (std::size_t k : {1, 2, 3, 4}) {
    const auto sc = build_sum_construction(2, k);
    ASSERT_EQ(sc.components.size(), k);
    ASSERT_EQ(sc.minima.size(), 2 * k);
    EXPECT_LT(sc.residual, 1e-6) << k;
    EXPECT_EQ(sc.components[0].d, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      EXPECT_GT(sc.coeffs[i], 0.0);
      EXPECT_LT(sc.components[i].d, sc.components[i].c);
      if (i + 1 < k) {
        EXPECT_LT(sc.components[i].c, sc.components[i + 1].d);
        EXPECT_NEAR(sc.components[i + 1].d, (sc.components[i].c + 1) / 2, 1e-15);
      }
    }
    EXPECT_LT(sc.components.back().c, 1.0);
    for (const auto& m : sc.minima) EXPECT_NEAR(m.value, sc.minima[0].value, 1e-6);
    for (std::size_t i = 1; i < sc.minima.size(); ++i) EXPECT_GT(sc.minima[i].x, sc.minima[i - 1].x);
  }
}

TEST(SumConstruction, MinimaAgreeWithDenseGrid) {
  const auto sc = build_sum_construction(2, 2);
  // Independent local-minimum search on a plain grid plus ternary refinement.
  std::vector<double> found;
  const int m = 400000;
  auto x_at = [&](int i) { return -1.0 + 2.0 * i / m; };
  for (int i = 1; i < m; ++i) {
    const double a = sc(x_at(i - 1)), b = sc(x_at(i)), c = sc(x_at(i + 1));
    if (b < a && b <= c) found.push_back(oracle::ternary_min(sc, x_at(i - 1), x_at(i + 1)));
  }
  ASSERT_EQ(found.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(found[i], sc.minima[i].x, 1e-6);
    EXPECT_NEAR(sc(found[i]), sc.minima[0].value, 1e-6);
  }
}

TEST(SumConstruction, Errors) {
  EXPECT_EQ(kind_of([] { build_sum_construction(1.0, 2); }), ErrorKind::PreconditionViolated);
  EXPECT_EQ(kind_of([] { build_sum_construction(2, 0); }), ErrorKind::InvalidArgument);
  // Components crowd toward 1 until c_i >= 1.
  EXPECT_EQ(kind_of([] { build_sum_construction(2, 60); }), ErrorKind::ConstructionInfeasible);
  SumOptions tight;
  tight.max_iterations = 1;
  EXPECT_EQ(kind_of([&] { build_sum_construction(2, 3, tight); }), ErrorKind::ConvergenceFailure);
}

TEST(Counting, Examples) {
  auto polu2 = [](double x) { return oracle::polu(x, 2); };
  const auto a = count_monotonic_regions(polu2, -2, 2, 100000);
  EXPECT_EQ(a.count, 2u);
  ASSERT_EQ(a.breakpoints.size(), 1u);
  EXPECT_NEAR(a.breakpoints[0], 0.0, 1e-6);
  EXPECT_EQ(a.method, Method::Sampled);

  const auto b = count_monotonic_regions([](double x) { return phi_hat(2, x); }, -2, 2, 100000);
  EXPECT_EQ(b.count, 4u);
  ASSERT_EQ(b.breakpoints.size(), 3u);
  const double t = std::cbrt(2.0) - 1;
  EXPECT_NEAR(b.breakpoints[0], -t, 1e-6);
  EXPECT_NEAR(b.breakpoints[1], 0.0, 1e-6);
  EXPECT_NEAR(b.breakpoints[2], t, 1e-6);
  EXPECT_NEAR(t, 0.259921, 1e-6);

  const auto c = count_monotonic_regions(oracle::relu, -1, 1, 100000);
  EXPECT_EQ(c.count, 2u);
  EXPECT_NEAR(c.breakpoints.at(0), 0.0, 1e-6);
}

TEST(Counting, SmoothAndFlatFunctions) {
  EXPECT_EQ(count_monotonic_regions([](double x) { return std::sin(x); }, 0, 10, 100000).count, 4u);
  EXPECT_EQ(count_monotonic_regions([](double x) { return x * x * x; }, -1, 1, 100000).count, 1u);
  EXPECT_EQ(count_monotonic_regions([](double) { return 3.0; }, -1, 1, 100000).count, 1u);
  EXPECT_EQ(count_monotonic_regions([](double x) { return std::exp(x); }, -5, 5, 100000).count, 1u);
  // |x| + |x - 0.5|: kinks at both ends of a flat stretch.
  const auto r = count_monotonic_regions([](double x) { return std::abs(x) + std::abs(x - 0.5); }, -1, 1,
                                         100000);
  EXPECT_EQ(r.count, 3u);
}

TEST(Counting, ResolutionStable) {
  const auto s2 = build_sum_construction(2, 2);
  std::vector<std::function<double(double)>> fs = {
      [](double x) { return oracle::polu(x, 2); }, [](double x) { return phi_hat(2, x); },
      [](double x) { return phi_hat(1.5, x); }, oracle::relu, [&s2](double x) { return s2(x); },
      [](double x) { return std::sin(3 * x) + 0.2 * std::abs(x - 0.1); }};
  for (const auto& f : fs)
    EXPECT_EQ(count_monotonic_regions(f, -1.5, 1.5, 100000).count,
              count_monotonic_regions(f, -1.5, 1.5, 200000).count);
}

TEST(Counting, SumConstructionHasEightPieces) {
  const auto sc = build_sum_construction(2, 2);
  const auto sampled = count_monotonic_regions(sc, -1, 1, 100000);
  EXPECT_EQ(sampled.count, 8u);
  const auto analytic = analytic_regions(sc);
  EXPECT_EQ(analytic.method, Method::Analytic);
  EXPECT_EQ(analytic.count, 8u);
  ASSERT_EQ(sampled.breakpoints.size(), analytic.breakpoints.size());
  for (std::size_t i = 0; i < analytic.breakpoints.size(); ++i)
    EXPECT_NEAR(sampled.breakpoints[i], analytic.breakpoints[i], 1e-6);
}

TEST(Counting, InvalidArguments) {
  EXPECT_THROW(count_monotonic_regions(oracle::relu, 1, 1, 100000), Error);
  EXPECT_THROW(count_monotonic_regions(oracle::relu, 0, 1, 10), Error);
}

TEST(Identified, FourKIntervals) {
  for (std::size_t k : {1, 2, 3}) {
    const auto sc = build_sum_construction(2, k);
    const double lo = band_mid(sc, 0.25), hi = band_mid(sc, 0.75);
    EXPECT_EQ(count_identified_intervals(sc, lo, hi), 4 * k) << k;
  }
  const auto s2 = build_sum_construction(2, 2);
  double top = -INFINITY;
  for (const auto& m : s2.maxima) top = std::max(top, m.value);
  EXPECT_EQ(kind_of([&] { count_identified_intervals(s2, top + 0.1, top + 0.2); }),
            ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of([&] { count_identified_intervals(s2, band_mid(s2, 0.5), band_mid(s2, 0.5)); }),
            ErrorKind::InvalidArgument);
}

TEST(LineRegions, ReluNetworkStaysWithinShallowBound) {
  const auto spec = line_network(16, act::ActivationSpec::relu());
  const double zero = 0, one = 1;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto p = random_line_parameters(spec, seed);
    const auto r = network_line_regions(spec, p, {&zero, 1}, {&one, 1}, -10, 10, 100000);
    EXPECT_LE(r.count, 17u);
    EXPECT_GE(r.count, 1u);
  }
}

TEST(LineRegions, ZeroWeightsIsOneRegion) {
  const auto spec = line_network(16, act::ActivationSpec::polu(2));
  auto p = random_line_parameters(spec, 1);
  for (auto& t : p.tensors) t.value.fill(0);
  const double zero = 0, one = 1;
  EXPECT_EQ(network_line_regions(spec, p, {&zero, 1}, {&one, 1}, -5, 5, 10000).count, 1u);
}

TEST(LineRegions, Errors) {
  const auto spec = line_network(4, act::ActivationSpec::relu());
  const auto p = random_line_parameters(spec, 1);
  const double zero = 0, one = 1;
  const std::vector<double> two{1, 1};
  EXPECT_EQ(kind_of([&] { network_line_regions(spec, p, {&zero, 1}, {&zero, 1}, -1, 1, 1000); }),
            ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of([&] { network_line_regions(spec, p, two, two, -1, 1, 1000); }),
            ErrorKind::InvalidArgument);
  auto bad = p;
  bad.tensors.pop_back();
  EXPECT_EQ(kind_of([&] { network_line_regions(spec, bad, {&zero, 1}, {&one, 1}, -1, 1, 1000); }),
            ErrorKind::InvalidArgument);
}

TEST(Json, ReportFields) {
  const auto sc = build_sum_construction(2, 2);
  const json j = to_json(sc);
  EXPECT_EQ(j.at("k"), 2);
  EXPECT_EQ(j.at("minima").size(), 4u);
  EXPECT_EQ(j.at("components").size(), 2u);
  const json r = to_json(analytic_regions(sc));
  EXPECT_EQ(r.at("method"), "analytic");
  EXPECT_EQ(r.at("count"), 8);
  EXPECT_EQ(r.at("breakpoints").size(), 7u);
  // 17 significant digits survive the text form.
  const json back = json::parse(dump_json(to_json(solve_trough_params(2, 0))));
  EXPECT_EQ(back.at("a").get<double>(), solve_trough_params(2, 0).a);
}
