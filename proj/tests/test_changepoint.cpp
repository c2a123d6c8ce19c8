#include "cobt/changepoint.hpp"
#include "cobt/segmenter.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace cobt {
namespace {

/// Segment cost by direct summation.
double direct_cost(const std::vector<double>& x, std::size_t b, std::size_t e) {
  double mean = 0.0;
  for (std::size_t i = b; i < e; ++i) mean += x[i];
  mean /= static_cast<double>(e - b);
  double c = 0.0;
  for (std::size_t i = b; i < e; ++i) c += (x[i] - mean) * (x[i] - mean);
  return c;
}

struct Oracle {
  std::vector<std::size_t> breakpoints;
  double cost = 0.0;
};

/// Optimal partitioning without pruning: every last-segment start is tried.
Oracle optimal_partitioning(const std::vector<double>& x, double penalty, std::size_t min_size) {
  const std::size_t n = x.size();
  std::vector<long double> s(n + 1, 0.0L), s2(n + 1, 0.0L);
  for (std::size_t i = 0; i < n; ++i) {
    s[i + 1] = s[i] + x[i];
    s2[i + 1] = s2[i] + static_cast<long double>(x[i]) * x[i];
  }
  auto cost = [&](std::size_t b, std::size_t e) {
    const long double m = static_cast<long double>(e - b);
    const long double sum = s[e] - s[b];
    return static_cast<double>(std::max(0.0L, s2[e] - s2[b] - sum * sum / m));
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> f(n + 1, inf);
  std::vector<std::size_t> last(n + 1, 0);
  f[0] = -penalty;
  for (std::size_t t = min_size; t <= n; ++t) {
    for (std::size_t tau = 0; tau + min_size <= t; ++tau) {
      if (tau != 0 && tau < min_size) continue;
      if (f[tau] == inf) continue;
      const double c = f[tau] + cost(tau, t) + penalty;
      if (c < f[t]) {
        f[t] = c;
        last[t] = tau;
      }
    }
  }
  Oracle o;
  o.cost = f[n];
  for (std::size_t t = n; last[t] != 0; t = last[t]) o.breakpoints.push_back(last[t]);
  std::reverse(o.breakpoints.begin(), o.breakpoints.end());
  return o;
}

/// Every breakpoint subset of a short signal.
Oracle enumerate_all(const std::vector<double>& x, double penalty, std::size_t min_size) {
  const std::size_t n = x.size();
  Oracle best;
  best.cost = std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < (1u << (n - 1)); ++mask) {
    std::vector<std::size_t> bps;
    for (std::size_t i = 1; i < n; ++i) {
      if (mask & (1u << (i - 1))) bps.push_back(i);
    }
    std::size_t prev = 0;
    bool ok = true;
    double c = 0.0;
    for (std::size_t k = 0; k <= bps.size(); ++k) {
      const std::size_t end = k < bps.size() ? bps[k] : n;
      if (end - prev < min_size) ok = false;
      if (!ok) break;
      c += direct_cost(x, prev, end);
      prev = end;
    }
    if (!ok) continue;
    c += penalty * static_cast<double>(bps.size());
    if (c < best.cost - 1e-12) best = {bps, c};
  }
  return best;
}

TEST(L2Cost, MatchesDirectSummation) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.1, 0.05);
  std::vector<double> x(60);
  for (auto& v : x) v = nd(rng);
  const L2Cost c(x);
  for (std::size_t b = 0; b < 60; b += 7) {
    for (std::size_t e = b + 1; e <= 60; e += 5) EXPECT_NEAR(c(b, e), direct_cost(x, b, e), 1e-12);
  }
}

TEST(Pelt, MatchesExhaustiveEnumerationOnShortSignals) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> x(14);
    const double level = u(rng);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (i >= 6 ? level : 0.0) + 0.1 * u(rng);
    const double penalty = 0.005 + 0.05 * u(rng);
    const Oracle o = enumerate_all(x, penalty, 2);
    const ChangepointResult r = pelt(x, {penalty, 2});
    EXPECT_EQ(r.breakpoints, o.breakpoints) << "trial " << trial;
    EXPECT_NEAR(r.cost, o.cost, 1e-9);
  }
}

TEST(Pelt, PiecewiseConstantSteps) {
  std::vector<double> v(300, 0.0);
  std::fill(v.begin() + 100, v.begin() + 200, 0.2);
  const auto b = detect_changepoints(v, default_penalty(v));
  ASSERT_EQ(b.size(), 4u);
  EXPECT_EQ(b.front(), 0u);
  EXPECT_EQ(b.back(), 299u);
  EXPECT_NEAR(static_cast<double>(b[1]), 100.0, 3.0);
  EXPECT_NEAR(static_cast<double>(b[2]), 200.0, 3.0);
  const Oracle o = optimal_partitioning(v, default_penalty(v), 2);
  EXPECT_EQ(o.breakpoints, std::vector<std::size_t>(b.begin() + 1, b.end() - 1));
}

TEST(Pelt, ConstantSignalHasNoInteriorBreakpoints) {
  const std::vector<double> v(250, 0.07);
  EXPECT_EQ(detect_changepoints(v, default_penalty(v)), (std::vector<std::size_t>{0, 249}));
  EXPECT_GT(default_penalty(v), 0.0);
}

TEST(Pelt, RampKnee) {
  // Rises to the knee at 150, then flat. A ramp of slope s costs about
  // s^2 L^3 / 12 per segment of length L, so optimal ramp segments are
  // L = (12 P / s^2)^(1/3) long: the last breakpoint lies within one such
  // length before the knee and the plateau is not split.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 0.002);
  const double slope = 0.002;
  std::vector<double> v(300);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = (i < 150 ? slope * static_cast<double>(i) : 0.3) + noise(rng);
  }
  const double penalty = 0.05;
  const auto b = detect_changepoints(v, penalty);
  const Oracle o = optimal_partitioning(v, penalty, 2);
  EXPECT_EQ(o.breakpoints, std::vector<std::size_t>(b.begin() + 1, b.end() - 1));
  const double length = std::cbrt(12.0 * penalty / (slope * slope));
  ASSERT_GT(b.size(), 2u);
  const double last = static_cast<double>(b[b.size() - 2]);
  EXPECT_LE(last, 150.0 + 3.0);
  EXPECT_GE(last, 150.0 - length);
}

TEST(Pelt, OracleEquivalenceOnRandomSignals) {
  std::mt19937_64 rng(2024);
  int within = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<std::size_t> len(80, 400);
    const std::size_t n = len(rng);
    const auto k = std::uniform_int_distribution<int>(0, 4)(rng);
    std::vector<std::size_t> planted;
    // Redraw the whole set when the remaining room cannot fit another point.
    for (int tries = 0; static_cast<int>(planted.size()) < k; ++tries) {
      if (tries % 100 == 99) planted.clear();
      const std::size_t c = std::uniform_int_distribution<std::size_t>(15, n - 15)(rng);
      bool spaced = true;
      for (auto p : planted) spaced = spaced && (c > p ? c - p : p - c) >= 15;
      if (spaced) planted.push_back(c);
    }
    std::sort(planted.begin(), planted.end());
    std::vector<double> x(n);
    std::normal_distribution<double> noise(0.0, 0.01);
    std::uniform_real_distribution<double> jump(0.06, 0.2);
    double level = 0.05;
    std::size_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (next < planted.size() && i == planted[next]) {
        level = level > 0.15 ? level - jump(rng) : level + jump(rng);
        ++next;
      }
      x[i] = level + noise(rng);
    }
    const double penalty = default_penalty(x);
    const ChangepointResult r = pelt(x, {penalty, 2});
    const Oracle o = optimal_partitioning(x, penalty, 2);
    EXPECT_EQ(r.breakpoints, o.breakpoints) << "trial " << trial;
    EXPECT_NEAR(r.cost, o.cost, 1e-9 * std::max(1.0, std::abs(o.cost)));
    EXPECT_NEAR(segmentation_cost(x, r.breakpoints, penalty), r.cost, 1e-9);

    bool ok = r.breakpoints.size() == planted.size();
    for (std::size_t i = 0; ok && i < planted.size(); ++i) {
      ok = std::abs(static_cast<double>(r.breakpoints[i]) - static_cast<double>(planted[i])) <= 3.0;
    }
    within += ok ? 1 : 0;
  }
  EXPECT_GE(within, 48);  // >= 95% of 50
}

TEST(Pelt, ScaleInvariance) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::vector<double> x(200);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (i > 70 && i < 140 ? 0.3 : 0.0) + noise(rng);
  const double penalty = 0.02;
  const auto base = pelt(x, {penalty, 2}).breakpoints;
  for (double c : {0.1, 3.0, 40.0}) {
    std::vector<double> y(x);
    for (auto& v : y) v *= c;
    EXPECT_EQ(pelt(y, {penalty * c * c, 2}).breakpoints, base) << "scale " << c;
  }
}

TEST(Pelt, RespectsMinimumSegmentLength) {
  std::vector<double> x(40, 0.0);
  x[20] = 5.0;  // single-sample spike
  const auto r = pelt(x, {1e-3, 3});
  std::size_t prev = 0;
  for (auto b : r.breakpoints) {
    EXPECT_GE(b - prev, 3u);
    prev = b;
  }
  EXPECT_GE(x.size() - prev, 3u);
  const Oracle o = optimal_partitioning(x, 1e-3, 3);
  EXPECT_EQ(r.breakpoints, o.breakpoints);
}

}  // namespace
}  // namespace cobt
