#include "cobt/changepoint.hpp"

#include "cobt/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cobt {

L2Cost::L2Cost(std::span<const double> signal)
    : prefix_(signal.size() + 1, 0.0), prefix_sq_(signal.size() + 1, 0.0) {
  // Center first to keep the prefix sums well conditioned.
  double mean = 0.0;
  for (double v : signal) mean += v;
  if (!signal.empty()) mean /= static_cast<double>(signal.size());
  for (std::size_t i = 0; i < signal.size(); ++i) {
    const double x = signal[i] - mean;
    prefix_[i + 1] = prefix_[i] + x;
    prefix_sq_[i + 1] = prefix_sq_[i] + x * x;
  }
}

double L2Cost::operator()(std::size_t begin, std::size_t end) const {
  const double n = static_cast<double>(end - begin);
  if (n <= 0.0) return 0.0;
  const double s = prefix_[end] - prefix_[begin];
  const double c = (prefix_sq_[end] - prefix_sq_[begin]) - s * s / n;
  return c > 0.0 ? c : 0.0;
}

ChangepointResult pelt(std::span<const double> signal, const ChangepointOptions& opts) {
  if (!(opts.penalty > 0.0)) throw ValidationError("segmenter", "penalty must be > 0");
  const std::size_t n = signal.size();
  const std::size_t m = std::max<std::size_t>(1, opts.min_size);
  ChangepointResult result;
  if (n == 0) return result;
  const L2Cost cost(signal);
  if (n < 2 * m) {
    result.cost = cost(0, n);
    return result;
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  constexpr std::size_t kNever = std::numeric_limits<std::size_t>::max();
  std::vector<double> best(n + 1, kInf);
  std::vector<std::size_t> last(n + 1, 0);
  best[0] = -opts.penalty;

  struct Candidate {
    std::size_t tau;
    std::size_t retire_at;  // pruned for every end index >= retire_at
  };
  std::vector<Candidate> candidates{{0, kNever}};

  for (std::size_t t = m; t <= n; ++t) {
    double f_min = kInf;
    std::size_t arg = 0;
    for (const auto& c : candidates) {
      if (t - c.tau < m || t >= c.retire_at) continue;
      const double f = best[c.tau] + cost(c.tau, t) + opts.penalty;
      if (f < f_min) {
        f_min = f;
        arg = c.tau;
      }
    }
    best[t] = f_min;
    last[t] = arg;

    // A candidate that cannot beat t now cannot beat t for any end >= t + m,
    // where t itself is an admissible split.
    for (auto& c : candidates) {
      if (c.retire_at != kNever || t - c.tau < m) continue;
      if (best[c.tau] + cost(c.tau, t) > best[t]) c.retire_at = t + m;
    }
    std::erase_if(candidates, [t](const Candidate& c) { return t + 1 >= c.retire_at; });

    const std::size_t next = t + 1 - m;  // becomes admissible at end t + 1
    if (next >= m && next < n && std::isfinite(best[next])) candidates.push_back({next, kNever});
  }

  for (std::size_t t = n; t > 0; t = last[t]) {
    if (last[t] > 0) result.breakpoints.push_back(last[t]);
  }
  std::reverse(result.breakpoints.begin(), result.breakpoints.end());
  result.cost = best[n];
  return result;
}

double segmentation_cost(std::span<const double> signal, std::span<const std::size_t> breakpoints,
                         double penalty) {
  const L2Cost cost(signal);
  double total = 0.0;
  std::size_t prev = 0;
  for (std::size_t b : breakpoints) {
    total += cost(prev, b);
    prev = b;
  }
  total += cost(prev, signal.size());
  return total + penalty * static_cast<double>(breakpoints.size());
}

double default_penalty(std::span<const double> signal) {
  const std::size_t n = signal.size();
  if (n < 3) return 1e-12;
  std::vector<double> d(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) d[i] = signal[i + 1] - signal[i];
  auto median = [](std::vector<double> v) {
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
  };
  const double med = median(d);
  for (double& x : d) x = std::abs(x - med);
  // 1.4826 * MAD estimates sigma of the differences; differences of white
  // noise have sqrt(2) times the per-sample sigma.
  const double sigma_mad = 1.4826 * median(d) / std::sqrt(2.0);
  double vmax = 0.0;
  for (double v : signal) vmax = std::max(vmax, std::abs(v));
  const double sigma = std::max({sigma_mad, 1e-3 * vmax, 1e-9});
  return 3.0 * std::log(static_cast<double>(n)) * sigma * sigma;
}

}  // namespace cobt
