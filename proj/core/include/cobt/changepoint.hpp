#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cobt {

/// Sum of squared deviations from the mean over [begin, end), O(1) per query.
class L2Cost {
 public:
  explicit L2Cost(std::span<const double> signal);

  double operator()(std::size_t begin, std::size_t end) const;
  std::size_t size() const { return prefix_.size() - 1; }

 private:
  std::vector<double> prefix_;
  std::vector<double> prefix_sq_;
};

struct ChangepointOptions {
  double penalty = 0.0;       // > 0; cost added per breakpoint
  std::size_t min_size = 2;   // minimum samples per segment
};

struct ChangepointResult {
  /// Segment start indices after the first one, i.e. the interior breakpoints.
  std::vector<std::size_t> breakpoints;
  /// Sum of segment costs plus penalty * breakpoints.size().
  double cost = 0.0;
};

/// Exact penalized L2 segmentation with PELT pruning.
ChangepointResult pelt(std::span<const double> signal, const ChangepointOptions& opts);

/// Penalized cost of an explicit breakpoint set (helper for oracles/tests).
double segmentation_cost(std::span<const double> signal, std::span<const std::size_t> breakpoints,
                         double penalty);

/// Data-driven default: 3 * log(N) * sigma^2 with sigma the MAD noise estimate
/// of the first differences. Floored at 1e-3 * max|v| so noiseless input still
/// gets a strictly positive penalty.
double default_penalty(std::span<const double> signal);

}  // namespace cobt
