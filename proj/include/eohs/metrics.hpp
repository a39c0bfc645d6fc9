#pragma once

// Set-level quantities over a performance matrix: per-instance bests, the
// complementary performance index (CPI), marginal CPI gain, distances, ranks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "eohs/core.hpp"

namespace eohs {

struct CpiReport {
  double cpi = 0.0;
  std::vector<double> best_per_instance;
  std::vector<std::string> contributor;  // argmin heuristic id per instance
};

namespace detail {

inline void check_subset(const PerformanceMatrix& matrix, std::span<const std::size_t> subset) {
  if (subset.empty()) throw Error("metrics", "empty subset");
  for (std::size_t r : subset) {
    if (r >= matrix.rows()) throw Error("metrics", "row " + std::to_string(r) + " out of range");
    if (!matrix.row(r).valid()) {
      throw Error("metrics", "invalid row referenced: " + matrix.heuristic_id(r));
    }
  }
}

}  // namespace detail

/// Elementwise minimum over the selected rows.
inline std::vector<double> best_per_instance(const PerformanceMatrix& matrix,
                                             std::span<const std::size_t> subset) {
  detail::check_subset(matrix, subset);
  const auto first = matrix.row(subset.front()).scores();
  std::vector<double> best(first.begin(), first.end());
  for (std::size_t r : subset.subspan(1)) {
    const auto s = matrix.row(r).scores();
    for (std::size_t j = 0; j < best.size(); ++j) best[j] = std::min(best[j], s[j]);
  }
  return best;
}

/// Mean over instances of the subset's per-instance best score. Contributor
/// ties go to the lowest row index.
inline CpiReport cpi(const PerformanceMatrix& matrix, std::span<const std::size_t> subset) {
  detail::check_subset(matrix, subset);
  const std::size_t m = matrix.instances();
  CpiReport report;
  report.best_per_instance.assign(m, kInvalidScore);
  std::vector<std::size_t> arg(m, matrix.rows());
  for (std::size_t r : subset) {
    const auto s = matrix.row(r).scores();
    for (std::size_t j = 0; j < m; ++j) {
      if (s[j] < report.best_per_instance[j] ||
          (s[j] == report.best_per_instance[j] && r < arg[j])) {
        report.best_per_instance[j] = s[j];
        arg[j] = r;
      }
    }
  }
  report.contributor.reserve(m);
  for (std::size_t j = 0; j < m; ++j) report.contributor.push_back(matrix.heuristic_id(arg[j]));
  report.cpi = m == 0 ? 0.0
                      : std::accumulate(report.best_per_instance.begin(),
                                        report.best_per_instance.end(), 0.0) /
                            static_cast<double>(m);
  return report;
}

inline double cpi_value(const PerformanceMatrix& matrix, std::span<const std::size_t> subset) {
  const auto best = best_per_instance(matrix, subset);
  if (best.empty()) return 0.0;
  return std::accumulate(best.begin(), best.end(), 0.0) / static_cast<double>(best.size());
}

/// Summed clipped improvement of `candidate` over `reference_best`. No 1/m
/// factor: delta_cpi(h, best(H)) == m * (cpi(H) - cpi(H + h)).
inline double delta_cpi(const PerformanceVector& candidate,
                        std::span<const double> reference_best) {
  if (!candidate.valid()) throw Error("metrics", "delta_cpi of an invalid candidate");
  if (candidate.size() != reference_best.size()) throw Error("metrics", "length mismatch");
  double gain = 0.0;
  for (std::size_t j = 0; j < reference_best.size(); ++j) {
    gain += std::max(reference_best[j] - candidate[j], 0.0);
  }
  return gain;
}

inline double manhattan_distance(const PerformanceVector& a, const PerformanceVector& b) {
  if (!a.valid() || !b.valid()) throw Error("metrics", "distance with an invalid vector");
  if (a.size() != b.size()) throw Error("metrics", "length mismatch");
  double d = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) d += std::abs(a[j] - b[j]);
  return d;
}

/// Subset rows sorted by mean score, best first; equal means keep lower index first.
inline std::vector<std::size_t> rank_by_average(const PerformanceMatrix& matrix,
                                                std::span<const std::size_t> subset) {
  detail::check_subset(matrix, subset);
  std::vector<std::size_t> order(subset.begin(), subset.end());
  std::vector<std::pair<double, std::size_t>> keyed;
  keyed.reserve(order.size());
  for (std::size_t r : order) keyed.emplace_back(matrix.row(r).mean(), r);
  std::sort(keyed.begin(), keyed.end());
  for (std::size_t i = 0; i < keyed.size(); ++i) order[i] = keyed[i].second;
  return order;
}

}  // namespace eohs
