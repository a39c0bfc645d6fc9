#pragma once

// Test-side reference computations, written without the library helpers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

namespace truth {

using Rows = std::vector<std::vector<double>>;

inline double set_value(const Rows& rows, const std::vector<std::size_t>& subset) {
  const std::size_t m = rows.front().size();
  double total = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t r : subset) lo = std::min(lo, rows[r][j]);
    total += lo;
  }
  return total / static_cast<double>(m);
}

/// min over all k-subsets of `pool`, via bitmask enumeration.
inline double best_k_subset(const Rows& rows, const std::vector<std::size_t>& pool, std::size_t k) {
  double best = std::numeric_limits<double>::infinity();
  const std::size_t p = pool.size();
  for (std::uint32_t mask = 0; mask < (1u << p); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != k) continue;
    std::vector<std::size_t> s;
    for (std::size_t b = 0; b < p; ++b) {
      if (mask >> b & 1u) s.push_back(pool[b]);
    }
    best = std::min(best, set_value(rows, s));
  }
  return best;
}

/// First Fit / Best Fit over a preallocated array of n empty bins.
inline std::size_t packed_bins(double capacity, const std::vector<double>& items, bool best_fit) {
  std::vector<double> load(items.size(), 0.0);
  for (double s : items) {
    std::size_t chosen = items.size();
    for (std::size_t b = 0; b < load.size(); ++b) {
      if (load[b] + s > capacity + 1e-9 * capacity) continue;
      if (!best_fit) {
        chosen = b;
        break;
      }
      // Best Fit: fullest feasible bin that is already used; empty bins last.
      if (chosen == items.size()) {
        chosen = b;
      } else if (load[chosen] == 0.0 && load[b] > 0.0) {
        chosen = b;
      } else if (load[b] > 0.0 && load[b] > load[chosen]) {
        chosen = b;
      }
    }
    load[chosen] += s;
  }
  return static_cast<std::size_t>(std::count_if(load.begin(), load.end(), [](double l) { return l > 0.0; }));
}

/// Exact bin count by trying every bin number 1..n with subset DP over items.
inline std::size_t optimal_bins(double capacity, const std::vector<double>& items) {
  const std::size_t n = items.size();
  if (n == 0) return 0;
  const std::uint32_t full = (1u << n) - 1;
  std::vector<double> sum(full + 1, 0.0);
  for (std::uint32_t m = 1; m <= full; ++m) {
    const int b = __builtin_ctz(m);
    sum[m] = sum[m & (m - 1)] + items[static_cast<std::size_t>(b)];
  }
  // dp[mask] = fewest bins that hold exactly the items in mask.
  std::vector<std::size_t> dp(full + 1, n + 1);
  dp[0] = 0;
  for (std::uint32_t m = 1; m <= full; ++m) {
    // the lowest item must be in some bin; enumerate that bin's contents
    const std::uint32_t low = m & (~m + 1);
    const std::uint32_t rest = m ^ low;
    for (std::uint32_t s = rest;; s = (s - 1) & rest) {
      const std::uint32_t bin = s | low;
      if (sum[bin] <= capacity + 1e-9 * capacity) dp[m] = std::min(dp[m], dp[m ^ bin] + 1);
      if (s == 0) break;
    }
  }
  return dp[full];
}

struct Xy {
  double x, y;
};

inline double dist(const Xy& a, const Xy& b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Held-Karp: shortest closed tour through all nodes.
inline double tour_length(const std::vector<Xy>& pts) {
  const std::size_t n = pts.size();
  if (n < 2) return 0.0;
  if (n == 2) return 2 * dist(pts[0], pts[1]);
  const std::size_t k = n - 1;  // nodes 1..n-1 as bits
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> dp(1u << k, std::vector<double>(k, inf));
  for (std::size_t i = 0; i < k; ++i) dp[1u << i][i] = dist(pts[0], pts[i + 1]);
  for (std::uint32_t m = 1; m < (1u << k); ++m) {
    for (std::size_t i = 0; i < k; ++i) {
      if (!(m >> i & 1u) || dp[m][i] == inf) continue;
      for (std::size_t j = 0; j < k; ++j) {
        if (m >> j & 1u) continue;
        const std::uint32_t nm = m | (1u << j);
        dp[nm][j] = std::min(dp[nm][j], dp[m][i] + dist(pts[i + 1], pts[j + 1]));
      }
    }
  }
  double best = inf;
  for (std::size_t i = 0; i < k; ++i) best = std::min(best, dp[(1u << k) - 1][i] + dist(pts[i + 1], pts[0]));
  return best;
}

/// Optimal CVRP distance: shortest depot cycle per customer subset, then a
/// set-partition DP over capacity-feasible subsets. `pts[depot]` is the depot.
inline double vrp_distance(const std::vector<Xy>& pts, std::size_t depot, const std::vector<double>& demand,
                           double capacity) {
  std::vector<std::size_t> cust;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i != depot) cust.push_back(i);
  }
  const std::size_t k = cust.size();
  const std::uint32_t full = (1u << k) - 1;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> route(full + 1, inf);
  route[0] = 0.0;
  for (std::uint32_t m = 1; m <= full; ++m) {
    double load = 0.0;
    std::vector<Xy> sub{pts[depot]};
    for (std::size_t b = 0; b < k; ++b) {
      if (m >> b & 1u) {
        load += demand[cust[b]];
        sub.push_back(pts[cust[b]]);
      }
    }
    if (load <= capacity + 1e-9 * capacity) route[m] = tour_length(sub);
  }
  std::vector<double> dp(full + 1, inf);
  dp[0] = 0.0;
  for (std::uint32_t m = 1; m <= full; ++m) {
    for (std::uint32_t s = m; s; s = (s - 1) & m) {
      if (route[s] < inf && dp[m ^ s] < inf) dp[m] = std::min(dp[m], dp[m ^ s] + route[s]);
    }
  }
  return dp[full];
}

}  // namespace truth
