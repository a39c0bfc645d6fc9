#pragma once

// Complementary population management (greedy delta-CPI selection), the
// exhaustive check of the greedy guarantee, and parent selection for the
// two reproduction operators.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eohs/core.hpp"
#include "eohs/metrics.hpp"

namespace eohs {

struct SelectionOutcome {
  std::vector<std::size_t> chosen;  // in pick order
  std::vector<double> cpi_trace;    // CPI after each pick
  std::string first_pick_reason = "best-average";
};

/// Greedy selection of `n` rows from `candidates`: the best-average row
/// first, then repeatedly the row with the largest delta CPI against the
/// running per-instance bests. Invalid rows are ignored.
inline SelectionOutcome cpm_select(const PerformanceMatrix& matrix,
                                   std::span<const std::size_t> candidates, std::size_t n) {
  if (n < 1) throw Error("selection", "target size must be >= 1");
  std::vector<std::size_t> pool;
  for (std::size_t r : candidates) {
    if (r >= matrix.rows()) throw Error("selection", "candidate row out of range");
    if (matrix.row(r).valid()) pool.push_back(r);
  }
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  if (pool.size() < n) {
    throw Error("selection", "need " + std::to_string(n) + " valid candidates, have " +
                                 std::to_string(pool.size()) + " (short by " +
                                 std::to_string(n - pool.size()) + ")");
  }

  // Mean-score order doubles as the first pick and the fallback when every
  // remaining candidate adds nothing.
  const auto by_mean = rank_by_average(matrix, pool);

  SelectionOutcome out;
  std::vector<bool> taken(matrix.rows(), false);
  const std::size_t first = by_mean.front();
  const auto s0 = matrix.row(first).scores();
  std::vector<double> reference(s0.begin(), s0.end());
  auto record = [&](std::size_t r) {
    taken[r] = true;
    out.chosen.push_back(r);
    const auto s = matrix.row(r).scores();
    for (std::size_t j = 0; j < reference.size(); ++j) reference[j] = std::min(reference[j], s[j]);
    double sum = 0.0;
    for (double x : reference) sum += x;
    out.cpi_trace.push_back(reference.empty() ? 0.0 : sum / static_cast<double>(reference.size()));
  };
  record(first);

  while (out.chosen.size() < n) {
    std::size_t best_row = matrix.rows();
    double best_gain = 0.0;
    for (std::size_t r : pool) {
      if (taken[r]) continue;
      const double gain = delta_cpi(matrix.row(r), reference);
      if (gain > best_gain) {
        best_gain = gain;
        best_row = r;
      }
    }
    if (best_row == matrix.rows()) {
      for (std::size_t r : by_mean) {
        if (!taken[r]) {
          best_row = r;
          break;
        }
      }
    }
    record(best_row);
  }
  return out;
}

struct Theorem3Report {
  double f_h1 = 0.0;   // CPI of the best single heuristic
  double f_ga = 0.0;   // CPI of the greedy selection
  double f_opt = 0.0;  // exhaustive optimum over all k-subsets
  double coefficient = 0.0;
  bool bound_ok = false;
  bool greedy_optimal = false;
};

inline constexpr std::size_t kMaxExhaustivePool = 20;

/// Greedy-guarantee coefficient 1 - k / (e k - e); undefined for k <= 1.
inline double greedy_bound_coefficient(std::size_t k) {
  if (k <= 1) throw Error("selection", "bound coefficient undefined for k <= 1");
  const double kd = static_cast<double>(k);
  return 1.0 - kd / (std::numbers::e * kd - std::numbers::e);
}

/// Minimum CPI over all size-k subsets of `pool` (brute force).
inline double exhaustive_best_cpi(const PerformanceMatrix& matrix, std::span<const std::size_t> pool,
                                  std::size_t k) {
  if (pool.size() > kMaxExhaustivePool) {
    throw Error("selection", "pool of " + std::to_string(pool.size()) +
                                 " rows is too large for exhaustive search");
  }
  if (k < 1 || k > pool.size()) throw Error("selection", "subset size out of range");
  detail::check_subset(matrix, pool);
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  std::vector<std::size_t> subset(k);
  double best = kInvalidScore;
  while (true) {
    for (std::size_t i = 0; i < k; ++i) subset[i] = pool[idx[i]];
    best = std::min(best, cpi_value(matrix, subset));
    // Next combination in lexicographic order.
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == pool.size() - k + (i - 1)) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return best;
}

inline Theorem3Report verify_theorem3(const PerformanceMatrix& matrix,
                                      std::span<const std::size_t> pool, std::size_t k) {
  if (k <= 1) throw Error("selection", "k must be >= 2 (bound coefficient undefined at k = 1)");
  if (pool.size() > kMaxExhaustivePool) {
    throw Error("selection", "pool too large for brute force");
  }
  if (k > pool.size()) throw Error("selection", "k exceeds the pool size");
  detail::check_subset(matrix, pool);

  Theorem3Report rep;
  rep.coefficient = greedy_bound_coefficient(k);
  const auto order = rank_by_average(matrix, pool);
  const std::size_t best_single[] = {order.front()};
  rep.f_h1 = cpi_value(matrix, best_single);
  rep.f_ga = cpm_select(matrix, pool, k).cpi_trace.back();
  rep.f_opt = exhaustive_best_cpi(matrix, pool, k);
  rep.bound_ok = rep.f_h1 - rep.f_ga >= rep.coefficient * (rep.f_h1 - rep.f_opt) - 1e-9;
  rep.greedy_optimal = std::abs(rep.f_ga - rep.f_opt) <= 1e-12;
  return rep;
}

/// The pair of valid rows with the largest Manhattan distance, smaller index
/// first; ties resolve to the lexicographically smallest pair.
inline std::pair<std::size_t, std::size_t> select_cs_parents(
    const PerformanceMatrix& matrix, std::span<const std::size_t> rows) {
  std::vector<std::size_t> valid;
  for (std::size_t r : rows) {
    if (r < matrix.rows() && matrix.row(r).valid()) valid.push_back(r);
  }
  std::sort(valid.begin(), valid.end());
  valid.erase(std::unique(valid.begin(), valid.end()), valid.end());
  if (valid.size() < 2) throw Error("selection", "CS needs at least two valid rows");
  std::pair<std::size_t, std::size_t> best{valid[0], valid[1]};
  double best_d = -1.0;
  for (std::size_t a = 0; a < valid.size(); ++a) {
    for (std::size_t b = a + 1; b < valid.size(); ++b) {
      const double d = manhattan_distance(matrix.row(valid[a]), matrix.row(valid[b]));
      if (d > best_d) {
        best_d = d;
        best = {valid[a], valid[b]};
      }
    }
  }
  return best;
}

/// Selection weight for a 1-based rank among `n` rows.
using RankWeight = std::function<double(std::size_t rank, std::size_t n)>;

inline double default_rank_weight(std::size_t rank, std::size_t n) {
  return 1.0 / static_cast<double>(rank + n);
}

/// (row, probability) for every valid row, best rank first.
inline std::vector<std::pair<std::size_t, double>> ls_parent_probabilities(
    const PerformanceMatrix& matrix, std::span<const std::size_t> rows,
    const RankWeight& weight = default_rank_weight) {
  std::vector<std::size_t> valid;
  for (std::size_t r : rows) {
    if (r < matrix.rows() && matrix.row(r).valid()) valid.push_back(r);
  }
  if (valid.empty()) throw Error("selection", "LS needs at least one valid row");
  const auto ranked = rank_by_average(matrix, valid);
  std::vector<std::pair<std::size_t, double>> out;
  double total = 0.0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const double w = weight(i + 1, ranked.size());
    out.emplace_back(ranked[i], w);
    total += w;
  }
  for (auto& [r, p] : out) p /= total;
  return out;
}

/// Rank-weighted random draw of one LS parent.
template <class Rng>
std::size_t select_ls_parent(const PerformanceMatrix& matrix, std::span<const std::size_t> rows,
                             Rng& rng, const RankWeight& weight = default_rank_weight) {
  const auto probs = ls_parent_probabilities(matrix, rows, weight);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double acc = 0.0;
  for (const auto& [r, p] : probs) {
    acc += p;
    if (u < acc) return r;
  }
  return probs.back().first;
}

}  // namespace eohs
