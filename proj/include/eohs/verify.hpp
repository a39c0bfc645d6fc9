#pragma once

// Randomized property battery for the set objective and the greedy selector,
// as run by `eohs verify`.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "eohs/metrics.hpp"
#include "eohs/selection.hpp"

namespace eohs {

struct PropertyCounts {
  std::size_t trials = 0;
  std::size_t monotonicity_violations = 0;
  std::size_t supermodularity_violations = 0;
  std::size_t bound_violations = 0;
  std::size_t greedy_optimal = 0;   // bound trials where greedy hit the optimum
  std::size_t link_violations = 0;  // delta_cpi vs m * CPI difference
  double worst_link_error = 0.0;

  bool ok() const {
    return monotonicity_violations == 0 && supermodularity_violations == 0 && bound_violations == 0 &&
           link_violations == 0;
  }
};

inline PerformanceMatrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t m) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<double>> v(rows, std::vector<double>(m));
  for (auto& r : v) {
    for (double& x : r) x = u(rng);
  }
  return PerformanceMatrix::from_rows(v);
}

/// Nested U ⊆ V plus an outside element h on random matrices; checks
/// F(U) >= F(V) and F(U) - F(U+h) >= F(V) - F(V+h).
inline void check_set_properties(PropertyCounts& c, std::uint64_t seed, std::size_t trials, double tol = 1e-12) {
  std::mt19937_64 rng(seed);
  for (std::size_t t = 0; t < trials; ++t) {
    std::uniform_int_distribution<std::size_t> rows_d(3, 8), m_d(1, 12);
    const std::size_t rows = rows_d(rng), m = m_d(rng);
    const auto mat = random_matrix(rng, rows, m);
    std::vector<std::size_t> perm(rows);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    // perm = [U ... | V\U ... | h | rest]
    const std::size_t v_size = std::uniform_int_distribution<std::size_t>(1, rows - 1)(rng);
    const std::size_t u_size = std::uniform_int_distribution<std::size_t>(1, v_size)(rng);
    std::vector<std::size_t> U(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(u_size));
    std::vector<std::size_t> V(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(v_size));
    const std::size_t h = perm[v_size];
    auto Uh = U, Vh = V;
    Uh.push_back(h);
    Vh.push_back(h);
    const double fu = cpi_value(mat, U), fv = cpi_value(mat, V);
    if (fu < fv - tol) ++c.monotonicity_violations;
    if ((fu - cpi_value(mat, Uh)) < (fv - cpi_value(mat, Vh)) - tol) ++c.supermodularity_violations;
    ++c.trials;
  }
}

/// Greedy guarantee against exhaustive search on random rows x m pools.
inline void check_greedy_bound(PropertyCounts& c, std::uint64_t seed, std::size_t trials, std::size_t rows = 8,
                           std::size_t m = 10, std::size_t k = 4) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> pool(rows);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t t = 0; t < trials; ++t) {
    const auto mat = random_matrix(rng, rows, m);
    const auto rep = verify_theorem3(mat, pool, k);
    if (!rep.bound_ok) ++c.bound_violations;
    if (rep.greedy_optimal) ++c.greedy_optimal;
    ++c.trials;
  }
}

/// delta_cpi(h, best(H)) == m * (F(H) - F(H + h)).
inline void check_delta_link(PropertyCounts& c, std::uint64_t seed, std::size_t trials, double tol = 1e-12) {
  std::mt19937_64 rng(seed);
  for (std::size_t t = 0; t < trials; ++t) {
    std::uniform_int_distribution<std::size_t> rows_d(2, 8), m_d(1, 12);
    const std::size_t rows = rows_d(rng), m = m_d(rng);
    const auto mat = random_matrix(rng, rows, m);
    std::vector<std::size_t> H(rows - 1);
    std::iota(H.begin(), H.end(), std::size_t{0});
    auto Hh = H;
    Hh.push_back(rows - 1);
    const double lhs = delta_cpi(mat.row(rows - 1), best_per_instance(mat, H));
    const double rhs = static_cast<double>(m) * (cpi_value(mat, H) - cpi_value(mat, Hh));
    const double err = std::abs(lhs - rhs);
    c.worst_link_error = std::max(c.worst_link_error, err);
    if (err > tol) ++c.link_violations;
    ++c.trials;
  }
}

}  // namespace eohs
