#pragma once

// Rollout evaluators for online bin packing, TSP and CVRP construction
// heuristics, independent trace verifiers, the bin-packing lower bound,
// built-in deciders, 2-opt reference baselines and brute-force oracles for
// tiny instances.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eohs/core.hpp"

namespace eohs {

// ---------------------------------------------------------------------------
// Decision queries and deciders

struct ObpQuery {
  double item = 0.0;
  std::span<const double> bins;  // remaining capacity of each feasible open bin
};

struct TspQuery {
  std::size_t current = 0;
  std::size_t destination = 0;
  std::span<const std::size_t> unvisited;
  const DistanceMatrix* distances = nullptr;
};

struct CvrpQuery {
  std::size_t current = 0;
  std::size_t depot = 0;
  std::span<const std::size_t> unvisited;
  double rest_capacity = 0.0;
  std::span<const double> demands;
  const DistanceMatrix* distances = nullptr;
};

/// A heuristic decision function; only the member for the instance's task is used.
struct Decider {
  std::function<std::vector<double>(const ObpQuery&)> obp;
  std::function<std::int64_t(const TspQuery&)> tsp;
  std::function<std::int64_t(const CvrpQuery&)> cvrp;
};

struct EpisodeResult {
  double raw = 0.0;  // bins used | tour length | total route distance
  double gap = 0.0;
  std::size_t decisions = 0;
  std::size_t depot_detours = 0;  // cvrp only
  std::optional<std::string> violation;
  // Bin index per item | visit order | route sequence including depot visits.
  std::vector<std::int64_t> trace;

  bool valid() const noexcept { return !violation.has_value(); }
};

inline double relative_gap(double raw, double baseline) { return (raw - baseline) / baseline; }

namespace detail {

// Feasibility slack for real-valued sizes (rescaled benchmark items).
inline double fit_tolerance(double capacity) { return 1e-9 * capacity; }

inline EpisodeResult violation(EpisodeResult r, std::string what) {
  r.violation = std::move(what);
  return r;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Online bin packing

/// Items arrive in order; the decider ranks the feasible open bins and the
/// item goes to the highest priority (ties: lowest bin index). With no
/// feasible bin a new one is opened without a query.
inline EpisodeResult eval_obp(const Decider& decider, const ProblemInstance& inst) {
  const auto& p = inst.obp();
  const double tol = detail::fit_tolerance(p.capacity);
  EpisodeResult r;
  r.trace.reserve(p.items.size());
  std::vector<double> remaining;
  std::vector<std::size_t> feasible_idx;
  std::vector<double> feasible_cap;
  for (double item : p.items) {
    feasible_idx.clear();
    feasible_cap.clear();
    for (std::size_t b = 0; b < remaining.size(); ++b) {
      if (remaining[b] >= item - tol) {
        feasible_idx.push_back(b);
        feasible_cap.push_back(remaining[b]);
      }
    }
    std::size_t target;
    if (feasible_idx.empty()) {
      remaining.push_back(p.capacity);
      target = remaining.size() - 1;
    } else {
      std::vector<double> prio;
      try {
        prio = decider.obp(ObpQuery{item, feasible_cap});
      } catch (const std::exception& e) {
        return detail::violation(std::move(r), std::string("crash: ") + e.what());
      }
      ++r.decisions;
      if (prio.size() != feasible_cap.size()) {
        return detail::violation(std::move(r), "priority vector has length " +
                                                   std::to_string(prio.size()) + ", expected " +
                                                   std::to_string(feasible_cap.size()));
      }
      std::size_t best = 0;
      for (std::size_t k = 0; k < prio.size(); ++k) {
        if (!std::isfinite(prio[k])) return detail::violation(std::move(r), "non-finite priority");
        if (prio[k] > prio[best]) best = k;
      }
      target = feasible_idx[best];
    }
    remaining[target] -= item;
    r.trace.push_back(static_cast<std::int64_t>(target));
  }
  r.raw = static_cast<double>(remaining.size());
  r.gap = relative_gap(r.raw, inst.baseline);
  return r;
}

/// max(L1, L2): the continuous bound and the Martello-Toth refinement,
/// maximized over thresholds drawn from the distinct sizes <= C/2 and 0.
inline double obp_lower_bound(double capacity, std::span<const double> items) {
  const double C = capacity;
  const double eps = 1e-9;
  const double total = std::accumulate(items.begin(), items.end(), 0.0);
  const double l1 = std::ceil(total / C - eps);

  std::vector<double> alphas{0.0};
  for (double s : items) {
    if (s <= C / 2.0) alphas.push_back(s);
  }
  std::sort(alphas.begin(), alphas.end());
  alphas.erase(std::unique(alphas.begin(), alphas.end()), alphas.end());

  double l2 = 0.0;
  for (double a : alphas) {
    double n1 = 0, n2 = 0, sum2 = 0, sum3 = 0;
    for (double s : items) {
      if (s > C - a) {
        ++n1;
      } else if (s > C / 2.0) {
        ++n2;
        sum2 += s;
      } else if (s >= a) {
        sum3 += s;
      }
    }
    const double spill = std::max(0.0, std::ceil((sum3 - (n2 * C - sum2)) / C - eps));
    l2 = std::max(l2, n1 + n2 + spill);
  }
  return std::max(l1, l2);
}

inline double obp_lower_bound(const ProblemInstance& inst) {
  return obp_lower_bound(inst.obp().capacity, inst.obp().items);
}

// ---------------------------------------------------------------------------
// TSP

/// Starts at node 0, which is also the destination the tour returns to.
inline EpisodeResult eval_tsp(const Decider& decider, const ProblemInstance& inst) {
  const auto& p = inst.tsp();
  const std::size_t n = p.coords.size();
  EpisodeResult r;
  r.trace.reserve(n);
  std::vector<std::size_t> unvisited(n - 1);
  std::iota(unvisited.begin(), unvisited.end(), std::size_t{1});
  std::size_t current = 0;
  r.trace.push_back(0);
  double length = 0.0;
  while (!unvisited.empty()) {
    std::int64_t choice;
    try {
      choice = decider.tsp(TspQuery{current, 0, unvisited, &p.distances});
    } catch (const std::exception& e) {
      return detail::violation(std::move(r), std::string("crash: ") + e.what());
    }
    ++r.decisions;
    const auto it = std::find(unvisited.begin(), unvisited.end(), static_cast<std::size_t>(choice));
    if (choice < 0 || it == unvisited.end()) {
      return detail::violation(std::move(r), "node " + std::to_string(choice) +
                                                 " is visited or out of range");
    }
    unvisited.erase(it);
    length += p.distances(current, static_cast<std::size_t>(choice));
    current = static_cast<std::size_t>(choice);
    r.trace.push_back(choice);
  }
  length += p.distances(current, 0);
  r.raw = length;
  r.gap = relative_gap(r.raw, inst.baseline);
  return r;
}

// ---------------------------------------------------------------------------
// CVRP

/// Starts at the depot with a full vehicle. Returning the depot (or -1, the
/// template's "nothing fits" answer) ends the current route; naming a
/// customer that does not fit routes via the depot first.
inline EpisodeResult eval_cvrp(const Decider& decider, const ProblemInstance& inst) {
  const auto& p = inst.cvrp();
  const std::size_t n = p.coords.size();
  const double tol = detail::fit_tolerance(p.capacity);
  EpisodeResult r;
  std::vector<std::size_t> unvisited;
  for (std::size_t i = 0; i < n; ++i) {
    if (i != p.depot) unvisited.push_back(i);
  }
  std::size_t current = p.depot;
  double rest = p.capacity;
  double distance = 0.0;
  r.trace.push_back(static_cast<std::int64_t>(p.depot));
  auto move_to = [&](std::size_t node) {
    distance += p.distances(current, node);
    current = node;
    r.trace.push_back(static_cast<std::int64_t>(node));
  };
  while (!unvisited.empty()) {
    std::int64_t choice;
    try {
      choice = decider.cvrp(CvrpQuery{current, p.depot, unvisited, rest, p.demands, &p.distances});
    } catch (const std::exception& e) {
      return detail::violation(std::move(r), std::string("crash: ") + e.what());
    }
    ++r.decisions;
    if (choice == -1 || choice == static_cast<std::int64_t>(p.depot)) {
      if (current == p.depot) return detail::violation(std::move(r), "depot-loop");
      move_to(p.depot);
      rest = p.capacity;
      continue;
    }
    const auto it = std::find(unvisited.begin(), unvisited.end(), static_cast<std::size_t>(choice));
    if (choice < 0 || it == unvisited.end()) {
      return detail::violation(std::move(r), "node " + std::to_string(choice) +
                                                 " is visited or out of range");
    }
    const auto node = static_cast<std::size_t>(choice);
    if (p.demands[node] > rest + tol) {
      move_to(p.depot);
      rest = p.capacity;
      ++r.depot_detours;
    }
    unvisited.erase(it);
    move_to(node);
    rest -= p.demands[node];
  }
  if (current != p.depot) move_to(p.depot);
  r.raw = distance;
  r.gap = relative_gap(r.raw, inst.baseline);
  return r;
}

inline EpisodeResult evaluate(const Decider& decider, const ProblemInstance& inst) {
  switch (inst.task) {
    case Task::obp: return eval_obp(decider, inst);
    case Task::tsp: return eval_tsp(decider, inst);
    case Task::cvrp: return eval_cvrp(decider, inst);
  }
  throw Error("problems", "unknown task");
}

// ---------------------------------------------------------------------------
// Trace verification, independent of the rollout code above.

struct TraceCheck {
  bool ok = false;
  double raw = 0.0;
  std::string error;
};

inline TraceCheck verify_obp_trace(const ProblemInstance& inst, std::span<const std::int64_t> trace) {
  const auto& p = inst.obp();
  if (trace.size() != p.items.size()) return {false, 0, "assignment length mismatch"};
  std::vector<double> load;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto b = trace[i];
    if (b < 0 || b > static_cast<std::int64_t>(load.size())) {
      return {false, 0, "bin index " + std::to_string(b) + " skips unopened bins"};
    }
    if (b == static_cast<std::int64_t>(load.size())) load.push_back(0.0);
    load[static_cast<std::size_t>(b)] += p.items[i];
  }
  for (double l : load) {
    if (l > p.capacity + detail::fit_tolerance(p.capacity)) return {false, 0, "bin over capacity"};
  }
  return {true, static_cast<double>(load.size()), {}};
}

inline TraceCheck verify_tsp_trace(const ProblemInstance& inst, std::span<const std::int64_t> trace) {
  const auto& p = inst.tsp();
  const std::size_t n = p.coords.size();
  if (trace.size() != n) return {false, 0, "tour must list every node once"};
  if (trace.front() != 0) return {false, 0, "tour must start at node 0"};
  std::vector<bool> seen(n, false);
  for (auto v : trace) {
    if (v < 0 || v >= static_cast<std::int64_t>(n)) return {false, 0, "node out of range"};
    if (seen[static_cast<std::size_t>(v)]) return {false, 0, "node visited twice"};
    seen[static_cast<std::size_t>(v)] = true;
  }
  double len = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    len += p.distances(static_cast<std::size_t>(trace[i]), static_cast<std::size_t>(trace[(i + 1) % n]));
  }
  return {true, len, {}};
}

inline TraceCheck verify_cvrp_trace(const ProblemInstance& inst, std::span<const std::int64_t> trace) {
  const auto& p = inst.cvrp();
  const std::size_t n = p.coords.size();
  const auto depot = static_cast<std::int64_t>(p.depot);
  if (trace.size() < 2 || trace.front() != depot || trace.back() != depot) {
    return {false, 0, "routes must start and end at the depot"};
  }
  std::vector<bool> seen(n, false);
  double load = 0.0;
  double len = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto v = trace[i];
    if (v < 0 || v >= static_cast<std::int64_t>(n)) return {false, 0, "node out of range"};
    if (i > 0) len += p.distances(static_cast<std::size_t>(trace[i - 1]), static_cast<std::size_t>(v));
    if (v == depot) {
      load = 0.0;
      continue;
    }
    if (seen[static_cast<std::size_t>(v)]) return {false, 0, "customer served twice"};
    seen[static_cast<std::size_t>(v)] = true;
    load += p.demands[static_cast<std::size_t>(v)];
    if (load > p.capacity + detail::fit_tolerance(p.capacity)) return {false, 0, "route over capacity"};
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (i != p.depot && !seen[i]) return {false, 0, "customer " + std::to_string(i) + " not served"};
  }
  return {true, len, {}};
}

inline TraceCheck verify_trace(const ProblemInstance& inst, std::span<const std::int64_t> trace) {
  switch (inst.task) {
    case Task::obp: return verify_obp_trace(inst, trace);
    case Task::tsp: return verify_tsp_trace(inst, trace);
    case Task::cvrp: return verify_cvrp_trace(inst, trace);
  }
  return {false, 0, "unknown task"};
}

// ---------------------------------------------------------------------------
// Built-in deciders

inline const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names{"first_fit", "best_fit", "tsp_nearest",
                                              "cvrp_nearest_feasible"};
  return names;
}

inline Task builtin_task(const std::string& name) {
  if (name == "first_fit" || name == "best_fit") return Task::obp;
  if (name == "tsp_nearest") return Task::tsp;
  if (name == "cvrp_nearest_feasible") return Task::cvrp;
  throw Error("builtin", "unknown builtin '" + name + "'");
}

inline Decider builtin(const std::string& name) {
  Decider d;
  if (name == "first_fit") {
    d.obp = [](const ObpQuery& q) {
      std::vector<double> prio(q.bins.size());
      for (std::size_t i = 0; i < prio.size(); ++i) prio[i] = -static_cast<double>(i);
      return prio;
    };
  } else if (name == "best_fit") {
    d.obp = [](const ObpQuery& q) {
      std::vector<double> prio(q.bins.size());
      for (std::size_t i = 0; i < prio.size(); ++i) prio[i] = -(q.bins[i] - q.item);
      return prio;
    };
  } else if (name == "tsp_nearest") {
    d.tsp = [](const TspQuery& q) {
      std::size_t best = q.unvisited.front();
      for (std::size_t u : q.unvisited) {
        if ((*q.distances)(q.current, u) < (*q.distances)(q.current, best)) best = u;
      }
      return static_cast<std::int64_t>(best);
    };
  } else if (name == "cvrp_nearest_feasible") {
    d.cvrp = [](const CvrpQuery& q) {
      std::int64_t best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t u : q.unvisited) {
        if (q.demands[u] > q.rest_capacity) continue;
        const double du = (*q.distances)(q.current, u);
        if (du < best_d) {
          best_d = du;
          best = static_cast<std::int64_t>(u);
        }
      }
      return best < 0 ? static_cast<std::int64_t>(q.depot) : best;
    };
  } else {
    throw Error("builtin", "unknown builtin '" + name + "'");
  }
  return d;
}

/// Python source of each built-in rule, following the task templates.
inline std::string builtin_source(const std::string& name) {
  if (name == "first_fit") {
    return "import numpy as np\n"
           "def priority(item: float, bins: np.ndarray) -> np.ndarray:\n"
           "    return -np.arange(len(bins))\n";
  }
  if (name == "best_fit") {
    return "import numpy as np\n"
           "def priority(item: float, bins: np.ndarray) -> np.ndarray:\n"
           "    return -(bins - item)\n";
  }
  if (name == "tsp_nearest") {
    return "import numpy as np\n"
           "def select_next_node(current_node: int, destination_node: int, unvisited_nodes: "
           "np.ndarray, distance_matrix: np.ndarray) -> int:\n"
           "    return unvisited_nodes[np.argmin(distance_matrix[current_node][unvisited_nodes])]\n";
  }
  if (name == "cvrp_nearest_feasible") {
    return "import numpy as np\n"
           "def select_next_node(current_node: int, depot: int, unvisited_nodes: np.ndarray, "
           "rest_capacity: np.ndarray, demands: np.ndarray, distance_matrix: np.ndarray) -> int:\n"
           "    d = distance_matrix[current_node][unvisited_nodes]\n"
           "    feasible = demands[unvisited_nodes] <= rest_capacity\n"
           "    if not np.any(feasible):\n"
           "        return depot\n"
           "    return unvisited_nodes[np.argmin(np.where(feasible, d, np.inf))]\n";
  }
  throw Error("builtin", "unknown builtin '" + name + "'");
}

inline Heuristic builtin_heuristic(const std::string& name) {
  const Task task = builtin_task(name);
  return make_heuristic("builtin:" + name, name, builtin_source(name), Origin::builtin, {}, task,
                        name);
}

// ---------------------------------------------------------------------------
// Reference baselines (deterministic nearest neighbour + 2-opt)

namespace detail {

inline double cycle_length(const DistanceMatrix& d, std::span<const std::size_t> tour) {
  double len = 0.0;
  for (std::size_t i = 0; i < tour.size(); ++i) len += d(tour[i], tour[(i + 1) % tour.size()]);
  return len;
}

/// First-improvement 2-opt on a closed tour; tour[0] stays in place.
inline void two_opt(const DistanceMatrix& d, std::vector<std::size_t>& tour) {
  const std::size_t n = tour.size();
  if (n < 4) return;
  bool improved = true;
  while (improved) {
    improved = false;
    for (std::size_t i = 0; i + 2 < n; ++i) {
      for (std::size_t j = i + 2; j < n; ++j) {
        if (i == 0 && j == n - 1) continue;
        const std::size_t a = tour[i], b = tour[i + 1], c = tour[j], e = tour[(j + 1) % n];
        const double delta = d(a, c) + d(b, e) - d(a, b) - d(c, e);
        if (delta < -1e-12) {
          std::reverse(tour.begin() + static_cast<std::ptrdiff_t>(i + 1),
                       tour.begin() + static_cast<std::ptrdiff_t>(j + 1));
          improved = true;
        }
      }
    }
  }
}

}  // namespace detail

inline double tsp_baseline(const DistanceMatrix& d) {
  const std::size_t n = d.size();
  std::vector<std::size_t> tour{0};
  std::vector<bool> used(n, false);
  used[0] = true;
  for (std::size_t step = 1; step < n; ++step) {
    std::size_t best = n;
    for (std::size_t u = 0; u < n; ++u) {
      if (!used[u] && (best == n || d(tour.back(), u) < d(tour.back(), best))) best = u;
    }
    used[best] = true;
    tour.push_back(best);
  }
  detail::two_opt(d, tour);
  return detail::cycle_length(d, tour);
}

inline double tsp_baseline(const ProblemInstance& inst) { return tsp_baseline(inst.tsp().distances); }

/// Nearest-feasible-customer routes, each improved by 2-opt.
inline double cvrp_baseline(const CvrpPayload& p) {
  const std::size_t n = p.coords.size();
  std::vector<bool> served(n, false);
  served[p.depot] = true;
  std::size_t left = n - 1;
  double total = 0.0;
  while (left > 0) {
    std::vector<std::size_t> route{p.depot};
    double rest = p.capacity;
    while (true) {
      std::size_t best = n;
      for (std::size_t u = 0; u < n; ++u) {
        if (served[u] || p.demands[u] > rest) continue;
        if (best == n || p.distances(route.back(), u) < p.distances(route.back(), best)) best = u;
      }
      if (best == n) break;
      served[best] = true;
      rest -= p.demands[best];
      route.push_back(best);
      --left;
    }
    detail::two_opt(p.distances, route);
    total += detail::cycle_length(p.distances, route);
  }
  return total;
}

inline double cvrp_baseline(const ProblemInstance& inst) { return cvrp_baseline(inst.cvrp()); }

// ---------------------------------------------------------------------------
// Brute-force oracles for tiny instances

namespace oracle {

/// Exact minimum bin count by exhaustive assignment (meant for <= ~12 items).
inline std::size_t obp_optimal_bins(double capacity, std::vector<double> items) {
  std::sort(items.rbegin(), items.rend());
  std::size_t best = items.size();
  std::vector<double> load;
  const double tol = detail::fit_tolerance(capacity);
  std::function<void(std::size_t)> dfs = [&](std::size_t i) {
    if (load.size() >= best) return;
    if (i == items.size()) {
      best = load.size();
      return;
    }
    for (std::size_t b = 0; b < load.size(); ++b) {
      if (load[b] + items[i] <= capacity + tol) {
        load[b] += items[i];
        dfs(i + 1);
        load[b] -= items[i];
      }
    }
    load.push_back(items[i]);
    dfs(i + 1);
    load.pop_back();
  };
  dfs(0);
  return best;
}

/// Exact optimal tour length by permutation enumeration (n <= ~10).
inline double tsp_optimal_length(const DistanceMatrix& d) {
  const std::size_t n = d.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    best = std::min(best, detail::cycle_length(d, perm));
  } while (std::next_permutation(perm.begin() + 1, perm.end()));
  return best;
}

/// Exact optimal CVRP distance: every customer order, every split into
/// capacity-feasible consecutive routes (<= ~7 customers).
inline double cvrp_optimal_distance(const CvrpPayload& p) {
  std::vector<std::size_t> customers;
  for (std::size_t i = 0; i < p.coords.size(); ++i) {
    if (i != p.depot) customers.push_back(i);
  }
  const std::size_t k = customers.size();
  double best = std::numeric_limits<double>::infinity();
  do {
    // Bit b set: a route ends after customers[b].
    for (std::uint32_t mask = 0; mask < (1u << (k - 1)); ++mask) {
      double len = 0.0;
      double load = 0.0;
      std::size_t at = p.depot;
      bool ok = true;
      for (std::size_t b = 0; b < k && ok; ++b) {
        const std::size_t c = customers[b];
        len += p.distances(at, c);
        load += p.demands[c];
        if (load > p.capacity + detail::fit_tolerance(p.capacity)) ok = false;
        at = c;
        if (b + 1 == k || (mask >> b) & 1u) {
          len += p.distances(at, p.depot);
          at = p.depot;
          load = 0.0;
        }
      }
      if (ok) best = std::min(best, len);
    }
  } while (std::next_permutation(customers.begin(), customers.end()));
  return best;
}

}  // namespace oracle

}  // namespace eohs
