#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "eohs/problems.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace eohs;

namespace {

std::vector<truth::Xy> xy(const std::vector<Point>& pts) {
  std::vector<truth::Xy> out;
  for (const auto& p : pts) out.push_back({p.x, p.y});
  return out;
}

Decider fixed_obp(std::vector<double> prio) {
  Decider d;
  d.obp = [prio](const ObpQuery&) { return prio; };
  return d;
}

}  // namespace

// ---- OBP

TEST(EvalObp, BestFitToyInstance) {
  const auto inst = fixtures::obp(10, {6, 5, 4, 3});
  const auto r = eval_obp(builtin("best_fit"), inst);
  ASSERT_TRUE(r.valid());
  EXPECT_EQ(r.raw, 2.0);
  EXPECT_EQ(inst.baseline, 2.0);
  EXPECT_EQ(r.gap, 0.0);
  EXPECT_EQ(r.trace, (std::vector<std::int64_t>{0, 1, 0, 1}));
}

TEST(EvalObp, SingleItemAndFullItems) {
  for (const auto& name : {"first_fit", "best_fit"}) {
    EXPECT_EQ(eval_obp(builtin(name), fixtures::obp(100, {37})).raw, 1.0);
    EXPECT_EQ(eval_obp(builtin(name), fixtures::obp(100, {100, 100, 100, 100})).raw, 4.0);
  }
}

TEST(EvalObp, BestFitPriorityFormula) {
  // remaining [7, 4], item 4 -> priorities [-3, 0] -> bin 1
  Decider bf = builtin("best_fit");
  std::vector<double> bins{7, 4};
  const auto prio = bf.obp(ObpQuery{4, bins});
  EXPECT_EQ(prio, (std::vector<double>{-3, 0}));
}

TEST(EvalObp, TiesGoToLowestBin) {
  const auto r = eval_obp(fixed_obp({}), fixtures::obp(10, {6}));
  EXPECT_TRUE(r.valid());
  Decider flat;
  flat.obp = [](const ObpQuery& q) { return std::vector<double>(q.bins.size(), 1.0); };
  const auto t = eval_obp(flat, fixtures::obp(10, {6, 6, 2, 2}));
  EXPECT_EQ(t.trace, (std::vector<std::int64_t>{0, 1, 0, 0}));
}

TEST(EvalObp, DeciderSeesOnlyFeasibleBins) {
  std::vector<std::vector<double>> seen;
  Decider spy;
  spy.obp = [&](const ObpQuery& q) {
    seen.emplace_back(q.bins.begin(), q.bins.end());
    return std::vector<double>(q.bins.size(), 0.0);
  };
  eval_obp(spy, fixtures::obp(10, {8, 8, 2}));
  // item 2 (third) sees both bins with remaining 2; item 8 (second) had none
  ASSERT_EQ(seen.size(), 1u);
  EXPECT_EQ(seen[0], (std::vector<double>{2, 2}));
}

TEST(EvalObp, Violations) {
  const auto inst = fixtures::obp(10, {3, 3, 3});
  EXPECT_FALSE(eval_obp(fixed_obp({1, 2}), inst).valid());
  Decider nan;
  nan.obp = [](const ObpQuery& q) { return std::vector<double>(q.bins.size(), std::nan("")); };
  EXPECT_FALSE(eval_obp(nan, inst).valid());
  Decider boom;
  boom.obp = [](const ObpQuery&) -> std::vector<double> { throw std::runtime_error("boom"); };
  const auto r = eval_obp(boom, inst);
  ASSERT_FALSE(r.valid());
  EXPECT_NE(r.violation->find("boom"), std::string::npos);
}

TEST(EvalObp, FirstFitBestFitMatchPreallocatedSimulation) {
  std::mt19937_64 rng(2024);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng() % 120;
    const double cap = 100;
    std::uniform_int_distribution<int> size(1, 100);
    std::vector<double> items(n);
    for (double& s : items) s = size(rng);
    const auto inst = fixtures::obp(cap, items);
    EXPECT_EQ(eval_obp(builtin("first_fit"), inst).raw, truth::packed_bins(cap, items, false));
    EXPECT_EQ(eval_obp(builtin("best_fit"), inst).raw, truth::packed_bins(cap, items, true));
  }
}

TEST(LowerBound, Examples) {
  EXPECT_EQ(obp_lower_bound(100, std::vector<double>{60, 60, 60}), 3.0);
  EXPECT_EQ(obp_lower_bound(100, std::vector<double>{50, 50}), 1.0);
  // L2 beats L1: three items of 51 plus small filler
  EXPECT_EQ(obp_lower_bound(100, std::vector<double>{51, 51, 51, 10}), 3.0);
}

TEST(LowerBound, NeverExceedsOptimum) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 400; ++t) {
    const std::size_t n = 1 + rng() % 10;
    std::uniform_int_distribution<int> size(1, 100);
    std::vector<double> items(n);
    for (double& s : items) s = size(rng);
    const auto opt = truth::optimal_bins(100, items);
    EXPECT_LE(obp_lower_bound(100, items), static_cast<double>(opt));
    EXPECT_EQ(eohs::oracle::obp_optimal_bins(100, items), opt);
    EXPECT_GE(eval_obp(builtin("first_fit"), fixtures::obp(100, items)).raw, static_cast<double>(opt));
  }
}

// ---- TSP

TEST(EvalTsp, TriangleAndPair) {
  const auto tri = fixtures::tsp({{0, 0}, {0, 1}, {1, 0}});
  const auto r = eval_tsp(builtin("tsp_nearest"), tri);
  EXPECT_NEAR(r.raw, 2 + std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(r.gap, 0.0, 1e-12);
  const auto pair = fixtures::tsp({{0, 0}, {0.3, 0.4}});
  EXPECT_NEAR(eval_tsp(builtin("tsp_nearest"), pair).raw, 1.0, 1e-12);
}

TEST(EvalTsp, DestinationIsStart) {
  Decider d;
  d.tsp = [](const TspQuery& q) {
    EXPECT_EQ(q.destination, 0u);
    return static_cast<std::int64_t>(q.unvisited.back());
  };
  const auto r = eval_tsp(d, fixtures::tsp({{0, 0}, {1, 0}, {1, 1}, {0, 1}}));
  EXPECT_EQ(r.trace, (std::vector<std::int64_t>{0, 3, 2, 1}));
}

TEST(EvalTsp, NearestTieBreaksLow) {
  // nodes 1 and 2 are equidistant from node 0
  const auto inst = fixtures::tsp({{0, 0}, {1, 0}, {-1, 0}, {0, 5}});
  EXPECT_EQ(eval_tsp(builtin("tsp_nearest"), inst).trace[1], 1);
}

TEST(EvalTsp, VisitedNodeIsViolation) {
  Decider d;
  d.tsp = [](const TspQuery&) { return std::int64_t{0}; };
  EXPECT_FALSE(eval_tsp(d, fixtures::tsp({{0, 0}, {1, 0}, {1, 1}})).valid());
  d.tsp = [](const TspQuery&) { return std::int64_t{99}; };
  EXPECT_FALSE(eval_tsp(d, fixtures::tsp({{0, 0}, {1, 0}, {1, 1}})).valid());
}

TEST(EvalTsp, RandomDecidersNeverBeatOptimum) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 60; ++t) {
    const auto pts = fixtures::random_points(rng, 7);
    const auto inst = fixtures::tsp(pts);
    const double opt = truth::tour_length(xy(pts));
    Decider d;
    std::mt19937_64 pick(t);
    d.tsp = [&](const TspQuery& q) {
      return static_cast<std::int64_t>(q.unvisited[pick() % q.unvisited.size()]);
    };
    const auto r = eval_tsp(d, inst);
    ASSERT_TRUE(r.valid());
    EXPECT_GE(r.raw, opt - 1e-9);
    const auto chk = verify_trace(inst, r.trace);
    EXPECT_TRUE(chk.ok);
    EXPECT_NEAR(chk.raw, r.raw, 1e-9);
    EXPECT_NEAR(eohs::oracle::tsp_optimal_length(inst.tsp().distances), opt, 1e-9);
  }
}

TEST(TspBaseline, SquareAndSmallInstances) {
  EXPECT_NEAR(tsp_baseline(fixtures::tsp({{0, 0}, {0, 1}, {1, 1}, {1, 0}})), 4.0, 1e-12);
  EXPECT_NEAR(tsp_baseline(fixtures::tsp({{0, 0}, {1, 1}, {0, 1}, {1, 0}})), 4.0, 1e-12);
  std::mt19937_64 rng(6);
  for (int t = 0; t < 50; ++t) {
    const auto pts = fixtures::random_points(rng, 3 + t % 7);
    EXPECT_GE(tsp_baseline(fixtures::tsp(pts)), truth::tour_length(xy(pts)) - 1e-9);
  }
  const auto tri = fixtures::tsp({{0, 0}, {0, 1}, {1, 0}});
  EXPECT_NEAR(tri.baseline, 2 + std::sqrt(2.0), 1e-12);
}

// ---- CVRP

TEST(EvalCvrp, ForcedRoutes) {
  const auto one = fixtures::cvrp({{0, 0}, {3, 4}}, {0, 5}, 10);
  EXPECT_NEAR(eval_cvrp(builtin("cvrp_nearest_feasible"), one).raw, 10.0, 1e-12);
  const auto two = fixtures::cvrp({{0, 0}, {1, 0}, {0, 2}}, {0, 10, 10}, 10);
  const auto r = eval_cvrp(builtin("cvrp_nearest_feasible"), two);
  EXPECT_NEAR(r.raw, 2 * 1 + 2 * 2, 1e-12);
  EXPECT_EQ(r.trace, (std::vector<std::int64_t>{0, 1, 0, 2, 0}));
}

TEST(EvalCvrp, InfeasiblePickRoutesViaDepot) {
  const auto inst = fixtures::cvrp({{0, 0}, {1, 0}, {2, 0}}, {0, 6, 6}, 10);
  Decider greedy_next;
  greedy_next.cvrp = [](const CvrpQuery& q) { return static_cast<std::int64_t>(q.unvisited.front()); };
  const auto r = eval_cvrp(greedy_next, inst);
  ASSERT_TRUE(r.valid());
  EXPECT_EQ(r.depot_detours, 1u);
  EXPECT_EQ(r.trace, (std::vector<std::int64_t>{0, 1, 0, 2, 0}));
  EXPECT_NEAR(r.raw, 2 + 4, 1e-12);
}

TEST(EvalCvrp, MinusOneReturnsToDepotAndDepotLoopIsViolation) {
  const auto inst = fixtures::cvrp({{0, 0}, {1, 0}, {2, 0}}, {0, 3, 3}, 10);
  int calls = 0;
  Decider d;
  d.cvrp = [&](const CvrpQuery& q) -> std::int64_t {
    if (calls++ == 1) return -1;
    return static_cast<std::int64_t>(q.unvisited.front());
  };
  const auto r = eval_cvrp(d, inst);
  ASSERT_TRUE(r.valid());
  EXPECT_EQ(r.trace, (std::vector<std::int64_t>{0, 1, 0, 2, 0}));
  Decider stuck;
  stuck.cvrp = [](const CvrpQuery& q) { return static_cast<std::int64_t>(q.depot); };
  const auto s = eval_cvrp(stuck, inst);
  ASSERT_FALSE(s.valid());
  EXPECT_EQ(*s.violation, "depot-loop");
}

TEST(EvalCvrp, RestCapacityReported) {
  const auto inst = fixtures::cvrp({{0, 0}, {1, 0}, {2, 0}}, {0, 3, 4}, 10);
  std::vector<double> rests;
  Decider d;
  d.cvrp = [&](const CvrpQuery& q) {
    rests.push_back(q.rest_capacity);
    return static_cast<std::int64_t>(q.unvisited.front());
  };
  eval_cvrp(d, inst);
  EXPECT_EQ(rests, (std::vector<double>{10, 7}));
}

TEST(EvalCvrp, RandomDecidersNeverBeatOptimum) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = 2 + rng() % 5;
    const auto pts = fixtures::random_points(rng, n + 1);
    std::vector<double> dem(n + 1, 0.0);
    for (std::size_t i = 1; i <= n; ++i) dem[i] = 1 + rng() % 10;
    const double cap = 10 + rng() % 15;
    const auto inst = fixtures::cvrp(pts, dem, cap);
    const double opt = truth::vrp_distance(xy(pts), 0, dem, cap);
    EXPECT_NEAR(eohs::oracle::cvrp_optimal_distance(inst.cvrp()), opt, 1e-9);
    std::mt19937_64 pick(t);
    Decider d;
    d.cvrp = [&](const CvrpQuery& q) {
      return static_cast<std::int64_t>(q.unvisited[pick() % q.unvisited.size()]);
    };
    for (const Decider& dec : {d, builtin("cvrp_nearest_feasible")}) {
      const auto r = eval_cvrp(dec, inst);
      ASSERT_TRUE(r.valid());
      EXPECT_GE(r.raw, opt - 1e-9);
      const auto chk = verify_trace(inst, r.trace);
      EXPECT_TRUE(chk.ok) << chk.error;
      EXPECT_NEAR(chk.raw, r.raw, 1e-9);
    }
    EXPECT_GE(inst.baseline, opt - 1e-9);
  }
}

// ---- Verifiers

TEST(Verifier, RejectsBadTraces) {
  const auto o = fixtures::obp(10, {6, 6});
  EXPECT_FALSE(verify_trace(o, std::vector<std::int64_t>{0, 0}).ok);
  EXPECT_FALSE(verify_trace(o, std::vector<std::int64_t>{0, 2}).ok);
  EXPECT_TRUE(verify_trace(o, std::vector<std::int64_t>{0, 1}).ok);
  const auto t = fixtures::tsp({{0, 0}, {1, 0}, {1, 1}});
  EXPECT_FALSE(verify_trace(t, std::vector<std::int64_t>{0, 1, 1}).ok);
  EXPECT_FALSE(verify_trace(t, std::vector<std::int64_t>{1, 0, 2}).ok);
  EXPECT_FALSE(verify_trace(t, std::vector<std::int64_t>{0, 1}).ok);
  const auto c = fixtures::cvrp({{0, 0}, {1, 0}, {2, 0}}, {0, 6, 6}, 10);
  EXPECT_FALSE(verify_trace(c, std::vector<std::int64_t>{0, 1, 2, 0}).ok);
  EXPECT_FALSE(verify_trace(c, std::vector<std::int64_t>{0, 1, 0}).ok);
  EXPECT_TRUE(verify_trace(c, std::vector<std::int64_t>{0, 2, 0, 1, 0}).ok);
}

TEST(Builtins, UnknownNameAndDeterminism) {
  EXPECT_THROW(builtin("worst_fit"), Error);
  std::mt19937_64 rng(1);
  const auto inst = fixtures::tsp(fixtures::random_points(rng, 30));
  const auto a = eval_tsp(builtin("tsp_nearest"), inst), b = eval_tsp(builtin("tsp_nearest"), inst);
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.raw, b.raw);
}
