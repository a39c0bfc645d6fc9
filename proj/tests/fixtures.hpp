#pragma once

#include <random>
#include <string>
#include <vector>

#include "eohs/problems.hpp"

namespace fixtures {

using namespace eohs;

inline ProblemInstance obp(double capacity, std::vector<double> items, std::string id = "obp") {
  ProblemInstance inst;
  inst.id = std::move(id);
  inst.task = Task::obp;
  ObpPayload p;
  p.capacity = capacity;
  p.items = std::move(items);
  inst.baseline = obp_lower_bound(p.capacity, p.items);
  inst.payload = std::move(p);
  return inst;
}

inline ProblemInstance tsp(std::vector<Point> pts, std::string id = "tsp") {
  ProblemInstance inst;
  inst.id = std::move(id);
  inst.task = Task::tsp;
  TspPayload p;
  p.coords = std::move(pts);
  p.distances = DistanceMatrix::euclidean(p.coords);
  inst.baseline = tsp_baseline(p.distances);
  inst.payload = std::move(p);
  return inst;
}

inline ProblemInstance cvrp(std::vector<Point> pts, std::vector<double> demands, double capacity,
                            std::string id = "cvrp") {
  ProblemInstance inst;
  inst.id = std::move(id);
  inst.task = Task::cvrp;
  CvrpPayload p;
  p.depot = 0;
  p.coords = std::move(pts);
  p.demands = std::move(demands);
  p.capacity = capacity;
  p.distances = DistanceMatrix::euclidean(p.coords);
  inst.baseline = cvrp_baseline(p);
  inst.payload = std::move(p);
  return inst;
}

inline std::vector<Point> random_points(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Point> pts(n);
  for (auto& p : pts) p = {u(rng), u(rng)};
  return pts;
}

}  // namespace fixtures
