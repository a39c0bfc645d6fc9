#pragma once

// Seeded instance generators (Weibull bin packing, clustered/uniform TSP,
// uniform CVRP), loaders for BPPLib / TSPLIB / CVRPLIB text files, coordinate
// normalization, and the native JSON-lines instance format.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "eohs/core.hpp"
#include "eohs/problems.hpp"

namespace eohs {

struct IntRange {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
};

struct ObpGenSpec {
  std::vector<double> shapes{1.0, 3.0, 5.0};
  std::vector<double> scales{5.0, 10.0, 20.0, 40.0, 80.0};
  IntRange items{200, 2000};
  double capacity = 100.0;
};

enum class TspMode { clustered, uniform };

struct TspGenSpec {
  IntRange size{10, 200};
  TspMode mode = TspMode::clustered;
  std::vector<int> clusters{3, 10};
  std::vector<double> sigmas{0.03, 0.07};
};

struct CvrpGenSpec {
  IntRange size{20, 200};  // nodes including the depot
  IntRange capacity{10, 150};
  IntRange demand{1, 10};
};

struct GeneratorSpec {
  Task task = Task::obp;
  std::size_t count = 128;
  std::uint64_t seed = 0;
  ObpGenSpec obp;
  TspGenSpec tsp;
  CvrpGenSpec cvrp;

  /// Training-set defaults: 128 OBP, 128 TSP, 256 CVRP instances.
  static GeneratorSpec training(Task task, std::uint64_t seed) {
    GeneratorSpec s;
    s.task = task;
    s.seed = seed;
    s.count = task == Task::cvrp ? 256 : 128;
    return s;
  }

  void validate() const {
    auto fail = [](const std::string& what) { throw Error("config", "generator: " + what); };
    auto range_ok = [](const IntRange& r) { return r.lo <= r.hi; };
    if (task == Task::obp) {
      if (obp.shapes.empty() || obp.scales.empty()) fail("empty shape/scale set");
      if (!range_ok(obp.items) || obp.items.lo < 1) fail("bad item-count range");
      if (!(obp.capacity > 0.0)) fail("capacity must be positive");
    } else if (task == Task::tsp) {
      if (!range_ok(tsp.size) || tsp.size.lo < 2) fail("bad size range");
      if (tsp.mode == TspMode::clustered && (tsp.clusters.empty() || tsp.sigmas.empty())) {
        fail("empty cluster configuration");
      }
    } else {
      if (!range_ok(cvrp.size) || cvrp.size.lo < 2) fail("bad size range");
      if (!range_ok(cvrp.capacity) || !range_ok(cvrp.demand) || cvrp.demand.lo < 1) {
        fail("bad capacity/demand range");
      }
      if (cvrp.capacity.hi < cvrp.demand.hi) fail("capacity range cannot cover max demand");
    }
  }
};

namespace detail {

inline std::int64_t uniform_int(std::mt19937_64& rng, const IntRange& r) {
  return std::uniform_int_distribution<std::int64_t>(r.lo, r.hi)(rng);
}

template <class T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

inline std::string instance_id(Task t, std::uint64_t seed, std::size_t i) {
  return std::string(to_string(t)) + "-" + std::to_string(seed) + "-" + std::to_string(i);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Generators. Instance i draws from its own stream derive_seed(seed, i).

/// Weibull item sizes rounded to integers and clamped to [1, C].
inline std::vector<double> weibull_items(std::mt19937_64& rng, double shape, double scale,
                                         std::size_t count, double capacity) {
  std::weibull_distribution<double> dist(shape, scale);
  std::vector<double> items(count);
  for (auto& s : items) s = std::clamp(std::round(dist(rng)), 1.0, capacity);
  return items;
}

inline std::vector<ProblemInstance> gen_obp(const GeneratorSpec& spec) {
  spec.validate();
  std::vector<ProblemInstance> out;
  for (std::size_t i = 0; i < spec.count; ++i) {
    std::mt19937_64 rng(derive_seed(spec.seed, i));
    const double shape = detail::pick(rng, spec.obp.shapes);
    const double scale = detail::pick(rng, spec.obp.scales);
    const auto n = static_cast<std::size_t>(detail::uniform_int(rng, spec.obp.items));
    ProblemInstance inst;
    inst.id = detail::instance_id(Task::obp, spec.seed, i);
    inst.task = Task::obp;
    ObpPayload p;
    p.capacity = spec.obp.capacity;
    p.items = weibull_items(rng, shape, scale, n, p.capacity);
    inst.baseline = obp_lower_bound(p.capacity, p.items);
    inst.payload = std::move(p);
    inst.meta.params = {{"shape", shape}, {"scale", scale}, {"items", n},
                        {"capacity", spec.obp.capacity}, {"seed", spec.seed}, {"index", i}};
    inst.validate();
    out.push_back(std::move(inst));
  }
  return out;
}

struct ClusteredSample {
  std::vector<Point> centers;
  std::vector<Point> raw;  // before clipping
  std::vector<Point> points;
};

/// Cluster centres uniform in [0.2, 0.8]^2; each point picks a centre
/// uniformly and adds N(0, sigma) noise per axis; clipped to [0, 1]^2.
inline ClusteredSample sample_clustered(std::mt19937_64& rng, std::size_t n, int clusters,
                                        double sigma) {
  ClusteredSample s;
  std::uniform_real_distribution<double> center(0.2, 0.8);
  for (int c = 0; c < clusters; ++c) {
    const double x = center(rng);
    const double y = center(rng);
    s.centers.push_back({x, y});
  }
  std::normal_distribution<double> noise(0.0, sigma);
  for (std::size_t i = 0; i < n; ++i) {
    const Point& c = detail::pick(rng, s.centers);
    const double x = c.x + noise(rng);
    const double y = c.y + noise(rng);
    s.raw.push_back({x, y});
    s.points.push_back({std::clamp(x, 0.0, 1.0), std::clamp(y, 0.0, 1.0)});
  }
  return s;
}

inline std::vector<Point> sample_uniform(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Point> pts(n);
  for (auto& p : pts) {
    p.x = unit(rng);
    p.y = unit(rng);
  }
  return pts;
}

/// Clustered mode cycles evenly through the clusters x sigmas configurations.
inline std::vector<ProblemInstance> gen_tsp(const GeneratorSpec& spec) {
  spec.validate();
  std::vector<ProblemInstance> out;
  const auto& ts = spec.tsp;
  for (std::size_t i = 0; i < spec.count; ++i) {
    std::mt19937_64 rng(derive_seed(spec.seed, i));
    const auto n = static_cast<std::size_t>(detail::uniform_int(rng, ts.size));
    ProblemInstance inst;
    inst.id = detail::instance_id(Task::tsp, spec.seed, i);
    inst.task = Task::tsp;
    TspPayload p;
    inst.meta.params = {{"nodes", n}, {"seed", spec.seed}, {"index", i}};
    if (ts.mode == TspMode::clustered) {
      const std::size_t configs = ts.clusters.size() * ts.sigmas.size();
      const std::size_t c = i % configs;
      const int k = ts.clusters[c / ts.sigmas.size()];
      const double sigma = ts.sigmas[c % ts.sigmas.size()];
      p.coords = sample_clustered(rng, n, k, sigma).points;
      inst.meta.params["mode"] = "clustered";
      inst.meta.params["clusters"] = k;
      inst.meta.params["sigma"] = sigma;
    } else {
      p.coords = sample_uniform(rng, n);
      inst.meta.params["mode"] = "uniform";
    }
    p.distances = DistanceMatrix::euclidean(p.coords);
    inst.baseline = tsp_baseline(p.distances);
    inst.payload = std::move(p);
    inst.validate();
    out.push_back(std::move(inst));
  }
  return out;
}

/// Node 0 is the depot. A capacity draw below the largest demand is redrawn.
inline std::vector<ProblemInstance> gen_cvrp(const GeneratorSpec& spec) {
  spec.validate();
  std::vector<ProblemInstance> out;
  const auto& cs = spec.cvrp;
  for (std::size_t i = 0; i < spec.count; ++i) {
    std::mt19937_64 rng(derive_seed(spec.seed, i));
    const auto n = static_cast<std::size_t>(detail::uniform_int(rng, cs.size));
    CvrpPayload p;
    p.depot = 0;
    p.coords = sample_uniform(rng, n);
    p.demands.assign(n, 0.0);
    double max_demand = 0.0;
    for (std::size_t v = 1; v < n; ++v) {
      p.demands[v] = static_cast<double>(detail::uniform_int(rng, cs.demand));
      max_demand = std::max(max_demand, p.demands[v]);
    }
    do {
      p.capacity = static_cast<double>(detail::uniform_int(rng, cs.capacity));
    } while (p.capacity < max_demand);
    p.distances = DistanceMatrix::euclidean(p.coords);
    ProblemInstance inst;
    inst.id = detail::instance_id(Task::cvrp, spec.seed, i);
    inst.task = Task::cvrp;
    inst.baseline = cvrp_baseline(p);
    inst.meta.params = {{"nodes", n}, {"capacity", p.capacity}, {"seed", spec.seed}, {"index", i}};
    inst.payload = std::move(p);
    inst.validate();
    out.push_back(std::move(inst));
  }
  return out;
}

inline std::vector<ProblemInstance> generate(const GeneratorSpec& spec) {
  switch (spec.task) {
    case Task::obp: return gen_obp(spec);
    case Task::tsp: return gen_tsp(spec);
    case Task::cvrp: return gen_cvrp(spec);
  }
  return {};
}

// ---------------------------------------------------------------------------
// Coordinates

/// Translates to the origin and divides both axes by
/// max(x_max - x_min, y_max - y_min), preserving the aspect ratio.
inline std::vector<Point> normalize_coords(std::span<const Point> pts) {
  if (pts.size() < 2) throw Error("degenerate", "need at least two points to normalize");
  double xmin = pts[0].x, xmax = pts[0].x, ymin = pts[0].y, ymax = pts[0].y;
  for (const auto& p : pts) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const double scale = std::max(xmax - xmin, ymax - ymin);
  if (!(scale > 0.0)) throw Error("degenerate", "all points are identical");
  std::vector<Point> out;
  out.reserve(pts.size());
  for (const auto& p : pts) {
    out.push_back({std::min((p.x - xmin) / scale, 1.0), std::min((p.y - ymin) / scale, 1.0)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Benchmark loaders

namespace detail {

class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& path) : path_(path), in_(path) {
    if (!in_) throw Error("io", "cannot open " + path.string());
  }

  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!trim(line).empty()) return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error("parse", path_.string() + ":" + std::to_string(line_no_) + ": " + what);
  }

  std::size_t line_no() const { return line_no_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

inline std::vector<double> numbers(const std::string& line, const LineReader& r) {
  std::istringstream ss(line);
  std::vector<double> out;
  std::string tok;
  while (ss >> tok) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) r.fail("bad number '" + tok + "'");
    } catch (const std::logic_error&) {
      r.fail("bad number '" + tok + "'");
    }
  }
  return out;
}

inline std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

/// Splits "KEY : VALUE" (colon optional); returns false for non-header lines.
inline bool header_kv(const std::string& line, std::string& key, std::string& value) {
  const auto colon = line.find(':');
  if (colon == std::string::npos) {
    key = upper(std::string(trim(line)));
    value.clear();
    return false;
  }
  key = upper(std::string(trim(std::string_view(line).substr(0, colon))));
  value = std::string(trim(std::string_view(line).substr(colon + 1)));
  return true;
}

}  // namespace detail

/// BPPLib text format: item count, capacity, then one size per line (or
/// "size multiplicity" pairs). Capacity is rescaled to 100 and sizes
/// proportionally; sizes stay real-valued.
inline ProblemInstance load_bpplib(const std::filesystem::path& path) {
  detail::LineReader r(path);
  std::string line;
  if (!r.next(line)) r.fail("missing item count");
  auto head = detail::numbers(line, r);
  if (head.size() != 1 || head[0] < 1 || head[0] != std::floor(head[0])) r.fail("bad item count");
  const auto n = static_cast<std::size_t>(head[0]);
  if (!r.next(line)) r.fail("missing capacity");
  head = detail::numbers(line, r);
  if (head.size() != 1 || !(head[0] > 0)) r.fail("bad capacity");
  const double capacity = head[0];
  std::vector<double> sizes;
  for (std::size_t i = 0; i < n; ++i) {
    if (!r.next(line)) r.fail("expected " + std::to_string(n) + " item lines");
    const auto v = detail::numbers(line, r);
    if (v.empty() || v.size() > 2) r.fail("expected 'size' or 'size count'");
    if (!(v[0] > 0 && v[0] <= capacity)) r.fail("item size outside (0, capacity]");
    const std::size_t mult = v.size() == 2 ? static_cast<std::size_t>(v[1]) : 1;
    for (std::size_t k = 0; k < mult; ++k) sizes.push_back(v[0] * 100.0 / capacity);
  }
  ProblemInstance inst;
  inst.id = path.stem().string();
  inst.task = Task::obp;
  ObpPayload p{100.0, std::move(sizes)};
  inst.baseline = obp_lower_bound(p.capacity, p.items);
  inst.payload = std::move(p);
  inst.meta.source = "benchmark";
  inst.meta.params = {{"format", "bpplib"}, {"original_capacity", capacity}, {"file", path.filename().string()}};
  inst.validate();
  return inst;
}

namespace detail {

struct RoutingFile {
  std::map<std::string, std::string> header;
  std::vector<std::pair<long, Point>> coords;
  std::map<long, double> demands;
  std::vector<long> depots;
};

inline RoutingFile read_routing_file(const std::filesystem::path& path) {
  LineReader r(path);
  RoutingFile f;
  std::string line, key, value;
  enum class Section { header, coords, demand, depot, skip } section = Section::header;
  while (r.next(line)) {
    const std::string t(trim(line));
    if (upper(t) == "EOF") break;
    const bool is_kv = header_kv(t, key, value);
    if (key == "NODE_COORD_SECTION") { section = Section::coords; continue; }
    if (key == "DEMAND_SECTION") { section = Section::demand; continue; }
    if (key == "DEPOT_SECTION") { section = Section::depot; continue; }
    if (key.size() > 8 && key.substr(key.size() - 8) == "_SECTION") { section = Section::skip; continue; }
    if (is_kv && !std::isdigit(static_cast<unsigned char>(t[0])) && t[0] != '-') {
      f.header[key] = value;
      section = Section::header;
      continue;
    }
    switch (section) {
      case Section::coords: {
        const auto v = numbers(t, r);
        if (v.size() != 3) r.fail("expected 'id x y'");
        f.coords.emplace_back(static_cast<long>(v[0]), Point{v[1], v[2]});
        break;
      }
      case Section::demand: {
        const auto v = numbers(t, r);
        if (v.size() != 2) r.fail("expected 'id demand'");
        f.demands[static_cast<long>(v[0])] = v[1];
        break;
      }
      case Section::depot: {
        const auto v = numbers(t, r);
        if (v.size() != 1) r.fail("expected a depot id");
        if (v[0] >= 0) f.depots.push_back(static_cast<long>(v[0]));
        break;
      }
      case Section::skip: break;
      case Section::header: r.fail("unexpected line '" + t + "'");
    }
  }
  const auto ew = f.header.find("EDGE_WEIGHT_TYPE");
  if (ew == f.header.end()) {
    throw Error("parse", path.string() + ": missing EDGE_WEIGHT_TYPE");
  }
  if (upper(ew->second) != "EUC_2D") {
    throw Error("unsupported-format",
                path.string() + ": edge weight type " + ew->second + " is not supported");
  }
  if (f.coords.size() < 2) throw Error("parse", path.string() + ": NODE_COORD_SECTION needs >= 2 nodes");
  return f;
}

}  // namespace detail

/// TSPLIB EUC_2D instance; coordinates normalized to [0,1]^2.
inline ProblemInstance load_tsplib(const std::filesystem::path& path) {
  const auto f = detail::read_routing_file(path);
  std::vector<Point> pts;
  for (const auto& [id, p] : f.coords) pts.push_back(p);
  TspPayload p;
  p.coords = normalize_coords(pts);
  p.distances = DistanceMatrix::euclidean(p.coords);
  ProblemInstance inst;
  inst.id = path.stem().string();
  inst.task = Task::tsp;
  inst.baseline = tsp_baseline(p.distances);
  inst.payload = std::move(p);
  inst.meta.source = "benchmark";
  inst.meta.params = {{"format", "tsplib"}, {"file", path.filename().string()}};
  inst.validate();
  return inst;
}

/// CVRPLIB EUC_2D instance; the depot is re-indexed to node 0 and the other
/// nodes keep their file order.
inline ProblemInstance load_cvrplib(const std::filesystem::path& path) {
  const auto f = detail::read_routing_file(path);
  const auto cap = f.header.find("CAPACITY");
  if (cap == f.header.end()) throw Error("parse", path.string() + ": missing CAPACITY");
  double capacity = 0.0;
  try {
    capacity = std::stod(cap->second);
  } catch (const std::logic_error&) {
    throw Error("parse", path.string() + ": bad CAPACITY '" + cap->second + "'");
  }
  const long depot_id = f.depots.empty() ? f.coords.front().first : f.depots.front();
  std::vector<Point> pts;
  std::vector<double> demands;
  auto push = [&](long id, const Point& pt) {
    pts.push_back(pt);
    const auto d = f.demands.find(id);
    if (d == f.demands.end()) throw Error("parse", path.string() + ": no demand for node " + std::to_string(id));
    demands.push_back(d->second);
  };
  bool found = false;
  for (const auto& [id, pt] : f.coords) {
    if (id == depot_id) {
      push(id, pt);
      found = true;
    }
  }
  if (!found) throw Error("parse", path.string() + ": depot " + std::to_string(depot_id) + " has no coordinates");
  for (const auto& [id, pt] : f.coords) {
    if (id != depot_id) push(id, pt);
  }
  CvrpPayload p;
  p.depot = 0;
  p.coords = normalize_coords(pts);
  p.distances = DistanceMatrix::euclidean(p.coords);
  p.demands = std::move(demands);
  p.demands[0] = 0.0;
  p.capacity = capacity;
  ProblemInstance inst;
  inst.id = path.stem().string();
  inst.task = Task::cvrp;
  inst.baseline = cvrp_baseline(p);
  inst.payload = std::move(p);
  inst.meta.source = "benchmark";
  inst.meta.params = {{"format", "cvrplib"}, {"file", path.filename().string()}};
  inst.validate();
  return inst;
}

/// Picks the loader from the file extension (.tsp, .vrp, anything else = BPP).
inline ProblemInstance load_benchmark(const std::filesystem::path& path, Task task) {
  if (task == Task::tsp) return load_tsplib(path);
  if (task == Task::cvrp) return load_cvrplib(path);
  return load_bpplib(path);
}

// ---------------------------------------------------------------------------
// Native format: one JSON object per instance. Distance matrices are rebuilt
// from coordinates on load.

inline json to_json(const ProblemInstance& inst) {
  json j{{"id", inst.id}, {"task", to_string(inst.task)}, {"baseline", inst.baseline},
         {"meta", {{"source", inst.meta.source}, {"params", inst.meta.params}}}};
  auto coords = [](const std::vector<Point>& pts) {
    json a = json::array();
    for (const auto& p : pts) a.push_back({p.x, p.y});
    return a;
  };
  switch (inst.task) {
    case Task::obp:
      j["capacity"] = inst.obp().capacity;
      j["items"] = inst.obp().items;
      break;
    case Task::tsp:
      j["coords"] = coords(inst.tsp().coords);
      break;
    case Task::cvrp:
      j["depot"] = inst.cvrp().depot;
      j["coords"] = coords(inst.cvrp().coords);
      j["demands"] = inst.cvrp().demands;
      j["capacity"] = inst.cvrp().capacity;
      break;
  }
  return j;
}

inline ProblemInstance instance_from_json(const json& j) {
  try {
    ProblemInstance inst;
    inst.id = j.at("id").get<std::string>();
    inst.task = parse_task(j.at("task").get<std::string>());
    inst.baseline = j.at("baseline").get<double>();
    if (j.contains("meta")) {
      inst.meta.source = j["meta"].value("source", "generated");
      inst.meta.params = j["meta"].value("params", json::object());
    }
    auto coords = [](const json& a) {
      std::vector<Point> pts;
      for (const auto& p : a) pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      return pts;
    };
    switch (inst.task) {
      case Task::obp:
        inst.payload = ObpPayload{j.at("capacity").get<double>(), j.at("items").get<std::vector<double>>()};
        break;
      case Task::tsp: {
        TspPayload p;
        p.coords = coords(j.at("coords"));
        p.distances = DistanceMatrix::euclidean(p.coords);
        inst.payload = std::move(p);
        break;
      }
      case Task::cvrp: {
        CvrpPayload p;
        p.depot = j.at("depot").get<std::size_t>();
        p.coords = coords(j.at("coords"));
        p.distances = DistanceMatrix::euclidean(p.coords);
        p.demands = j.at("demands").get<std::vector<double>>();
        p.capacity = j.at("capacity").get<double>();
        inst.payload = std::move(p);
        break;
      }
    }
    inst.validate();
    return inst;
  } catch (const json::exception& e) {
    throw Error("format", std::string("bad instance record: ") + e.what());
  }
}

inline void write_instances(const std::filesystem::path& path, std::span<const ProblemInstance> insts) {
  std::ofstream out(path);
  if (!out) throw Error("io", "cannot write " + path.string());
  for (const auto& inst : insts) out << to_json(inst).dump() << '\n';
}

inline std::vector<ProblemInstance> read_instances(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open " + path.string());
  std::vector<ProblemInstance> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (detail::trim(line).empty()) continue;
    try {
      out.push_back(instance_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error("parse", path.string() + ":" + std::to_string(no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace eohs
