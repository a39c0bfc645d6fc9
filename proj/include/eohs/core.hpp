#pragma once

// Domain types shared by every module: heuristics, performance vectors and
// matrices, populations, problem instances and the evolution config.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <regex>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

namespace eohs {

using json = nlohmann::json;

inline constexpr double kInvalidScore = std::numeric_limits<double>::infinity();

/// Error carrying a short machine-readable code ("no-code", "selection", ...)
/// next to the human-readable message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

enum class Task { obp, tsp, cvrp };

inline std::string_view to_string(Task t) {
  switch (t) {
    case Task::obp: return "obp";
    case Task::tsp: return "tsp";
    case Task::cvrp: return "cvrp";
  }
  return "?";
}

inline Task parse_task(std::string_view s) {
  if (s == "obp") return Task::obp;
  if (s == "tsp") return Task::tsp;
  if (s == "cvrp") return Task::cvrp;
  throw Error("config", "unknown task '" + std::string(s) + "'");
}

/// Name of the function every heuristic for `t` must define.
inline std::string_view required_function(Task t) {
  return t == Task::obp ? "priority" : "select_next_node";
}

// ---------------------------------------------------------------------------
// Seeds

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent child seed for stream `stream` of `base`.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(splitmix64(base) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

// ---------------------------------------------------------------------------
// Heuristic

enum class Origin { init, cs, ls, builtin };

inline std::string_view to_string(Origin o) {
  switch (o) {
    case Origin::init: return "init";
    case Origin::cs: return "cs";
    case Origin::ls: return "ls";
    case Origin::builtin: return "builtin";
  }
  return "?";
}

inline Origin parse_origin(std::string_view s) {
  if (s == "init") return Origin::init;
  if (s == "cs") return Origin::cs;
  if (s == "ls") return Origin::ls;
  if (s == "builtin") return Origin::builtin;
  throw Error("format", "unknown origin '" + std::string(s) + "'");
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return s.substr(first, last - first + 1);
}

// Drops a trailing `#` comment, leaving `#` inside string literals alone.
inline std::string_view strip_line_comment(std::string_view line) {
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quote) {
      if (c == '\\') ++i;
      else if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Digest of `code` after stripping comments, blank lines and per-line
/// leading/trailing whitespace. Purely textual.
inline std::string make_dedupe_key(std::string_view code) {
  std::string normalized;
  std::size_t pos = 0;
  while (pos <= code.size()) {
    auto end = code.find('\n', pos);
    if (end == std::string_view::npos) end = code.size();
    const auto line = detail::trim(detail::strip_line_comment(code.substr(pos, end - pos)));
    if (!line.empty()) {
      normalized.append(line);
      normalized.push_back('\n');
    }
    pos = end + 1;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(detail::fnv1a64(normalized)));
  return buf;
}

/// Number of top-level-or-nested `def <name>(` definitions in `code`.
inline std::size_t count_definitions(std::string_view code, std::string_view name) {
  const std::regex re("(^|\\n)[ \\t]*def[ \\t]+" + std::string(name) + "[ \\t]*\\(");
  const std::string s(code);
  return static_cast<std::size_t>(
      std::distance(std::sregex_iterator(s.begin(), s.end(), re), std::sregex_iterator()));
}

struct Heuristic {
  std::string id;
  std::string thought;
  std::string code;
  Origin origin = Origin::init;
  std::vector<std::string> parent_ids;
  std::string dedupe_key;
  // Set only for origin == builtin; selects the in-process decider.
  std::string builtin_name;

  /// Checks the code and provenance invariants for `task`.
  void validate(Task task) const {
    if (id.empty()) throw Error("heuristic", "heuristic id is empty");
    if (detail::trim(code).empty()) throw Error("heuristic", id + ": code is empty");
    const auto defs = count_definitions(code, required_function(task));
    if (defs != 1) {
      throw Error("heuristic", id + ": expected exactly one definition of " +
                                   std::string(required_function(task)) + ", found " +
                                   std::to_string(defs));
    }
    std::size_t want = 0;
    if (origin == Origin::cs) want = 2;
    if (origin == Origin::ls) want = 1;
    if (parent_ids.size() != want) {
      throw Error("heuristic", id + ": origin " + std::string(to_string(origin)) + " needs " +
                                   std::to_string(want) + " parents");
    }
    if (origin == Origin::builtin && builtin_name.empty()) {
      throw Error("heuristic", id + ": builtin heuristic without a builtin name");
    }
  }
};

/// Builds and validates a heuristic, filling in its dedupe key.
inline Heuristic make_heuristic(std::string id, std::string thought, std::string code,
                                Origin origin, std::vector<std::string> parent_ids, Task task,
                                std::string builtin_name = {}) {
  Heuristic h;
  h.id = std::move(id);
  h.thought = std::move(thought);
  h.code = std::move(code);
  h.origin = origin;
  h.parent_ids = std::move(parent_ids);
  h.builtin_name = std::move(builtin_name);
  h.validate(task);
  h.dedupe_key = make_dedupe_key(h.code);
  return h;
}

// ---------------------------------------------------------------------------
// Performance

/// Per-instance scores of one heuristic (relative gaps, lower is better).
/// An invalid vector holds +inf everywhere.
class PerformanceVector {
 public:
  PerformanceVector() = default;

  static PerformanceVector of(std::vector<double> scores) {
    for (double s : scores) {
      if (!std::isfinite(s)) throw Error("performance", "valid vector with non-finite score");
    }
    PerformanceVector v;
    v.scores_ = std::move(scores);
    v.valid_ = true;
    return v;
  }

  static PerformanceVector invalid(std::size_t m) {
    PerformanceVector v;
    v.scores_.assign(m, kInvalidScore);
    v.valid_ = false;
    return v;
  }

  bool valid() const noexcept { return valid_; }
  std::size_t size() const noexcept { return scores_.size(); }
  std::span<const double> scores() const noexcept { return scores_; }
  double operator[](std::size_t j) const { return scores_[j]; }

  double mean() const {
    if (scores_.empty()) return 0.0;
    double s = 0.0;
    for (double x : scores_) s += x;
    return s / static_cast<double>(scores_.size());
  }

  friend bool operator==(const PerformanceVector&, const PerformanceVector&) = default;

 private:
  std::vector<double> scores_;
  bool valid_ = false;
};

class PerformanceMatrix {
 public:
  PerformanceMatrix() = default;
  explicit PerformanceMatrix(std::vector<std::string> instance_ids)
      : instance_ids_(std::move(instance_ids)) {}

  /// Appends a row; returns its index.
  std::size_t add_row(std::string heuristic_id, PerformanceVector row) {
    if (row.size() != instance_ids_.size()) {
      throw Error("performance", "row for " + heuristic_id + " has length " +
                                     std::to_string(row.size()) + ", expected " +
                                     std::to_string(instance_ids_.size()));
    }
    heuristic_ids_.push_back(std::move(heuristic_id));
    rows_.push_back(std::move(row));
    return rows_.size() - 1;
  }

  std::size_t rows() const noexcept { return rows_.size(); }
  std::size_t instances() const noexcept { return instance_ids_.size(); }
  const PerformanceVector& row(std::size_t i) const { return rows_.at(i); }
  const std::string& heuristic_id(std::size_t i) const { return heuristic_ids_.at(i); }
  const std::vector<std::string>& heuristic_ids() const noexcept { return heuristic_ids_; }
  const std::vector<std::string>& instance_ids() const noexcept { return instance_ids_; }

  /// Indices of all valid rows, ascending.
  std::vector<std::size_t> valid_rows() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      if (rows_[i].valid()) out.push_back(i);
    }
    return out;
  }

  /// Convenience for tests and tools: every row valid, ids h0..h{k-1}, i0..i{m-1}.
  static PerformanceMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    std::vector<std::string> inst;
    const std::size_t m = rows.empty() ? 0 : rows.front().size();
    for (std::size_t j = 0; j < m; ++j) inst.push_back("i" + std::to_string(j));
    PerformanceMatrix pm(std::move(inst));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      pm.add_row("h" + std::to_string(i), PerformanceVector::of(rows[i]));
    }
    return pm;
  }

  friend bool operator==(const PerformanceMatrix&, const PerformanceMatrix&) = default;

 private:
  std::vector<std::string> heuristic_ids_;
  std::vector<PerformanceVector> rows_;
  std::vector<std::string> instance_ids_;
};

/// The current n heuristics, as row indices into the run's matrix.
/// `archive[r]` is the heuristic evaluated in matrix row r.
class Population {
 public:
  Population() = default;

  Population(std::vector<std::size_t> members, int generation,
             std::span<const Heuristic> archive, const PerformanceMatrix& matrix)
      : members_(std::move(members)), generation_(generation) {
    if (generation_ < 0) throw Error("population", "negative generation");
    std::set<std::string> keys;
    for (std::size_t r : members_) {
      if (r >= matrix.rows() || r >= archive.size()) {
        throw Error("population", "member row " + std::to_string(r) + " out of range");
      }
      if (!matrix.row(r).valid()) {
        throw Error("population", "member " + archive[r].id + " has an invalid vector");
      }
      if (!keys.insert(archive[r].dedupe_key).second) {
        throw Error("population", "duplicate dedupe key in population: " + archive[r].id);
      }
    }
  }

  const std::vector<std::size_t>& members() const noexcept { return members_; }
  std::size_t size() const noexcept { return members_.size(); }
  int generation() const noexcept { return generation_; }

 private:
  std::vector<std::size_t> members_;
  int generation_ = 0;
};

// ---------------------------------------------------------------------------
// Problem instances

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Dense symmetric distance matrix, row-major.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(std::size_t n) : n_(n), d_(n * n, 0.0) {}

  static DistanceMatrix euclidean(std::span<const Point> pts) {
    DistanceMatrix m(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (std::size_t j = i + 1; j < pts.size(); ++j) {
        const double d = std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y);
        m.d_[i * m.n_ + j] = d;
        m.d_[j * m.n_ + i] = d;
      }
    }
    return m;
  }

  std::size_t size() const noexcept { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }
  double& at(std::size_t i, std::size_t j) { return d_[i * n_ + j]; }
  std::span<const double> row(std::size_t i) const { return {d_.data() + i * n_, n_}; }

  friend bool operator==(const DistanceMatrix&, const DistanceMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> d_;
};

struct ObpPayload {
  double capacity = 100.0;
  std::vector<double> items;
  friend bool operator==(const ObpPayload&, const ObpPayload&) = default;
};

struct TspPayload {
  std::vector<Point> coords;
  DistanceMatrix distances;
  friend bool operator==(const TspPayload&, const TspPayload&) = default;
};

struct CvrpPayload {
  std::size_t depot = 0;
  std::vector<Point> coords;
  DistanceMatrix distances;
  std::vector<double> demands;
  double capacity = 0.0;
  friend bool operator==(const CvrpPayload&, const CvrpPayload&) = default;
};

struct InstanceMeta {
  std::string source = "generated";  // generated | benchmark
  json params = json::object();
  friend bool operator==(const InstanceMeta&, const InstanceMeta&) = default;
};

struct ProblemInstance {
  std::string id;
  Task task = Task::obp;
  std::variant<ObpPayload, TspPayload, CvrpPayload> payload;
  double baseline = 0.0;
  InstanceMeta meta;

  const ObpPayload& obp() const { return std::get<ObpPayload>(payload); }
  const TspPayload& tsp() const { return std::get<TspPayload>(payload); }
  const CvrpPayload& cvrp() const { return std::get<CvrpPayload>(payload); }

  /// Throws Error("instance") when an invariant is broken.
  void validate() const {
    auto fail = [&](const std::string& what) { throw Error("instance", id + ": " + what); };
    const bool tag_ok = (task == Task::obp && std::holds_alternative<ObpPayload>(payload)) ||
                        (task == Task::tsp && std::holds_alternative<TspPayload>(payload)) ||
                        (task == Task::cvrp && std::holds_alternative<CvrpPayload>(payload));
    if (!tag_ok) fail("payload does not match task");
    if (!(baseline > 0.0) || !std::isfinite(baseline)) fail("baseline must be positive");

    auto check_geometry = [&](std::span<const Point> pts, const DistanceMatrix& d) {
      for (const auto& p : pts) {
        if (p.x < 0.0 || p.x > 1.0 || p.y < 0.0 || p.y > 1.0) fail("coordinate outside [0,1]^2");
      }
      if (d.size() != pts.size()) fail("distance matrix size mismatch");
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (d(i, i) != 0.0) fail("non-zero distance diagonal");
        for (std::size_t j = i + 1; j < d.size(); ++j) {
          if (d(i, j) != d(j, i)) fail("asymmetric distance matrix");
        }
      }
    };

    if (task == Task::obp) {
      const auto& p = obp();
      if (!(p.capacity > 0.0)) fail("capacity must be positive");
      if (p.items.empty()) fail("no items");
      for (double s : p.items) {
        if (!(s > 0.0 && s <= p.capacity)) fail("item size outside (0, C]");
      }
    } else if (task == Task::tsp) {
      const auto& p = tsp();
      if (p.coords.size() < 2) fail("need at least two nodes");
      check_geometry(p.coords, p.distances);
    } else {
      const auto& p = cvrp();
      if (p.coords.size() < 2) fail("need a depot and at least one customer");
      check_geometry(p.coords, p.distances);
      if (p.demands.size() != p.coords.size()) fail("demand list size mismatch");
      if (p.depot >= p.coords.size()) fail("depot index out of range");
      if (!(p.capacity > 0.0)) fail("capacity must be positive");
      for (std::size_t i = 0; i < p.demands.size(); ++i) {
        if (i == p.depot) {
          if (p.demands[i] != 0.0) fail("depot demand must be 0");
        } else if (!(p.demands[i] > 0.0 && p.demands[i] <= p.capacity)) {
          fail("demand outside (0, Q]");
        }
      }
    }
  }

  std::size_t node_count() const {
    if (task == Task::tsp) return tsp().coords.size();
    if (task == Task::cvrp) return cvrp().coords.size();
    return 0;
  }
};

// ---------------------------------------------------------------------------
// Configuration

struct AblationFlags {
  bool disable_cs = false;
  bool disable_ls = false;
  bool disable_cpm = false;
};

/// Report label for an ablation variant.
inline std::string variant_label(const AblationFlags& a) {
  std::string label = "EoH-S";
  if (a.disable_cs) label += " w/o CS";
  if (a.disable_ls) label += " w/o LS";
  if (a.disable_cpm) label += " w/o CPM";
  return label;
}

struct WorkerBudget {
  double timeout_s = 10.0;
  std::size_t max_code_bytes = 64 * 1024;
  std::size_t pool_size = 4;
  std::size_t memory_mb = 0;  // 0 = no limit
  std::vector<std::string> command;  // empty = bundled reference worker
};

struct LlmSettings {
  bool mock = true;
  std::string endpoint;  // e.g. https://api.deepseek.com/v1
  std::string model = "deepseek-chat";
  double temperature = 1.0;
  int max_tokens = 0;  // 0 = leave to the server
  double timeout_s = 120.0;
  int attempts = 4;
  double backoff_base_s = 1.0;
  std::string api_key_env = "EOHS_API_KEY";
};

struct EvolutionConfig {
  Task task = Task::obp;
  std::size_t population_size = 10;
  std::size_t eval_budget = 2000;
  std::uint64_t seed = 0;
  LlmSettings llm;
  double operator_mix = 0.5;
  AblationFlags ablation;
  bool elitist_guard = false;
  WorkerBudget worker;
  int retries = 10;

  /// Probability that an offspring is produced by CS after ablations.
  double cs_probability() const {
    if (ablation.disable_cs) return 0.0;
    if (ablation.disable_ls) return 1.0;
    return operator_mix;
  }

  void validate() const {
    auto fail = [](const std::string& what) { throw Error("config", what); };
    if (population_size < 1) fail("population size must be positive");
    if (population_size < 2 && !ablation.disable_cs) fail("population size must be >= 2 with CS");
    if (eval_budget < population_size) fail("budget must cover the initial population");
    if (!(operator_mix >= 0.0 && operator_mix <= 1.0)) fail("operator_mix outside [0,1]");
    if (ablation.disable_cs && ablation.disable_ls) fail("cannot disable both CS and LS");
    if (retries < 1) fail("retries must be >= 1");
    if (!(worker.timeout_s > 0.0)) fail("worker timeout must be positive");
    if (worker.pool_size < 1) fail("worker pool size must be >= 1");
    if (!llm.mock && llm.endpoint.empty()) fail("live LLM mode needs an endpoint");
  }
};

}  // namespace eohs
