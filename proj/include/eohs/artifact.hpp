#pragma once

// Experiment configuration and the run artifact directory:
//   config.json  heuristics.jsonl  matrix.csv  convergence.csv  report.json
// Per-repeat files get an `_r<k>` suffix when a config asks for several repeats.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "eohs/core.hpp"
#include "eohs/engine.hpp"
#include "eohs/instances.hpp"

namespace eohs {

namespace fs = std::filesystem;

struct InstanceSource {
  std::string file;  // native JSONL; empty = generate
  GeneratorSpec spec;
};

struct ExperimentConfig {
  EvolutionConfig evo;
  InstanceSource instances;
  int repeats = 1;
};

namespace detail {

inline std::string num(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_num(const std::string& s) {
  if (s == "inf") return kInvalidScore;
  if (s == "-inf") return -kInvalidScore;
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument(s);
  return v;
}

template <class T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw Error("config", where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw Error("config", "unknown config key '" + where + "." + k + "'");
  }
}

inline IntRange range_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw Error("config", "ranges are [lo, hi] pairs");
  return {j[0].get<std::int64_t>(), j[1].get<std::int64_t>()};
}

inline json range_to(const IntRange& r) { return json::array({r.lo, r.hi}); }

inline std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("io", "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("io", "cannot write " + p.string());
  out << text;
  if (!out) throw Error("io", "write failed for " + p.string());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Config

inline json to_json(const GeneratorSpec& s) {
  json j{{"count", s.count}, {"seed", s.seed}};
  j["obp"] = {{"shapes", s.obp.shapes}, {"scales", s.obp.scales}, {"items", detail::range_to(s.obp.items)},
              {"capacity", s.obp.capacity}};
  j["tsp"] = {{"size", detail::range_to(s.tsp.size)},
              {"mode", s.tsp.mode == TspMode::clustered ? "clustered" : "uniform"},
              {"clusters", s.tsp.clusters},
              {"sigmas", s.tsp.sigmas}};
  j["cvrp"] = {{"size", detail::range_to(s.cvrp.size)}, {"capacity", detail::range_to(s.cvrp.capacity)},
               {"demand", detail::range_to(s.cvrp.demand)}};
  return j;
}

inline void generator_from_json(const json& j, GeneratorSpec& s) {
  detail::only_keys(j, "instances.generate", {"count", "seed", "obp", "tsp", "cvrp"});
  if (j.contains("obp")) detail::only_keys(j["obp"], "obp", {"shapes", "scales", "items", "capacity"});
  if (j.contains("tsp")) detail::only_keys(j["tsp"], "tsp", {"size", "mode", "clusters", "sigmas"});
  if (j.contains("cvrp")) detail::only_keys(j["cvrp"], "cvrp", {"size", "capacity", "demand"});
  detail::get_if(j, "count", s.count);
  detail::get_if(j, "seed", s.seed);
  if (j.contains("obp")) {
    const auto& o = j["obp"];
    detail::get_if(o, "shapes", s.obp.shapes);
    detail::get_if(o, "scales", s.obp.scales);
    if (o.contains("items")) s.obp.items = detail::range_from(o["items"]);
    detail::get_if(o, "capacity", s.obp.capacity);
  }
  if (j.contains("tsp")) {
    const auto& t = j["tsp"];
    if (t.contains("size")) s.tsp.size = detail::range_from(t["size"]);
    if (t.contains("mode")) {
      const auto m = t["mode"].get<std::string>();
      if (m != "clustered" && m != "uniform") throw Error("config", "tsp.mode must be clustered|uniform");
      s.tsp.mode = m == "clustered" ? TspMode::clustered : TspMode::uniform;
    }
    detail::get_if(t, "clusters", s.tsp.clusters);
    detail::get_if(t, "sigmas", s.tsp.sigmas);
  }
  if (j.contains("cvrp")) {
    const auto& c = j["cvrp"];
    if (c.contains("size")) s.cvrp.size = detail::range_from(c["size"]);
    if (c.contains("capacity")) s.cvrp.capacity = detail::range_from(c["capacity"]);
    if (c.contains("demand")) s.cvrp.demand = detail::range_from(c["demand"]);
  }
}

inline json to_json(const ExperimentConfig& c) {
  const auto& e = c.evo;
  json j{{"task", to_string(e.task)},
         {"seed", e.seed},
         {"population_size", e.population_size},
         {"eval_budget", e.eval_budget},
         {"operator_mix", e.operator_mix},
         {"retries", e.retries},
         {"elitist_guard", e.elitist_guard},
         {"repeats", c.repeats}};
  j["ablation"] = {{"disable_cs", e.ablation.disable_cs},
                   {"disable_ls", e.ablation.disable_ls},
                   {"disable_cpm", e.ablation.disable_cpm}};
  j["llm"] = {{"mock", e.llm.mock},           {"endpoint", e.llm.endpoint},     {"model", e.llm.model},
              {"temperature", e.llm.temperature}, {"max_tokens", e.llm.max_tokens}, {"timeout_s", e.llm.timeout_s},
              {"attempts", e.llm.attempts},   {"backoff_base_s", e.llm.backoff_base_s},
              {"api_key_env", e.llm.api_key_env}};
  j["worker"] = {{"timeout_s", e.worker.timeout_s},
                 {"max_code_bytes", e.worker.max_code_bytes},
                 {"pool_size", e.worker.pool_size},
                 {"memory_mb", e.worker.memory_mb},
                 {"command", e.worker.command}};
  json inst = json::object();
  if (!c.instances.file.empty()) inst["file"] = c.instances.file;
  inst["generate"] = to_json(c.instances.spec);
  j["instances"] = inst;
  return j;
}

/// Parses a config document. Unknown keys are rejected so typos surface.
inline ExperimentConfig experiment_from_json(const json& j) {
  static const std::set<std::string> known{"task",    "seed",     "population_size", "eval_budget",
                                           "operator_mix", "retries", "elitist_guard", "repeats",
                                           "ablation", "llm",     "worker",          "instances"};
  if (!j.is_object()) throw Error("config", "config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw Error("config", "unknown config key '" + k + "'");
  }
  ExperimentConfig c;
  auto& e = c.evo;
  try {
    if (j.contains("task")) e.task = parse_task(j["task"].get<std::string>());
    detail::get_if(j, "seed", e.seed);
    detail::get_if(j, "population_size", e.population_size);
    detail::get_if(j, "eval_budget", e.eval_budget);
    detail::get_if(j, "operator_mix", e.operator_mix);
    detail::get_if(j, "retries", e.retries);
    detail::get_if(j, "elitist_guard", e.elitist_guard);
    detail::get_if(j, "repeats", c.repeats);
    if (j.contains("ablation")) {
      const auto& a = j["ablation"];
      detail::only_keys(a, "ablation", {"disable_cs", "disable_ls", "disable_cpm"});
      detail::get_if(a, "disable_cs", e.ablation.disable_cs);
      detail::get_if(a, "disable_ls", e.ablation.disable_ls);
      detail::get_if(a, "disable_cpm", e.ablation.disable_cpm);
    }
    if (j.contains("llm")) {
      const auto& l = j["llm"];
      detail::only_keys(l, "llm", {"mock", "endpoint", "model", "temperature", "max_tokens", "timeout_s", "attempts",
                                   "backoff_base_s", "api_key_env"});
      detail::get_if(l, "mock", e.llm.mock);
      detail::get_if(l, "endpoint", e.llm.endpoint);
      detail::get_if(l, "model", e.llm.model);
      detail::get_if(l, "temperature", e.llm.temperature);
      detail::get_if(l, "max_tokens", e.llm.max_tokens);
      detail::get_if(l, "timeout_s", e.llm.timeout_s);
      detail::get_if(l, "attempts", e.llm.attempts);
      detail::get_if(l, "backoff_base_s", e.llm.backoff_base_s);
      detail::get_if(l, "api_key_env", e.llm.api_key_env);
    }
    if (j.contains("worker")) {
      const auto& w = j["worker"];
      detail::only_keys(w, "worker", {"timeout_s", "max_code_bytes", "pool_size", "memory_mb", "command"});
      detail::get_if(w, "timeout_s", e.worker.timeout_s);
      detail::get_if(w, "max_code_bytes", e.worker.max_code_bytes);
      detail::get_if(w, "pool_size", e.worker.pool_size);
      detail::get_if(w, "memory_mb", e.worker.memory_mb);
      detail::get_if(w, "command", e.worker.command);
    }
    c.instances.spec = GeneratorSpec::training(e.task, e.seed);
    if (j.contains("instances")) {
      const auto& i = j["instances"];
      detail::only_keys(i, "instances", {"file", "generate"});
      detail::get_if(i, "file", c.instances.file);
      if (i.contains("generate")) generator_from_json(i["generate"], c.instances.spec);
    }
    c.instances.spec.task = e.task;
  } catch (const json::exception& ex) {
    throw Error("config", std::string("bad config value: ") + ex.what());
  }
  if (c.repeats < 1) throw Error("config", "repeats must be >= 1");
  e.validate();
  if (c.instances.file.empty()) c.instances.spec.validate();
  return c;
}

inline ExperimentConfig load_experiment(const fs::path& path) {
  json j;
  try {
    j = json::parse(detail::read_text(path));
  } catch (const json::exception& ex) {
    throw Error("config", path.string() + ": " + ex.what());
  }
  try {
    return experiment_from_json(j);
  } catch (const Error& ex) {
    throw Error(ex.code(), path.string() + ": " + ex.what());
  }
}

/// Instances named by the config: the JSONL file, or the generator spec.
inline std::vector<ProblemInstance> resolve_instances(const ExperimentConfig& c, const fs::path& base = {}) {
  std::vector<ProblemInstance> out;
  if (!c.instances.file.empty()) {
    fs::path p = c.instances.file;
    if (p.is_relative() && !base.empty()) p = base / p;
    out = read_instances(p);
  } else {
    out = generate(c.instances.spec);
  }
  if (out.empty()) throw Error("config", "instance set is empty");
  for (const auto& i : out) {
    if (i.task != c.evo.task) throw Error("config", "instance " + i.id + " is not a " + std::string(to_string(c.evo.task)) + " instance");
  }
  return out;
}

inline std::uint64_t repeat_seed(std::uint64_t seed, int repeat) {
  return repeat == 0 ? seed : derive_seed(seed, static_cast<std::uint64_t>(repeat));
}

// ---------------------------------------------------------------------------
// Files

struct ArtifactPaths {
  fs::path heuristics, matrix, convergence, report;
};

inline ArtifactPaths artifact_paths(const fs::path& dir, int repeat, int repeats) {
  const std::string sfx = repeats > 1 ? "_r" + std::to_string(repeat) : "";
  return {dir / ("heuristics" + sfx + ".jsonl"), dir / ("matrix" + sfx + ".csv"),
          dir / ("convergence" + sfx + ".csv"), dir / ("report" + sfx + ".json")};
}

inline std::string matrix_csv(const PerformanceMatrix& m) {
  std::string s = "heuristic";
  for (const auto& id : m.instance_ids()) s += "," + id;
  s += "\n";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    s += m.heuristic_id(r);
    for (double x : m.row(r).scores()) s += "," + detail::num(x);
    s += "\n";
  }
  return s;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline PerformanceMatrix parse_matrix_csv(const std::string& text, const std::string& where = "matrix.csv") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error("parse", where + ": empty file");
  auto header = split_csv(line);
  if (header.empty() || header[0] != "heuristic") throw Error("parse", where + ":1: expected 'heuristic' header");
  PerformanceMatrix m(std::vector<std::string>(header.begin() + 1, header.end()));
  std::size_t no = 1;
  while (std::getline(in, line)) {
    ++no;
    if (detail::trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw Error("parse", where + ":" + std::to_string(no) + ": expected " + std::to_string(header.size()) + " cells");
    }
    std::vector<double> v;
    bool valid = true;
    try {
      for (std::size_t k = 1; k < cells.size(); ++k) {
        v.push_back(detail::parse_num(cells[k]));
        if (!std::isfinite(v.back())) valid = false;
      }
    } catch (const std::exception&) {
      throw Error("parse", where + ":" + std::to_string(no) + ": bad number");
    }
    m.add_row(cells[0], valid ? PerformanceVector::of(std::move(v)) : PerformanceVector::invalid(v.size()));
  }
  return m;
}

inline PerformanceMatrix read_matrix_csv(const fs::path& p) { return parse_matrix_csv(detail::read_text(p), p.string()); }

inline std::string convergence_csv(const std::vector<ConvergenceRecord>& recs) {
  std::string s = "evals_used,population_cpi,best_single_mean\n";
  for (const auto& r : recs) {
    s += std::to_string(r.evals_used) + "," + detail::num(r.population_cpi) + "," + detail::num(r.best_single_mean) + "\n";
  }
  return s;
}

struct ArchivedHeuristic {
  Heuristic heuristic;
  bool valid = false;
  int final_rank = -1;  // position in the final population, -1 if not a member
};

inline json to_json(const Heuristic& h, const PerformanceVector& v, int final_rank) {
  json j{{"id", h.id},
         {"thought", h.thought},
         {"code", h.code},
         {"origin", to_string(h.origin)},
         {"parents", h.parent_ids},
         {"dedupe_key", h.dedupe_key},
         {"valid", v.valid()},
         {"final_rank", final_rank < 0 ? json(nullptr) : json(final_rank)}};
  if (!h.builtin_name.empty()) j["builtin"] = h.builtin_name;
  if (v.valid()) {
    j["vector"] = std::vector<double>(v.scores().begin(), v.scores().end());
  } else {
    j["vector"] = nullptr;
  }
  return j;
}

inline std::string heuristics_jsonl(const RunState& st) {
  std::vector<int> rank(st.archive.size(), -1);
  const auto& members = st.population.members();
  for (std::size_t k = 0; k < members.size(); ++k) rank[members[k]] = static_cast<int>(k);
  std::string s;
  for (std::size_t r = 0; r < st.archive.size(); ++r) {
    s += to_json(st.archive[r], st.matrix.row(r), rank[r]).dump() + "\n";
  }
  return s;
}

inline std::vector<ArchivedHeuristic> read_heuristics(const fs::path& p) {
  std::istringstream in(detail::read_text(p));
  std::vector<ArchivedHeuristic> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (detail::trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      ArchivedHeuristic a;
      auto& h = a.heuristic;
      h.id = j.at("id").get<std::string>();
      h.thought = j.value("thought", "");
      h.code = j.at("code").get<std::string>();
      const auto origin = j.value("origin", "init");
      h.origin = origin == "cs" ? Origin::cs : origin == "ls" ? Origin::ls : origin == "builtin" ? Origin::builtin : Origin::init;
      h.parent_ids = j.value("parents", std::vector<std::string>{});
      h.builtin_name = j.value("builtin", "");
      h.dedupe_key = j.contains("dedupe_key") ? j["dedupe_key"].get<std::string>() : make_dedupe_key(h.code);
      a.valid = j.value("valid", false);
      if (j.contains("final_rank") && j["final_rank"].is_number_integer()) a.final_rank = j["final_rank"].get<int>();
      out.push_back(std::move(a));
    } catch (const json::exception& e) {
      throw Error("parse", p.string() + ":" + std::to_string(no) + ": " + e.what());
    }
  }
  return out;
}

/// report.json content from the matrix and final population rows.
inline json make_report(const PerformanceMatrix& matrix, const std::vector<std::size_t>& final_rows,
                        const std::string& variant, Task task, std::uint64_t seed, std::size_t evals_used) {
  json rep{{"variant", variant}, {"task", to_string(task)}, {"seed", seed}, {"evals_used", evals_used}};
  const auto c = cpi(matrix, final_rows);
  rep["final_cpi"] = c.cpi;
  json ids = json::array();
  double best_single = kInvalidScore;
  for (std::size_t r : final_rows) {
    ids.push_back(matrix.heuristic_id(r));
    best_single = std::min(best_single, matrix.row(r).mean());
  }
  rep["final_population"] = ids;
  rep["best_single_mean"] = best_single;
  json contrib = json::array();
  for (std::size_t j = 0; j < matrix.instances(); ++j) {
    contrib.push_back({{"instance", matrix.instance_ids()[j]},
                       {"heuristic", c.contributor[j]},
                       {"gap", c.best_per_instance[j]}});
  }
  rep["contributors"] = contrib;
  const auto pool = matrix.valid_rows();
  std::vector<std::size_t> sizes;
  for (std::size_t s = 1; s <= std::min<std::size_t>(10, pool.size()); ++s) sizes.push_back(s);
  json series = json::array();
  for (const auto& p : cpi_vs_setsize(matrix, pool, sizes)) series.push_back({{"size", p.size}, {"cpi", p.cpi}});
  rep["cpi_vs_setsize"] = series;
  return rep;
}

inline json make_report(const RunState& st, const EvolutionConfig& cfg) {
  return make_report(st.matrix, st.population.members(), variant_label(cfg.ablation), cfg.task, cfg.seed,
                     st.evals_used);
}

inline void write_run(const fs::path& dir, const RunState& st, const EvolutionConfig& cfg, int repeat, int repeats) {
  const auto p = artifact_paths(dir, repeat, repeats);
  detail::write_text(p.heuristics, heuristics_jsonl(st));
  detail::write_text(p.matrix, matrix_csv(st.matrix));
  detail::write_text(p.convergence, convergence_csv(st.convergence));
  detail::write_text(p.report, make_report(st, cfg).dump(2) + "\n");
}

/// Rebuilds report.json from the other artifact files of one repeat.
inline json rebuild_report(const fs::path& dir, int repeat, int repeats) {
  const auto p = artifact_paths(dir, repeat, repeats);
  const ExperimentConfig cfg = load_experiment(dir / "config.json");
  const auto matrix = read_matrix_csv(p.matrix);
  const auto archive = read_heuristics(p.heuristics);
  if (archive.size() != matrix.rows()) throw Error("parse", "heuristics.jsonl and matrix.csv disagree on row count");
  std::vector<std::pair<int, std::size_t>> ranked;
  for (std::size_t r = 0; r < archive.size(); ++r) {
    if (archive[r].heuristic.id != matrix.heuristic_id(r)) throw Error("parse", "row id mismatch at row " + std::to_string(r));
    if (archive[r].final_rank >= 0) ranked.emplace_back(archive[r].final_rank, r);
  }
  if (ranked.empty()) throw Error("parse", "artifact has no final population");
  std::sort(ranked.begin(), ranked.end());
  std::vector<std::size_t> ordered;
  for (const auto& [k, r] : ranked) ordered.push_back(r);
  return make_report(matrix, ordered, variant_label(cfg.evo.ablation), cfg.evo.task,
                     repeat_seed(cfg.evo.seed, repeat), matrix.rows());
}

// ---------------------------------------------------------------------------
// Benchmark tables

struct BenchRow {
  std::string instance;
  double set_gap = kInvalidScore;     // min over the population
  double single_gap = kInvalidScore;  // the best-training-mean member alone
  std::string best_heuristic;
};

struct BenchTable {
  std::vector<BenchRow> rows;
  std::vector<std::string> warnings;

  double mean_set_gap() const {
    double s = 0.0;
    for (const auto& r : rows) s += r.set_gap;
    return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
  }
  double mean_single_gap() const {
    double s = 0.0;
    for (const auto& r : rows) s += r.single_gap;
    return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
  }
};

/// Loads every regular file in `dir` (sorted by name) as a `task` benchmark.
/// Files that fail to load become warnings.
inline std::vector<ProblemInstance> load_benchmark_dir(const fs::path& dir, Task task,
                                                       std::vector<std::string>& warnings) {
  if (!fs::is_directory(dir)) throw Error("io", dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ProblemInstance> out;
  for (const auto& f : files) {
    try {
      out.push_back(load_benchmark(f, task));
    } catch (const Error& e) {
      warnings.push_back("skipped " + f.filename().string() + ": " + e.what());
    }
  }
  if (out.empty()) warnings.push_back("no loadable benchmark files in " + dir.string());
  return out;
}

/// Per-instance set gap (min over `population`) next to the gap of
/// `population[single]` alone. Episodes that fail count as +inf.
inline BenchTable bench(const std::vector<Heuristic>& population, std::size_t single,
                        std::vector<ProblemInstance> instances, const WorkerBudget& budget) {
  BenchTable t;
  if (instances.empty()) return t;
  if (single >= population.size()) throw Error("bench", "single-heuristic index out of range");
  Executor ex(std::move(instances), budget);
  std::vector<std::vector<EpisodeResult>> res;
  for (const auto& h : population) {
    res.push_back(ex.run_all(h));
    for (std::size_t i = 0; i < res.back().size(); ++i) {
      if (!res.back()[i].valid()) {
        t.warnings.push_back(h.id + " failed on " + ex.instances()[i].id + ": " + *res.back()[i].violation);
      }
    }
  }
  for (std::size_t i = 0; i < ex.instances().size(); ++i) {
    BenchRow row;
    row.instance = ex.instances()[i].id;
    for (std::size_t k = 0; k < population.size(); ++k) {
      const auto& r = res[k][i];
      const double g = r.valid() ? r.gap : kInvalidScore;
      if (g < row.set_gap) {
        row.set_gap = g;
        row.best_heuristic = population[k].id;
      }
      if (k == single) row.single_gap = g;
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline std::string bench_csv(const BenchTable& t) {
  std::string s = "instance,set_gap,single_gap,best_heuristic\n";
  for (const auto& r : t.rows) {
    s += r.instance + "," + detail::num(r.set_gap) + "," + detail::num(r.single_gap) + "," + r.best_heuristic + "\n";
  }
  if (!t.rows.empty()) s += "mean," + detail::num(t.mean_set_gap()) + "," + detail::num(t.mean_single_gap()) + ",\n";
  return s;
}

}  // namespace eohs
