// eohs: command-line front end.
//
//   eohs gen     --task obp --seed 0 --out instances.jsonl
//   eohs run     --config cfg.json --out runs/a
//   eohs bench   --artifact runs/a --benchmarks bpp/
//   eohs select  --matrix runs/a/matrix.csv --size 5
//   eohs verify
//   eohs report  --artifact runs/a
//
// Exit codes: 0 ok, 1 configuration error, 2 runtime error, 3 verification failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "eohs/artifact.hpp"
#include "eohs/engine.hpp"
#include "eohs/exec.hpp"
#include "eohs/instances.hpp"
#include "eohs/llm.hpp"
#include "eohs/selection.hpp"
#include "eohs/verify.hpp"

namespace fs = std::filesystem;
using eohs::json;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;
constexpr int kVerifyFailed = 3;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> repeats;
  bool mock_llm = false;
  std::string endpoint;
  std::string task;
  std::string out = "eohs-run";
  bool no_cs = false, no_ls = false, no_cpm = false;
  std::optional<std::size_t> pop_size;
  std::optional<std::size_t> budget;
  std::optional<double> timeout;
  std::optional<std::size_t> workers;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

eohs::ExperimentConfig build_config(const RunFlags& f) {
  json j = f.config.empty() ? json::object() : read_json_file(f.config);
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (!f.task.empty()) j["task"] = f.task;
  if (f.seed) j["seed"] = *f.seed;
  if (f.repeats) j["repeats"] = *f.repeats;
  if (f.pop_size) j["population_size"] = *f.pop_size;
  if (f.budget) j["eval_budget"] = *f.budget;
  if (f.mock_llm) j["llm"]["mock"] = true;
  if (!f.endpoint.empty()) {
    if (f.mock_llm) throw ConfigError("--mock-llm and --endpoint are exclusive");
    j["llm"]["mock"] = false;
    j["llm"]["endpoint"] = f.endpoint;
  }
  if (f.no_cs) j["ablation"]["disable_cs"] = true;
  if (f.no_ls) j["ablation"]["disable_ls"] = true;
  if (f.no_cpm) j["ablation"]["disable_cpm"] = true;
  if (f.timeout) j["worker"]["timeout_s"] = *f.timeout;
  if (f.workers) j["worker"]["pool_size"] = *f.workers;
  try {
    return eohs::experiment_from_json(j);
  } catch (const eohs::Error& e) {
    throw ConfigError((f.config.empty() ? std::string() : f.config + ": ") + e.what());
  }
}

int cmd_run(const RunFlags& f) {
  const auto cfg = build_config(f);
  const fs::path base = f.config.empty() ? fs::path() : fs::path(f.config).parent_path();
  std::vector<eohs::ProblemInstance> instances;
  try {
    instances = eohs::resolve_instances(cfg, base);
  } catch (const eohs::Error& e) {
    throw ConfigError(e.what());
  }
  std::vector<std::string> ids;
  for (const auto& i : instances) ids.push_back(i.id);

  const fs::path out = f.out;
  fs::create_directories(out);
  eohs::detail::write_text(out / "config.json", eohs::to_json(cfg).dump(2) + "\n");

  bool failed = false;
  for (int r = 0; r < cfg.repeats; ++r) {
    eohs::EvolutionConfig evo = cfg.evo;
    evo.seed = eohs::repeat_seed(cfg.evo.seed, r);
    try {
      std::unique_ptr<eohs::Generator> gen;
      if (evo.llm.mock) {
        gen = std::make_unique<eohs::MockGenerator>(evo.seed);
      } else {
        gen = std::make_unique<eohs::ChatClient>(evo.llm);
      }
      eohs::Executor ex(instances, evo.worker);
      auto progress = [&](const eohs::RunState& st) {
        const auto& c = st.convergence.back();
        std::fprintf(stderr, "[repeat %d] gen %d evals %zu/%zu cpi %.6f best-single %.6f\n", r, c.generation,
                     c.evals_used, evo.eval_budget, c.population_cpi, c.best_single_mean);
      };
      const auto st = eohs::run(evo, *gen, ex, ids, progress);
      for (const auto& line : st.log) std::fprintf(stderr, "[repeat %d] %s\n", r, line.c_str());
      eohs::write_run(out, st, evo, r, cfg.repeats);
      std::printf("repeat %d: final CPI %.6f after %zu evaluations -> %s\n", r,
                  st.convergence.back().population_cpi, st.evals_used, out.string().c_str());
    } catch (const eohs::Error& e) {
      std::fprintf(stderr, "repeat %d failed: %s\n", r, e.what());
      failed = true;
    }
  }
  return failed ? kRuntimeError : kOk;
}

int cmd_gen(const std::string& config, const std::string& task, std::optional<std::uint64_t> seed,
            std::optional<std::size_t> count, const std::string& out) {
  RunFlags f;
  f.config = config;
  f.task = task;
  f.seed = seed;
  auto cfg = build_config(f);
  auto spec = cfg.instances.spec;
  if (seed) spec.seed = *seed;
  if (count) spec.count = *count;
  try {
    spec.validate();
  } catch (const eohs::Error& e) {
    throw ConfigError(e.what());
  }
  const auto insts = eohs::generate(spec);
  if (out == "-") {
    for (const auto& i : insts) std::cout << eohs::to_json(i).dump() << '\n';
  } else {
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    eohs::write_instances(out, insts);
    std::printf("wrote %zu %s instances to %s\n", insts.size(), std::string(eohs::to_string(spec.task)).c_str(),
                out.c_str());
  }
  return kOk;
}

int artifact_repeats(const fs::path& dir) {
  try {
    return eohs::load_experiment(dir / "config.json").repeats;
  } catch (const eohs::Error& e) {
    throw ConfigError(e.what());
  }
}

int cmd_report(const std::string& artifact, bool to_stdout) {
  const fs::path dir = artifact;
  const int repeats = artifact_repeats(dir);
  for (int r = 0; r < repeats; ++r) {
    const json rep = eohs::rebuild_report(dir, r, repeats);
    const auto path = eohs::artifact_paths(dir, r, repeats).report;
    if (to_stdout) {
      std::cout << rep.dump(2) << '\n';
    } else {
      eohs::detail::write_text(path, rep.dump(2) + "\n");
      std::printf("wrote %s\n", path.string().c_str());
    }
  }
  return kOk;
}

int cmd_bench(const std::string& artifact, const std::string& benchmarks, int repeat, const std::string& out,
              std::optional<double> timeout) {
  const fs::path dir = artifact;
  const auto cfg = eohs::load_experiment(dir / "config.json");
  if (repeat < 0 || repeat >= cfg.repeats) throw ConfigError("--repeat out of range");
  const auto paths = eohs::artifact_paths(dir, repeat, cfg.repeats);
  const auto archive = eohs::read_heuristics(paths.heuristics);
  const auto matrix = eohs::read_matrix_csv(paths.matrix);

  std::vector<std::pair<int, std::size_t>> ranked;
  for (std::size_t r = 0; r < archive.size(); ++r) {
    if (archive[r].final_rank >= 0) ranked.emplace_back(archive[r].final_rank, r);
  }
  if (ranked.empty()) throw eohs::Error("bench", "artifact has no final population");
  std::sort(ranked.begin(), ranked.end());
  std::vector<eohs::Heuristic> population;
  std::size_t single = 0;
  double single_mean = eohs::kInvalidScore;
  for (const auto& [k, r] : ranked) {
    if (matrix.row(r).mean() < single_mean) {
      single_mean = matrix.row(r).mean();
      single = population.size();
    }
    population.push_back(archive[r].heuristic);
  }

  std::vector<std::string> warnings;
  auto instances = eohs::load_benchmark_dir(benchmarks, cfg.evo.task, warnings);
  auto budget = cfg.evo.worker;
  if (timeout) budget.timeout_s = *timeout;
  auto table = eohs::bench(population, single, std::move(instances), budget);
  warnings.insert(warnings.end(), table.warnings.begin(), table.warnings.end());
  for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  const std::string csv = eohs::bench_csv(table);
  if (out.empty() || out == "-") {
    std::cout << csv;
  } else {
    eohs::detail::write_text(out, csv);
    std::printf("wrote %zu rows to %s\n", table.rows.size(), out.c_str());
  }
  return kOk;
}

int cmd_select(const std::string& matrix_path, std::size_t size, const std::string& out) {
  const auto m = eohs::read_matrix_csv(matrix_path);
  const auto pool = m.valid_rows();
  const auto sel = eohs::cpm_select(m, pool, size);
  json j{{"size", size}, {"cpi", sel.cpi_trace.back()}, {"cpi_trace", sel.cpi_trace},
         {"first_pick", sel.first_pick_reason}};
  json ids = json::array();
  for (std::size_t r : sel.chosen) ids.push_back(m.heuristic_id(r));
  j["chosen"] = ids;
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << '\n';
  } else {
    eohs::detail::write_text(out, j.dump(2) + "\n");
  }
  return kOk;
}

int cmd_verify(std::uint64_t seed, std::size_t trials2, std::size_t trials3) {
  eohs::PropertyCounts t2, t3, link;
  eohs::check_set_properties(t2, eohs::derive_seed(seed, 2), trials2);
  eohs::check_greedy_bound(t3, eohs::derive_seed(seed, 3), trials3);
  eohs::check_delta_link(link, eohs::derive_seed(seed, 5), trials2);
  std::printf("monotonicity:     %zu trials, %zu violations\n", t2.trials, t2.monotonicity_violations);
  std::printf("supermodularity:  %zu trials, %zu violations\n", t2.trials, t2.supermodularity_violations);
  std::printf("greedy bound:     %zu trials, %zu violations, greedy optimal in %zu (%.1f%%)\n", t3.trials,
              t3.bound_violations, t3.greedy_optimal,
              t3.trials ? 100.0 * static_cast<double>(t3.greedy_optimal) / static_cast<double>(t3.trials) : 0.0);
  std::printf("delta link:       %zu trials, %zu violations, worst error %.3g\n", link.trials, link.link_violations,
              link.worst_link_error);
  const bool ok = t2.ok() && t3.ok() && link.ok();
  std::printf("%s\n", ok ? "verify: PASS" : "verify: FAIL");
  return ok ? kOk : kVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evolution of heuristic sets"};
  app.require_subcommand(1);

  RunFlags rf;
  auto* run = app.add_subcommand("run", "Run an experiment and write an artifact directory");
  run->add_option("--config", rf.config, "JSON config file");
  run->add_option("--seed", rf.seed, "Run seed");
  run->add_option("--repeats", rf.repeats, "Independent repeats");
  run->add_flag("--mock-llm", rf.mock_llm, "Use the offline mock generator");
  run->add_option("--endpoint", rf.endpoint, "OpenAI-compatible base URL (live generator)");
  run->add_option("--task", rf.task, "obp | tsp | cvrp");
  run->add_option("--out", rf.out, "Artifact directory");
  run->add_flag("--no-cs", rf.no_cs, "Disable complementary-aware search");
  run->add_flag("--no-ls", rf.no_ls, "Disable local search");
  run->add_flag("--no-cpm", rf.no_cpm, "Select by mean score instead of CPM");
  run->add_option("--pop-size", rf.pop_size, "Population size n");
  run->add_option("--budget", rf.budget, "Maximum number of evaluated heuristics");
  run->add_option("--timeout", rf.timeout, "Per-instance worker timeout (seconds)");
  run->add_option("--workers", rf.workers, "Worker pool size");

  std::string gen_config, gen_task, gen_out = "-";
  std::optional<std::uint64_t> gen_seed;
  std::optional<std::size_t> gen_count;
  auto* gen = app.add_subcommand("gen", "Generate training instances");
  gen->add_option("--config", gen_config, "JSON config (instances.generate section)");
  gen->add_option("--task", gen_task, "obp | tsp | cvrp");
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--count", gen_count, "Number of instances");
  gen->add_option("--out", gen_out, "Output JSONL file ('-' for stdout)");

  std::string bench_artifact, bench_dir, bench_out;
  int bench_repeat = 0;
  std::optional<double> bench_timeout;
  auto* bench = app.add_subcommand("bench", "Evaluate a final population on benchmark files");
  bench->add_option("--artifact", bench_artifact, "Artifact directory")->required();
  bench->add_option("--benchmarks", bench_dir, "Directory of benchmark files")->required();
  bench->add_option("--repeat", bench_repeat, "Repeat index");
  bench->add_option("--out", bench_out, "CSV output ('-' for stdout)");
  bench->add_option("--timeout", bench_timeout, "Per-instance worker timeout (seconds)");

  std::string sel_matrix, sel_out;
  std::size_t sel_size = 10;
  auto* select = app.add_subcommand("select", "Greedy CPM selection over a matrix.csv");
  select->add_option("--matrix", sel_matrix, "matrix.csv")->required();
  select->add_option("--size", sel_size, "Set size");
  select->add_option("--out", sel_out, "JSON output ('-' for stdout)");

  std::uint64_t ver_seed = 0;
  std::size_t ver_t2 = 1000, ver_t3 = 200;
  auto* verify = app.add_subcommand("verify", "Property battery for the set objective and greedy selection");
  verify->add_option("--seed", ver_seed, "Seed");
  verify->add_option("--trials", ver_t2, "Monotonicity/supermodularity trials");
  verify->add_option("--bound-trials", ver_t3, "Greedy-bound trials");

  std::string rep_artifact;
  bool rep_stdout = false;
  auto* report = app.add_subcommand("report", "Re-emit report.json from an artifact directory");
  report->add_option("--artifact", rep_artifact, "Artifact directory")->required();
  report->add_flag("--stdout", rep_stdout, "Print instead of rewriting the files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*run) return cmd_run(rf);
    if (*gen) return cmd_gen(gen_config, gen_task, gen_seed, gen_count, gen_out);
    if (*bench) return cmd_bench(bench_artifact, bench_dir, bench_repeat, bench_out, bench_timeout);
    if (*select) return cmd_select(sel_matrix, sel_size, sel_out);
    if (*verify) return cmd_verify(ver_seed, ver_t2, ver_t3);
    if (*report) return cmd_report(rep_artifact, rep_stdout);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const eohs::Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", e.code().c_str(), e.what());
    return e.code() == "config" ? kConfigError : kRuntimeError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeError;
  }
  return kOk;
}
