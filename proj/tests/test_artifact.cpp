#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "eohs/artifact.hpp"
#include "eohs/engine.hpp"
#include "fixtures.hpp"

using namespace eohs;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int n = 0;
    path = fs::temp_directory_path() / ("eohs-art-" + std::to_string(::getpid()) + "-" + std::to_string(n++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name) << text;
    return path / name;
  }
};

WorkerBudget ref_budget() {
  WorkerBudget b;
  b.pool_size = 2;
  b.command = {EOHS_REFWORKER_PATH};
  return b;
}

Heuristic interp(const std::string& builtin) {
  return make_heuristic(builtin, builtin, builtin_source(builtin), Origin::init, {}, builtin_task(builtin));
}

}  // namespace

TEST(Matrix, CsvRoundTripKeepsBitsAndInvalidRows) {
  PerformanceMatrix m({"a", "b", "c"});
  m.add_row("h0", PerformanceVector::of({0.1, 1.0 / 3.0, 2e-17}));
  m.add_row("h1", PerformanceVector::invalid(3));
  m.add_row("h2", PerformanceVector::of({0.0, 5.0, 0.7}));
  const auto back = parse_matrix_csv(matrix_csv(m));
  ASSERT_EQ(back.rows(), 3u);
  EXPECT_EQ(back.instance_ids(), m.instance_ids());
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(back.heuristic_id(r), m.heuristic_id(r));
    EXPECT_EQ(back.row(r), m.row(r));
  }
}

TEST(Matrix, CsvErrorsCarryLineNumbers) {
  try {
    parse_matrix_csv("heuristic,a,b\nh0,1,2\nh1,1\n", "m.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("m.csv:3"), std::string::npos);
  }
  EXPECT_THROW(parse_matrix_csv("heuristic,a\nh0,zz\n"), Error);
  EXPECT_THROW(parse_matrix_csv("name,a\n"), Error);
}

TEST(Paths, RepeatSuffixOnlyWithSeveralRepeats) {
  const auto one = artifact_paths("out", 0, 1);
  EXPECT_EQ(one.matrix, fs::path("out/matrix.csv"));
  const auto many = artifact_paths("out", 2, 3);
  EXPECT_EQ(many.heuristics, fs::path("out/heuristics_r2.jsonl"));
  EXPECT_EQ(many.convergence, fs::path("out/convergence_r2.csv"));
  EXPECT_EQ(many.report, fs::path("out/report_r2.json"));
  EXPECT_EQ(repeat_seed(9, 0), 9u);
  EXPECT_NE(repeat_seed(9, 1), repeat_seed(9, 2));
}

TEST(Config, ParsesAndRejectsUnknownKeys) {
  const auto c = experiment_from_json(json::parse(R"({
    "task": "tsp", "seed": 3, "population_size": 4, "eval_budget": 40,
    "ablation": {"disable_cpm": true},
    "llm": {"mock": true},
    "worker": {"timeout_s": 2.5, "pool_size": 3},
    "instances": {"generate": {"count": 6}}
  })"));
  EXPECT_EQ(c.evo.task, Task::tsp);
  EXPECT_EQ(c.evo.population_size, 4u);
  EXPECT_TRUE(c.evo.ablation.disable_cpm);
  EXPECT_EQ(c.evo.worker.pool_size, 3u);
  EXPECT_EQ(c.instances.spec.count, 6u);
  EXPECT_EQ(c.instances.spec.task, Task::tsp);
  EXPECT_EQ(variant_label(c.evo.ablation), "EoH-S w/o CPM");

  auto code_of = [](const char* text) {
    try {
      experiment_from_json(json::parse(text));
    } catch (const Error& e) {
      return e.code();
    }
    return std::string("ok");
  };
  EXPECT_EQ(code_of(R"({"populaton_size": 4})"), "config");
  EXPECT_EQ(code_of(R"({"instances": {"generate": {"items": [20, 40]}}})"), "config");
  EXPECT_EQ(code_of(R"({"worker": {"timeout": 3}})"), "config");
  EXPECT_EQ(code_of(R"({"population_size": 10, "eval_budget": 5})"), "config");
  EXPECT_EQ(code_of(R"({"ablation": {"disable_cs": true, "disable_ls": true}})"), "config");
  EXPECT_EQ(code_of(R"({"llm": {"mock": false}})"), "config");
  EXPECT_EQ(code_of(R"({"seed": "zero"})"), "config");
  EXPECT_EQ(code_of(R"({"task": "knapsack"})"), "config");
  EXPECT_EQ(code_of(R"({})"), "ok");
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c;
  c.evo.task = Task::cvrp;
  c.evo.seed = 77;
  c.evo.population_size = 6;
  c.evo.eval_budget = 60;
  c.evo.ablation.disable_ls = true;
  c.instances.spec = GeneratorSpec::training(Task::cvrp, 77);
  c.instances.spec.count = 12;
  c.repeats = 2;
  const auto back = experiment_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Run, WriteAndRebuildReport) {
  TempDir d;
  auto spec = GeneratorSpec::training(Task::obp, 1);
  spec.count = 6;
  spec.obp.items = {30, 60};
  const auto insts = generate(spec);
  ExperimentConfig cfg;
  cfg.evo.population_size = 3;
  cfg.evo.eval_budget = 9;
  cfg.evo.seed = 1;
  cfg.evo.ablation.disable_cpm = true;
  cfg.instances.spec = spec;
  cfg.repeats = 2;
  detail::write_text(d.path / "config.json", to_json(cfg).dump(2));

  Executor ex(insts, ref_budget());
  std::vector<std::string> ids;
  for (const auto& i : insts) ids.push_back(i.id);
  for (int r = 0; r < 2; ++r) {
    auto evo = cfg.evo;
    evo.seed = repeat_seed(cfg.evo.seed, r);
    MockGenerator g(evo.seed);
    const auto st = run(evo, g, ex, ids);
    write_run(d.path, st, evo, r, 2);
    const auto p = artifact_paths(d.path, r, 2);
    for (const auto& f : {p.heuristics, p.matrix, p.convergence, p.report}) EXPECT_TRUE(fs::exists(f)) << f;

    const auto written = json::parse(detail::read_text(p.report));
    EXPECT_EQ(written["variant"], "EoH-S w/o CPM");
    EXPECT_EQ(written["final_population"].size(), 3u);
    EXPECT_EQ(written["contributors"].size(), 6u);
    EXPECT_EQ(rebuild_report(d.path, r, 2), written);

    const auto archive = read_heuristics(p.heuristics);
    ASSERT_EQ(archive.size(), st.archive.size());
    int members = 0;
    for (const auto& a : archive) members += a.final_rank >= 0;
    EXPECT_EQ(members, 3);
    EXPECT_EQ(archive[0].heuristic.dedupe_key, st.archive[0].dedupe_key);
  }
  EXPECT_FALSE(fs::exists(d.path / "matrix.csv"));
}

TEST(Bench, SingletonSetEqualsSingle) {
  std::vector<ProblemInstance> insts{fixtures::obp(100, {60, 50, 40, 30}, "a"),
                                     fixtures::obp(100, {20, 90, 30, 70, 40}, "b")};
  const auto t = bench({interp("first_fit")}, 0, insts, ref_budget());
  ASSERT_EQ(t.rows.size(), 2u);
  for (const auto& r : t.rows) {
    EXPECT_EQ(r.set_gap, r.single_gap);
    EXPECT_EQ(r.best_heuristic, "first_fit");
  }
}

TEST(Bench, SetGapIsPerInstanceMinimum) {
  std::mt19937_64 rng(4);
  std::vector<ProblemInstance> insts;
  for (int i = 0; i < 6; ++i) {
    std::vector<double> items(60);
    for (double& x : items) x = 1 + static_cast<double>(rng() % 99);
    insts.push_back(fixtures::obp(100, items, "i" + std::to_string(i)));
  }
  const std::vector<Heuristic> pop{interp("first_fit"), interp("best_fit")};
  const auto t = bench(pop, 1, insts, ref_budget());
  ASSERT_EQ(t.rows.size(), 6u);
  for (std::size_t i = 0; i < insts.size(); ++i) {
    const double ff = evaluate(builtin("first_fit"), insts[i]).gap;
    const double bf = evaluate(builtin("best_fit"), insts[i]).gap;
    EXPECT_EQ(t.rows[i].set_gap, std::min(ff, bf));
    EXPECT_EQ(t.rows[i].single_gap, bf);
  }
  EXPECT_LE(t.mean_set_gap(), t.mean_single_gap());
  const auto csv = bench_csv(t);
  EXPECT_EQ(csv.rfind("instance,set_gap,single_gap,best_heuristic\n", 0), 0u);
  EXPECT_NE(csv.find("\nmean,"), std::string::npos);
}

TEST(Bench, EmptyOrBrokenDirectoryWarns) {
  TempDir d;
  std::vector<std::string> warnings;
  EXPECT_TRUE(load_benchmark_dir(d.path, Task::obp, warnings).empty());
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("no loadable"), std::string::npos);

  warnings.clear();
  d.write("a.txt", "2\n10\n5\n5\n");
  d.write("b.txt", "2\n10\ngarbage\n5\n");
  const auto got = load_benchmark_dir(d.path, Task::obp, warnings);
  EXPECT_EQ(got.size(), 1u);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("b.txt"), std::string::npos);
  EXPECT_THROW(load_benchmark_dir(d.path / "missing", Task::obp, warnings), Error);
}
