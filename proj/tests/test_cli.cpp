#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "eohs/artifact.hpp"

using namespace eohs;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
};

// Runs the CLI with stderr discarded.
Outcome cli(const std::string& args) {
  const std::string cmd = std::string(EOHS_CLI_PATH) + " " + args + " 2>/dev/null";
  Outcome o;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return o;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) o.out.append(buf, n);
  const int st = ::pclose(p);
  o.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int n = 0;
    path = fs::temp_directory_path() / ("eohs-cli-" + std::to_string(::getpid()) + "-" + std::to_string(n++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

const char* kTinyConfig = R"({
  "task": "obp", "seed": 5, "population_size": 3, "eval_budget": 9,
  "worker": {"pool_size": 2},
  "instances": {"generate": {"count": 4, "obp": {"items": [20, 40]}}}
})";

}  // namespace

TEST(Cli, HelpAndUnknownFlag) {
  EXPECT_EQ(cli("--help").code, 0);
  EXPECT_EQ(cli("run --no-such-flag").code, 1);
  EXPECT_NE(cli("").code, 0);
}

TEST(Cli, BadConfigExitsOne) {
  TempDir d;
  std::ofstream(d.path / "bad.json") << R"({"population_sise": 3})";
  EXPECT_EQ(cli("run --config " + (d.path / "bad.json").string()).code, 1);
  std::ofstream(d.path / "broken.json") << "{";
  EXPECT_EQ(cli("run --config " + (d.path / "broken.json").string()).code, 1);
  EXPECT_EQ(cli("run --config " + (d.path / "missing.json").string()).code, 1);
}

TEST(Cli, MockRunIsByteReproducible) {
  TempDir d;
  std::ofstream(d.path / "cfg.json") << kTinyConfig;
  for (const char* out : {"a", "b"}) {
    const auto o = cli("run --mock-llm --config " + (d.path / "cfg.json").string() + " --out " + (d.path / out).string());
    ASSERT_EQ(o.code, 0);
  }
  for (const char* f : {"heuristics.jsonl", "matrix.csv", "convergence.csv", "report.json", "config.json"}) {
    ASSERT_TRUE(fs::exists(d.path / "a" / f)) << f;
    EXPECT_EQ(slurp(d.path / "a" / f), slurp(d.path / "b" / f)) << f;
  }
  // report rebuilds from the other files
  const auto rep = cli("report --stdout --artifact " + (d.path / "a").string());
  ASSERT_EQ(rep.code, 0);
  EXPECT_EQ(json::parse(rep.out), json::parse(slurp(d.path / "a" / "report.json")));

  // select over the written matrix agrees with the library
  const auto sel = cli("select --size 2 --matrix " + (d.path / "a" / "matrix.csv").string());
  ASSERT_EQ(sel.code, 0);
  const auto j = json::parse(sel.out);
  const auto m = read_matrix_csv(d.path / "a" / "matrix.csv");
  const auto pool = m.valid_rows();
  const auto lib = cpm_select(m, pool, 2);
  EXPECT_EQ(j["size"], 2);
  EXPECT_DOUBLE_EQ(j["cpi"].get<double>(), lib.cpi_trace.back());
}

TEST(Cli, RepeatsUseSuffixedFiles) {
  TempDir d;
  std::ofstream(d.path / "cfg.json") << kTinyConfig;
  const auto o = cli("run --mock-llm --repeats 2 --config " + (d.path / "cfg.json").string() + " --out " +
                     (d.path / "o").string());
  ASSERT_EQ(o.code, 0);
  EXPECT_TRUE(fs::exists(d.path / "o" / "matrix_r0.csv"));
  EXPECT_TRUE(fs::exists(d.path / "o" / "report_r1.json"));
  EXPECT_FALSE(fs::exists(d.path / "o" / "matrix.csv"));
}

TEST(Cli, GenWritesLoadableInstances) {
  TempDir d;
  const auto file = d.path / "i.jsonl";
  ASSERT_EQ(cli("gen --task cvrp --count 3 --seed 2 --out " + file.string()).code, 0);
  const auto insts = read_instances(file);
  ASSERT_EQ(insts.size(), 3u);
  for (const auto& i : insts) EXPECT_EQ(i.task, Task::cvrp);
  const auto s = cli("gen --task tsp --count 2 --seed 2");
  EXPECT_EQ(s.code, 0);
  EXPECT_EQ(std::count(s.out.begin(), s.out.end(), '\n'), 2);
}

TEST(Cli, VerifyPasses) {
  const auto o = cli("verify --trials 200 --bound-trials 30 --seed 4");
  EXPECT_EQ(o.code, 0);
  EXPECT_NE(o.out.find("verify: PASS"), std::string::npos);
}

TEST(Cli, BenchNeedsArguments) {
  EXPECT_EQ(cli("bench").code, 1);
  EXPECT_EQ(cli("select").code, 1);
  EXPECT_EQ(cli("report").code, 1);
}

TEST(Cli, BenchOverArtifact) {
  TempDir d;
  std::ofstream(d.path / "cfg.json") << kTinyConfig;
  ASSERT_EQ(cli("run --mock-llm --config " + (d.path / "cfg.json").string() + " --out " + (d.path / "a").string()).code, 0);
  fs::create_directories(d.path / "bpp");
  std::ofstream(d.path / "bpp" / "x.txt") << "4\n10\n6\n5\n4\n3\n";
  std::ofstream(d.path / "bpp" / "y.txt") << "2\n10\n9\n9\n";
  const auto o = cli("bench --artifact " + (d.path / "a").string() + " --benchmarks " + (d.path / "bpp").string());
  ASSERT_EQ(o.code, 0);
  EXPECT_EQ(o.out.rfind("instance,set_gap,single_gap,best_heuristic\n", 0), 0u);
  EXPECT_NE(o.out.find("\nx,"), std::string::npos);
  EXPECT_NE(o.out.find("\nmean,"), std::string::npos);
}
