#include <gtest/gtest.h>

#include <functional>
#include <map>
#include <random>

#include "eohs/engine.hpp"
#include "eohs/instances.hpp"
#include "eohs/pysubset.hpp"
#include "oracles.hpp"

using namespace eohs;

namespace {

// Heuristic "k" is `return bins * k`; its vector is looked up by k.
std::string code_for(int k) { return "def priority(item, bins):\n    return bins * " + std::to_string(k) + "\n"; }

int k_of(const std::string& code) {
  const auto p = code.rfind("* ");
  return std::stoi(code.substr(p + 2));
}

class ScriptedGenerator : public Generator {
 public:
  explicit ScriptedGenerator(std::function<std::string(const PromptBundle&, std::uint64_t)> f) : f_(std::move(f)) {}
  std::string generate(const PromptBundle& p, std::uint64_t i) override { return f_(p, i); }

 private:
  std::function<std::string(const PromptBundle&, std::uint64_t)> f_;
};

std::string reply(int k) { return "{{rule " + std::to_string(k) + "}}\n```python\n" + code_for(k) + "```\n"; }

class TableEvaluator : public Evaluator {
 public:
  TableEvaluator(std::size_t m, std::function<PerformanceVector(int)> f) : m_(m), f_(std::move(f)) {}
  PerformanceVector evaluate(const Heuristic& h) override {
    ++calls;
    return f_(k_of(h.code));
  }
  std::size_t instance_count() const override { return m_; }
  std::size_t calls = 0;

 private:
  std::size_t m_;
  std::function<PerformanceVector(int)> f_;
};

/// Runs generated code in-process on a fixed instance set.
class InProcessEvaluator : public Evaluator {
 public:
  explicit InProcessEvaluator(std::vector<ProblemInstance> insts) : insts_(std::move(insts)) {}
  PerformanceVector evaluate(const Heuristic& h) override {
    Decider d;
    try {
      d = pysub::load_decider(h.code, Task::obp);
    } catch (const Error&) {
      return PerformanceVector::invalid(insts_.size());
    }
    std::vector<double> gaps;
    for (const auto& inst : insts_) {
      const auto r = eohs::evaluate(d, inst);
      if (!r.valid()) return PerformanceVector::invalid(insts_.size());
      gaps.push_back(r.gap);
    }
    return PerformanceVector::of(std::move(gaps));
  }
  std::size_t instance_count() const override { return insts_.size(); }
  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& i : insts_) out.push_back(i.id);
    return out;
  }

 private:
  std::vector<ProblemInstance> insts_;
};

std::vector<std::string> ids(std::size_t m) {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < m; ++j) out.push_back("i" + std::to_string(j));
  return out;
}

// Deterministic pseudo-random row per k.
PerformanceVector noise_row(int k, std::size_t m) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(k) * 7919u);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::vector<double> v(m);
  for (double& x : v) x = u(rng);
  return PerformanceVector::of(std::move(v));
}

EvolutionConfig small_config(std::size_t n, std::size_t budget) {
  EvolutionConfig c;
  c.population_size = n;
  c.eval_budget = budget;
  c.seed = 11;
  return c;
}

std::vector<ProblemInstance> tiny_obp(std::size_t count) {
  auto s = GeneratorSpec::training(Task::obp, 4);
  s.count = count;
  s.obp.items = {40, 80};
  return generate(s);
}

}  // namespace

TEST(Engine, DuplicatesAreSkippedWithoutCost) {
  // calls 0,1 give k=1; the duplicate must not be evaluated.
  ScriptedGenerator g([](const PromptBundle&, std::uint64_t i) { return reply(i < 2 ? 1 : static_cast<int>(i)); });
  TableEvaluator ev(4, [](int k) { return noise_row(k, 4); });
  const auto st = initialize(small_config(3, 10), g, ev, ids(4));
  EXPECT_EQ(ev.calls, 3u);
  EXPECT_EQ(st.evals_used, 3u);
  EXPECT_EQ(st.generator_calls, 4u);
  EXPECT_EQ(st.archive.size(), 3u);
  bool logged = false;
  for (const auto& l : st.log) logged = logged || l.find("duplicate") != std::string::npos;
  EXPECT_TRUE(logged);
}

TEST(Engine, UnparsableRepliesCostNothing) {
  ScriptedGenerator g([](const PromptBundle&, std::uint64_t i) { return i % 2 ? reply(static_cast<int>(i)) : "no idea"; });
  TableEvaluator ev(4, [](int k) { return noise_row(k, 4); });
  const auto st = initialize(small_config(3, 10), g, ev, ids(4));
  EXPECT_EQ(st.evals_used, 3u);
  EXPECT_EQ(st.generator_calls, 6u);
}

TEST(Engine, InvalidEvaluationCostsOneAndStaysOut) {
  ScriptedGenerator g([](const PromptBundle&, std::uint64_t i) { return reply(static_cast<int>(i) + 1); });
  TableEvaluator ev(4, [](int k) { return k == 2 ? PerformanceVector::invalid(4) : noise_row(k, 4); });
  const auto st = initialize(small_config(3, 10), g, ev, ids(4));
  EXPECT_EQ(st.evals_used, 4u);
  EXPECT_EQ(st.matrix.rows(), 4u);
  EXPECT_FALSE(st.matrix.row(1).valid());
  for (std::size_t r : st.population.members()) EXPECT_NE(r, 1u);
}

TEST(Engine, BudgetOfTwoPopulationsIsOneGeneration) {
  ScriptedGenerator g([](const PromptBundle&, std::uint64_t i) { return reply(static_cast<int>(i) + 1); });
  TableEvaluator ev(6, [](int k) { return noise_row(k, 6); });
  const auto st = run(small_config(4, 8), g, ev, ids(6));
  EXPECT_EQ(st.generation, 1);
  EXPECT_EQ(st.evals_used, 8u);
  EXPECT_EQ(st.convergence.size(), 2u);
}

TEST(Engine, BudgetEqualToPopulationStopsAfterInit) {
  ScriptedGenerator g([](const PromptBundle&, std::uint64_t i) { return reply(static_cast<int>(i) + 1); });
  TableEvaluator ev(6, [](int k) { return noise_row(k, 6); });
  const auto st = run(small_config(4, 4), g, ev, ids(6));
  EXPECT_EQ(st.generation, 0);
  EXPECT_EQ(st.evals_used, 4u);
  EXPECT_EQ(st.population.size(), 4u);
}

TEST(Engine, DominatingOffspringEntersPopulation) {
  ScriptedGenerator g([](const PromptBundle& p, std::uint64_t i) {
    return p.kind == PromptKind::init ? reply(static_cast<int>(i) + 1) : reply(100 + static_cast<int>(i));
  });
  TableEvaluator ev(5, [](int k) { return k == 100 + 4 ? PerformanceVector::of({0, 0, 0, 0, 0}) : noise_row(k, 5); });
  auto cfg = small_config(4, 8);
  const auto st = run(cfg, g, ev, ids(5));
  ASSERT_EQ(st.archive[4].code, code_for(104));
  const auto& m = st.population.members();
  EXPECT_NE(std::find(m.begin(), m.end(), 4u), m.end());
  EXPECT_EQ(st.convergence.back().population_cpi, 0.0);
}

TEST(Engine, WithoutCpmKeepsTopMeans) {
  ScriptedGenerator g([](const PromptBundle&, std::uint64_t i) { return reply(static_cast<int>(i) + 1); });
  TableEvaluator ev(6, [](int k) { return noise_row(k, 6); });
  auto cfg = small_config(4, 12);
  cfg.ablation.disable_cpm = true;
  const auto st = run(cfg, g, ev, ids(6));
  std::vector<std::size_t> valid;
  for (std::size_t r = 0; r < st.matrix.rows(); ++r) valid.push_back(r);
  // every generation keeps the best means seen so far
  auto ranked = rank_by_average(st.matrix, valid);
  ranked.resize(4);
  EXPECT_EQ(st.population.members(), ranked);
}

TEST(Engine, InitRetriesExhausted) {
  ScriptedGenerator g([](const PromptBundle&, std::uint64_t) { return std::string("nothing useful"); });
  TableEvaluator ev(3, [](int k) { return noise_row(k, 3); });
  auto cfg = small_config(3, 100);
  cfg.retries = 5;
  try {
    initialize(cfg, g, ev, ids(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "init");
  }
  EXPECT_EQ(ev.calls, 0u);
}

TEST(Engine, InitBudgetExhausted) {
  ScriptedGenerator g([](const PromptBundle&, std::uint64_t i) { return reply(static_cast<int>(i) + 1); });
  TableEvaluator ev(3, [](int) { return PerformanceVector::invalid(3); });
  auto cfg = small_config(3, 4);
  cfg.retries = 100;
  EXPECT_THROW(initialize(cfg, g, ev, ids(3)), Error);
  EXPECT_EQ(ev.calls, 4u);
}

TEST(Engine, MockRunIsDeterministicAndWithinBudget) {
  InProcessEvaluator ev(tiny_obp(8));
  auto once = [&] {
    MockGenerator g(3);
    return run(small_config(5, 27), g, ev, ev.ids());
  };
  const auto a = once(), b = once();
  EXPECT_LE(a.evals_used, 27u);
  EXPECT_EQ(a.population.size(), 5u);
  EXPECT_EQ(a.convergence, b.convergence);
  EXPECT_EQ(a.population.members(), b.population.members());
  ASSERT_EQ(a.archive.size(), b.archive.size());
  for (std::size_t i = 0; i < a.archive.size(); ++i) EXPECT_EQ(a.archive[i].code, b.archive[i].code);
  // population CPI never rises under CPM with the incumbents in the pool
  for (std::size_t i = 1; i < a.convergence.size(); ++i) {
    EXPECT_LE(a.convergence[i].population_cpi, a.convergence[i - 1].population_cpi + 1e-15);
  }
}

TEST(Engine, SingleOperatorVariants) {
  InProcessEvaluator ev(tiny_obp(4));
  for (int which = 0; which < 2; ++which) {
    auto cfg = small_config(3, 12);
    (which ? cfg.ablation.disable_cs : cfg.ablation.disable_ls) = true;
    MockGenerator g(5);
    const auto st = run(cfg, g, ev, ev.ids());
    for (const auto& h : st.archive) {
      if (h.origin == Origin::init) continue;
      EXPECT_EQ(h.origin, which ? Origin::ls : Origin::cs);
    }
  }
}

TEST(SetSize, CurveIsNonIncreasingAndMatchesOracle) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  truth::Rows rows(12, std::vector<double>(20));
  for (auto& r : rows) {
    for (double& x : r) x = u(rng);
  }
  const auto m = PerformanceMatrix::from_rows(rows);
  std::vector<std::size_t> pool(12), sizes{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::iota(pool.begin(), pool.end(), 0);
  const auto curve = cpi_vs_setsize(m, pool, sizes);
  const auto chosen = cpm_select(m, pool, 10).chosen;
  ASSERT_EQ(curve.size(), 10u);
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const std::vector<std::size_t> prefix(chosen.begin(), chosen.begin() + static_cast<std::ptrdiff_t>(i + 1));
    EXPECT_NEAR(curve[i].cpi, truth::set_value(rows, prefix), 1e-12);
    if (i) {
      EXPECT_LE(curve[i].cpi, curve[i - 1].cpi);
    }
  }
  const std::vector<std::size_t> zero{0};
  EXPECT_THROW(cpi_vs_setsize(m, pool, zero), Error);
}
