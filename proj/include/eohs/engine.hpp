#pragma once

// The evolutionary loop: initialization from the init prompt, CS/LS
// reproduction, budgeted evaluation, CPM population update.

#include <algorithm>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "eohs/core.hpp"
#include "eohs/exec.hpp"
#include "eohs/llm.hpp"
#include "eohs/metrics.hpp"
#include "eohs/selection.hpp"

namespace eohs {

struct ConvergenceRecord {
  std::size_t evals_used = 0;
  double population_cpi = 0.0;
  double best_single_mean = 0.0;  // best member mean in the population
  int generation = 0;
  friend bool operator==(const ConvergenceRecord&, const ConvergenceRecord&) = default;
};

struct RunState {
  std::vector<Heuristic> archive;  // archive[r] was evaluated into matrix row r
  PerformanceMatrix matrix;
  Population population;
  std::size_t evals_used = 0;
  int generation = 0;
  std::vector<ConvergenceRecord> convergence;
  std::mt19937_64 rng;
  std::uint64_t generator_calls = 0;
  std::set<std::string> seen_keys;
  std::vector<std::string> log;  // skipped replies, failed evaluations

  std::vector<Heuristic> members() const {
    std::vector<Heuristic> out;
    for (std::size_t r : population.members()) out.push_back(archive[r]);
    return out;
  }
};

using ProgressFn = std::function<void(const RunState&)>;

namespace detail {

enum class Attempt { added_valid, added_invalid, skipped };

/// One generator call + evaluation. Returns whether a row was added.
inline Attempt attempt_offspring(RunState& st, const EvolutionConfig& cfg, Generator& gen, Evaluator& ev,
                                 PromptBundle prompt, Origin origin, std::size_t* row_out) {
  const std::string tag = "gen " + std::to_string(st.generation) + " call " + std::to_string(st.generator_calls);
  std::string raw;
  try {
    raw = gen.generate(prompt, st.generator_calls++);
  } catch (const Error& e) {
    st.log.push_back(tag + ": generator error: " + e.what());
    return Attempt::skipped;
  }
  Heuristic h;
  try {
    const GeneratorReply reply = parse_reply(raw);
    std::vector<std::string> parent_ids;
    for (const auto& p : prompt.parents) parent_ids.push_back(p.id);
    h = make_heuristic("h" + std::to_string(st.archive.size()), reply.thought, reply.code, origin,
                       std::move(parent_ids), cfg.task);
  } catch (const Error& e) {
    st.log.push_back(tag + ": unusable reply (" + e.code() + "): " + e.what());
    return Attempt::skipped;
  }
  if (st.seen_keys.count(h.dedupe_key)) {
    st.log.push_back(tag + ": duplicate of an evaluated heuristic");
    return Attempt::skipped;
  }
  PerformanceVector v = ev.evaluate(h);
  ++st.evals_used;
  st.seen_keys.insert(h.dedupe_key);
  const bool valid = v.valid();
  if (!valid) {
    std::string why;
    if (auto* ex = dynamic_cast<Executor*>(&ev)) why = ": " + ex->last_failure();
    st.log.push_back(tag + ": " + h.id + " invalid" + why);
  }
  const std::size_t row = st.matrix.add_row(h.id, std::move(v));
  st.archive.push_back(std::move(h));
  if (row_out) *row_out = row;
  return valid ? Attempt::added_valid : Attempt::added_invalid;
}

inline void record(RunState& st) {
  ConvergenceRecord rec;
  rec.evals_used = st.evals_used;
  rec.generation = st.generation;
  const auto& m = st.population.members();
  rec.population_cpi = cpi_value(st.matrix, m);
  rec.best_single_mean = kInvalidScore;
  for (std::size_t r : m) rec.best_single_mean = std::min(rec.best_single_mean, st.matrix.row(r).mean());
  st.convergence.push_back(rec);
}

}  // namespace detail

/// Fills the initial population with n distinct valid heuristics from the
/// init prompt. Every evaluation counts one against the budget.
inline RunState initialize(const EvolutionConfig& cfg, Generator& gen, Evaluator& ev,
                           std::vector<std::string> instance_ids) {
  cfg.validate();
  if (instance_ids.size() != ev.instance_count()) throw Error("config", "instance id count mismatch");
  RunState st;
  st.matrix = PerformanceMatrix(std::move(instance_ids));
  st.rng.seed(derive_seed(cfg.seed, 0x656e67696e65ULL));
  std::vector<std::size_t> members;
  int consecutive_failures = 0;
  while (members.size() < cfg.population_size) {
    if (st.evals_used >= cfg.eval_budget) {
      throw Error("init", "evaluation budget exhausted with " + std::to_string(members.size()) + " of " +
                              std::to_string(cfg.population_size) + " heuristics; log:\n" +
                              [&] {
                                std::string s;
                                for (const auto& l : st.log) s += "  " + l + "\n";
                                return s;
                              }());
    }
    std::size_t row = 0;
    const auto a = detail::attempt_offspring(st, cfg, gen, ev, build_prompt(PromptKind::init, cfg.task, {}),
                                             Origin::init, &row);
    if (a == detail::Attempt::added_valid) {
      members.push_back(row);
      consecutive_failures = 0;
      continue;
    }
    if (++consecutive_failures > cfg.retries) {
      std::string s;
      for (const auto& l : st.log) s += "  " + l + "\n";
      throw Error("init", "retry budget exhausted after " + std::to_string(cfg.retries) +
                              " consecutive failures; log:\n" + s);
    }
  }
  st.population = Population(members, 0, st.archive, st.matrix);
  detail::record(st);
  return st;
}

/// The next population from `candidates` (row indices).
inline std::vector<std::size_t> select_population(const RunState& st, const EvolutionConfig& cfg,
                                                  const std::vector<std::size_t>& candidates) {
  const std::size_t n = cfg.population_size;
  if (cfg.ablation.disable_cpm) {
    auto ranked = rank_by_average(st.matrix, candidates);
    ranked.resize(std::min(n, ranked.size()));
    return ranked;
  }
  return cpm_select(st.matrix, candidates, std::min(n, candidates.size())).chosen;
}

/// Produces up to n offspring and replaces the population.
inline void evolve_generation(RunState& st, const EvolutionConfig& cfg, Generator& gen, Evaluator& ev) {
  if (st.evals_used >= cfg.eval_budget) throw Error("engine", "evaluation budget already exhausted");
  const auto& current = st.population.members();
  std::vector<std::size_t> offspring;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t k = 0; k < cfg.population_size && st.evals_used < cfg.eval_budget; ++k) {
    const bool use_cs = unit(st.rng) < cfg.cs_probability();
    PromptBundle prompt;
    if (use_cs) {
      const auto [a, b] = select_cs_parents(st.matrix, current);
      prompt = build_prompt(PromptKind::cs, cfg.task, {st.archive[a], st.archive[b]});
    } else {
      const std::size_t p = select_ls_parent(st.matrix, current, st.rng);
      prompt = build_prompt(PromptKind::ls, cfg.task, {st.archive[p]});
    }
    std::size_t row = 0;
    if (detail::attempt_offspring(st, cfg, gen, ev, std::move(prompt), use_cs ? Origin::cs : Origin::ls, &row) ==
        detail::Attempt::added_valid) {
      offspring.push_back(row);
    }
  }
  std::vector<std::size_t> candidates(current.begin(), current.end());
  candidates.insert(candidates.end(), offspring.begin(), offspring.end());
  auto next = select_population(st, cfg, candidates);
  if (cfg.elitist_guard && cpi_value(st.matrix, current) < cpi_value(st.matrix, next)) {
    next.assign(current.begin(), current.end());
  }
  ++st.generation;
  st.population = Population(std::move(next), st.generation, st.archive, st.matrix);
  detail::record(st);
}

/// initialize + evolve_generation until the budget is spent, or until a
/// generation evaluates nothing.
inline RunState run(const EvolutionConfig& cfg, Generator& gen, Evaluator& ev,
                    std::vector<std::string> instance_ids, const ProgressFn& progress = {}) {
  RunState st = initialize(cfg, gen, ev, std::move(instance_ids));
  if (progress) progress(st);
  while (st.evals_used < cfg.eval_budget) {
    const std::size_t before = st.evals_used;
    evolve_generation(st, cfg, gen, ev);
    if (progress) progress(st);
    if (st.evals_used == before) {
      st.log.push_back("stopping: generation " + std::to_string(st.generation) + " evaluated nothing");
      break;
    }
  }
  return st;
}

struct SetSizePoint {
  std::size_t size = 0;
  double cpi = 0.0;
};

/// CPI of the greedy CPM selection of each size from `pool`.
inline std::vector<SetSizePoint> cpi_vs_setsize(const PerformanceMatrix& matrix, std::span<const std::size_t> pool,
                                                std::span<const std::size_t> sizes) {
  if (sizes.empty()) return {};
  const std::size_t biggest = *std::max_element(sizes.begin(), sizes.end());
  if (*std::min_element(sizes.begin(), sizes.end()) < 1) throw Error("selection", "set size must be >= 1");
  // Greedy picks are prefix-stable, so one run to the largest size serves all.
  const auto trace = cpm_select(matrix, pool, biggest).cpi_trace;
  std::vector<SetSizePoint> out;
  for (std::size_t s : sizes) out.push_back({s, trace[s - 1]});
  return out;
}

}  // namespace eohs
