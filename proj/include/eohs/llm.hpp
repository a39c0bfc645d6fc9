#pragma once

// Prompts, reply parsing, and heuristic generators: an offline mock and an
// OpenAI-compatible chat-completions client.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <random>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include "eohs/core.hpp"
#include "httplib.h"

namespace eohs {

enum class PromptKind { init, cs, ls };

inline std::string_view to_string(PromptKind k) {
  switch (k) {
    case PromptKind::init: return "init";
    case PromptKind::cs: return "cs";
    case PromptKind::ls: return "ls";
  }
  return "?";
}

struct PromptBundle {
  PromptKind kind = PromptKind::init;
  std::string text;
  Task task = Task::obp;
  std::vector<Heuristic> parents;
};

inline std::string_view task_description(Task task) {
  switch (task) {
    case Task::obp:
      return "Implement a function that returns the priority with which we want to add an item to each bin.";
    case Task::tsp:
      return "Given a set of nodes with their coordinates, you need to find the shortest route that visits "
             "each node once and returns to the starting node. The task can be solved step-by-step by "
             "starting from the current node and iteratively choosing the next node. Help me design a novel "
             "algorithm that is different from the algorithms in literature to select the next node in each "
             "step.";
    case Task::cvrp:
      return "Given a set of customers and a fleet of vehicles with limited capacity, the task is to design a "
             "novel algorithm to select the next node in each step, with the objective of minimizing the "
             "total cost.";
  }
  return "";
}

inline std::string_view task_template(Task task) {
  switch (task) {
    case Task::obp:
      return R"(import numpy as np
def priority(item: float, bins: np.ndarray) -> np.ndarray:
    """Returns priority with which we want to add item to each bin.
    Args:
        item: Size of item to be added to the bin.
        bins: Array of capacities for each bin.
    Return:
        Array of same size as bins with priority score of each bin.
    """
    return item - bins
)";
    case Task::tsp:
      return R"(import numpy as np
def select_next_node(current_node: int, destination_node: int, unvisited_nodes: np.ndarray, distance_matrix: np.ndarray) -> int:
    """
    Design a novel algorithm to select the next node in each step.

    Args:
    current_node: ID of the current node.
    destination_node: ID of the destination node.
    unvisited_nodes: Array of IDs of unvisited nodes.
    distance_matrix: Distance matrix of nodes.

    Return:
    ID of the next node to visit.
    """
    next_node = unvisited_nodes[0]
    return next_node
)";
    case Task::cvrp:
      return R"(import numpy as np
def select_next_node(current_node: int, depot: int, unvisited_nodes: np.ndarray, rest_capacity: np.ndarray, demands: np.ndarray, distance_matrix: np.ndarray) -> int:
    """Design a novel algorithm to select the next node in each step.
    Args:
        current_node: ID of the current node.
        depot: ID of the depot.
        unvisited_nodes: Array of IDs of unvisited nodes.
        rest_capacity: rest capacity of vehicle
        demands: demands of nodes
        distance_matrix: Distance matrix of nodes.
    Return:
        ID of the next node to visit.
    """
    best_score = -1
    next_node = -1
    for node in unvisited_nodes:
        demand = demands[node]
        distance = distance_matrix[current_node][node]
        if demand <= rest_capacity:
            score = demand / distance
            if score > best_score:
                best_score = score
                next_node = node
    return next_node
)";
  }
  return "";
}

namespace detail {

inline std::string embed(const Heuristic& h, std::size_t number) {
  std::string s = "No. " + std::to_string(number) + " algorithm's description and the corresponding code are:\n";
  s += h.thought + "\n```python\n" + h.code;
  if (!h.code.empty() && h.code.back() != '\n') s += '\n';
  s += "```\n";
  return s;
}

}  // namespace detail

inline PromptBundle build_prompt(PromptKind kind, Task task, std::vector<Heuristic> parents) {
  const std::size_t want = kind == PromptKind::init ? 0 : kind == PromptKind::cs ? 2 : 1;
  if (parents.size() != want) {
    throw Error("prompt", std::string(to_string(kind)) + " prompt needs " + std::to_string(want) +
                              " parent(s), got " + std::to_string(parents.size()));
  }
  std::string t(task_description(task));
  t += "\n\n";
  if (kind == PromptKind::cs) {
    t += "I have 2 existing algorithms with their codes as follows:\n";
    t += detail::embed(parents[0], 1) + detail::embed(parents[1], 2) + "\n";
    t += "These algorithms are effective for solving different instance distributions. Please help me "
         "create a new algorithm that is different from the given ones.\n\n";
  } else if (kind == PromptKind::ls) {
    t += "I have one algorithm with its code as follows:\n";
    t += detail::embed(parents[0], 1) + "\n";
    t += "Please assist me in creating an improved version of the algorithm provided.\n\n";
  }
  t += "First, describe your new algorithm and main steps in one sentence. The description must be inside "
       "within boxed {{}}.\n\n";
  t += "Next, implement the following Python function:\n";
  t += task_template(task);
  t += "\n\nDo not give additional explanations.";
  return PromptBundle{kind, std::move(t), task, std::move(parents)};
}

// ---------------------------------------------------------------------------
// Reply parsing

struct GeneratorReply {
  std::string raw;
  std::string thought;
  std::string code;
};

inline GeneratorReply parse_reply(const std::string& raw) {
  if (detail::trim(raw).empty()) throw Error("no-thought", "empty reply");
  GeneratorReply r;
  r.raw = raw;
  const auto open = raw.find("{{");
  const auto close = open == std::string::npos ? std::string::npos : raw.find("}}", open + 2);
  if (close == std::string::npos) throw Error("no-thought", "reply has no {{...}} description");
  r.thought = std::string(detail::trim(std::string_view(raw).substr(open + 2, close - open - 2)));

  if (const auto fence = raw.find("```"); fence != std::string::npos) {
    auto body = raw.find('\n', fence);
    const auto end = body == std::string::npos ? std::string::npos : raw.find("```", body + 1);
    if (end != std::string::npos) {
      r.code = std::string(detail::trim(std::string_view(raw).substr(body + 1, end - body - 1)));
    }
  }
  if (r.code.empty()) {
    // Fallback: from the first line that starts a definition (or its imports) to the end.
    std::size_t pos = 0, start = std::string::npos;
    while (pos < raw.size()) {
      const auto eol = raw.find('\n', pos);
      const std::string_view line = std::string_view(raw).substr(pos, (eol == std::string::npos ? raw.size() : eol) - pos);
      if (line.starts_with("def ")) {
        start = pos;
        break;
      }
      if (eol == std::string::npos) break;
      pos = eol + 1;
    }
    if (start != std::string::npos) r.code = std::string(detail::trim(std::string_view(raw).substr(start)));
  }
  if (r.code.empty()) throw Error("no-code", "reply contains no code");
  r.code += '\n';
  return r;
}

// ---------------------------------------------------------------------------
// Generators

class Generator {
 public:
  virtual ~Generator() = default;
  /// Raw reply text for `prompt`; `call_index` numbers calls within a run.
  virtual std::string generate(const PromptBundle& prompt, std::uint64_t call_index) = 0;
};

/// Offline generator: renders linear-combination scoring rules whose weights
/// come from an rng seeded by (seed, call_index). LS perturbs the parent's
/// weights; CS draws fresh weights distinct from both parents.
class MockGenerator : public Generator {
 public:
  explicit MockGenerator(std::uint64_t seed) : seed_(seed) {}

  std::string generate(const PromptBundle& prompt, std::uint64_t call_index) override {
    std::mt19937_64 rng(derive_seed(seed_ ^ 0x6d6f636bULL, call_index));
    Weights w;
    if (prompt.kind == PromptKind::ls) {
      w = perturb(parse_weights(prompt.parents.at(0).code, prompt.task, rng), prompt.task, rng);
    } else {
      w = draw(prompt.task, rng);
    }
    std::string code = render(prompt.task, w);
    if (prompt.kind == PromptKind::cs) {
      for (int attempt = 0; attempt < 16; ++attempt) {
        const auto key = make_dedupe_key(code);
        if (key != prompt.parents[0].dedupe_key && key != prompt.parents[1].dedupe_key) break;
        code = render(prompt.task, draw(prompt.task, rng));
      }
    }
    return "{{" + describe(prompt.task, w) + "}}\n```python\n" + code + "```\n";
  }

  using Weights = std::map<std::string, double>;

  static const std::vector<std::string>& weight_names(Task task) {
    static const std::vector<std::string> obp{"w_fit", "w_first", "w_target", "t_residual", "w_snug"};
    static const std::vector<std::string> tsp{"w_near", "w_home", "w_power"};
    static const std::vector<std::string> cvrp{"w_near", "w_demand", "w_depot"};
    return task == Task::obp ? obp : task == Task::tsp ? tsp : cvrp;
  }

  /// Reads `w_* = value` lines from mock-style code; missing names are drawn.
  static Weights parse_weights(const std::string& code, Task task, std::mt19937_64& rng) {
    Weights w = draw(task, rng);
    static const std::regex line(R"(^\s*([wt]_[a-z_]+)\s*=\s*(-?[0-9.]+(?:e-?[0-9]+)?)\s*$)");
    std::size_t pos = 0;
    while (pos < code.size()) {
      auto eol = code.find('\n', pos);
      if (eol == std::string::npos) eol = code.size();
      std::smatch m;
      const std::string l = code.substr(pos, eol - pos);
      if (std::regex_match(l, m, line) && w.count(m[1])) w[m[1]] = std::stod(m[2]);
      pos = eol + 1;
    }
    return w;
  }

 private:
  static double round2(double x) { return std::round(x * 100.0) / 100.0; }

  static Weights draw(Task task, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Weights w;
    if (task == Task::obp) {
      w["w_fit"] = round2(u(rng) * 2.0);
      w["w_first"] = round2(u(rng) < 0.3 ? u(rng) * 0.5 : 0.0);
      w["w_target"] = round2(u(rng) < 0.5 ? u(rng) * 2.0 : 0.0);
      w["t_residual"] = round2(u(rng) * 30.0);
      w["w_snug"] = round2(u(rng) < 0.5 ? u(rng) * 5.0 : 0.0);
    } else if (task == Task::tsp) {
      w["w_near"] = round2(0.5 + u(rng));
      w["w_home"] = round2(u(rng) * 0.6 - 0.2);
      w["w_power"] = round2(0.5 + u(rng) * 1.5);
    } else {
      w["w_near"] = round2(0.5 + u(rng));
      w["w_demand"] = round2(u(rng) * 0.4);
      w["w_depot"] = round2(u(rng) * 0.6 - 0.2);
    }
    return w;
  }

  static Weights perturb(Weights w, Task task, std::mt19937_64& rng) {
    std::normal_distribution<double> noise(0.0, 0.15);
    for (auto& [name, value] : w) {
      double v = value + noise(rng) * (name == "t_residual" ? 10.0 : 1.0);
      if (name == "t_residual") v = std::clamp(v, 0.0, 50.0);
      if (task == Task::tsp && name == "w_power") v = std::clamp(v, 0.25, 3.0);
      if (task != Task::obp && name == "w_near") v = std::max(v, 0.05);
      value = round2(v);
    }
    return w;
  }

  static std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x == 0.0 ? 0.0 : x);
    return buf;
  }

  static std::string render(Task task, const Weights& w) {
    std::string c = "import numpy as np\n";
    if (task == Task::obp) {
      c += "def priority(item: float, bins: np.ndarray) -> np.ndarray:\n";
      for (const auto& n : weight_names(task)) c += "    " + n + " = " + fmt(w.at(n)) + "\n";
      c += "    waste = bins - item\n"
           "    score = -w_fit * waste\n"
           "    score = score - w_first * np.arange(len(bins))\n"
           "    score = score - w_target * np.abs(waste - t_residual)\n"
           "    score = score + w_snug * np.where(waste < 1.0, 1.0, 0.0)\n"
           "    return score\n";
    } else if (task == Task::tsp) {
      c += "def select_next_node(current_node: int, destination_node: int, unvisited_nodes: np.ndarray, "
           "distance_matrix: np.ndarray) -> int:\n";
      for (const auto& n : weight_names(task)) c += "    " + n + " = " + fmt(w.at(n)) + "\n";
      c += "    near = distance_matrix[current_node][unvisited_nodes]\n"
           "    home = distance_matrix[destination_node][unvisited_nodes]\n"
           "    score = w_near * near ** w_power - w_home * home\n"
           "    return unvisited_nodes[np.argmin(score)]\n";
    } else {
      c += "def select_next_node(current_node: int, depot: int, unvisited_nodes: np.ndarray, "
           "rest_capacity: np.ndarray, demands: np.ndarray, distance_matrix: np.ndarray) -> int:\n";
      for (const auto& n : weight_names(task)) c += "    " + n + " = " + fmt(w.at(n)) + "\n";
      c += "    near = distance_matrix[current_node][unvisited_nodes]\n"
           "    back = distance_matrix[depot][unvisited_nodes]\n"
           "    demand = demands[unvisited_nodes]\n"
           "    feasible = demand <= rest_capacity\n"
           "    if not np.any(feasible):\n"
           "        return depot\n"
           "    score = w_near * near - w_demand * demand / (rest_capacity + 1.0) - w_depot * back\n"
           "    return unvisited_nodes[np.argmin(np.where(feasible, score, np.inf))]\n";
    }
    return c;
  }

  static std::string describe(Task task, const Weights& w) {
    if (task == Task::obp) {
      return "Score bins by weighted best-fit waste " + fmt(w.at("w_fit")) + ", a pull toward residual " +
             fmt(w.at("t_residual")) + " and a bonus for near-perfect fits.";
    }
    if (task == Task::tsp) {
      return "Pick the unvisited node minimizing powered distance (exponent " + fmt(w.at("w_power")) +
             ") minus a weighted distance to the start.";
    }
    return "Pick the feasible customer minimizing distance minus demand utilisation and depot proximity terms.";
  }

  std::uint64_t seed_;
};

/// Live generator over an OpenAI-compatible /chat/completions endpoint.
class ChatClient : public Generator {
 public:
  explicit ChatClient(LlmSettings settings) : s_(std::move(settings)) {
    if (s_.endpoint.empty()) throw Error("config", "LLM endpoint is empty");
    static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(s_.endpoint, m, url)) throw Error("config", "bad LLM endpoint '" + s_.endpoint + "'");
    host_ = m[1];
    base_path_ = m[2].matched ? std::string(m[2]) : std::string();
    while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (host_.starts_with("https://")) throw Error("config", "https endpoints need a build with OpenSSL");
#endif
  }

  /// Attempts made by the most recent call.
  int last_attempts() const noexcept { return last_attempts_; }

  std::string generate(const PromptBundle& prompt, std::uint64_t) override {
    json body{{"model", s_.model},
              {"messages", json::array({{{"role", "user"}, {"content", prompt.text}}})},
              {"temperature", s_.temperature}};
    if (s_.max_tokens > 0) body["max_tokens"] = s_.max_tokens;
    httplib::Headers headers;
    if (const char* key = std::getenv(s_.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt < std::max(1, s_.attempts); ++attempt) {
      last_attempts_ = attempt + 1;
      if (attempt > 0) {
        const double wait = s_.backoff_base_s * std::pow(2.0, attempt - 1);
        std::this_thread::sleep_for(std::chrono::duration<double>(wait));
      }
      httplib::Client cli(host_);
      const auto t = std::chrono::duration<double>(s_.timeout_s);
      cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
      cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
      cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
      auto res = cli.Post(base_path_ + "/chat/completions", headers, body.dump(), "application/json");
      if (!res) {
        last_error = "network error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) throw Error("llm", "HTTP " + std::to_string(res->status) + ": " + res->body);
      try {
        return json::parse(res->body).at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const json::exception& e) {
        throw Error("llm", std::string("malformed completion: ") + e.what());
      }
    }
    throw Error("llm", "giving up after " + std::to_string(last_attempts_) + " attempts: " + last_error);
  }

 private:
  LlmSettings s_;
  std::string host_;
  std::string base_path_;
  int last_attempts_ = 0;
};

}  // namespace eohs
