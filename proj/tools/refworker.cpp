// eohs-refworker: runs generated heuristics (numpy-subset Python) over full
// OBP/TSP/CVRP episodes and answers the exec wire protocol on stdin/stdout.

#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "eohs/exec.hpp"
#include "eohs/problems.hpp"
#include "eohs/pysubset.hpp"

namespace {

using eohs::json;

struct Loaded {
  std::shared_ptr<const eohs::pysub::Program> program;
  std::optional<eohs::Task> bound_task;
  eohs::Decider decider;
};

std::string function_name_in(const std::string& code) {
  if (code.find("def priority") != std::string::npos) return "priority";
  return "select_next_node";
}

json handle(const json& req, std::optional<Loaded>& loaded) {
  json resp{{"id", req.contains("id") ? req["id"] : json(nullptr)}};
  const std::string op = req.value("op", "");
  if (op == "ping") {
    resp["ok"] = true;
  } else if (op == "load") {
    if (!req.contains("code") || !req["code"].is_string()) {
      resp["ok"] = false;
      resp["error"] = "bad-frame";
      return resp;
    }
    loaded.reset();
    const auto code = req["code"].get<std::string>();
    try {
      Loaded l;
      l.program = std::make_shared<const eohs::pysub::Program>(code, function_name_in(code));
      loaded = std::move(l);
      resp["ok"] = true;
    } catch (const std::exception& e) {
      resp["ok"] = false;
      resp["error"] = e.what();
    }
  } else if (op == "eval") {
    if (!loaded) {
      resp["ok"] = false;
      resp["error"] = "no-heuristic";
      return resp;
    }
    try {
      const eohs::Task task = eohs::parse_task(req.at("task").get<std::string>());
      const eohs::ProblemInstance inst = eohs::wire::instance(task, req.at("payload"));
      if (loaded->bound_task != task) {
        loaded->decider = eohs::pysub::make_decider(loaded->program, task);
        loaded->bound_task = task;
      }
      const eohs::EpisodeResult r = eohs::evaluate(loaded->decider, inst);
      if (r.violation) {
        resp["ok"] = false;
        resp["error"] = *r.violation;
      } else {
        resp["ok"] = true;
        resp["raw"] = r.raw;
        resp["trace"] = r.trace;
      }
    } catch (const json::exception&) {
      resp["ok"] = false;
      resp["error"] = "bad-frame";
    } catch (const std::exception& e) {
      resp["ok"] = false;
      resp["error"] = e.what();
    }
  } else {
    resp["ok"] = false;
    resp["error"] = "unknown op '" + op + "'";
  }
  return resp;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--protocol-version" || a.starts_with("--protocol-version=")) {
      if (a == "--protocol-version") ++i;
      continue;
    }
    std::cerr << "usage: eohs-refworker [--protocol-version N]\n";
    return 2;
  }
  std::ios::sync_with_stdio(false);
  std::optional<Loaded> loaded;
  std::string line;
  while (std::getline(std::cin, line)) {
    if (eohs::detail::trim(line).empty()) continue;
    json resp;
    try {
      const json req = json::parse(line);
      if (!req.is_object()) throw json::type_error::create(302, "frame is not an object", nullptr);
      resp = handle(req, loaded);
    } catch (const json::exception&) {
      resp = json{{"id", nullptr}, {"ok", false}, {"error", "bad-frame"}};
    }
    std::cout << resp.dump() << '\n' << std::flush;
  }
  return 0;
}
