// Misbehaving worker for protocol tests. Answers ping and load normally; the
// eval reply depends on --mode:
//   dup       tour that visits node 1 twice
//   lie       valid identity tour, but claims raw = 0
//   hang      never answers
//   crash     exits without answering
//   garbage   prints a non-JSON line
//   wrong-id  answers with a different id
//   overfull  puts every OBP item into bin 0

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>

#include "json.hpp"

using json = nlohmann::json;

int main(int argc, char** argv) {
  std::string mode = "dup";
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--mode") mode = argv[i + 1];
  }
  std::string line;
  while (std::getline(std::cin, line)) {
    const json req = json::parse(line, nullptr, false);
    if (req.is_discarded()) continue;
    json resp{{"id", req["id"]}, {"ok", true}};
    if (req.value("op", "") == "eval") {
      if (mode == "hang") std::this_thread::sleep_for(std::chrono::hours(1));
      if (mode == "crash") std::exit(3);
      if (mode == "garbage") {
        std::cout << "this is not json" << std::endl;
        continue;
      }
      if (mode == "wrong-id") resp["id"] = req["id"].get<long long>() + 1000;
      const json& p = req["payload"];
      json trace = json::array();
      if (mode == "overfull") {
        for (std::size_t k = 0; k < p["items"].size(); ++k) trace.push_back(0);
      } else {
        const std::size_t n = p["coords"].size();
        for (std::size_t k = 0; k < n; ++k) trace.push_back(k);
        if (mode == "dup" && n > 2) trace[2] = 1;
      }
      resp["raw"] = 0.0;
      resp["trace"] = trace;
    }
    std::cout << resp.dump() << std::endl;
  }
  return 0;
}
