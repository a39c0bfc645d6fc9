#pragma once

// Heuristic execution. Built-in rules run in-process; generated code runs in
// worker subprocesses that speak line-delimited JSON over stdin/stdout:
//
//   {"id":1,"op":"load","code":"..."}          -> {"id":1,"ok":true}
//   {"id":2,"op":"eval","task":"obp","payload":{...}}
//                                              -> {"id":2,"ok":true,"raw":..,"trace":[..]}
//   {"id":3,"op":"ping"}                       -> {"id":3,"ok":true}
//
// The host never trusts the worker's score: every returned trace is replayed
// by the independent verifiers before a gap is computed.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "eohs/core.hpp"
#include "eohs/instances.hpp"
#include "eohs/problems.hpp"

namespace eohs {

// ---------------------------------------------------------------------------
// Wire frames

namespace wire {

inline json payload(const ProblemInstance& inst) {
  json j = to_json(inst);
  json p = json::object();
  for (const char* k : {"capacity", "items", "coords", "depot", "demands"}) {
    if (j.contains(k)) p[k] = j[k];
  }
  return p;
}

/// Rebuilds an instance from an eval frame's task + payload (baseline unset).
inline ProblemInstance instance(Task task, const json& payload) {
  if (!payload.is_object()) throw Error("bad-frame", "payload must be an object");
  json j = payload;
  j["id"] = "wire";
  j["task"] = to_string(task);
  j["baseline"] = 1.0;
  return instance_from_json(j);
}

inline std::string load(std::int64_t id, const std::string& code) {
  return json{{"id", id}, {"op", "load"}, {"code", code}}.dump();
}

inline std::string eval(std::int64_t id, const ProblemInstance& inst) {
  return json{{"id", id}, {"op", "eval"}, {"task", to_string(inst.task)}, {"payload", payload(inst)}}.dump();
}

inline std::string ping(std::int64_t id) { return json{{"id", id}, {"op", "ping"}}.dump(); }

}  // namespace wire

// ---------------------------------------------------------------------------
// Subprocess with a bidirectional socket on stdin/stdout

class Subprocess {
 public:
  Subprocess(const std::vector<std::string>& argv, std::size_t memory_mb) {
    if (argv.empty()) throw Error("exec", "empty worker command");
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
      throw Error("exec", std::string("socketpair: ") + std::strerror(errno));
    }
    int status_pipe[2];
    if (::pipe2(status_pipe, O_CLOEXEC) != 0) {
      ::close(sv[0]);
      ::close(sv[1]);
      throw Error("exec", std::string("pipe2: ") + std::strerror(errno));
    }
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);

    const pid_t pid = ::fork();
    if (pid < 0) {
      for (int fd : {sv[0], sv[1], status_pipe[0], status_pipe[1]}) ::close(fd);
      throw Error("exec", std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
      ::dup2(sv[1], STDIN_FILENO);
      ::dup2(sv[1], STDOUT_FILENO);
      if (memory_mb > 0) {
        const rlim_t bytes = static_cast<rlim_t>(memory_mb) * 1024 * 1024;
        const rlimit lim{bytes, bytes};
        ::setrlimit(RLIMIT_AS, &lim);
      }
      ::execvp(args[0], args.data());
      const int err = errno;
      [[maybe_unused]] auto n = ::write(status_pipe[1], &err, sizeof err);
      ::_exit(127);
    }
    ::close(sv[1]);
    ::close(status_pipe[1]);
    int child_err = 0;
    ssize_t got;
    do {
      got = ::read(status_pipe[0], &child_err, sizeof child_err);
    } while (got < 0 && errno == EINTR);
    ::close(status_pipe[0]);
    if (got > 0) {
      ::close(sv[0]);
      ::waitpid(pid, nullptr, 0);
      throw Error("exec", "cannot start worker '" + argv[0] + "': " + std::strerror(child_err));
    }
    pid_ = pid;
    fd_ = sv[0];
  }

  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;
  ~Subprocess() { kill(); }

  pid_t pid() const noexcept { return pid_; }

  /// Sends one line; false if the peer is gone.
  bool send_line(const std::string& line) {
    std::string buf = line + "\n";
    std::size_t off = 0;
    while (off < buf.size()) {
      const ssize_t n = ::send(fd_, buf.data() + off, buf.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      off += static_cast<std::size_t>(n);
    }
    return true;
  }

  enum class ReadStatus { line, timeout, closed };

  /// Reads one line, waiting at most until `deadline`.
  ReadStatus read_line(std::chrono::steady_clock::time_point deadline, std::string& out) {
    while (true) {
      if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
        out = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return ReadStatus::line;
      }
      const auto now = std::chrono::steady_clock::now();
      if (now >= deadline) return ReadStatus::timeout;
      const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
      pollfd pfd{fd_, POLLIN, 0};
      const int r = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(ms + 1, 60'000)));
      if (r < 0) {
        if (errno == EINTR) continue;
        return ReadStatus::closed;
      }
      if (r == 0) continue;
      char chunk[65536];
      const ssize_t n = ::read(fd_, chunk, sizeof chunk);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return ReadStatus::closed;
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void kill() noexcept {
    if (pid_ > 0) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, nullptr, 0);
      pid_ = -1;
    }
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  pid_t pid_ = -1;
  int fd_ = -1;
  std::string buffer_;
};

// ---------------------------------------------------------------------------
// Worker

/// Command of the bundled reference worker: $EOHS_WORKER, else the build-tree
/// binary, else `eohs-refworker` on PATH.
inline std::vector<std::string> default_worker_command() {
  if (const char* env = std::getenv("EOHS_WORKER"); env && *env) return {env};
#ifdef EOHS_REFWORKER_PATH
  return {EOHS_REFWORKER_PATH};
#else
  return {"eohs-refworker"};
#endif
}

struct WorkerStats {
  std::size_t evals = 0;
  std::size_t timeouts = 0;
  std::size_t crashes = 0;
};

enum class WorkerState { idle, loaded, busy, dead };

class Worker {
 public:
  Worker(std::vector<std::string> command, std::size_t memory_mb)
      : command_(std::move(command)), memory_mb_(memory_mb) {}

  WorkerState state() const noexcept { return state_; }
  const std::string& loaded_key() const noexcept { return loaded_key_; }
  const WorkerStats& stats() const noexcept { return stats_; }
  std::optional<pid_t> pid() const { return proc_ ? std::optional<pid_t>(proc_->pid()) : std::nullopt; }

  /// Runs one episode of `h` on `inst`; the result is already host-verified.
  EpisodeResult run(const Heuristic& h, const ProblemInstance& inst, double timeout_s) {
    ensure_running();
    state_ = WorkerState::busy;
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                              std::chrono::duration<double>(timeout_s));
    EpisodeResult r;
    if (loaded_key_ != h.dedupe_key) {
      json resp;
      if (auto fault = request(wire::load(next_id_, h.code), deadline, resp)) return finish(std::move(*fault));
      if (!resp.value("ok", false)) {
        loaded_key_.clear();
        state_ = WorkerState::idle;
        return detail::violation(std::move(r), "load-error: " + resp.value("error", std::string("unknown")));
      }
      loaded_key_ = h.dedupe_key;
    }
    json resp;
    if (auto fault = request(wire::eval(next_id_, inst), deadline, resp)) return finish(std::move(*fault));
    ++stats_.evals;
    state_ = WorkerState::loaded;
    if (!resp.value("ok", false)) {
      return detail::violation(std::move(r), "error: " + resp.value("error", std::string("unknown")));
    }
    try {
      r.trace = resp.at("trace").get<std::vector<std::int64_t>>();
    } catch (const json::exception&) {
      return finish(detail::violation(std::move(r), "worker-fault: malformed trace"));
    }
    const TraceCheck check = verify_trace(inst, r.trace);
    if (!check.ok) return detail::violation(std::move(r), "infeasible-trace: " + check.error);
    r.raw = check.raw;
    r.gap = relative_gap(r.raw, inst.baseline);
    r.decisions = r.trace.size();
    return r;
  }

  bool ping(double timeout_s) {
    ensure_running();
    json resp;
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                              std::chrono::duration<double>(timeout_s));
    if (request(wire::ping(next_id_), deadline, resp)) return false;
    return resp.value("ok", false);
  }

  void stop() {
    proc_.reset();
    loaded_key_.clear();
    state_ = WorkerState::dead;
  }

 private:
  void ensure_running() {
    if (proc_) return;
    proc_ = std::make_unique<Subprocess>(command_, memory_mb_);
    loaded_key_.clear();
    state_ = WorkerState::idle;
  }

  // Kills the process after a fault; the next run respawns it.
  EpisodeResult finish(EpisodeResult r) {
    if (r.violation && (r.violation->starts_with("timeout") || r.violation->starts_with("worker-fault"))) {
      stop();
    }
    return r;
  }

  std::optional<EpisodeResult> request(const std::string& frame, std::chrono::steady_clock::time_point deadline,
                                       json& resp) {
    const std::int64_t id = next_id_++;
    if (!proc_->send_line(frame)) {
      ++stats_.crashes;
      return detail::violation(EpisodeResult{}, "worker-fault: worker closed its input");
    }
    std::string line;
    switch (proc_->read_line(deadline, line)) {
      case Subprocess::ReadStatus::timeout:
        ++stats_.timeouts;
        return detail::violation(EpisodeResult{}, "timeout");
      case Subprocess::ReadStatus::closed:
        ++stats_.crashes;
        return detail::violation(EpisodeResult{}, "worker-fault: worker exited");
      case Subprocess::ReadStatus::line: break;
    }
    try {
      resp = json::parse(line);
    } catch (const json::exception&) {
      ++stats_.crashes;
      return detail::violation(EpisodeResult{}, "worker-fault: unparseable response");
    }
    if (!resp.is_object() || !resp.contains("id") || !resp["id"].is_number_integer() ||
        resp["id"].get<std::int64_t>() != id) {
      ++stats_.crashes;
      return detail::violation(EpisodeResult{}, "worker-fault: response id mismatch");
    }
    return std::nullopt;
  }

  std::vector<std::string> command_;
  std::size_t memory_mb_ = 0;
  std::unique_ptr<Subprocess> proc_;
  std::string loaded_key_;
  WorkerState state_ = WorkerState::dead;
  WorkerStats stats_;
  std::int64_t next_id_ = 1;
};

// ---------------------------------------------------------------------------
// Executor: the evaluator the engine talks to

class Evaluator {
 public:
  virtual ~Evaluator() = default;
  /// Gap per instance; the invalid sentinel if any episode fails.
  virtual PerformanceVector evaluate(const Heuristic& h) = 0;
  virtual std::size_t instance_count() const = 0;
};

class Executor : public Evaluator {
 public:
  Executor(std::vector<ProblemInstance> instances, WorkerBudget budget)
      : instances_(std::move(instances)), budget_(std::move(budget)) {
    if (budget_.pool_size < 1) throw Error("exec", "pool size must be >= 1");
    if (budget_.command.empty()) budget_.command = default_worker_command();
    for (std::size_t i = 0; i < budget_.pool_size; ++i) {
      workers_.push_back(std::make_unique<Worker>(budget_.command, budget_.memory_mb));
    }
  }

  const std::vector<ProblemInstance>& instances() const noexcept { return instances_; }
  std::size_t instance_count() const override { return instances_.size(); }
  const WorkerBudget& budget() const noexcept { return budget_; }
  const Worker& worker(std::size_t i) const { return *workers_.at(i); }
  std::size_t pool_size() const noexcept { return workers_.size(); }

  /// First failure seen by the most recent evaluate()/evaluate_on_set() call.
  const std::string& last_failure() const noexcept { return last_failure_; }

  /// Single episode. Built-ins run in-process; generated code on worker 0.
  EpisodeResult execute(const Heuristic& h, const ProblemInstance& inst) {
    if (auto pre = precheck(h, inst.task)) return *pre;
    if (h.origin == Origin::builtin) return run_builtin(h, inst);
    return workers_[0]->run(h, inst, budget_.timeout_s);
  }

  /// Every episode of `h`. With `stop_on_failure`, the remaining episodes are
  /// skipped after the first invalid one and left default-constructed.
  std::vector<EpisodeResult> run_all(const Heuristic& h, bool stop_on_failure = false) {
    std::vector<EpisodeResult> results(instances_.size());
    if (instances_.empty()) return results;
    if (auto pre = precheck(h, instances_.front().task)) {
      for (auto& r : results) r = *pre;
      return results;
    }
    if (h.origin == Origin::builtin) {
      for (std::size_t i = 0; i < instances_.size(); ++i) results[i] = run_builtin(h, instances_[i]);
      return results;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr err;
    auto drain = [&](Worker& w) {
      try {
        for (std::size_t i = next++; i < instances_.size(); i = next++) {
          results[i] = w.run(h, instances_[i], budget_.timeout_s);
          if (stop_on_failure && !results[i].valid()) next = instances_.size();
        }
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!err) err = std::current_exception();
        next = instances_.size();
      }
    };
    const std::size_t threads = std::min(workers_.size(), instances_.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(drain, std::ref(*workers_[t]));
    drain(*workers_[0]);
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
    return results;
  }

  PerformanceVector evaluate_on_set(const Heuristic& h) {
    const auto results = run_all(h, true);
    last_failure_.clear();
    std::vector<double> gaps;
    gaps.reserve(results.size());
    for (std::size_t i = 0; i < results.size(); ++i) {
      if (!results[i].valid()) {
        last_failure_ = instances_[i].id + ": " + *results[i].violation;
        return PerformanceVector::invalid(results.size());
      }
      gaps.push_back(results[i].gap);
    }
    return PerformanceVector::of(std::move(gaps));
  }

  PerformanceVector evaluate(const Heuristic& h) override { return evaluate_on_set(h); }

 private:
  std::optional<EpisodeResult> precheck(const Heuristic& h, Task task) const {
    if (h.origin != Origin::builtin && h.code.size() > budget_.max_code_bytes) {
      return detail::violation(EpisodeResult{}, "code-too-large: " + std::to_string(h.code.size()) + " bytes");
    }
    if (h.origin == Origin::builtin && builtin_task(h.builtin_name) != task) {
      return detail::violation(EpisodeResult{}, "builtin '" + h.builtin_name + "' does not solve " + std::string(to_string(task)));
    }
    return std::nullopt;
  }

  static EpisodeResult run_builtin(const Heuristic& h, const ProblemInstance& inst) {
    EpisodeResult r = eohs::evaluate(builtin(h.builtin_name), inst);
    if (r.valid()) {
      const TraceCheck check = verify_trace(inst, r.trace);
      if (!check.ok) return detail::violation(std::move(r), "infeasible-trace: " + check.error);
    }
    return r;
  }

  std::vector<ProblemInstance> instances_;
  WorkerBudget budget_;
  std::vector<std::unique_ptr<Worker>> workers_;
  std::string last_failure_;
};

}  // namespace eohs
