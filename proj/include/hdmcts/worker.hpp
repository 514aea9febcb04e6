#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <vector>

#include "hdmcts/config.hpp"
#include "hdmcts/message.hpp"
#include "hdmcts/metrics.hpp"
#include "hdmcts/problem.hpp"
#include "hdmcts/tree_store.hpp"

namespace hdmcts {

/// Where a worker's outgoing messages go. Implementations assign seq per
/// (src, dest) link and stamp src.
class Endpoint {
 public:
  virtual ~Endpoint() = default;
  virtual void send(Message msg) = 0;
};

/// One simulation as seen by the search: the node it started from and its reward.
struct SimulationRecord {
  NodePath path;
  double reward = 0.0;
};

struct StepOutcome {
  bool processed = false;
  bool simulated = false;
};

/// Event-loop state machine for one worker. The driver delivers messages,
/// calls step() to process one queued job, and calls control() so worker 0
/// can run the STOP / REPORT protocol:
///
///   1. when the budget closes, worker 0 broadcasts STOP; every worker stops
///      starting new work but finishes the jobs already in flight
///   2. the root's home retires jobs as they come back to the root and tells
///      worker 0 (with a STOP) once all overload x workers jobs are retired
///   3. worker 0 broadcasts a second STOP; every worker answers with REPORT
class Worker {
 public:
  Worker(WorkerId id, const RunConfig &cfg, ProblemAdapter &problem, const ZobristTable &zobrist,
         Endpoint &endpoint);

  WorkerId id() const { return id_; }
  WorkerId root_home() const { return map_.home(zobrist_.root()); }

  /// Creates and expands the root, then queues overload x workers SELECT jobs.
  /// Only legal on the root's home worker.
  void seed_initial_jobs();

  void deliver(Message msg);
  bool has_job() const { return !queue_.empty(); }
  std::size_t queued() const { return queue_.size(); }
  /// Processes the oldest job. `gate_open` is the budget predicate.
  StepOutcome step(double now, bool gate_open);
  void control(double now, bool gate_open);

  bool stopping() const { return stop_seen_ > 0; }
  bool finished() const { return finished_; }
  std::uint64_t retired() const { return retired_; }

  const NodeStore &store() const { return store_; }
  WorkerCounters &counters() { return counters_; }
  const WorkerCounters &counters() const { return counters_; }
  const std::optional<BestFound> &best() const { return best_; }

  /// Worker 0 only, after finished(): reports indexed by worker id.
  const std::vector<std::optional<WorkerCounters>> &reports() const { return reports_; }
  const std::vector<std::optional<BestFound>> &report_bests() const { return report_bests_; }

  std::function<void(const SimulationRecord &)> on_simulation;

 private:
  void handle_select(const Message &msg, bool gate_open, double now);
  void handle_backprop(const Message &msg, bool gate_open);
  void handle_control(const Message &msg);

  bool try_expand(NodeRecord &node);
  void descend(NodeRecord &node, const HistoryTable &base);
  void simulate(NodeRecord &node, const Message &msg, double now);
  void chain_at_root(NodeRecord &root, bool gate_open);
  void send_backprop(const NodeRecord &node, double reward, std::optional<HistoryTable> history);
  void finish_report();
  HistoryTable merged_node_history(NodeRecord &node, const std::optional<HistoryTable> &incoming);
  bool uses_history() const { return cfg_.algorithm != Algorithm::TDS_UCT; }

  WorkerId id_;
  const RunConfig &cfg_;
  ProblemAdapter &problem_;
  const ZobristTable &zobrist_;
  Endpoint &endpoint_;
  WorkerMap map_;
  NodeStore store_;
  std::deque<Message> queue_;
  WorkerCounters counters_;
  std::optional<BestFound> best_;
  double now_ = 0.0;

  std::uint64_t retired_ = 0;
  int stop_seen_ = 0;
  bool drained_ = false;
  bool stop1_sent_ = false;
  bool stop2_sent_ = false;
  bool finished_ = false;
  std::vector<std::optional<WorkerCounters>> reports_;
  std::vector<std::optional<BestFound>> report_bests_;
};

/// Rollout seed of the `own_simulations`-th simulation started at `key`.
std::uint64_t rollout_seed(std::uint64_t master_seed, NodeKey key, std::int64_t own_simulations);

/// Zobrist table sized from the config, checked against the problem's bounds.
ZobristTable make_zobrist(const RunConfig &cfg, const ProblemAdapter &problem);

}  // namespace hdmcts
