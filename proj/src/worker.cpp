#include "hdmcts/worker.hpp"

#include <stdexcept>
#include <string>

namespace hdmcts {

std::uint64_t rollout_seed(std::uint64_t master_seed, NodeKey key, std::int64_t own_simulations) {
  return mix_seed(mix_seed(master_seed, key.digest), static_cast<std::uint64_t>(own_simulations));
}

ZobristTable make_zobrist(const RunConfig &cfg, const ProblemAdapter &problem) {
  if (problem.max_depth() > cfg.max_depth || problem.max_branching() > cfg.max_branching) {
    throw ConfigError("problem needs a " + std::to_string(problem.max_depth()) + "x" +
                      std::to_string(problem.max_branching()) +
                      " key table but max_depth x max_branching is " +
                      std::to_string(cfg.max_depth) + "x" + std::to_string(cfg.max_branching));
  }
  return ZobristTable(cfg.seed, cfg.max_depth, cfg.max_branching);
}

Worker::Worker(WorkerId id, const RunConfig &cfg, ProblemAdapter &problem,
               const ZobristTable &zobrist, Endpoint &endpoint)
    : id_(id),
      cfg_(cfg),
      problem_(problem),
      zobrist_(zobrist),
      endpoint_(endpoint),
      map_{cfg.workers},
      store_(id, map_) {
  counters_.worker = id;
  if (id == 0) {
    reports_.resize(cfg.workers);
    report_bests_.resize(cfg.workers);
  }
}

void Worker::seed_initial_jobs() {
  if (id_ != root_home()) {
    throw std::logic_error("seed_initial_jobs on worker " + std::to_string(id_) +
                           ", but the root lives on worker " + std::to_string(root_home()));
  }
  const State root = problem_.root_state();
  NodeRecord record;
  record.key = zobrist_.root();
  record.path = root;
  record.terminal = problem_.is_terminal(root);
  if (record.terminal || !try_expand(record)) throw ProblemFault("the root state cannot be expanded");
  store_.write(std::move(record));

  const std::uint64_t jobs = std::uint64_t{cfg_.overload} * cfg_.workers;
  for (std::uint64_t i = 0; i < jobs; ++i) {
    Message job;
    job.kind = MessageKind::SELECT;
    job.src = id_;
    job.dest = id_;
    job.key = zobrist_.root();
    job.path = root;
    if (uses_history()) job.history = HistoryTable{};
    queue_.push_back(std::move(job));
  }
}

void Worker::deliver(Message msg) {
  switch (msg.kind) {
    case MessageKind::SELECT:
      ++counters_.select_received;
      queue_.push_back(std::move(msg));
      break;
    case MessageKind::BACKPROP:
      ++counters_.bp_received;
      queue_.push_back(std::move(msg));
      break;
    case MessageKind::STOP:
    case MessageKind::REPORT:
      handle_control(msg);
      break;
  }
}

StepOutcome Worker::step(double now, bool gate_open) {
  if (queue_.empty()) return {};
  now_ = now;
  Message msg = std::move(queue_.front());
  queue_.pop_front();
  gate_open = gate_open && stop_seen_ == 0;
  const std::int64_t before = counters_.simulations_done;
  if (msg.kind == MessageKind::SELECT) {
    handle_select(msg, gate_open, now);
  } else {
    handle_backprop(msg, gate_open);
  }
  return StepOutcome{true, counters_.simulations_done != before};
}

void Worker::control(double now, bool gate_open) {
  now_ = now;
  if (id_ != 0) return;
  if (!stop1_sent_ && (!gate_open || drained_)) {
    stop1_sent_ = true;
    stop_seen_ = 1;
    for (WorkerId w = 1; w < cfg_.workers; ++w) {
      Message stop;
      stop.kind = MessageKind::STOP;
      stop.dest = w;
      endpoint_.send(std::move(stop));
    }
  }
  if (stop1_sent_ && drained_ && !stop2_sent_) {
    stop2_sent_ = true;
    for (WorkerId w = 1; w < cfg_.workers; ++w) {
      Message stop;
      stop.kind = MessageKind::STOP;
      stop.dest = w;
      endpoint_.send(std::move(stop));
    }
    counters_.nodes_stored = static_cast<std::int64_t>(store_.size());
    reports_[0] = counters_;
    report_bests_[0] = best_;
    finish_report();
  }
}

void Worker::handle_control(const Message &msg) {
  if (msg.kind == MessageKind::REPORT) {
    if (id_ != 0 || !msg.counters) throw std::logic_error("unexpected REPORT");
    if (msg.src >= reports_.size() || reports_[msg.src]) {
      throw std::logic_error("duplicate or out-of-range REPORT from " + std::to_string(msg.src));
    }
    reports_[msg.src] = *msg.counters;
    report_bests_[msg.src] = msg.best_found;
    finish_report();
    return;
  }
  if (id_ == 0) {
    // Only the root's home sends STOP to worker 0: all jobs are retired.
    drained_ = true;
    return;
  }
  ++stop_seen_;
  if (stop_seen_ == 2) {
    counters_.nodes_stored = static_cast<std::int64_t>(store_.size());
    Message report;
    report.kind = MessageKind::REPORT;
    report.dest = 0;
    report.best_found = best_;
    report.counters = counters_;
    endpoint_.send(std::move(report));
    finished_ = true;
  }
}

void Worker::finish_report() {
  for (const auto &r : reports_) {
    if (!r) return;
  }
  finished_ = true;
}

// ---------------------------------------------------------------------------
// Search

bool Worker::try_expand(NodeRecord &node) {
  std::vector<Candidate> candidates;
  try {
    candidates = problem_.expand_candidates(node.path);
  } catch (const ProblemError &) {
    return false;
  }
  if (candidates.empty()) {
    node.terminal = true;
    return false;
  }
  candidates = prune_by_cumulative_prior(std::move(candidates), cfg_.prune_cumulative);
  node.children.clear();
  for (const auto &c : candidates) {
    // Fails loudly if the action does not fit the key table.
    (void)zobrist_.entry(node.path.depth(), c.action);
    node.children.push_back(ChildEntry{c.action, ChildStat{0.0, 0, 0, c.prior}});
  }
  node.expanded = true;
  return true;
}

HistoryTable Worker::merged_node_history(NodeRecord &node,
                                         const std::optional<HistoryTable> &incoming) {
  HistoryTable mine = node.node_history.value_or(HistoryTable{});
  HistoryTable theirs = incoming.value_or(HistoryTable{});
  mine.truncate(node.path.depth());
  theirs.truncate(node.path.depth());
  node.node_history = history_merge(mine, theirs);
  return *node.node_history;
}

void Worker::handle_select(const Message &msg, bool /*gate_open*/, double now) {
  NodeRecord *found = store_.lookup(msg.key, msg.path);
  NodeRecord fresh;
  if (found == nullptr) {
    fresh.key = msg.key;
    fresh.path = msg.path;
    fresh.terminal = problem_.is_terminal(msg.path);
  }
  NodeRecord &node = found != nullptr ? *found : fresh;

  const bool descend_here =
      !node.terminal &&
      (node.expanded || node.agg.V + 1 >= static_cast<std::int64_t>(cfg_.expansion_threshold));
  if (descend_here && (node.expanded || try_expand(node))) {
    HistoryTable base;
    if (cfg_.algorithm == Algorithm::TDS_DF_UCT) {
      base = msg.history.value_or(HistoryTable{});
    } else if (cfg_.algorithm == Algorithm::MP_MCTS) {
      base = merged_node_history(node, msg.history);
    }
    descend(node, base);
  } else {
    if (cfg_.algorithm == Algorithm::MP_MCTS) merged_node_history(node, msg.history);
    simulate(node, msg, now);
  }
  if (found == nullptr) store_.write(std::move(fresh));
}

void Worker::descend(NodeRecord &node, const HistoryTable &base) {
  const std::vector<ChildStat> stats = node.child_stats();
  const std::size_t best = select_best_child(stats, node.agg, cfg_.formula);
  ChildEntry &child = node.children[best];
  child.stat.t += 1;
  node.agg.T += 1;

  Message out;
  out.kind = MessageKind::SELECT;
  out.path = node.path.child(child.action);
  out.key = zobrist_.child_key(node.key, node.path.depth(), child.action);
  out.dest = map_.home(out.key);
  if (uses_history()) out.history = history_append(base, node.snapshot_row(child.action));
  ++counters_.select_sent;
  endpoint_.send(std::move(out));
}

void Worker::simulate(NodeRecord &node, const Message &msg, double now) {
  Rng rng(rollout_seed(cfg_.seed, node.key, node.own_simulations));
  double reward = -1.0;
  std::string solution;
  try {
    Rollout rollout = problem_.rollout(node.path, rng);
    solution = std::move(rollout.solution);
    reward = problem_.score(solution);
  } catch (const ProblemError &) {
    reward = -1.0;
  }

  node.own_simulations += 1;
  node.w += reward;
  node.agg.V += 1;
  ++counters_.simulations_done;
  ++counters_.depth_histogram[static_cast<std::int64_t>(node.path.depth())];
  if (!best_ || reward > best_->reward) {
    best_ = BestFound{reward, solution};
    counters_.record_best(now, reward);
  }
  if (on_simulation) on_simulation(SimulationRecord{node.path, reward});

  if (node.path.is_root()) throw std::logic_error("simulation at the root");
  std::optional<HistoryTable> history;
  if (uses_history()) {
    history = cfg_.algorithm == Algorithm::MP_MCTS ? node.node_history.value_or(HistoryTable{})
                                                   : msg.history.value_or(HistoryTable{});
    history->remove_bottom();
  }
  send_backprop(node, reward, std::move(history));
}

void Worker::send_backprop(const NodeRecord &node, double reward,
                           std::optional<HistoryTable> history) {
  Message out;
  out.kind = MessageKind::BACKPROP;
  out.path = node.path;
  out.key = node.key;
  out.dest = map_.home(zobrist_.key(node.path.parent()));
  out.reward = reward;
  out.child_stats = StatSnapshot{node.w, node.agg.V, 0};
  out.history = std::move(history);
  ++counters_.bp_sent;
  endpoint_.send(std::move(out));
}

void Worker::handle_backprop(const Message &msg, bool gate_open) {
  if (msg.path.is_root()) throw std::logic_error("BACKPROP about the root");
  if (!msg.reward || !msg.child_stats) throw std::logic_error("BACKPROP without reward");
  const std::size_t depth = msg.path.depth() - 1;
  const NodePath parent_path = msg.path.parent();
  const NodeKey parent_key{msg.key.digest ^ zobrist_.entry(depth, msg.path.back())};
  NodeRecord *parent = store_.lookup(parent_key, parent_path);
  if (parent == nullptr) {
    throw std::logic_error("BACKPROP for missing node " + parent_path.to_string());
  }
  const auto index = parent->child_index(msg.path.back());
  if (!index) throw std::logic_error("BACKPROP for unknown child " + msg.path.to_string());
  ChildStat &entry = parent->children[*index].stat;
  if (entry.t <= 0 || parent->agg.T <= 0) {
    throw std::logic_error("virtual loss underflow at " + msg.path.to_string());
  }
  entry.t -= 1;
  parent->agg.T -= 1;

  const double r = *msg.reward;
  if (cfg_.algorithm == Algorithm::TDS_UCT) {
    entry.w += r;
    entry.v += 1;
    parent->w += r;
    parent->agg.V += 1;
    if (parent_path.is_root()) {
      chain_at_root(*parent, gate_open);
    } else {
      send_backprop(*parent, r, std::nullopt);
    }
    return;
  }

  // df / MP: the snapshot carries every result the child has absorbed so far,
  // including those whose chains stopped below it.
  const StatSnapshot &snap = *msg.child_stats;
  const std::int64_t dv = snap.v - entry.v;
  if (dv < 1) throw std::logic_error("stale BACKPROP snapshot for " + msg.path.to_string());
  parent->w += snap.w - entry.w;
  parent->agg.V += dv;
  entry.w = snap.w;
  entry.v = snap.v;

  HistoryTable history;
  if (cfg_.algorithm == Algorithm::MP_MCTS) {
    history = merged_node_history(*parent, msg.history);
  } else {
    history = msg.history.value_or(HistoryTable{});
  }
  history_refresh_on_path(history, parent->w, parent->agg.V);
  if (cfg_.algorithm == Algorithm::MP_MCTS) parent->node_history = history;

  if (parent_path.is_root()) {
    chain_at_root(*parent, gate_open);
    return;
  }
  if (gate_open && history_current_best(history, cfg_.formula) == parent_path.depth()) {
    ++counters_.chains_completed;
    descend(*parent, history);
    return;
  }
  if (cfg_.algorithm == Algorithm::TDS_DF_UCT) history.remove_bottom();
  send_backprop(*parent, r, std::move(history));
}

void Worker::chain_at_root(NodeRecord &root, bool gate_open) {
  ++counters_.chains_completed;
  if (gate_open) {
    descend(root, HistoryTable{});
    return;
  }
  ++retired_;
  if (retired_ == std::uint64_t{cfg_.overload} * cfg_.workers) {
    if (id_ == 0) {
      drained_ = true;
    } else {
      Message done;
      done.kind = MessageKind::STOP;
      done.dest = 0;
      endpoint_.send(std::move(done));
    }
  }
}

}  // namespace hdmcts
