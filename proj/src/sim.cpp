#include "hdmcts/sim.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace hdmcts {

namespace {

bool is_job(MessageKind k) { return k == MessageKind::SELECT || k == MessageKind::BACKPROP; }

}  // namespace

SimNetwork::SimNetwork(std::uint32_t workers, Tick latency_min, Tick latency_max,
                       std::uint64_t seed)
    : workers_(workers),
      latency_min_(latency_min),
      latency_max_(latency_max),
      jitter_(mix_seed(seed, 0x1a7e9c11ULL)),
      inbox_(workers),
      next_seq_(std::size_t{workers} * workers, 1),
      last_delivery_(std::size_t{workers} * workers, 0) {
  if (latency_min < 1 || latency_max < latency_min) {
    throw std::invalid_argument("sim latency must satisfy 1 <= min <= max");
  }
}

Tick SimNetwork::send(WorkerId src, Message msg, Tick send_time) {
  if (msg.dest >= workers_ || src >= workers_) {
    throw std::out_of_range("sim send from " + std::to_string(src) + " to " +
                            std::to_string(msg.dest) + " with " + std::to_string(workers_) +
                            " workers");
  }
  const std::size_t link = std::size_t{src} * workers_ + msg.dest;
  msg.src = src;
  msg.seq = next_seq_[link]++;
  Tick latency = latency_min_;
  if (latency_max_ > latency_min_) {
    latency += static_cast<Tick>(jitter_() % static_cast<std::uint64_t>(latency_max_ - latency_min_ + 1));
  }
  const Tick at = std::max(send_time + latency, last_delivery_[link]);
  last_delivery_[link] = at;
  ++counts_.sent[static_cast<int>(msg.kind)];
  if (is_job(msg.kind)) ++jobs_in_flight_;
  ++pending_;
  const WorkerId dest = msg.dest;
  const std::uint64_t seq = msg.seq;
  inbox_[dest].insert(Event{at, src, seq, std::move(msg)});
  return at;
}

std::vector<Message> SimNetwork::poll_receive(WorkerId dest, Tick now) {
  std::vector<Message> out;
  auto &box = inbox_.at(dest);
  while (!box.empty() && box.begin()->deliver_at <= now) {
    auto node = box.extract(box.begin());
    Event &ev = node.value();
    const auto kind = static_cast<std::uint64_t>(ev.msg.kind);
    digest_ = splitmix64(digest_ ^ static_cast<std::uint64_t>(ev.deliver_at));
    digest_ = splitmix64(digest_ ^ (std::uint64_t{ev.src} << 32 | dest));
    digest_ = splitmix64(digest_ ^ kind);
    if (keep_log_) {
      log_.push_back(std::to_string(ev.deliver_at) + " " + std::to_string(ev.src) + " " +
                     std::to_string(dest) + " " + std::string(kind_name(ev.msg.kind)));
    }
    ++counts_.received[static_cast<int>(ev.msg.kind)];
    if (is_job(ev.msg.kind)) --jobs_in_flight_;
    --pending_;
    out.push_back(std::move(ev.msg));
  }
  return out;
}

std::optional<Tick> SimNetwork::next_time() const {
  std::optional<Tick> best;
  for (const auto &box : inbox_) {
    if (!box.empty() && (!best || box.begin()->deliver_at < *best)) best = box.begin()->deliver_at;
  }
  return best;
}

std::string SimNetwork::dump() const {
  std::ostringstream out;
  for (WorkerId w = 0; w < workers_; ++w) {
    for (const auto &ev : inbox_[w]) {
      out << "  t=" << ev.deliver_at << " " << ev.src << "->" << w << " seq=" << ev.seq << " "
          << kind_name(ev.msg.kind) << " " << ev.msg.path.to_string() << "\n";
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------

SimCluster::SimCluster(RunConfig cfg)
    : cfg_(std::move(cfg)),
      network_(cfg_.workers, cfg_.latency_ticks, cfg_.latency_max_ticks, cfg_.seed) {
  validate(cfg_);
  if (cfg_.transport != TransportKind::Sim) throw ConfigError("SimCluster needs transport=sim");
  if (cfg_.algorithm == Algorithm::SEQUENTIAL) {
    throw ConfigError("the sequential oracle does not run on the cluster");
  }
  for (std::uint32_t w = 0; w < cfg_.workers; ++w) problems_.push_back(make_problem(cfg_));
  zobrist_ = std::make_unique<ZobristTable>(make_zobrist(cfg_, *problems_[0]));
  for (std::uint32_t w = 0; w < cfg_.workers; ++w) {
    endpoints_.push_back(std::make_unique<SimEndpoint>());
    workers_.push_back(
        std::make_unique<Worker>(w, cfg_, *problems_[w], *zobrist_, *endpoints_[w]));
  }
}

SimCluster::~SimCluster() = default;

bool SimCluster::gate_open(Tick now) const {
  switch (cfg_.budget.kind) {
    case BudgetKind::Simulations:
      return static_cast<double>(total_simulations_) < cfg_.budget.amount;
    case BudgetKind::Ticks:
      return static_cast<double>(now) < cfg_.budget.amount;
    case BudgetKind::Seconds:
      break;
  }
  throw ConfigError("sim runs need budget_sims or budget_ticks");
}

void SimCluster::flush(WorkerId w, Tick send_time) {
  for (Message &msg : endpoints_[w]->take()) network_.send(w, std::move(msg), send_time);
}

void SimCluster::check_inflight(SimResult &result) const {
  std::int64_t total = network_.jobs_in_flight();
  for (const auto &w : workers_) {
    total += static_cast<std::int64_t>(w->queued() + w->retired());
  }
  ++result.inflight_checks;
  const std::int64_t expected = std::int64_t{cfg_.overload} * cfg_.workers;
  if (total != expected && result.violations.size() < 20) {
    result.violations.push_back("in-flight jobs " + std::to_string(total) + " != " +
                                std::to_string(expected));
  }
}

void SimCluster::check_quiescence(SimResult &result) const {
  auto violation = [&](const std::string &what) {
    if (result.violations.size() < 20) result.violations.push_back(what);
  };
  if (!network_.empty()) violation("network not empty at quiescence");
  for (const auto &w : workers_) {
    if (w->has_job()) violation("worker " + std::to_string(w->id()) + " still has queued jobs");
  }

  for (const auto &w : workers_) {
    w->store().for_each([&](const NodeRecord &node) {
      if (node.agg.T != 0) violation("T != 0 at " + node.path.to_string());
      if (!(node.recomputed() == node.agg)) {
        violation("aggregate mismatch at " + node.path.to_string());
      }
      for (const auto &child : node.children) {
        if (child.stat.t != 0) violation("t != 0 below " + node.path.to_string());
        const NodePath path = node.path.child(child.action);
        const NodeKey key = zobrist_->child_key(node.key, node.path.depth(), child.action);
        const NodeRecord *rec = workers_[key.digest % cfg_.workers]->store().lookup(key, path);
        const std::int64_t own = rec != nullptr ? rec->agg.V : 0;
        if (own != child.stat.v) {
          violation("child visits " + std::to_string(child.stat.v) + " != node visits " +
                    std::to_string(own) + " at " + path.to_string());
        }
      }
    });
  }

  const KindCounts &k = network_.counts();
  for (int kind = 0; kind < 4; ++kind) {
    if (k.sent[kind] != k.received[kind]) {
      violation(std::string(kind_name(static_cast<MessageKind>(kind))) + " sent " +
                std::to_string(k.sent[kind]) + " != received " + std::to_string(k.received[kind]));
    }
  }
  std::int64_t sel_sent = 0, sel_recv = 0, bp_sent = 0, bp_recv = 0, sims = 0, chains = 0;
  for (const auto &c : result.counters) {
    sel_sent += c.select_sent;
    sel_recv += c.select_received;
    bp_sent += c.bp_sent;
    bp_recv += c.bp_received;
    sims += c.simulations_done;
    chains += c.chains_completed;
    if (c.histogram_total() != c.simulations_done) {
      violation("worker " + std::to_string(c.worker) + " histogram total != simulations");
    }
  }
  if (sel_sent != k.sent_of(MessageKind::SELECT) || sel_recv != k.received_of(MessageKind::SELECT)) {
    violation("SELECT counters disagree with the transport");
  }
  if (bp_sent != k.sent_of(MessageKind::BACKPROP) || bp_recv != k.received_of(MessageKind::BACKPROP)) {
    violation("BACKPROP counters disagree with the transport");
  }
  if (sims != chains) {
    violation("simulations " + std::to_string(sims) + " != completed chains " +
              std::to_string(chains));
  }
  if (sims != static_cast<std::int64_t>(result.trace.size())) {
    violation("simulation counters disagree with the trace");
  }
}

std::string SimCluster::dump_state() const {
  std::ostringstream out;
  for (const auto &w : workers_) {
    out << "  worker " << w->id() << ": queued=" << w->queued() << " retired=" << w->retired()
        << " stopping=" << w->stopping() << " finished=" << w->finished() << "\n";
  }
  out << "pending messages:\n" << network_.dump();
  return out.str();
}

SimResult SimCluster::run() {
  SimResult result;
  for (auto &w : workers_) {
    const WorkerId id = w->id();
    w->on_simulation = [this, &result, id](const SimulationRecord &rec) {
      ++total_simulations_;
      result.trace.push_back(TimedSimulation{0, id, rec});
    };
  }

  const Tick msg_cost = cfg_.message_cost_ticks;
  const Tick sim_cost = cfg_.simulation_cost_ticks;
  std::vector<Tick> busy_until(workers_.size(), 0);
  Tick now = 0;
  Worker &coordinator = *workers_[0];

  try {
    workers_[workers_[0]->root_home()]->seed_initial_jobs();
    for (;;) {
      for (auto &w : workers_) {
        for (Message &msg : network_.poll_receive(w->id(), now)) w->deliver(std::move(msg));
        flush(w->id(), now);
      }
      for (auto &w : workers_) {
        w->control(static_cast<double>(now), gate_open(now));
        flush(w->id(), now);
      }
      for (auto &w : workers_) {
        const WorkerId id = w->id();
        if (busy_until[id] > now || !w->has_job()) continue;
        const std::size_t traced = result.trace.size();
        const StepOutcome outcome = w->step(static_cast<double>(now), gate_open(now));
        const Tick done = now + msg_cost + (outcome.simulated ? sim_cost : 0);
        for (std::size_t i = traced; i < result.trace.size(); ++i) result.trace[i].time = done;
        busy_until[id] = done;
        flush(id, done);
      }
      check_inflight(result);
      if (coordinator.finished()) break;

      std::optional<Tick> next = network_.next_time();
      for (Tick b : busy_until) {
        if (b > now && (!next || b < *next)) next = b;
      }
      if (!next) throw std::runtime_error("sim deadlock at t=" + std::to_string(now) + "\n" + dump_state());
      for (auto &w : workers_) {
        if (busy_until[w->id()] <= now && !w->has_job() && !w->finished()) {
          w->counters().idle_time += static_cast<double>(*next - now);
        }
      }
      now = *next;
    }
  } catch (const std::exception &e) {
    result.ok = false;
    result.fault = e.what();
  }

  result.final_time = now;
  result.transport = network_.counts();
  result.trace_digest = network_.trace_digest();
  for (const auto &w : workers_) result.nodes_per_worker.push_back(w->store().size());

  if (result.ok) {
    for (const auto &r : coordinator.reports()) result.counters.push_back(*r);
    for (const auto &b : coordinator.report_bests()) {
      if (b && (!result.best || b->reward > result.best->reward)) result.best = b;
    }
    check_quiescence(result);
  } else {
    for (const auto &w : workers_) {
      WorkerCounters c = w->counters();
      c.nodes_stored = static_cast<std::int64_t>(w->store().size());
      result.counters.push_back(std::move(c));
      if (w->best() && (!result.best || w->best()->reward > result.best->reward)) {
        result.best = w->best();
      }
    }
  }
  return result;
}

}  // namespace hdmcts
