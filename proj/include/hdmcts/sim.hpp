#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "hdmcts/config.hpp"
#include "hdmcts/message.hpp"
#include "hdmcts/worker.hpp"

namespace hdmcts {

using Tick = std::int64_t;

/// Sent and received totals per message kind.
struct KindCounts {
  std::array<std::int64_t, 4> sent{};
  std::array<std::int64_t, 4> received{};

  std::int64_t sent_of(MessageKind k) const { return sent[static_cast<int>(k)]; }
  std::int64_t received_of(MessageKind k) const { return received[static_cast<int>(k)]; }
};

/// Discrete-event network. A message sent at time s on link (src, dest) is
/// deliverable at s + latency, where latency is constant or drawn uniformly
/// from [latency_min, latency_max]; per-link FIFO is preserved by never
/// delivering earlier than the link's previous message. Equal delivery times
/// are ordered by (src, seq).
class SimNetwork {
 public:
  SimNetwork(std::uint32_t workers, Tick latency_min, Tick latency_max, std::uint64_t seed);

  /// Stamps src and seq; returns the delivery time.
  Tick send(WorkerId src, Message msg, Tick send_time);
  /// All messages for `dest` deliverable at `now`, in delivery order.
  std::vector<Message> poll_receive(WorkerId dest, Tick now);
  std::optional<Tick> next_time() const;
  bool empty() const { return pending_ == 0; }
  std::size_t pending() const { return pending_; }
  /// SELECT and BACKPROP messages not yet delivered.
  std::int64_t jobs_in_flight() const { return jobs_in_flight_; }

  const KindCounts &counts() const { return counts_; }
  /// Running digest of the (time, src, dest, kind) delivery trace.
  std::uint64_t trace_digest() const { return digest_; }
  void keep_log(bool on) { keep_log_ = on; }
  const std::vector<std::string> &log() const { return log_; }
  std::string dump() const;

 private:
  struct Event {
    Tick deliver_at;
    WorkerId src;
    std::uint64_t seq;
    Message msg;
    bool operator<(const Event &o) const {
      return std::tie(deliver_at, src, seq) < std::tie(o.deliver_at, o.src, o.seq);
    }
  };

  std::uint32_t workers_;
  Tick latency_min_;
  Tick latency_max_;
  Rng jitter_;
  std::vector<std::set<Event>> inbox_;
  std::vector<std::uint64_t> next_seq_;   // [src * workers + dest]
  std::vector<Tick> last_delivery_;       // [src * workers + dest]
  std::size_t pending_ = 0;
  std::int64_t jobs_in_flight_ = 0;
  KindCounts counts_;
  std::uint64_t digest_ = 0x6a09e667f3bcc908ULL;
  bool keep_log_ = false;
  std::vector<std::string> log_;
};

/// Endpoint that buffers a step's messages until the engine knows when the
/// step completes.
class SimEndpoint final : public Endpoint {
 public:
  void send(Message msg) override { outbox_.push_back(std::move(msg)); }
  std::vector<Message> take() { return std::exchange(outbox_, {}); }

 private:
  std::vector<Message> outbox_;
};

struct TimedSimulation {
  Tick time = 0;
  WorkerId worker = 0;
  SimulationRecord record;
};

struct SimResult {
  bool ok = true;
  std::string fault;
  Tick final_time = 0;
  std::vector<WorkerCounters> counters;  // indexed by worker id
  std::optional<BestFound> best;
  std::vector<TimedSimulation> trace;
  KindCounts transport;
  std::uint64_t trace_digest = 0;
  std::vector<std::size_t> nodes_per_worker;
  /// Conservation violations found during or after the run; empty when clean.
  std::vector<std::string> violations;
  std::int64_t inflight_checks = 0;
};

/// Single-threaded deterministic execution of all workers over SimNetwork.
/// Handling a job costs message_cost_ticks, plus simulation_cost_ticks when
/// it ran a rollout; messages leave when the step completes.
class SimCluster {
 public:
  explicit SimCluster(RunConfig cfg);
  ~SimCluster();

  SimResult run();

  const RunConfig &config() const { return cfg_; }
  const Worker &worker(WorkerId id) const { return *workers_[id]; }
  std::uint32_t size() const { return static_cast<std::uint32_t>(workers_.size()); }
  SimNetwork &network() { return network_; }

 private:
  bool gate_open(Tick now) const;
  void flush(WorkerId w, Tick send_time);
  void check_inflight(SimResult &result) const;
  void check_quiescence(SimResult &result) const;
  std::string dump_state() const;

  RunConfig cfg_;
  std::vector<std::unique_ptr<ProblemAdapter>> problems_;
  std::unique_ptr<ZobristTable> zobrist_;
  SimNetwork network_;
  std::vector<std::unique_ptr<SimEndpoint>> endpoints_;
  std::vector<std::unique_ptr<Worker>> workers_;
  std::int64_t total_simulations_ = 0;
};

}  // namespace hdmcts
