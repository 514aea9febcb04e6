#pragma once

#include <chrono>
#include <deque>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hdmcts/config.hpp"
#include "hdmcts/engine.hpp"
#include "hdmcts/message.hpp"
#include "hdmcts/sim.hpp"
#include "hdmcts/worker.hpp"

namespace hdmcts {

struct ManifestEntry {
  WorkerId id = 0;
  std::string host;
  std::uint16_t port = 0;
};

/// Lines of "worker_id host:port"; '#' starts a comment. Ids must be 0..n-1.
std::vector<ManifestEntry> parse_manifest(const std::string &text);
std::vector<ManifestEntry> load_manifest(const std::filesystem::path &path);

/// Environment variable that overrides the address a worker binds to.
inline constexpr const char *kBindAddressEnv = "HDMCTS_BIND_ADDR";

class TransportFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Full mesh of TCP streams. Worker i connects to every j < i and accepts
/// from every j > i; each connection opens with a HELLO frame carrying the
/// sender id and a digest of the config, then worker 0 runs a READY/GO
/// barrier. Self-sends loop back without touching a socket.
class NetEndpoint final : public Endpoint {
 public:
  NetEndpoint(WorkerId self, std::vector<ManifestEntry> manifest, std::uint64_t config_digest,
              std::size_t max_frame_bytes);
  ~NetEndpoint() override;
  NetEndpoint(const NetEndpoint &) = delete;
  NetEndpoint &operator=(const NetEndpoint &) = delete;

  void establish(std::chrono::milliseconds timeout);

  void send(Message msg) override;
  /// Waits up to `timeout` for traffic and returns every complete message.
  std::vector<Message> poll(std::chrono::milliseconds timeout);
  /// Blocks until all buffered output is written.
  void flush(std::chrono::milliseconds timeout);
  /// True once worker 0's stream has closed (used by non-zero workers to
  /// linger until the coordinator is done).
  bool coordinator_closed() const;
  void close_all();
  /// After this, an EOF from a peer is expected rather than a fault.
  void mark_finished() { finished_ = true; }

  const KindCounts &counts() const { return counts_; }

 private:
  struct Peer {
    int fd = -1;
    FrameReader reader;
    std::vector<std::byte> out;
    std::size_t out_offset = 0;
    bool closed = false;
    std::uint64_t next_seq = 1;
  };

  void write_some(Peer &peer);
  void read_some(WorkerId id, Peer &peer, std::vector<Message> &into);
  std::string read_control(WorkerId id, std::chrono::steady_clock::time_point deadline);
  void write_control(WorkerId id, const std::string &payload);

  WorkerId self_;
  std::vector<ManifestEntry> manifest_;
  std::uint64_t digest_;
  std::size_t max_frame_bytes_;
  std::vector<Peer> peers_;
  std::deque<Message> loopback_;
  std::uint64_t loopback_seq_ = 1;
  KindCounts counts_;
  bool finished_ = false;
};

std::uint64_t config_digest(const RunConfig &cfg);

/// Runs one worker process of a net-transport run. Worker 0 returns the
/// aggregated report; the others return nullopt after reporting.
std::optional<RunReport> run_net_worker(const RunConfig &cfg, WorkerId id);

}  // namespace hdmcts
