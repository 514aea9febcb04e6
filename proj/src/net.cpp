#include "hdmcts/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include "hdmcts/json_io.hpp"

namespace hdmcts {

namespace {

using Clock = std::chrono::steady_clock;

std::string errno_text(const char *what) { return std::string(what) + ": " + std::strerror(errno); }

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
  return static_cast<int>(std::max<std::int64_t>(0, left.count()));
}

void set_nonblocking(int fd) {
  const int flags = ::fcntl(fd, F_GETFL, 0);
  if (flags < 0 || ::fcntl(fd, F_SETFL, flags | O_NONBLOCK) < 0) {
    throw TransportFault(errno_text("fcntl"));
  }
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

addrinfo *resolve(const std::string &host, std::uint16_t port, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo *res = nullptr;
  const std::string service = std::to_string(port);
  const int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), service.c_str(), &hints, &res);
  if (rc != 0) {
    throw TransportFault("cannot resolve " + host + ":" + service + ": " + ::gai_strerror(rc));
  }
  return res;
}

}  // namespace

std::vector<ManifestEntry> parse_manifest(const std::string &text) {
  std::vector<ManifestEntry> entries;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::string id_text;
    std::string address;
    if (!(fields >> id_text)) continue;
    std::string extra;
    if (!(fields >> address) || (fields >> extra)) {
      throw ConfigError("manifest line " + std::to_string(line_no) +
                        ": expected 'worker_id host:port'");
    }
    ManifestEntry e;
    auto [p1, ec1] = std::from_chars(id_text.data(), id_text.data() + id_text.size(), e.id);
    const auto colon = address.rfind(':');
    if (ec1 != std::errc() || p1 != id_text.data() + id_text.size() ||
        colon == std::string::npos) {
      throw ConfigError("manifest line " + std::to_string(line_no) + ": bad entry '" + line + "'");
    }
    e.host = address.substr(0, colon);
    const std::string port = address.substr(colon + 1);
    auto [p2, ec2] = std::from_chars(port.data(), port.data() + port.size(), e.port);
    if (ec2 != std::errc() || p2 != port.data() + port.size() || e.port == 0) {
      throw ConfigError("manifest line " + std::to_string(line_no) + ": bad port '" + port + "'");
    }
    entries.push_back(std::move(e));
  }
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry &a, const ManifestEntry &b) { return a.id < b.id; });
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].id != i) throw ConfigError("manifest worker ids must be 0..n-1 without gaps");
  }
  if (entries.empty()) throw ConfigError("manifest lists no workers");
  return entries;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str());
}

std::uint64_t config_digest(const RunConfig &cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config_to_text(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// NetEndpoint

NetEndpoint::NetEndpoint(WorkerId self, std::vector<ManifestEntry> manifest,
                         std::uint64_t config_digest, std::size_t max_frame_bytes)
    : self_(self),
      manifest_(std::move(manifest)),
      digest_(config_digest),
      max_frame_bytes_(max_frame_bytes) {
  if (self_ >= manifest_.size()) {
    throw ConfigError("worker id " + std::to_string(self_) + " is not in the manifest");
  }
  peers_.reserve(manifest_.size());
  for (std::size_t i = 0; i < manifest_.size(); ++i) peers_.push_back(Peer{-1, FrameReader(max_frame_bytes), {}, 0, false, 1});
  ::signal(SIGPIPE, SIG_IGN);
}

NetEndpoint::~NetEndpoint() { close_all(); }

void NetEndpoint::close_all() {
  for (auto &p : peers_) {
    if (p.fd >= 0) ::close(p.fd);
    p.fd = -1;
    p.closed = true;
  }
}

void NetEndpoint::write_control(WorkerId id, const std::string &payload) {
  Peer &peer = peers_[id];
  const auto frame = frame_bytes(payload);
  peer.out.insert(peer.out.end(), frame.begin(), frame.end());
  flush(std::chrono::milliseconds(30000));
}

std::string NetEndpoint::read_control(WorkerId id, Clock::time_point deadline) {
  Peer &peer = peers_[id];
  for (;;) {
    if (auto frame = peer.reader.next()) return *frame;
    pollfd pfd{peer.fd, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, remaining_ms(deadline));
    if (ready < 0 && errno != EINTR) throw TransportFault(errno_text("poll"));
    if (ready == 0) throw TransportFault("timed out waiting for worker " + std::to_string(id));
    std::byte buf[4096];
    const ssize_t n = ::read(peer.fd, buf, sizeof buf);
    if (n == 0) throw TransportFault("worker " + std::to_string(id) + " closed during startup");
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw TransportFault(errno_text("read"));
    }
    peer.reader.feed(std::span<const std::byte>(buf, static_cast<std::size_t>(n)));
  }
}

void NetEndpoint::establish(std::chrono::milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  const std::size_t n = manifest_.size();
  const char *bind_env = std::getenv(kBindAddressEnv);
  const std::string bind_host = bind_env != nullptr ? bind_env : manifest_[self_].host;

  int listener = -1;
  if (self_ + 1 < n) {
    addrinfo *res = resolve(bind_host, manifest_[self_].port, true);
    listener = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    int one = 1;
    ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (listener < 0 || ::bind(listener, res->ai_addr, res->ai_addrlen) != 0 ||
        ::listen(listener, static_cast<int>(n)) != 0) {
      ::freeaddrinfo(res);
      throw TransportFault(errno_text(("bind " + bind_host + ":" +
                                       std::to_string(manifest_[self_].port)).c_str()));
    }
    ::freeaddrinfo(res);
  }

  Json hello;
  hello["hello"] = self_;
  hello["config"] = NodeKey{digest_}.hex();
  const std::string hello_text = hello.dump();

  for (WorkerId j = 0; j < self_; ++j) {
    for (;;) {
      addrinfo *res = resolve(manifest_[j].host, manifest_[j].port, false);
      const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
      const int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
      ::freeaddrinfo(res);
      if (rc == 0) {
        peers_[j].fd = fd;
        break;
      }
      ::close(fd);
      if (Clock::now() > deadline) {
        throw TransportFault("cannot connect to worker " + std::to_string(j) + " at " +
                             manifest_[j].host + ":" + std::to_string(manifest_[j].port));
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    set_nodelay(peers_[j].fd);
    write_control(j, hello_text);
  }

  for (std::size_t accepted = self_ + 1; accepted < n; ++accepted) {
    pollfd pfd{listener, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, remaining_ms(deadline));
    if (ready <= 0) throw TransportFault("timed out waiting for peers to connect");
    const int fd = ::accept(listener, nullptr, nullptr);
    if (fd < 0) throw TransportFault(errno_text("accept"));
    set_nodelay(fd);
    // The peer's id is only known from its HELLO.
    Peer probe{fd, FrameReader(max_frame_bytes_), {}, 0, false, 1};
    std::swap(peers_[self_], probe);
    const std::string text = read_control(self_, deadline);
    std::swap(peers_[self_], probe);
    Json j = Json::parse(text);
    const auto id = j.at("hello").get<WorkerId>();
    if (id <= self_ || id >= n || peers_[id].fd >= 0) {
      throw TransportFault("unexpected HELLO from worker " + std::to_string(id));
    }
    if (j.at("config").get<std::string>() != NodeKey{digest_}.hex()) {
      throw TransportFault("worker " + std::to_string(id) + " runs a different config");
    }
    peers_[id] = std::move(probe);
  }
  if (listener >= 0) ::close(listener);

  // The dialing side checks the config of the side it dialed.
  for (WorkerId j = self_ + 1; j < n; ++j) write_control(j, hello_text);
  for (WorkerId j = 0; j < self_; ++j) {
    Json ack = Json::parse(read_control(j, deadline));
    if (ack.value("hello", n) != j || ack.value("config", "") != NodeKey{digest_}.hex()) {
      throw TransportFault("worker " + std::to_string(j) + " runs a different config");
    }
  }

  if (self_ == 0) {
    for (WorkerId j = 1; j < n; ++j) {
      Json ready = Json::parse(read_control(j, deadline));
      if (!ready.contains("ready")) throw TransportFault("expected READY from worker " + std::to_string(j));
    }
    for (WorkerId j = 1; j < n; ++j) write_control(j, "{\"go\":true}");
  } else {
    write_control(0, "{\"ready\":" + std::to_string(self_) + "}");
    Json go = Json::parse(read_control(0, deadline));
    if (!go.contains("go")) throw TransportFault("expected GO from worker 0");
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (j != self_) set_nonblocking(peers_[j].fd);
  }
}

void NetEndpoint::send(Message msg) {
  if (msg.dest >= peers_.size()) {
    throw TransportFault("send to unknown worker " + std::to_string(msg.dest));
  }
  msg.src = self_;
  ++counts_.sent[static_cast<int>(msg.kind)];
  if (msg.dest == self_) {
    msg.seq = loopback_seq_++;
    loopback_.push_back(std::move(msg));
    return;
  }
  Peer &peer = peers_[msg.dest];
  if (peer.closed || peer.fd < 0) {
    throw TransportFault("connection to worker " + std::to_string(msg.dest) + " is closed");
  }
  msg.seq = peer.next_seq++;
  const auto frame = encode(msg);
  peer.out.insert(peer.out.end(), frame.begin(), frame.end());
  write_some(peer);
}

void NetEndpoint::write_some(Peer &peer) {
  while (peer.out_offset < peer.out.size()) {
    const ssize_t n = ::send(peer.fd, peer.out.data() + peer.out_offset,
                             peer.out.size() - peer.out_offset, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EAGAIN || errno == EWOULDBLOCK) return;
      if (errno == EINTR) continue;
      throw TransportFault(errno_text("send"));
    }
    peer.out_offset += static_cast<std::size_t>(n);
  }
  peer.out.clear();
  peer.out_offset = 0;
}

void NetEndpoint::read_some(WorkerId id, Peer &peer, std::vector<Message> &into) {
  std::byte buf[65536];
  for (;;) {
    const ssize_t n = ::read(peer.fd, buf, sizeof buf);
    if (n == 0) {
      peer.closed = true;
      if (!finished_) throw TransportFault("worker " + std::to_string(id) + " closed its connection");
      break;
    }
    if (n < 0) {
      if (errno == EAGAIN || errno == EWOULDBLOCK) break;
      if (errno == EINTR) continue;
      throw TransportFault(errno_text("read"));
    }
    peer.reader.feed(std::span<const std::byte>(buf, static_cast<std::size_t>(n)));
    if (static_cast<std::size_t>(n) < sizeof buf) break;
  }
  while (auto record = peer.reader.next()) {
    Message msg = decode_record(*record);
    ++counts_.received[static_cast<int>(msg.kind)];
    into.push_back(std::move(msg));
  }
}

std::vector<Message> NetEndpoint::poll(std::chrono::milliseconds timeout) {
  std::vector<Message> out;
  while (!loopback_.empty()) {
    ++counts_.received[static_cast<int>(loopback_.front().kind)];
    out.push_back(std::move(loopback_.front()));
    loopback_.pop_front();
  }
  std::vector<pollfd> fds;
  std::vector<WorkerId> ids;
  for (WorkerId j = 0; j < peers_.size(); ++j) {
    const Peer &p = peers_[j];
    if (j == self_ || p.fd < 0 || p.closed) continue;
    short events = POLLIN;
    if (p.out_offset < p.out.size()) events |= POLLOUT;
    fds.push_back(pollfd{p.fd, events, 0});
    ids.push_back(j);
  }
  if (fds.empty()) return out;
  const int wait = out.empty() ? static_cast<int>(timeout.count()) : 0;
  const int ready = ::poll(fds.data(), fds.size(), wait);
  if (ready < 0) {
    if (errno == EINTR) return out;
    throw TransportFault(errno_text("poll"));
  }
  for (std::size_t i = 0; i < fds.size(); ++i) {
    Peer &p = peers_[ids[i]];
    if (fds[i].revents & POLLOUT) write_some(p);
    if (fds[i].revents & (POLLIN | POLLHUP | POLLERR)) read_some(ids[i], p, out);
  }
  return out;
}

void NetEndpoint::flush(std::chrono::milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  for (auto &p : peers_) {
    while (p.fd >= 0 && !p.closed && p.out_offset < p.out.size()) {
      write_some(p);
      if (p.out_offset >= p.out.size() && p.out.empty()) break;
      pollfd pfd{p.fd, POLLOUT, 0};
      if (::poll(&pfd, 1, remaining_ms(deadline)) <= 0 && Clock::now() > deadline) {
        throw TransportFault("timed out flushing output");
      }
    }
  }
}

bool NetEndpoint::coordinator_closed() const { return self_ == 0 || peers_[0].closed; }

// ---------------------------------------------------------------------------

std::optional<RunReport> run_net_worker(const RunConfig &cfg, WorkerId id) {
  validate(cfg);
  const auto manifest = load_manifest(cfg.manifest);
  if (manifest.size() != cfg.workers) {
    throw ConfigError("manifest lists " + std::to_string(manifest.size()) +
                      " workers but the config has " + std::to_string(cfg.workers));
  }
  auto problem = make_problem(cfg);
  const ZobristTable zobrist = make_zobrist(cfg, *problem);
  NetEndpoint endpoint(id, manifest, config_digest(cfg), cfg.max_message_bytes);
  endpoint.establish(std::chrono::milliseconds(30000));

  Worker worker(id, cfg, *problem, zobrist, endpoint);
  const auto start = Clock::now();
  const auto deadline =
      start + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(cfg.budget.amount));
  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };

  if (id == worker.root_home()) worker.seed_initial_jobs();
  while (!worker.finished()) {
    const bool idle = !worker.has_job();
    const double before = elapsed();
    for (Message &msg : endpoint.poll(std::chrono::milliseconds(idle ? 2 : 0))) {
      worker.deliver(std::move(msg));
    }
    if (idle && !worker.has_job()) worker.counters().idle_time += elapsed() - before;
    const bool gate = Clock::now() < deadline;
    worker.control(elapsed(), gate);
    if (worker.has_job()) worker.step(elapsed(), gate);
  }
  endpoint.mark_finished();
  endpoint.flush(std::chrono::milliseconds(30000));

  if (id != 0) {
    // Linger until the coordinator hangs up so no peer sees an early EOF.
    const auto linger = Clock::now() + std::chrono::seconds(30);
    while (!endpoint.coordinator_closed() && Clock::now() < linger) {
      endpoint.poll(std::chrono::milliseconds(20));
    }
    return std::nullopt;
  }

  std::vector<WorkerCounters> counters;
  std::optional<BestFound> best;
  for (std::size_t w = 0; w < worker.reports().size(); ++w) {
    counters.push_back(*worker.reports()[w]);
    const auto &b = worker.report_bests()[w];
    if (b && (!best || b->reward > best->reward)) best = b;
  }
  RunReport report = make_report(cfg, counters, best, elapsed());
  std::int64_t sel_sent = 0, sel_recv = 0, bp_sent = 0, bp_recv = 0, sims = 0, chains = 0;
  for (const auto &c : counters) {
    sel_sent += c.select_sent;
    sel_recv += c.select_received;
    bp_sent += c.bp_sent;
    bp_recv += c.bp_received;
    sims += c.simulations_done;
    chains += c.chains_completed;
  }
  if (sel_sent != sel_recv) report.violations.push_back("SELECT sent != received");
  if (bp_sent != bp_recv) report.violations.push_back("BACKPROP sent != received");
  if (sims != chains) report.violations.push_back("simulations != completed chains");
  report.summary.valid = report.violations.empty();
  return report;
}

}  // namespace hdmcts
