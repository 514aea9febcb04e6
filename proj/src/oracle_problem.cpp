#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstring>
#include <iostream>
#include <sstream>

#include "hdmcts/problem.hpp"

namespace hdmcts {

std::string escape_line(const std::string &text) {
  std::string out;
  out.reserve(text.size());
  for (char ch : text) {
    if (ch == '\\') {
      out += "\\\\";
    } else if (ch == '\n') {
      out += "\\n";
    } else {
      out += ch;
    }
  }
  return out;
}

std::string unescape_line(const std::string &text) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\\' && i + 1 < text.size()) {
      const char next = text[++i];
      out += next == 'n' ? '\n' : next;
    } else {
      out += text[i];
    }
  }
  return out;
}

OracleProblem::OracleProblem(OracleConfig config) : config_(std::move(config)) {
  if (config_.alphabet.empty()) throw std::invalid_argument("oracle alphabet is empty");
  for (std::size_t i = 0; i < config_.alphabet.size(); ++i) {
    if (config_.alphabet[i] == "\n") end_symbol_ = static_cast<Action>(i);
  }
  ::signal(SIGPIPE, SIG_IGN);
  start();
}

OracleProblem::~OracleProblem() { stop(); }

void OracleProblem::start() {
  int in_pipe[2];
  int out_pipe[2];
  if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0) {
    throw ProblemFault(std::string("oracle pipe: ") + std::strerror(errno));
  }
  const pid_t pid = ::fork();
  if (pid < 0) throw ProblemFault(std::string("oracle fork: ") + std::strerror(errno));
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::execl("/bin/sh", "sh", "-c", config_.command.c_str(), static_cast<char *>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  read_buffer_.clear();
}

void OracleProblem::stop() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    ::kill(pid_, SIGTERM);
    ::waitpid(pid_, nullptr, 0);
  }
  pid_ = -1;
}

std::optional<std::string> OracleProblem::request(const std::string &line) {
  const std::string out = line + "\n";
  std::size_t written = 0;
  while (written < out.size()) {
    const ssize_t n = ::write(to_child_, out.data() + written, out.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ProblemFault(std::string("oracle write failed: ") + std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }

  const auto deadline = std::chrono::steady_clock::now() + config_.timeout;
  for (;;) {
    if (auto nl = read_buffer_.find('\n'); nl != std::string::npos) {
      std::string response = read_buffer_.substr(0, nl);
      read_buffer_.erase(0, nl + 1);
      return response;
    }
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (remaining.count() <= 0) {
      ++timeouts_;
      std::cerr << "warning: oracle timed out after " << config_.timeout.count()
                << " ms; restarting it\n";
      stop();
      start();
      return std::nullopt;
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw ProblemFault(std::string("oracle poll failed: ") + std::strerror(errno));
    }
    if (ready == 0) continue;
    char buf[4096];
    const ssize_t n = ::read(from_child_, buf, sizeof buf);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ProblemFault(std::string("oracle read failed: ") + std::strerror(errno));
    }
    if (n == 0) throw ProblemFault("oracle process closed its output");
    read_buffer_.append(buf, static_cast<std::size_t>(n));
  }
}

std::string OracleProblem::render(const State &state) const {
  std::string out;
  for (Action a : state.actions()) out += config_.alphabet.at(a);
  return out;
}

bool OracleProblem::is_terminal(const State &state) {
  if (!state.is_root() && end_symbol_ && state.back() == *end_symbol_) return true;
  return state.depth() >= config_.max_length;
}

std::vector<Candidate> OracleProblem::expand_candidates(const State &state) {
  if (is_terminal(state)) return {};
  const std::string prefix = render(state);
  if (auto it = prior_cache_.find(prefix); it != prior_cache_.end()) return it->second;

  auto response = request("PRIORS " + escape_line(prefix));
  if (!response) throw ProblemError("oracle timed out on PRIORS");
  std::istringstream in(*response);
  std::string status;
  in >> status;
  if (status != "OK") throw ProblemError("oracle PRIORS failed: " + *response);
  std::size_t k = 0;
  if (!(in >> k)) throw ProblemError("oracle PRIORS: missing count in '" + *response + "'");
  std::vector<Candidate> out;
  for (std::size_t i = 0; i < k; ++i) {
    std::string token;
    if (!(in >> token)) throw ProblemError("oracle PRIORS: expected " + std::to_string(k) + " pairs");
    const auto colon = token.rfind(':');
    if (colon == std::string::npos) throw ProblemError("oracle PRIORS: bad pair '" + token + "'");
    const std::string symbol = unescape_line(token.substr(0, colon));
    double prob = 0.0;
    const std::string prob_text = token.substr(colon + 1);
    auto [ptr, ec] = std::from_chars(prob_text.data(), prob_text.data() + prob_text.size(), prob);
    if (ec != std::errc() || ptr != prob_text.data() + prob_text.size()) {
      throw ProblemError("oracle PRIORS: bad probability '" + prob_text + "'");
    }
    auto it = std::find(config_.alphabet.begin(), config_.alphabet.end(), symbol);
    if (it == config_.alphabet.end() || prob <= 0.0) continue;
    out.push_back(Candidate{static_cast<Action>(it - config_.alphabet.begin()), prob});
  }
  std::sort(out.begin(), out.end(),
            [](const Candidate &a, const Candidate &b) { return a.action < b.action; });
  prior_cache_.emplace(prefix, out);
  return out;
}

Rollout OracleProblem::rollout(const State &state, Rng &rng) {
  State current = state;
  while (!is_terminal(current)) {
    const auto candidates = expand_candidates(current);
    if (candidates.empty()) break;
    double total = 0.0;
    for (const auto &c : candidates) total += c.prior;
    const double u = unit_real(rng) * total;
    double cumulative = 0.0;
    Action pick = candidates.back().action;
    for (const auto &c : candidates) {
      cumulative += c.prior;
      if (u < cumulative) {
        pick = c.action;
        break;
      }
    }
    current = current.child(pick);
  }
  std::string solution = render(current);
  return Rollout{std::move(current), std::move(solution)};
}

double OracleProblem::score(const std::string &solution) {
  std::string body = solution;
  if (end_symbol_) {
    if (body.empty() || body.back() != '\n') return -1.0;
    body.pop_back();
  }
  auto response = request("SCORE " + escape_line(body));
  if (!response) return -1.0;
  if (response->rfind("OK ", 0) != 0) return -1.0;
  const std::string value_text = response->substr(3);
  double raw = 0.0;
  auto [ptr, ec] = std::from_chars(value_text.data(), value_text.data() + value_text.size(), raw);
  if (ec != std::errc()) return -1.0;
  return squash_score(raw, config_.squash);
}

}  // namespace hdmcts
