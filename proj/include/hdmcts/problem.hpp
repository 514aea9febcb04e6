#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "hdmcts/rng.hpp"
#include "hdmcts/tree_store.hpp"

namespace hdmcts {

/// States are action sequences from the root; each adapter interprets them.
using State = NodePath;

struct Candidate {
  Action action = 0;
  double prior = 0.0;

  friend bool operator==(const Candidate &, const Candidate &) = default;
};

struct Rollout {
  State terminal;
  std::string solution;
};

/// Recoverable adapter failure; the engine records reward -1.
class ProblemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unrecoverable failure (e.g. the external scorer died); aborts the run.
class ProblemFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ProblemAdapter {
 public:
  virtual ~ProblemAdapter() = default;

  virtual State root_state() const { return State{}; }
  /// Deterministic per state; priors in (0, 1] summing to at most 1.
  virtual std::vector<Candidate> expand_candidates(const State &state) = 0;
  virtual bool is_terminal(const State &state) = 0;
  virtual State apply(const State &state, Action action) const { return state.child(action); }
  virtual Rollout rollout(const State &state, Rng &rng) = 0;
  /// Deterministic per solution; always in [-1, 1].
  virtual double score(const std::string &solution) = 0;

  /// Bounds used to size the Zobrist table.
  virtual std::size_t max_depth() const = 0;
  virtual std::size_t max_branching() const = 0;
};

/// Sorts by prior descending (ties: lower action first) and keeps the
/// shortest prefix whose cumulative prior reaches `threshold`, never fewer
/// than one candidate.
std::vector<Candidate> prune_by_cumulative_prior(std::vector<Candidate> candidates,
                                                 double threshold);

/// k*s / (1 + k*|s|): strictly monotone, sign preserving, |r| < 1.
double squash_score(double raw, double k);

// ---------------------------------------------------------------------------
// Synthetic needle tree

struct SyntheticTreeSpec {
  std::size_t depth = 4;
  std::size_t branching = 3;
  std::uint64_t seed = 1;
};

/// Complete tree with i.i.d. uniform[-1, 1] leaf rewards and one planted
/// golden leaf of reward 1.0. Uniform priors.
class SyntheticTree final : public ProblemAdapter {
 public:
  explicit SyntheticTree(SyntheticTreeSpec spec);

  std::vector<Candidate> expand_candidates(const State &state) override;
  bool is_terminal(const State &state) override { return state.depth() >= spec_.depth; }
  Rollout rollout(const State &state, Rng &rng) override;
  double score(const std::string &solution) override;
  std::size_t max_depth() const override { return spec_.depth; }
  std::size_t max_branching() const override { return spec_.branching; }

  const SyntheticTreeSpec &spec() const { return spec_; }
  std::uint64_t leaf_count() const { return leaf_count_; }
  std::uint64_t golden_leaf() const { return golden_; }
  double leaf_reward(std::uint64_t leaf_index) const;
  std::uint64_t leaf_index(const State &leaf) const;
  State leaf_path(std::uint64_t leaf_index) const;

 private:
  SyntheticTreeSpec spec_;
  std::uint64_t leaf_count_;
  std::uint64_t golden_;
};

struct Optimum {
  double best_reward = 0.0;
  State best_path;
};

/// Exhaustive scan of every leaf; throws std::length_error above 10^6 leaves.
Optimum synthetic_enumerate_optimum(const SyntheticTreeSpec &spec);

// ---------------------------------------------------------------------------
// Grammar string generation

enum class SymbolClass : std::uint8_t { Atom, Bond, Open, Close, Ring, End };

struct GrammarMotif {
  std::string pattern;
  double weight = 0.0;
};

/// Everything needed to reproduce the grammar problem; loaded from a fixture.
struct GrammarSpec {
  std::vector<std::string> symbols;
  std::vector<SymbolClass> classes;
  std::vector<double> start_weights;
  std::vector<std::vector<double>> weights;  // [previous symbol][next symbol]
  std::size_t max_length = 24;               // symbols before the end marker
  std::size_t min_length = 3;
  std::size_t max_open = 2;
  std::vector<GrammarMotif> motifs;
  std::vector<double> symbol_scores;
  double length_target = 16.0;
  double length_penalty = 0.25;
  double squash = 0.1;

  static GrammarSpec builtin();
  static GrammarSpec load(const std::filesystem::path &fixture);
  static GrammarSpec from_text(const std::string &text);
  std::string to_text() const;
};

class GrammarProblem final : public ProblemAdapter {
 public:
  explicit GrammarProblem(GrammarSpec spec);

  std::vector<Candidate> expand_candidates(const State &state) override;
  bool is_terminal(const State &state) override;
  Rollout rollout(const State &state, Rng &rng) override;
  double score(const std::string &solution) override;
  std::size_t max_depth() const override { return spec_.max_length + 1; }
  std::size_t max_branching() const override { return spec_.symbols.size(); }

  std::string render(const State &state) const;
  /// Unsquashed surrogate of a completed string (without the end marker).
  double surrogate(const std::string &body) const;
  const GrammarSpec &spec() const { return spec_; }

 private:
  struct Cursor {
    std::optional<Action> last;
    std::size_t length = 0;  // symbols excluding the end marker
    std::size_t open = 0;
    std::size_t rings = 0;
  };

  std::vector<Candidate> allowed(const State &state) const;
  bool permitted(const Cursor &at, Action next) const;
  Cursor advance(Cursor at, Action next) const;
  std::size_t closing_distance(const Cursor &at) const;

  GrammarSpec spec_;
  Action end_symbol_;
  // Fewest further symbols before the end marker is allowed, indexed by
  // (last symbol + 1, open parentheses, ring parity).
  std::vector<std::size_t> closing_;
};

// ---------------------------------------------------------------------------
// External oracle process

struct OracleConfig {
  std::string command;                    // run via /bin/sh -c
  std::vector<std::string> alphabet;      // action id = index; "\n" is the end marker
  std::size_t max_length = 24;
  double squash = 0.01;
  std::chrono::milliseconds timeout{30000};
};

/// Line protocol over the child's stdin/stdout:
///   SCORE <solution>  ->  OK <raw value> | ERR <message>
///   PRIORS <prefix>   ->  OK <k> <symbol:prob>... | ERR <message>
/// Newlines and backslashes inside strings are escaped as \n and \\.
/// A timeout yields reward -1 and restarts the oracle; EOF raises ProblemFault.
class OracleProblem final : public ProblemAdapter {
 public:
  explicit OracleProblem(OracleConfig config);
  ~OracleProblem() override;
  OracleProblem(const OracleProblem &) = delete;
  OracleProblem &operator=(const OracleProblem &) = delete;

  std::vector<Candidate> expand_candidates(const State &state) override;
  bool is_terminal(const State &state) override;
  Rollout rollout(const State &state, Rng &rng) override;
  double score(const std::string &solution) override;
  std::size_t max_depth() const override { return config_.max_length + 1; }
  std::size_t max_branching() const override { return config_.alphabet.size(); }

  std::string render(const State &state) const;
  std::int64_t timeouts() const { return timeouts_; }

 private:
  std::optional<std::string> request(const std::string &line);
  void start();
  void stop();

  OracleConfig config_;
  std::optional<Action> end_symbol_;
  std::unordered_map<std::string, std::vector<Candidate>> prior_cache_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string read_buffer_;
  std::int64_t timeouts_ = 0;
};

std::string escape_line(const std::string &text);
std::string unescape_line(const std::string &text);

}  // namespace hdmcts
