#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hdmcts/bandit.hpp"
#include "hdmcts/problem.hpp"

namespace hdmcts {

enum class Algorithm : std::uint8_t { TDS_UCT, TDS_DF_UCT, MP_MCTS, SEQUENTIAL };
enum class BudgetKind : std::uint8_t { Simulations, Ticks, Seconds };
enum class ProblemKind : std::uint8_t { Synthetic, Grammar, External };
enum class TransportKind : std::uint8_t { Sim, Net };

std::string_view algorithm_name(Algorithm a);
Algorithm parse_algorithm(std::string_view name);

struct Budget {
  BudgetKind kind = BudgetKind::Simulations;
  double amount = 1000;

  friend bool operator==(const Budget &, const Budget &) = default;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  Algorithm algorithm = Algorithm::MP_MCTS;
  VlFormula formula{FormulaTag::VANILLA_VL, 1.0};
  std::uint32_t workers = 1;
  std::uint32_t overload = 3;
  Budget budget;
  std::uint64_t seed = 1;
  std::uint32_t expansion_threshold = 2;
  double prune_cumulative = 0.95;
  std::uint32_t max_depth = 64;
  std::uint32_t max_branching = 16;

  ProblemKind problem = ProblemKind::Synthetic;
  std::uint32_t synthetic_depth = 4;
  std::uint32_t synthetic_branching = 3;
  std::uint64_t synthetic_seed = 1;
  std::string grammar_fixture;  // empty: built-in grammar
  std::string oracle_cmd;
  std::string oracle_alphabet = "C,N,O,=,(,),1,\\n";
  std::uint32_t oracle_max_length = 24;
  double oracle_squash = 0.01;
  double oracle_timeout_secs = 30.0;

  TransportKind transport = TransportKind::Sim;
  std::uint32_t latency_ticks = 1;
  std::uint32_t latency_max_ticks = 1;  // > latency_ticks enables seeded jitter
  std::uint32_t message_cost_ticks = 1;
  std::uint32_t simulation_cost_ticks = 10;
  std::string manifest;
  std::uint64_t max_message_bytes = 16u << 20;

  friend bool operator==(const RunConfig &, const RunConfig &) = default;
};

/// Keys, types and help text; the single source for parsing, --set
/// overrides, serialization and --help.
struct ConfigKey {
  std::string name;
  std::string type;
  std::string help;
};
const std::vector<ConfigKey> &config_schema();
std::string config_help();

/// Canonical text form (JSON object, schema order, unset budgets as null).
std::string config_to_text(const RunConfig &cfg);
/// Unknown keys are rejected with the list of valid keys; missing keys keep
/// their defaults. Throws ConfigError.
RunConfig config_from_text(const std::string &text);
RunConfig load_config(const std::string &path);
/// Applies one "key=value" override. Throws ConfigError.
void apply_override(RunConfig &cfg, std::string_view assignment);
void set_config_value(RunConfig &cfg, std::string_view key, std::string_view value);
/// Throws ConfigError describing every violated constraint.
void validate(const RunConfig &cfg);

std::unique_ptr<ProblemAdapter> make_problem(const RunConfig &cfg);

}  // namespace hdmcts
