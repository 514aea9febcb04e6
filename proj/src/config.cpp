#include "hdmcts/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "hdmcts/json_io.hpp"

namespace hdmcts {

std::string_view algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::TDS_UCT: return "tds-uct";
    case Algorithm::TDS_DF_UCT: return "tds-df-uct";
    case Algorithm::MP_MCTS: return "mp-mcts";
    case Algorithm::SEQUENTIAL: return "sequential";
  }
  return "mp-mcts";
}

Algorithm parse_algorithm(std::string_view name) {
  if (name == "tds-uct" || name == "TDS_UCT") return Algorithm::TDS_UCT;
  if (name == "tds-df-uct" || name == "TDS_DF_UCT") return Algorithm::TDS_DF_UCT;
  if (name == "mp-mcts" || name == "MP_MCTS") return Algorithm::MP_MCTS;
  if (name == "sequential" || name == "SEQUENTIAL") return Algorithm::SEQUENTIAL;
  throw ConfigError("unknown algorithm '" + std::string(name) +
                    "' (expected tds-uct|tds-df-uct|mp-mcts|sequential)");
}

namespace {

std::string_view problem_name(ProblemKind p) {
  switch (p) {
    case ProblemKind::Synthetic: return "synthetic";
    case ProblemKind::Grammar: return "grammar";
    case ProblemKind::External: return "external";
  }
  return "synthetic";
}

ProblemKind parse_problem(std::string_view name) {
  if (name == "synthetic") return ProblemKind::Synthetic;
  if (name == "grammar") return ProblemKind::Grammar;
  if (name == "external") return ProblemKind::External;
  throw ConfigError("unknown problem '" + std::string(name) +
                    "' (expected synthetic|grammar|external)");
}

std::string_view transport_name(TransportKind t) {
  return t == TransportKind::Sim ? "sim" : "net";
}

TransportKind parse_transport(std::string_view name) {
  if (name == "sim") return TransportKind::Sim;
  if (name == "net") return TransportKind::Net;
  throw ConfigError("unknown transport '" + std::string(name) + "' (expected sim|net)");
}

// Converts a --set value to the JSON type a key expects.
Json typed_value(const std::string &type, std::string_view text) {
  auto fail = [&] {
    return ConfigError("expected " + type + " value, got '" + std::string(text) + "'");
  };
  if (type == "uint") {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) throw fail();
    return Json(v);
  }
  if (type == "real") {
    double v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) throw fail();
    return Json(v);
  }
  return Json(std::string(text));
}

struct Field {
  ConfigKey key;
  std::function<Json(const RunConfig &)> get;
  std::function<void(RunConfig &, const Json &)> set;
};

template <typename T>
T as(const Json &j, const std::string &name) {
  try {
    return j.get<T>();
  } catch (const std::exception &) {
    throw ConfigError("config key '" + name + "' has the wrong type");
  }
}

#define HD_UINT(name, member, help)                                                      \
  Field {                                                                                \
    {name, "uint", help}, [](const RunConfig &c) { return Json(c.member); },             \
        [](RunConfig &c, const Json &j) { c.member = as<decltype(c.member)>(j, name); }  \
  }
#define HD_REAL(name, member, help)                                                      \
  Field {                                                                                \
    {name, "real", help}, [](const RunConfig &c) { return Json(c.member); },             \
        [](RunConfig &c, const Json &j) { c.member = as<double>(j, name); }              \
  }
#define HD_STRING(name, member, help)                                                    \
  Field {                                                                                \
    {name, "string", help}, [](const RunConfig &c) { return Json(c.member); },           \
        [](RunConfig &c, const Json &j) { c.member = as<std::string>(j, name); }         \
  }

Field budget_field(const char *name, BudgetKind kind, const char *type, const char *help) {
  return Field{{name, type, help},
               [kind](const RunConfig &c) {
                 if (c.budget.kind != kind) return Json(nullptr);
                 if (kind == BudgetKind::Seconds) return Json(c.budget.amount);
                 return Json(static_cast<std::uint64_t>(c.budget.amount));
               },
               [kind, name](RunConfig &c, const Json &j) {
                 if (j.is_null()) return;
                 c.budget = Budget{kind, kind == BudgetKind::Seconds
                                             ? as<double>(j, name)
                                             : static_cast<double>(as<std::uint64_t>(j, name))};
               }};
}

const std::vector<Field> &fields() {
  static const std::vector<Field> table = {
      Field{{"algorithm", "enum", "tds-uct | tds-df-uct | mp-mcts | sequential"},
            [](const RunConfig &c) { return Json(algorithm_name(c.algorithm)); },
            [](RunConfig &c, const Json &j) {
              c.algorithm = parse_algorithm(as<std::string>(j, "algorithm"));
            }},
      Field{{"formula", "enum", "selection formula: ucb1 | vl | wu | lcb"},
            [](const RunConfig &c) { return Json(formula_name(c.formula.tag)); },
            [](RunConfig &c, const Json &j) {
              try {
                c.formula.tag = parse_formula(as<std::string>(j, "formula"));
              } catch (const ConfigError &) {
                throw;
              } catch (const std::invalid_argument &e) {
                throw ConfigError(e.what());
              }
            }},
      Field{{"exploration_c", "real", "exploration constant C (> 0)"},
            [](const RunConfig &c) { return Json(c.formula.C); },
            [](RunConfig &c, const Json &j) { c.formula.C = as<double>(j, "exploration_c"); }},
      HD_UINT("workers", workers, "number of workers (>= 1)"),
      HD_UINT("overload", overload, "overload factor N; N x workers jobs in flight"),
      budget_field("budget_sims", BudgetKind::Simulations, "uint", "budget in total simulations"),
      budget_field("budget_ticks", BudgetKind::Ticks, "uint", "budget in virtual ticks (sim)"),
      budget_field("budget_secs", BudgetKind::Seconds, "real", "budget in wall seconds (net)"),
      HD_UINT("seed", seed, "master seed"),
      HD_UINT("expansion_threshold", expansion_threshold, "visits at which a node expands"),
      HD_REAL("prune_cumulative", prune_cumulative, "expansion keeps priors up to this mass"),
      HD_UINT("max_depth", max_depth, "Zobrist table depth"),
      HD_UINT("max_branching", max_branching, "Zobrist table branching"),
      Field{{"problem", "enum", "synthetic | grammar | external"},
            [](const RunConfig &c) { return Json(problem_name(c.problem)); },
            [](RunConfig &c, const Json &j) {
              c.problem = parse_problem(as<std::string>(j, "problem"));
            }},
      HD_UINT("synthetic_depth", synthetic_depth, "synthetic tree depth"),
      HD_UINT("synthetic_branching", synthetic_branching, "synthetic tree branching"),
      HD_UINT("synthetic_seed", synthetic_seed, "seed of the synthetic reward law"),
      HD_STRING("grammar_fixture", grammar_fixture, "grammar fixture path (empty: built-in)"),
      HD_STRING("oracle_cmd", oracle_cmd, "external oracle command line"),
      HD_STRING("oracle_alphabet", oracle_alphabet, "comma-separated symbols; \\n is the end"),
      HD_UINT("oracle_max_length", oracle_max_length, "maximum external solution length"),
      HD_REAL("oracle_squash", oracle_squash, "k in k*s/(1+k*|s|) for oracle scores"),
      HD_REAL("oracle_timeout_secs", oracle_timeout_secs, "oracle reply timeout"),
      Field{{"transport", "enum", "sim | net"},
            [](const RunConfig &c) { return Json(transport_name(c.transport)); },
            [](RunConfig &c, const Json &j) {
              c.transport = parse_transport(as<std::string>(j, "transport"));
            }},
      HD_UINT("latency_ticks", latency_ticks, "sim: minimum per-hop latency"),
      HD_UINT("latency_max_ticks", latency_max_ticks, "sim: maximum per-hop latency (jitter)"),
      HD_UINT("message_cost_ticks", message_cost_ticks, "sim: ticks to handle one job"),
      HD_UINT("simulation_cost_ticks", simulation_cost_ticks, "sim: extra ticks per rollout"),
      HD_STRING("manifest", manifest, "net: manifest of 'worker_id host:port' lines"),
      HD_UINT("max_message_bytes", max_message_bytes, "largest accepted frame"),
  };
  return table;
}

#undef HD_UINT
#undef HD_REAL
#undef HD_STRING

const Field *find_field(std::string_view name) {
  for (const auto &f : fields()) {
    if (f.key.name == name) return &f;
  }
  return nullptr;
}

std::string valid_keys() {
  std::string out;
  for (const auto &f : fields()) {
    if (!out.empty()) out += ", ";
    out += f.key.name;
  }
  return out;
}

}  // namespace

const std::vector<ConfigKey> &config_schema() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto &f : fields()) out.push_back(f.key);
    return out;
  }();
  return keys;
}

std::string config_help() {
  const RunConfig defaults;
  std::ostringstream out;
  out << "Config keys (config file or --set key=value):\n";
  for (const auto &f : fields()) {
    out << "  " << f.key.name << " (" << f.key.type << ", default " << f.get(defaults).dump()
        << "): " << f.key.help << "\n";
  }
  return out.str();
}

std::string config_to_text(const RunConfig &cfg) {
  Json j;
  for (const auto &f : fields()) j[f.key.name] = f.get(cfg);
  return j.dump(2) + "\n";
}

RunConfig config_from_text(const std::string &text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const std::exception &e) {
    throw ConfigError(std::string("config is not valid canonical text: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be an object");
  int budgets = 0;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (find_field(it.key()) == nullptr) {
      throw ConfigError("unknown config key '" + it.key() + "'; valid keys: " + valid_keys());
    }
    if (it.key().rfind("budget_", 0) == 0 && !it.value().is_null()) ++budgets;
  }
  if (budgets > 1) throw ConfigError("exactly one of budget_sims/budget_ticks/budget_secs may be set");
  RunConfig cfg;
  for (auto it = j.begin(); it != j.end(); ++it) find_field(it.key())->set(cfg, it.value());
  return cfg;
}

RunConfig load_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_text(ss.str());
}

void set_config_value(RunConfig &cfg, std::string_view key, std::string_view value) {
  const Field *f = find_field(key);
  if (f == nullptr) {
    throw ConfigError("unknown config key '" + std::string(key) + "'; valid keys: " + valid_keys());
  }
  f->set(cfg, typed_value(f->key.type, value));
}

void apply_override(RunConfig &cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override must be key=value, got '" + std::string(assignment) + "'");
  }
  set_config_value(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

void validate(const RunConfig &cfg) {
  std::vector<std::string> problems;
  if (cfg.workers < 1) problems.push_back("workers must be >= 1");
  if (cfg.overload < 1) problems.push_back("overload must be >= 1");
  if (!(cfg.formula.C > 0.0)) problems.push_back("exploration_c must be > 0");
  if (!(cfg.prune_cumulative > 0.0 && cfg.prune_cumulative <= 1.0)) {
    problems.push_back("prune_cumulative must be in (0, 1]");
  }
  if (cfg.expansion_threshold < 1) problems.push_back("expansion_threshold must be >= 1");
  if (cfg.budget.amount < 0) problems.push_back("budget must be non-negative");
  if (cfg.transport == TransportKind::Sim && cfg.budget.kind == BudgetKind::Seconds) {
    problems.push_back("budget_secs needs the net transport; use budget_sims or budget_ticks");
  }
  if (cfg.transport == TransportKind::Net && cfg.budget.kind != BudgetKind::Seconds) {
    problems.push_back("the net transport runs on budget_secs");
  }
  if (cfg.transport == TransportKind::Net && cfg.manifest.empty()) {
    problems.push_back("the net transport needs a manifest");
  }
  if (cfg.algorithm == Algorithm::SEQUENTIAL && cfg.budget.kind != BudgetKind::Simulations) {
    problems.push_back("the sequential oracle runs on budget_sims");
  }
  if (cfg.latency_ticks < 1) problems.push_back("latency_ticks must be >= 1");
  if (cfg.latency_max_ticks < cfg.latency_ticks) {
    problems.push_back("latency_max_ticks must be >= latency_ticks");
  }
  if (cfg.message_cost_ticks < 1) problems.push_back("message_cost_ticks must be >= 1");
  if (cfg.problem == ProblemKind::Synthetic &&
      (cfg.synthetic_depth < 1 || cfg.synthetic_branching < 1)) {
    problems.push_back("synthetic_depth and synthetic_branching must be >= 1");
  }
  if (cfg.problem == ProblemKind::External && cfg.oracle_cmd.empty()) {
    problems.push_back("the external problem needs oracle_cmd");
  }
  if (cfg.max_depth < 1 || cfg.max_branching < 1) {
    problems.push_back("max_depth and max_branching must be >= 1");
  }
  if (!problems.empty()) {
    std::string msg = "invalid config:";
    for (const auto &p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
}

namespace {

std::vector<std::string> split_alphabet(const std::string &text) {
  std::vector<std::string> out;
  std::string current;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == ',') {
      out.push_back(unescape_line(current));
      current.clear();
    } else {
      current += text[i];
    }
  }
  return out;
}

}  // namespace

std::unique_ptr<ProblemAdapter> make_problem(const RunConfig &cfg) {
  switch (cfg.problem) {
    case ProblemKind::Synthetic:
      return std::make_unique<SyntheticTree>(
          SyntheticTreeSpec{cfg.synthetic_depth, cfg.synthetic_branching, cfg.synthetic_seed});
    case ProblemKind::Grammar:
      return std::make_unique<GrammarProblem>(cfg.grammar_fixture.empty()
                                                  ? GrammarSpec::builtin()
                                                  : GrammarSpec::load(cfg.grammar_fixture));
    case ProblemKind::External: {
      OracleConfig oc;
      oc.command = cfg.oracle_cmd;
      oc.alphabet = split_alphabet(cfg.oracle_alphabet);
      oc.max_length = cfg.oracle_max_length;
      oc.squash = cfg.oracle_squash;
      oc.timeout = std::chrono::milliseconds(static_cast<std::int64_t>(cfg.oracle_timeout_secs * 1000));
      return std::make_unique<OracleProblem>(std::move(oc));
    }
  }
  throw ConfigError("unknown problem kind");
}

}  // namespace hdmcts
