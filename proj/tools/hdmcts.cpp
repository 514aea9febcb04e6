// hdmcts: command-line driver for the distributed MCTS engine.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>

#include "hdmcts/config.hpp"
#include "hdmcts/engine.hpp"
#include "hdmcts/json_io.hpp"
#include "hdmcts/net.hpp"
#include "hdmcts/sequential.hpp"
#include "hdmcts/sim.hpp"

namespace fs = std::filesystem;
using namespace hdmcts;

namespace {

constexpr int kExitFault = 1;
constexpr int kExitConfig = 2;

/// Config flags shared by run, oracle, compare and config. Values are kept
/// as text and applied through the config schema in command-line order.
struct ConfigFlags {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> values;
  std::vector<std::string> sets;

  void attach(CLI::App *app) {
    app->add_option("--config", config_path, "config file (canonical JSON)");
    app->add_option("--set", sets, "override any config key: key=value (repeatable)");
    bind(app, "--algo", "algorithm", "tds-uct | tds-df-uct | mp-mcts");
    bind(app, "--workers", "workers", "number of workers");
    bind(app, "--overload", "overload", "overload factor N");
    bind(app, "--formula", "formula", "ucb1 | vl | wu | lcb");
    bind(app, "--c", "exploration_c", "exploration constant");
    bind(app, "--budget-sims", "budget_sims", "budget in total simulations");
    bind(app, "--budget-ticks", "budget_ticks", "budget in virtual ticks (sim)");
    bind(app, "--budget-secs", "budget_secs", "budget in wall seconds (net)");
    bind(app, "--seed", "seed", "master seed");
    bind(app, "--problem", "problem", "synthetic | grammar | external");
    bind(app, "--oracle-cmd", "oracle_cmd", "command of the external oracle");
    bind(app, "--transport", "transport", "sim | net");
    bind(app, "--manifest", "manifest", "net: 'worker_id host:port' lines");
  }

  void bind(CLI::App *app, const char *flag, const char *key, const char *help) {
    app->add_option_function<std::string>(
        flag, [this, key](const std::string &v) { values.emplace_back(key, v); }, help);
  }

  RunConfig resolve() const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    for (const auto &[key, value] : values) set_config_value(cfg, key, value);
    for (const auto &s : sets) apply_override(cfg, s);
    return cfg;
  }
};

double mean_of(const std::vector<double> &xs) {
  return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double stddev_of(const std::vector<double> &xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double median_of(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

void print_summary(const RunReport &report) {
  const auto &s = report.summary;
  std::cout << s.algorithm << " workers=" << s.workers << " simulations=" << s.total_simulations
            << " bp_messages=" << s.total_bp_messages << " best_reward=" << format_real(s.best_reward)
            << " final_time=" << format_real(s.final_time) << " " << s.time_unit
            << " valid=" << (s.valid ? "true" : "false") << "\n";
  for (const auto &v : report.violations) std::cerr << "violation: " << v << "\n";
  if (!report.fault.empty()) std::cerr << "fault: " << report.fault << "\n";
}

int run_sim(const RunConfig &cfg, const fs::path &out, const std::string &dump_tree) {
  SimCluster cluster(cfg);
  const SimResult result = cluster.run();
  const RunReport report = make_report(cfg, result);
  write_run_outputs(report, out);
  if (!dump_tree.empty()) {
    std::ofstream dump(dump_tree);
    if (!dump) throw std::runtime_error("cannot write " + dump_tree);
    for (WorkerId w = 0; w < cluster.size(); ++w) {
      dump << "# worker " << w << "\n";
      write_tree_dump(cluster.worker(w).store(), dump);
    }
  }
  print_summary(report);
  return report.summary.valid ? 0 : kExitFault;
}

int spawn_local_workers(const RunConfig &cfg, int argc, char **argv) {
  std::vector<pid_t> children;
  for (WorkerId w = 0; w < cfg.workers; ++w) {
    const pid_t pid = ::fork();
    if (pid < 0) throw std::runtime_error("fork failed");
    if (pid == 0) {
      std::vector<std::string> args(argv, argv + argc);
      args.push_back("--worker-id");
      args.push_back(std::to_string(w));
      std::vector<char *> raw;
      for (auto &a : args) raw.push_back(a.data());
      raw.push_back(nullptr);
      ::execv("/proc/self/exe", raw.data());
      ::_exit(127);
    }
    children.push_back(pid);
  }
  int worst = 0;
  for (pid_t pid : children) {
    int status = 0;
    ::waitpid(pid, &status, 0);
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : kExitFault;
    worst = std::max(worst, code);
  }
  return worst;
}

int cmd_run(const RunConfig &cfg, const fs::path &out, const std::string &dump_tree,
            std::optional<WorkerId> worker_id, int argc, char **argv) {
  validate(cfg);
  if (cfg.algorithm == Algorithm::SEQUENTIAL) {
    throw ConfigError("use the 'oracle' subcommand for the sequential algorithm");
  }
  if (cfg.transport == TransportKind::Sim) return run_sim(cfg, out, dump_tree);
  if (!worker_id) return spawn_local_workers(cfg, argc, argv);
  auto report = run_net_worker(cfg, *worker_id);
  if (report) {
    write_run_outputs(*report, out);
    print_summary(*report);
    return report->summary.valid ? 0 : kExitFault;
  }
  return 0;
}

int cmd_oracle(RunConfig cfg, const fs::path &out) {
  cfg.algorithm = Algorithm::SEQUENTIAL;
  validate(cfg);
  auto problem = make_problem(cfg);
  const SequentialResult result = run_sequential_uct(cfg, *problem);
  fs::create_directories(out);
  {
    std::ofstream trace(out / "trace.csv");
    trace << "index,path,reward\n";
    for (std::size_t i = 0; i < result.trace.size(); ++i) {
      trace << i << ',' << result.trace[i].path.to_string() << ','
            << format_real(result.trace[i].reward) << '\n';
    }
  }
  Json j;
  j["best_reward"] = result.best_reward;
  j["best_solution"] = result.best_solution;
  j["simulations"] = result.trace.size();
  std::ofstream(out / "oracle.json") << j.dump(2) << '\n';
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_compare(const RunConfig &base, const std::vector<std::string> &algos,
                const std::vector<std::uint32_t> &worker_counts, std::uint32_t seeds,
                const std::vector<std::uint64_t> &seed_list, const fs::path &out) {
  std::vector<std::uint64_t> run_seeds = seed_list;
  if (run_seeds.empty()) {
    for (std::uint32_t i = 0; i < seeds; ++i) run_seeds.push_back(base.seed + i);
  }
  fs::create_directories(out);
  std::ofstream csv(out / "compare.csv");
  csv << "algorithm,workers,runs,mean,stddev,median,min,max\n";
  std::cout << "algorithm     workers  runs  mean +- stddev            median\n";
  bool all_valid = true;
  for (const auto &algo : algos) {
    for (std::uint32_t workers : worker_counts) {
      std::vector<double> best;
      for (std::uint64_t seed : run_seeds) {
        RunConfig cfg = base;
        cfg.algorithm = parse_algorithm(algo);
        cfg.workers = workers;
        cfg.seed = seed;
        validate(cfg);
        const RunReport report = run_distributed(cfg);
        all_valid = all_valid && report.summary.valid;
        best.push_back(report.summary.best_reward);
      }
      const auto [lo, hi] = std::minmax_element(best.begin(), best.end());
      csv << algo << ',' << workers << ',' << best.size() << ',' << format_real(mean_of(best)) << ','
          << format_real(stddev_of(best)) << ',' << format_real(median_of(best)) << ','
          << format_real(*lo) << ',' << format_real(*hi) << '\n';
      std::printf("%-13s %7u %5zu  %.4f +- %.4f  %14.4f\n", algo.c_str(), workers, best.size(),
                  mean_of(best), stddev_of(best), median_of(best));
    }
  }
  return all_valid ? 0 : kExitFault;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Distributed parallel Monte-Carlo tree search (TDS-UCT, TDS-df-UCT, MP-MCTS)"};
  app.footer(config_help());
  app.require_subcommand(1);

  ConfigFlags run_flags;
  std::string run_out = "out";
  std::string dump_tree;
  std::optional<WorkerId> worker_id;
  auto *run = app.add_subcommand("run", "run a distributed search (sim or net transport)");
  run_flags.attach(run);
  run->add_option("--out", run_out, "output directory for report.json and metrics CSVs");
  run->add_option("--worker-id", worker_id, "net: run only this worker of the manifest");
  run->add_option("--dump-tree", dump_tree, "sim: write every stored node to this file");

  ConfigFlags oracle_flags;
  std::string oracle_out = "out";
  auto *oracle = app.add_subcommand("oracle", "run the sequential UCT reference");
  oracle_flags.attach(oracle);
  oracle->add_option("--out", oracle_out, "output directory for oracle.json and trace.csv");

  ConfigFlags compare_flags;
  std::string compare_out = "out";
  std::vector<std::string> algos{"mp-mcts"};
  std::vector<std::uint32_t> worker_counts{1, 4, 16};
  std::uint32_t seeds = 10;
  std::vector<std::uint64_t> seed_list;
  auto *compare = app.add_subcommand("compare", "best reward over algorithms x workers x seeds");
  compare_flags.attach(compare);
  compare->add_option("--algos", algos, "algorithms to compare")->delimiter(',');
  compare->add_option("--workers-list", worker_counts, "worker counts")->delimiter(',');
  compare->add_option("--seeds", seeds, "seeds per cell, counting up from --seed");
  compare->add_option("--seed-list", seed_list, "explicit seeds (may repeat)")->delimiter(',');
  compare->add_option("--out", compare_out, "output directory for compare.csv");

  std::size_t depth = 4;
  std::size_t branching = 3;
  std::uint64_t synthetic_seed = 1;
  auto *enumerate = app.add_subcommand("enumerate", "exhaustive optimum of a synthetic tree");
  enumerate->add_option("--depth", depth, "tree depth");
  enumerate->add_option("--branching", branching, "branching factor");
  enumerate->add_option("--synthetic-seed", synthetic_seed, "seed of the reward law");

  ConfigFlags show_flags;
  auto *show = app.add_subcommand("config", "print the resolved config in canonical form");
  show_flags.attach(show);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_flags.resolve(), run_out, dump_tree, worker_id, argc, argv);
    if (*oracle) return cmd_oracle(oracle_flags.resolve(), oracle_out);
    if (*compare) {
      return cmd_compare(compare_flags.resolve(), algos, worker_counts, seeds, seed_list,
                         compare_out);
    }
    if (*enumerate) {
      const Optimum best = synthetic_enumerate_optimum(SyntheticTreeSpec{depth, branching, synthetic_seed});
      Json j;
      j["best_reward"] = best.best_reward;
      j["best_path"] = best.best_path.to_string();
      j["leaves"] = SyntheticTree(SyntheticTreeSpec{depth, branching, synthetic_seed}).leaf_count();
      std::cout << j.dump() << "\n";
      return 0;
    }
    if (*show) {
      const RunConfig cfg = show_flags.resolve();
      validate(cfg);
      std::cout << config_to_text(cfg);
      return 0;
    }
  } catch (const ConfigError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception &e) {
    std::cerr << "fault: " << e.what() << "\n";
    return kExitFault;
  }
  return 0;
}
