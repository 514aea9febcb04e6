// Acceptance suite: one PASS/FAIL line per primary criterion. Exit status is
// non-zero when any criterion fails.
//
//   acceptance <path-to-hdmcts> [criterion...]

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gen.hpp"
#include "hdmcts/bandit.hpp"
#include "hdmcts/engine.hpp"
#include "hdmcts/json_io.hpp"
#include "hdmcts/metrics.hpp"
#include "hdmcts/sequential.hpp"
#include "hdmcts/sim.hpp"
#include "ucb_oracle.hpp"

using namespace hdmcts;
namespace fs = std::filesystem;

namespace {

std::string g_cli;

struct Verdict {
  bool pass = false;
  std::string detail;
};

// Every sim run of criteria 2-7 goes through here so criterion 8 can audit it.
struct Audit {
  int runs = 0;
  std::vector<std::string> problems;

  void check(const RunConfig &cfg, const SimResult &r) {
    ++runs;
    const std::string tag = std::string(algorithm_name(cfg.algorithm)) + " W=" +
                            std::to_string(cfg.workers) + " seed=" + std::to_string(cfg.seed);
    if (!r.ok) problems.push_back(tag + ": fault " + r.fault);
    for (const auto &v : r.violations) problems.push_back(tag + ": " + v);
    if (r.inflight_checks == 0) problems.push_back(tag + ": in-flight total never checked");
    std::int64_t sel_sent = 0, sel_recv = 0, bp_sent = 0, bp_recv = 0;
    for (const auto &c : r.counters) {
      sel_sent += c.select_sent;
      sel_recv += c.select_received;
      bp_sent += c.bp_sent;
      bp_recv += c.bp_received;
    }
    const KindCounts &k = r.transport;
    if (sel_sent != k.sent_of(MessageKind::SELECT) ||
        sel_recv != k.received_of(MessageKind::SELECT) ||
        bp_sent != k.sent_of(MessageKind::BACKPROP) ||
        bp_recv != k.received_of(MessageKind::BACKPROP)) {
      problems.push_back(tag + ": transport totals differ from metrics totals");
    }
    for (int kind = 0; kind < 4; ++kind) {
      if (k.sent[kind] != k.received[kind]) problems.push_back(tag + ": sent != received");
    }
  }
};

Audit g_audit;

SimResult simulate(const RunConfig &cfg, WorkerId *root_home = nullptr) {
  SimCluster cluster(cfg);
  if (root_home != nullptr) *root_home = cluster.worker(0).root_home();
  SimResult r = cluster.run();
  g_audit.check(cfg, r);
  return r;
}

double best_of(const SimResult &r) { return r.best ? r.best->reward : -1.0; }

std::int64_t total_sims(const SimResult &r) {
  std::int64_t n = 0;
  for (const auto &c : r.counters) n += c.simulations_done;
  return n;
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// Depths of the simulated leaves, straight from the trace.
std::vector<double> trace_depths(const SimResult &r) {
  std::vector<double> depths;
  depths.reserve(r.trace.size());
  for (const auto &s : r.trace) depths.push_back(static_cast<double>(s.record.path.depth()));
  return depths;
}

std::string fmt(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string sci(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", x);
  return buf;
}

// ── 1 ──────────────────────────────────────────────────────────────────────

Verdict formula_oracle() {
  gen::Source g(0xacce);
  double worst = 0.0;
  int exact_mismatch = 0;
  for (int i = 0; i < 1000; ++i) {
    oracle::Stat s{};
    s.v = g.coin(0.05) ? 0 : g.range(1, 5000);
    s.t = g.range(0, 64);
    s.w = s.v == 0 ? 0.0 : g.real(-1.0, 1.0) * static_cast<double>(s.v);
    s.V = s.v + g.range(s.v == 0 ? 1 : 0, 20000);
    s.T = s.t + g.range(0, 256);
    const double C = g.coin() ? 1.0 : g.real(0.01, 4.0);
    const ChildStat c{s.w, s.v, s.t, 1.0};
    const ParentAggregate p{s.V, s.T};
    worst = std::max({worst, oracle::rel_error(ucb1(c, p, C), oracle::ucb1(s, C)),
                      oracle::rel_error(ucb_vl(c, p, C), oracle::vanilla(s, C)),
                      oracle::rel_error(ucb_wu(c, p, C), oracle::wu(s, C)),
                      oracle::rel_error(ucb_vl_lcb(c, p, C), oracle::lcb(s, C))});

    const ChildStat c0{s.w, s.v, 0, 1.0};
    const ParentAggregate p0{s.V, 0};
    const double base = ucb1(c0, p0, C);
    for (double x : {ucb_vl(c0, p0, C), ucb_wu(c0, p0, C), ucb_vl_lcb(c0, p0, C)}) {
      if (!(x == base)) ++exact_mismatch;
    }
  }
  return {worst <= 1e-12 && exact_mismatch == 0,
          "max relative error " + sci(worst) + " over 1000 tuples x 4 formulas; " +
              std::to_string(exact_mismatch) + " t=T=0 cases differ from UCB1"};
}

// ── 2 ──────────────────────────────────────────────────────────────────────

Verdict sequential_equivalence() {
  int identical = 0;
  std::string first_diff;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RunConfig seq;
    seq.algorithm = Algorithm::SEQUENTIAL;
    seq.budget = Budget{BudgetKind::Simulations, 2000};
    seq.seed = seed;
    seq.synthetic_seed = seed;
    auto problem = make_problem(seq);
    const SequentialResult want = run_sequential_uct(seq, *problem);

    RunConfig dist = seq;
    dist.algorithm = Algorithm::TDS_UCT;
    dist.workers = 1;
    dist.overload = 1;
    const SimResult got = simulate(dist);
    bool same = got.trace.size() == want.trace.size();
    for (std::size_t i = 0; same && i < want.trace.size(); ++i) {
      same = got.trace[i].record.path == want.trace[i].path &&
             got.trace[i].record.reward == want.trace[i].reward;
      if (!same && first_diff.empty()) {
        first_diff = " (seed " + std::to_string(seed) + " step " + std::to_string(i) + ")";
      }
    }
    identical += same ? 1 : 0;
  }
  return {identical == 5, std::to_string(identical) + "/5 seeds give identical 2000-step traces" +
                              first_diff};
}

// ── 3 ──────────────────────────────────────────────────────────────────────

std::optional<double> enumerate_best(std::uint64_t synthetic_seed) {
  const std::string cmd = g_cli + " enumerate --depth 4 --branching 3 --synthetic-seed " +
                          std::to_string(synthetic_seed);
  FILE *pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) return std::nullopt;
  std::string out;
  char buf[256];
  while (std::fgets(buf, sizeof buf, pipe) != nullptr) out += buf;
  if (::pclose(pipe) != 0) return std::nullopt;
  try {
    return Json::parse(out).at("best_reward").get<double>();
  } catch (const std::exception &) {
    return std::nullopt;
  }
}

// One problem instance (the default synthetic seed), ten search seeds.
Verdict optimum_recovery() {
  const RunConfig defaults;
  const auto truth = enumerate_best(defaults.synthetic_seed);
  if (!truth) return {false, "enumerate subcommand failed"};
  int found = 0;
  std::string misses;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    RunConfig cfg;
    cfg.algorithm = Algorithm::MP_MCTS;
    cfg.workers = 4;
    cfg.budget = Budget{BudgetKind::Simulations, 5000};
    cfg.seed = seed;
    const SimResult r = simulate(cfg);
    if (best_of(r) == *truth) {
      ++found;
    } else {
      misses += " " + std::to_string(seed) + ":" + fmt(best_of(r), 3);
    }
  }
  return {found >= 9, std::to_string(found) + "/10 seeds reach the enumerated optimum " +
                          fmt(*truth, 1) +
                          (misses.empty() ? "" : "; misses (seed:best)" + misses)};
}

// ── 4, 5 ───────────────────────────────────────────────────────────────────

RunConfig contention_config(Algorithm algo) {
  RunConfig cfg;
  cfg.algorithm = algo;
  cfg.workers = 16;
  cfg.budget = Budget{BudgetKind::Simulations, 10000};
  return cfg;
}

Verdict root_contention() {
  WorkerId tds_home = 0, mp_home = 0;
  const SimResult tds = simulate(contention_config(Algorithm::TDS_UCT), &tds_home);
  const SimResult mp = simulate(contention_config(Algorithm::MP_MCTS), &mp_home);
  const auto sims = static_cast<double>(total_sims(tds));
  const auto tds_root = static_cast<double>(tds.counters.at(tds_home).bp_received);
  const auto mp_root = static_cast<double>(mp.counters.at(mp_home).bp_received);
  const bool pass = tds_root >= 0.9 * sims && mp_root < 0.3 * tds_root;
  return {pass, "TDS-UCT root home received " + fmt(tds_root, 0) + " BP for " + fmt(sims, 0) +
                    " simulations (ratio " + fmt(tds_root / sims, 3) + " >= 0.9); MP-MCTS " +
                    fmt(mp_root, 0) + " (ratio to TDS " + fmt(mp_root / tds_root, 3) + " < 0.3)"};
}

Verdict bp_per_simulation() {
  double worst = 0.0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    RunConfig cfg = contention_config(Algorithm::TDS_UCT);
    cfg.seed = seed;
    const SimResult r = simulate(cfg);
    // path 1: metrics summary built from the per-worker counters
    const ReportSummary s = make_report(cfg, r).summary;
    // path 2: depth of every simulated leaf in the trace
    double depth_sum = 0.0;
    for (const auto &t : r.trace) depth_sum += static_cast<double>(t.record.path.depth());
    const double mean_depth = depth_sum / static_cast<double>(r.trace.size());
    worst = std::max(worst, std::abs(s.bp_per_simulation - mean_depth));
    if (seed == 1) {
      detail = "seed 1: " + fmt(s.bp_per_simulation, 6) + " BP/sim vs mean depth " +
               fmt(mean_depth, 6);
    }
  }
  return {worst <= 1e-9, detail + "; max |difference| over 3 seeds " + fmt(worst, 12)};
}

// ── 6 ──────────────────────────────────────────────────────────────────────

Verdict depth_ordering() {
  int ordered = 0;
  int strict_means = 0;
  std::ostringstream rows;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::map<Algorithm, double> med, mean;
    for (Algorithm a : {Algorithm::TDS_UCT, Algorithm::TDS_DF_UCT, Algorithm::MP_MCTS}) {
      RunConfig cfg = contention_config(a);
      cfg.problem = ProblemKind::Grammar;
      cfg.seed = seed;
      const auto depths = trace_depths(simulate(cfg));
      med[a] = median(depths);
      mean[a] = std::accumulate(depths.begin(), depths.end(), 0.0) /
                static_cast<double>(depths.size());
    }
    const auto tds = Algorithm::TDS_UCT, df = Algorithm::TDS_DF_UCT, mp = Algorithm::MP_MCTS;
    ordered += (med[mp] >= med[df] && med[df] >= med[tds]) ? 1 : 0;
    strict_means += (mean[mp] > mean[df] && mean[df] > mean[tds]) ? 1 : 0;
    if (seed == 1) {
      rows << "; seed 1 medians TDS/df/MP " << fmt(med[tds], 1) << "/" << fmt(med[df], 1) << "/"
           << fmt(med[mp], 1) << ", means " << fmt(mean[tds], 3) << "/" << fmt(mean[df], 3) << "/"
           << fmt(mean[mp], 3);
    }
  }
  return {ordered >= 8, std::to_string(ordered) + "/10 seeds satisfy median MP >= df >= TDS (" +
                            std::to_string(strict_means) + "/10 with strictly ordered means)" +
                            rows.str()};
}

// ── 7 ──────────────────────────────────────────────────────────────────────

Verdict score_trend() {
  std::vector<double> medians;
  for (std::uint32_t workers : {1u, 4u, 16u}) {
    std::vector<double> best;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      RunConfig cfg;
      cfg.algorithm = Algorithm::MP_MCTS;
      cfg.problem = ProblemKind::Grammar;
      cfg.workers = workers;
      cfg.seed = seed;
      cfg.budget = Budget{BudgetKind::Ticks, 20000};
      best.push_back(best_of(simulate(cfg)));
    }
    medians.push_back(median(best));
  }
  const bool pass = medians[0] <= medians[1] && medians[1] <= medians[2];
  return {pass, "median best reward at 20000 ticks, workers 1/4/16: " + fmt(medians[0]) + " / " +
                    fmt(medians[1]) + " / " + fmt(medians[2])};
}

// ── 8 ──────────────────────────────────────────────────────────────────────

Verdict conservation() {
  std::string detail = std::to_string(g_audit.runs) + " sim runs audited, " +
                       std::to_string(g_audit.problems.size()) + " problems";
  if (!g_audit.problems.empty()) detail += "; first: " + g_audit.problems.front();
  return {g_audit.runs > 0 && g_audit.problems.empty(), detail};
}

// ── 9 ──────────────────────────────────────────────────────────────────────

Verdict memory_estimator() {
  const double small = estimate_history_memory(24, 20, 2.7, 1.8, 1);
  const double large = estimate_history_memory(24, 20, 9, 200, 1);
  const bool pass = small == 2332.8 && large == 864000.0 &&
                    std::round(small / 100) / 10 == 2.3 && std::floor(large / 1024) == 843.0;
  return {pass, format_real(small) + " bytes (2.3 KB), " + format_real(large) + " bytes (" +
                    fmt(large / 1024, 2) + " KiB)"};
}

// ── 10 ─────────────────────────────────────────────────────────────────────

std::map<std::string, std::string> run_to_files(const RunConfig &cfg, const fs::path &dir) {
  fs::remove_all(dir);
  write_run_outputs(run_distributed(cfg), dir);
  std::map<std::string, std::string> files;
  for (const auto &e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    files[e.path().filename().string()] = ss.str();
  }
  fs::remove_all(dir);
  return files;
}

Verdict determinism() {
  const fs::path base = fs::temp_directory_path() / ("hdmcts_accept_" + std::to_string(::getpid()));
  int configs = 0, identical = 0;
  std::size_t files = 0;
  for (Algorithm a : {Algorithm::TDS_UCT, Algorithm::TDS_DF_UCT, Algorithm::MP_MCTS}) {
    for (ProblemKind p : {ProblemKind::Synthetic, ProblemKind::Grammar}) {
      RunConfig cfg;
      cfg.algorithm = a;
      cfg.problem = p;
      cfg.workers = 8;
      cfg.seed = 11;
      cfg.latency_max_ticks = 6;
      cfg.budget = Budget{BudgetKind::Simulations, 3000};
      const auto one = run_to_files(cfg, base / "one");
      const auto two = run_to_files(cfg, base / "two");
      ++configs;
      files += one.size();
      identical += (one == two && !one.empty()) ? 1 : 0;
    }
  }
  fs::remove_all(base);
  return {identical == configs, std::to_string(identical) + "/" + std::to_string(configs) +
                                    " configs byte-identical across repeats (" +
                                    std::to_string(files) + " files compared)"};
}

// ── 11 ─────────────────────────────────────────────────────────────────────

Verdict load_balance() {
  int balanced = 0;
  double worst = 0.0;
  std::size_t fewest = SIZE_MAX;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    RunConfig cfg = contention_config(Algorithm::MP_MCTS);
    cfg.problem = ProblemKind::Grammar;
    cfg.seed = seed;
    const SimResult r = simulate(cfg);
    std::size_t total = 0, most = 0;
    for (std::size_t n : r.nodes_per_worker) {
      total += n;
      most = std::max(most, n);
    }
    const double ratio =
        static_cast<double>(most) / (static_cast<double>(total) / static_cast<double>(cfg.workers));
    fewest = std::min(fewest, total);
    worst = std::max(worst, ratio);
    balanced += (total >= 1000 && ratio <= 1.5) ? 1 : 0;
  }
  return {balanced >= 9, std::to_string(balanced) + "/10 seeds with >= 1000 nodes and max/mean <= 1.5" +
                             " (fewest nodes " + std::to_string(fewest) + ", worst max/mean " +
                             fmt(worst, 3) + ")"};
}

struct Criterion {
  int id;
  const char *name;
  double limit_secs;  // 0: no runtime bound
  std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char **argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <path-to-hdmcts> [criterion...]\n";
    return 2;
  }
  g_cli = argv[1];
  std::set<int> only;
  for (int i = 2; i < argc; ++i) only.insert(std::stoi(argv[i]));

  // Criterion 8 audits the runs of 2-7, so it must come after them.
  const std::vector<Criterion> criteria{
      {1, "formula oracle", 1, formula_oracle},
      {2, "sequential equivalence", 30, sequential_equivalence},
      {3, "optimum recovery", 120, optimum_recovery},
      {4, "root contention", 300, root_contention},
      {5, "BP per simulation", 0, bp_per_simulation},
      {6, "depth ordering", 600, depth_ordering},
      {7, "score vs workers", 0, score_trend},
      {8, "conservation", 0, conservation},
      {9, "memory estimator", 0, memory_estimator},
      {10, "determinism", 0, determinism},
      {11, "load balance", 0, load_balance},
  };

  int failed = 0;
  for (const auto &c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception &e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_secs > 0 && secs >= c.limit_secs) {
      v.pass = false;
      v.detail += "; runtime " + fmt(secs, 1) + " s exceeds " + fmt(c.limit_secs, 0) + " s";
    }
    failed += v.pass ? 0 : 1;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  criterion " << c.id << " (" << c.name
              << "): " << v.detail << " [" << fmt(secs, 2) << " s]" << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
