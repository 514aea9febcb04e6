#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace hdmcts {

struct TimelinePoint {
  double time = 0.0;
  double best_reward = 0.0;

  friend bool operator==(const TimelinePoint &, const TimelinePoint &) = default;
};

/// Worker-local instrumentation. Aggregated on worker 0 at REPORT time.
struct WorkerCounters {
  std::uint32_t worker = 0;
  std::int64_t select_received = 0;
  std::int64_t bp_received = 0;
  std::int64_t select_sent = 0;
  std::int64_t bp_sent = 0;
  std::int64_t simulations_done = 0;
  std::int64_t chains_completed = 0;  // BP chains that ended on this worker
  std::int64_t nodes_stored = 0;
  double idle_time = 0.0;             // ticks (sim) or seconds (net)
  std::map<std::int64_t, std::int64_t> depth_histogram;  // depth -> simulations
  std::vector<TimelinePoint> best_timeline;

  std::int64_t histogram_total() const;
  void record_best(double time, double reward);

  friend bool operator==(const WorkerCounters &, const WorkerCounters &) = default;
};

/// Extra per-worker history memory in bytes: C x d x b x n x t.
double estimate_history_memory(double bytes_per_entry, double depth, double branching,
                               double nodes_per_second, double seconds);

struct ReportSummary {
  std::string algorithm;
  std::string time_unit;  // "ticks" or "seconds"
  std::uint32_t workers = 0;
  std::int64_t total_simulations = 0;
  std::int64_t total_bp_messages = 0;
  std::int64_t total_select_messages = 0;
  double bp_per_simulation = 0.0;
  double mean_leaf_depth = 0.0;
  double best_reward = 0.0;
  std::string best_solution;
  double final_time = 0.0;
  bool valid = true;
};

struct EmittedFiles {
  std::filesystem::path workers_csv;
  std::filesystem::path depth_csv;
  std::filesystem::path timeline_csv;
  std::filesystem::path summary;
};

ReportSummary summarize(const std::vector<WorkerCounters> &counters, const std::string &algorithm,
                        const std::string &time_unit, double final_time, bool valid,
                        double best_reward, const std::string &best_solution);

/// Writes workers.csv, depth_histogram.csv, best_timeline.csv and summary.json
/// into `dir`. Throws std::runtime_error when the directory is unwritable.
EmittedFiles emit_report(const std::vector<WorkerCounters> &counters, const ReportSummary &summary,
                         const std::filesystem::path &dir);

/// Parses the three CSV files written by emit_report back into counters.
std::vector<WorkerCounters> parse_report_csv(const std::filesystem::path &dir);

double mean_leaf_depth(const std::vector<WorkerCounters> &counters);
double median_leaf_depth(const std::vector<WorkerCounters> &counters);

std::string format_real(double value);  // shortest round-tripping decimal

}  // namespace hdmcts
