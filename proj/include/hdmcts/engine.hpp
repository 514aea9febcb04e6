#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hdmcts/config.hpp"
#include "hdmcts/metrics.hpp"
#include "hdmcts/sim.hpp"

namespace hdmcts {

/// What worker 0 assembles from the REPORT messages.
struct RunReport {
  RunConfig config;
  ReportSummary summary;
  std::vector<WorkerCounters> workers;
  std::string trace_digest;  // sim only
  std::vector<std::string> violations;
  std::string fault;         // empty unless the run aborted
};

RunReport make_report(const RunConfig &cfg, const SimResult &result);
RunReport make_report(const RunConfig &cfg, const std::vector<WorkerCounters> &workers,
                      const std::optional<BestFound> &best, double final_time);

/// Runs a sim-transport configuration to completion. Faults come back as a
/// report with summary.valid == false.
RunReport run_distributed(const RunConfig &cfg);

/// Canonical text of the report (config, summary, per-worker counters).
std::string report_to_text(const RunReport &report);

/// report.json plus the metrics files of emit_report().
void write_run_outputs(const RunReport &report, const std::filesystem::path &dir);

}  // namespace hdmcts
