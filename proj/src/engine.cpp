#include "hdmcts/engine.hpp"

#include <fstream>

#include "hdmcts/json_io.hpp"

namespace hdmcts {

namespace {

std::string hex64(std::uint64_t v) { return NodeKey{v}.hex(); }

}  // namespace

RunReport make_report(const RunConfig &cfg, const std::vector<WorkerCounters> &workers,
                      const std::optional<BestFound> &best, double final_time) {
  RunReport report;
  report.config = cfg;
  report.workers = workers;
  const bool sim = cfg.transport == TransportKind::Sim;
  report.summary = summarize(workers, std::string(algorithm_name(cfg.algorithm)),
                             sim ? "ticks" : "seconds", final_time, true,
                             best ? best->reward : -1.0, best ? best->solution : std::string());
  return report;
}

RunReport make_report(const RunConfig &cfg, const SimResult &result) {
  RunReport report =
      make_report(cfg, result.counters, result.best, static_cast<double>(result.final_time));
  report.trace_digest = hex64(result.trace_digest);
  report.violations = result.violations;
  report.fault = result.fault;
  report.summary.valid = result.ok && result.violations.empty();
  return report;
}

RunReport run_distributed(const RunConfig &cfg) {
  SimCluster cluster(cfg);
  return make_report(cfg, cluster.run());
}

std::string report_to_text(const RunReport &report) {
  Json j;
  j["config"] = Json::parse(config_to_text(report.config));
  j["summary"] = summary_to_json(report.summary);
  Json workers = Json::array();
  for (const auto &c : report.workers) workers.push_back(counters_to_json(c));
  j["workers"] = std::move(workers);
  j["trace_digest"] = report.trace_digest;
  j["violations"] = report.violations;
  j["fault"] = report.fault.empty() ? Json(nullptr) : Json(report.fault);
  return j.dump(2) + "\n";
}

void write_run_outputs(const RunReport &report, const std::filesystem::path &dir) {
  emit_report(report.workers, report.summary, dir);
  std::ofstream out(dir / "report.json", std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + (dir / "report.json").string());
  out << report_to_text(report);
}

}  // namespace hdmcts
