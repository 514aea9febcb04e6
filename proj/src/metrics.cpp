#include "hdmcts/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "hdmcts/json_io.hpp"

namespace hdmcts {

std::int64_t WorkerCounters::histogram_total() const {
  std::int64_t total = 0;
  for (const auto &[depth, count] : depth_histogram) total += count;
  return total;
}

void WorkerCounters::record_best(double time, double reward) {
  if (best_timeline.empty() || reward > best_timeline.back().best_reward) {
    best_timeline.push_back(TimelinePoint{time, reward});
  }
}

double estimate_history_memory(double bytes_per_entry, double depth, double branching,
                               double nodes_per_second, double seconds) {
  return bytes_per_entry * depth * branching * nodes_per_second * seconds;
}

std::string format_real(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

double mean_leaf_depth(const std::vector<WorkerCounters> &counters) {
  std::int64_t n = 0;
  double sum = 0.0;
  for (const auto &c : counters) {
    for (const auto &[depth, count] : c.depth_histogram) {
      n += count;
      sum += static_cast<double>(depth) * static_cast<double>(count);
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double median_leaf_depth(const std::vector<WorkerCounters> &counters) {
  std::map<std::int64_t, std::int64_t> merged;
  std::int64_t n = 0;
  for (const auto &c : counters) {
    for (const auto &[depth, count] : c.depth_histogram) {
      merged[depth] += count;
      n += count;
    }
  }
  if (n == 0) return 0.0;
  // Lower and upper middle elements; their mean is the median.
  const std::int64_t lo_rank = (n - 1) / 2;
  const std::int64_t hi_rank = n / 2;
  std::int64_t seen = 0;
  double lo = 0.0;
  double hi = 0.0;
  bool have_lo = false;
  for (const auto &[depth, count] : merged) {
    if (!have_lo && lo_rank < seen + count) {
      lo = static_cast<double>(depth);
      have_lo = true;
    }
    if (hi_rank < seen + count) {
      hi = static_cast<double>(depth);
      break;
    }
    seen += count;
  }
  return 0.5 * (lo + hi);
}

ReportSummary summarize(const std::vector<WorkerCounters> &counters, const std::string &algorithm,
                        const std::string &time_unit, double final_time, bool valid,
                        double best_reward, const std::string &best_solution) {
  ReportSummary s;
  s.algorithm = algorithm;
  s.time_unit = time_unit;
  s.workers = static_cast<std::uint32_t>(counters.size());
  for (const auto &c : counters) {
    s.total_simulations += c.simulations_done;
    s.total_bp_messages += c.bp_sent;
    s.total_select_messages += c.select_sent;
  }
  s.bp_per_simulation = s.total_simulations == 0
                            ? 0.0
                            : static_cast<double>(s.total_bp_messages) /
                                  static_cast<double>(s.total_simulations);
  s.mean_leaf_depth = mean_leaf_depth(counters);
  s.best_reward = best_reward;
  s.best_solution = best_solution;
  s.final_time = final_time;
  s.valid = valid;
  return s;
}

Json summary_to_json(const ReportSummary &summary) {
  Json j;
  j["algorithm"] = summary.algorithm;
  j["time_unit"] = summary.time_unit;
  j["workers"] = summary.workers;
  j["total_simulations"] = summary.total_simulations;
  j["total_bp_messages"] = summary.total_bp_messages;
  j["total_select_messages"] = summary.total_select_messages;
  j["bp_per_simulation"] = summary.bp_per_simulation;
  j["mean_leaf_depth"] = summary.mean_leaf_depth;
  j["best_reward"] = summary.best_reward;
  j["best_solution"] = summary.best_solution;
  j["final_time"] = summary.final_time;
  j["valid"] = summary.valid;
  return j;
}

namespace {

std::ofstream open_for_write(const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

const char *kWorkersHeader =
    "worker,select_received,bp_received,select_sent,bp_sent,simulations_done,chains_completed,"
    "nodes_stored,idle_time";
const char *kDepthHeader = "worker,depth,count";
const char *kTimelineHeader = "worker,time,best_reward";

std::vector<std::string> split_csv(const std::string &line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

template <typename T>
T parse_number(const std::string &text) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::runtime_error("bad number in report CSV: '" + text + "'");
  }
  return value;
}

// Reads past the "# time_unit=..." comment and the header row.
std::ifstream open_csv(const std::filesystem::path &path, const char *header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line != header) throw std::runtime_error("unexpected header in " + path.string());
    break;
  }
  return in;
}

}  // namespace

EmittedFiles emit_report(const std::vector<WorkerCounters> &counters, const ReportSummary &summary,
                         const std::filesystem::path &dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

  EmittedFiles files{dir / "workers.csv", dir / "depth_histogram.csv", dir / "best_timeline.csv",
                     dir / "summary.json"};
  const std::string unit_line = "# time_unit=" + summary.time_unit + "\n";
  {
    auto out = open_for_write(files.workers_csv);
    out << unit_line << kWorkersHeader << '\n';
    for (const auto &c : counters) {
      out << c.worker << ',' << c.select_received << ',' << c.bp_received << ',' << c.select_sent
          << ',' << c.bp_sent << ',' << c.simulations_done << ',' << c.chains_completed << ','
          << c.nodes_stored << ',' << format_real(c.idle_time) << '\n';
    }
  }
  {
    auto out = open_for_write(files.depth_csv);
    out << kDepthHeader << '\n';
    for (const auto &c : counters) {
      for (const auto &[depth, count] : c.depth_histogram) {
        out << c.worker << ',' << depth << ',' << count << '\n';
      }
    }
  }
  {
    auto out = open_for_write(files.timeline_csv);
    out << unit_line << kTimelineHeader << '\n';
    for (const auto &c : counters) {
      for (const auto &p : c.best_timeline) {
        out << c.worker << ',' << format_real(p.time) << ',' << format_real(p.best_reward) << '\n';
      }
    }
  }
  {
    const Json j = summary_to_json(summary);
    auto out = open_for_write(files.summary);
    out << j.dump(2) << '\n';
  }
  return files;
}

std::vector<WorkerCounters> parse_report_csv(const std::filesystem::path &dir) {
  std::vector<WorkerCounters> counters;
  std::map<std::uint32_t, std::size_t> index;
  std::string line;
  {
    auto in = open_csv(dir / "workers.csv", kWorkersHeader);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto cells = split_csv(line);
      if (cells.size() != 9) throw std::runtime_error("bad row in workers.csv: " + line);
      WorkerCounters c;
      c.worker = parse_number<std::uint32_t>(cells[0]);
      c.select_received = parse_number<std::int64_t>(cells[1]);
      c.bp_received = parse_number<std::int64_t>(cells[2]);
      c.select_sent = parse_number<std::int64_t>(cells[3]);
      c.bp_sent = parse_number<std::int64_t>(cells[4]);
      c.simulations_done = parse_number<std::int64_t>(cells[5]);
      c.chains_completed = parse_number<std::int64_t>(cells[6]);
      c.nodes_stored = parse_number<std::int64_t>(cells[7]);
      c.idle_time = parse_number<double>(cells[8]);
      index[c.worker] = counters.size();
      counters.push_back(std::move(c));
    }
  }
  auto worker_at = [&](const std::string &cell) -> WorkerCounters & {
    auto it = index.find(parse_number<std::uint32_t>(cell));
    if (it == index.end()) throw std::runtime_error("report CSV references unknown worker " + cell);
    return counters[it->second];
  };
  {
    auto in = open_csv(dir / "depth_histogram.csv", kDepthHeader);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto cells = split_csv(line);
      if (cells.size() != 3) throw std::runtime_error("bad row in depth_histogram.csv: " + line);
      worker_at(cells[0]).depth_histogram[parse_number<std::int64_t>(cells[1])] =
          parse_number<std::int64_t>(cells[2]);
    }
  }
  {
    auto in = open_csv(dir / "best_timeline.csv", kTimelineHeader);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto cells = split_csv(line);
      if (cells.size() != 3) throw std::runtime_error("bad row in best_timeline.csv: " + line);
      worker_at(cells[0]).best_timeline.push_back(
          TimelinePoint{parse_number<double>(cells[1]), parse_number<double>(cells[2])});
    }
  }
  return counters;
}

}  // namespace hdmcts
