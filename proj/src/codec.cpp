#include <algorithm>
#include <cstring>
#include <string>

#include "hdmcts/json_io.hpp"
#include "hdmcts/message.hpp"

namespace hdmcts {

std::string_view kind_name(MessageKind kind) {
  switch (kind) {
    case MessageKind::SELECT: return "SELECT";
    case MessageKind::BACKPROP: return "BACKPROP";
    case MessageKind::REPORT: return "REPORT";
    case MessageKind::STOP: return "STOP";
  }
  return "?";
}

namespace {

MessageKind parse_kind(const std::string &name) {
  if (name == "SELECT") return MessageKind::SELECT;
  if (name == "BACKPROP") return MessageKind::BACKPROP;
  if (name == "REPORT") return MessageKind::REPORT;
  if (name == "STOP") return MessageKind::STOP;
  throw CodecError("unknown message kind '" + name + "'");
}

}  // namespace

void expect_fields(const Json &j, std::initializer_list<const char *> keys, const char *what) {
  if (!j.is_object()) throw std::invalid_argument(std::string(what) + ": expected an object");
  if (j.size() != keys.size()) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(keys.size()) +
                                " fields, found " + std::to_string(j.size()));
  }
  auto it = j.begin();
  for (const char *key : keys) {
    if (it.key() != key) {
      throw std::invalid_argument(std::string(what) + ": expected field '" + key + "', found '" +
                                  it.key() + "'");
    }
    ++it;
  }
}

Json history_to_json(const HistoryTable &table) {
  Json rows = Json::array();
  for (const auto &row : table.rows()) {
    Json entries = Json::array();
    for (const auto &e : row.entries) entries.push_back(Json::array({e.action, e.w, e.v, e.t}));
    Json r;
    r["parent"] = row.parent.hex();
    r["parent_visits"] = row.parent_visits;
    r["selected"] = row.selected;
    r["entries"] = std::move(entries);
    rows.push_back(std::move(r));
  }
  return rows;
}

HistoryTable history_from_json(const Json &j) {
  if (!j.is_array()) throw std::invalid_argument("history: expected an array");
  std::vector<HistoryRow> rows;
  for (const auto &r : j) {
    expect_fields(r, {"parent", "parent_visits", "selected", "entries"}, "history row");
    HistoryRow row;
    row.parent = NodeKey::from_hex(r["parent"].get<std::string>());
    row.parent_visits = r["parent_visits"].get<std::int64_t>();
    row.selected = r["selected"].get<Action>();
    for (const auto &e : r["entries"]) {
      if (!e.is_array() || e.size() != 4) throw std::invalid_argument("history entry: bad shape");
      row.entries.push_back(HistoryEntry{e[0].get<Action>(), e[1].get<double>(),
                                         e[2].get<std::int64_t>(), e[3].get<std::int64_t>()});
    }
    rows.push_back(std::move(row));
  }
  return HistoryTable(std::move(rows));
}

Json counters_to_json(const WorkerCounters &c) {
  Json j;
  j["worker"] = c.worker;
  j["select_received"] = c.select_received;
  j["bp_received"] = c.bp_received;
  j["select_sent"] = c.select_sent;
  j["bp_sent"] = c.bp_sent;
  j["simulations_done"] = c.simulations_done;
  j["chains_completed"] = c.chains_completed;
  j["nodes_stored"] = c.nodes_stored;
  j["idle_time"] = c.idle_time;
  Json hist = Json::array();
  for (const auto &[depth, count] : c.depth_histogram) hist.push_back(Json::array({depth, count}));
  j["depth_histogram"] = std::move(hist);
  Json timeline = Json::array();
  for (const auto &p : c.best_timeline) timeline.push_back(Json::array({p.time, p.best_reward}));
  j["best_timeline"] = std::move(timeline);
  return j;
}

WorkerCounters counters_from_json(const Json &j) {
  expect_fields(j,
                {"worker", "select_received", "bp_received", "select_sent", "bp_sent",
                 "simulations_done", "chains_completed", "nodes_stored", "idle_time",
                 "depth_histogram", "best_timeline"},
                "counters");
  WorkerCounters c;
  c.worker = j["worker"].get<std::uint32_t>();
  c.select_received = j["select_received"].get<std::int64_t>();
  c.bp_received = j["bp_received"].get<std::int64_t>();
  c.select_sent = j["select_sent"].get<std::int64_t>();
  c.bp_sent = j["bp_sent"].get<std::int64_t>();
  c.simulations_done = j["simulations_done"].get<std::int64_t>();
  c.chains_completed = j["chains_completed"].get<std::int64_t>();
  c.nodes_stored = j["nodes_stored"].get<std::int64_t>();
  c.idle_time = j["idle_time"].get<double>();
  for (const auto &e : j["depth_histogram"]) {
    c.depth_histogram[e.at(0).get<std::int64_t>()] = e.at(1).get<std::int64_t>();
  }
  for (const auto &e : j["best_timeline"]) {
    c.best_timeline.push_back(TimelinePoint{e.at(0).get<double>(), e.at(1).get<double>()});
  }
  return c;
}

std::string encode_record(const Message &msg) {
  Json j;
  j["kind"] = kind_name(msg.kind);
  j["src"] = msg.src;
  j["dest"] = msg.dest;
  j["seq"] = msg.seq;
  j["key"] = msg.key.hex();
  j["path"] = msg.path.to_string();
  j["reward"] = msg.reward ? Json(*msg.reward) : Json(nullptr);
  if (msg.child_stats) {
    Json s;
    s["w"] = msg.child_stats->w;
    s["v"] = msg.child_stats->v;
    s["t"] = msg.child_stats->t;
    j["child_stats"] = std::move(s);
  } else {
    j["child_stats"] = nullptr;
  }
  j["history"] = msg.history ? history_to_json(*msg.history) : Json(nullptr);
  if (msg.best_found) {
    Json b;
    b["reward"] = msg.best_found->reward;
    b["solution"] = msg.best_found->solution;
    j["best_found"] = std::move(b);
  } else {
    j["best_found"] = nullptr;
  }
  j["counters"] = msg.counters ? counters_to_json(*msg.counters) : Json(nullptr);
  return j.dump();
}

Message decode_record(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error &e) {
    throw CodecError(std::string("malformed record: ") + e.what());
  }
  try {
    expect_fields(j,
                  {"kind", "src", "dest", "seq", "key", "path", "reward", "child_stats", "history",
                   "best_found", "counters"},
                  "message");
    Message msg;
    msg.kind = parse_kind(j["kind"].get<std::string>());
    msg.src = j["src"].get<WorkerId>();
    msg.dest = j["dest"].get<WorkerId>();
    msg.seq = j["seq"].get<std::uint64_t>();
    msg.key = NodeKey::from_hex(j["key"].get<std::string>());
    msg.path = NodePath::parse(j["path"].get<std::string>());
    if (!j["reward"].is_null()) msg.reward = j["reward"].get<double>();
    if (const auto &s = j["child_stats"]; !s.is_null()) {
      expect_fields(s, {"w", "v", "t"}, "child_stats");
      msg.child_stats =
          StatSnapshot{s["w"].get<double>(), s["v"].get<std::int64_t>(), s["t"].get<std::int64_t>()};
    }
    if (!j["history"].is_null()) msg.history = history_from_json(j["history"]);
    if (const auto &b = j["best_found"]; !b.is_null()) {
      expect_fields(b, {"reward", "solution"}, "best_found");
      msg.best_found = BestFound{b["reward"].get<double>(), b["solution"].get<std::string>()};
    }
    if (!j["counters"].is_null()) msg.counters = counters_from_json(j["counters"]);
    return msg;
  } catch (const CodecError &) {
    throw;
  } catch (const std::exception &e) {
    throw CodecError(std::string("invalid record: ") + e.what());
  }
}

std::vector<std::byte> frame_bytes(std::string_view payload) {
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::vector<std::byte> out(4 + payload.size());
  out[0] = static_cast<std::byte>((n >> 24) & 0xff);
  out[1] = static_cast<std::byte>((n >> 16) & 0xff);
  out[2] = static_cast<std::byte>((n >> 8) & 0xff);
  out[3] = static_cast<std::byte>(n & 0xff);
  std::memcpy(out.data() + 4, payload.data(), payload.size());
  return out;
}

std::vector<std::byte> encode(const Message &msg) { return frame_bytes(encode_record(msg)); }

namespace {

std::uint32_t read_be32(const std::byte *p) {
  return (std::to_integer<std::uint32_t>(p[0]) << 24) |
         (std::to_integer<std::uint32_t>(p[1]) << 16) |
         (std::to_integer<std::uint32_t>(p[2]) << 8) | std::to_integer<std::uint32_t>(p[3]);
}

}  // namespace

Message decode(std::span<const std::byte> frame, std::size_t max_bytes) {
  if (frame.size() < 4) throw CodecError("frame shorter than its length prefix");
  const std::uint32_t n = read_be32(frame.data());
  if (n > max_bytes) {
    throw CodecError("frame length " + std::to_string(n) + " exceeds limit " +
                     std::to_string(max_bytes));
  }
  if (frame.size() != 4 + static_cast<std::size_t>(n)) {
    throw CodecError("frame length prefix " + std::to_string(n) + " does not match payload size " +
                     std::to_string(frame.size() - 4));
  }
  return decode_record(
      std::string_view(reinterpret_cast<const char *>(frame.data() + 4), frame.size() - 4));
}

void FrameReader::feed(std::span<const std::byte> bytes) {
  if (consumed_ > 0 && consumed_ == buffer_.size()) {
    buffer_.clear();
    consumed_ = 0;
  }
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

std::optional<std::string> FrameReader::next() {
  const std::size_t available = buffer_.size() - consumed_;
  if (available < 4) return std::nullopt;
  const std::uint32_t n = read_be32(buffer_.data() + consumed_);
  if (n > max_bytes_) {
    throw CodecError("frame at stream offset " + std::to_string(stream_offset_) +
                     " declares length " + std::to_string(n) + " above limit " +
                     std::to_string(max_bytes_));
  }
  if (available < 4 + static_cast<std::size_t>(n)) return std::nullopt;
  std::string payload(reinterpret_cast<const char *>(buffer_.data() + consumed_ + 4), n);
  consumed_ += 4 + n;
  stream_offset_ += 4 + n;
  if (consumed_ > (1u << 16) && consumed_ * 2 > buffer_.size()) {
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(consumed_));
    consumed_ = 0;
  }
  return payload;
}

}  // namespace hdmcts
