#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hdmcts/metrics.hpp"
#include "hdmcts/tree_store.hpp"

namespace hdmcts {

enum class MessageKind : std::uint8_t { SELECT, BACKPROP, REPORT, STOP };

std::string_view kind_name(MessageKind kind);

/// Sender-side totals of the node a BACKPROP is about.
struct StatSnapshot {
  double w = 0.0;
  std::int64_t v = 0;
  std::int64_t t = 0;

  friend bool operator==(const StatSnapshot &, const StatSnapshot &) = default;
};

struct BestFound {
  double reward = 0.0;
  std::string solution;

  friend bool operator==(const BestFound &, const BestFound &) = default;
};

struct Message {
  MessageKind kind = MessageKind::SELECT;
  WorkerId src = 0;
  WorkerId dest = 0;
  std::uint64_t seq = 0;  // assigned by the transport, per (src, dest) link
  NodeKey key;
  NodePath path;
  std::optional<double> reward;               // BACKPROP only
  std::optional<StatSnapshot> child_stats;    // BACKPROP only
  std::optional<HistoryTable> history;        // df / MP variants
  std::optional<BestFound> best_found;        // REPORT only
  std::optional<WorkerCounters> counters;     // REPORT only

  friend bool operator==(const Message &, const Message &) = default;
};

class CodecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kDefaultMaxFrameBytes = 16u << 20;

/// Canonical text record: a compact JSON object with fields in the fixed order
/// kind, src, dest, seq, key, path, reward, child_stats, history, best_found,
/// counters. Absent fields are explicit nulls; reals use the shortest
/// round-tripping decimal.
std::string encode_record(const Message &msg);
Message decode_record(std::string_view text);

/// 4-byte big-endian length prefix followed by the record.
std::vector<std::byte> encode(const Message &msg);
Message decode(std::span<const std::byte> frame, std::size_t max_bytes = kDefaultMaxFrameBytes);

/// Incremental frame splitter for byte streams.
class FrameReader {
 public:
  explicit FrameReader(std::size_t max_bytes = kDefaultMaxFrameBytes) : max_bytes_(max_bytes) {}

  void feed(std::span<const std::byte> bytes);
  /// Returns the next complete record payload, or nullopt if more bytes are
  /// needed. Throws CodecError on an oversized length prefix.
  std::optional<std::string> next();
  std::size_t buffered() const { return buffer_.size() - consumed_; }

 private:
  std::size_t max_bytes_;
  std::vector<std::byte> buffer_;
  std::size_t consumed_ = 0;
  std::uint64_t stream_offset_ = 0;
};

std::vector<std::byte> frame_bytes(std::string_view payload);

}  // namespace hdmcts
