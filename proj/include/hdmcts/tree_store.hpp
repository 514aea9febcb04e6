#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <absl/container/flat_hash_map.h>

#include "hdmcts/bandit.hpp"

namespace hdmcts {

using Action = std::uint32_t;
using WorkerId = std::uint32_t;

/// Sequence of action indices from the root. The tree is keyed by full path;
/// transpositions are never merged.
class NodePath {
 public:
  NodePath() = default;
  explicit NodePath(std::vector<Action> actions) : actions_(std::move(actions)) {}
  NodePath(std::initializer_list<Action> actions) : actions_(actions) {}

  std::size_t depth() const { return actions_.size(); }
  bool is_root() const { return actions_.empty(); }
  std::span<const Action> actions() const { return actions_; }
  Action back() const { return actions_.back(); }
  Action operator[](std::size_t i) const { return actions_[i]; }

  NodePath child(Action a) const;
  NodePath parent() const;
  NodePath prefix(std::size_t length) const;

  std::string to_string() const;  // "0.2.1", root is ""
  static NodePath parse(std::string_view text);

  friend bool operator==(const NodePath &, const NodePath &) = default;

 private:
  std::vector<Action> actions_;
};

struct NodeKey {
  std::uint64_t digest = 0;

  std::string hex() const;
  static NodeKey from_hex(std::string_view text);

  friend bool operator==(const NodeKey &, const NodeKey &) = default;
};

/// Zobrist table with dimensions fixed at construction. Every worker builds
/// the same table from the master seed; it never grows.
class ZobristTable {
 public:
  ZobristTable(std::uint64_t seed, std::size_t max_depth, std::size_t max_branching);

  NodeKey key(const NodePath &path) const;
  /// Incremental form: key of parent.child(action) where parent has `depth`.
  NodeKey child_key(NodeKey parent, std::size_t depth, Action action) const;
  NodeKey root() const { return NodeKey{root_}; }

  std::size_t max_depth() const { return max_depth_; }
  std::size_t max_branching() const { return max_branching_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t entry(std::size_t depth, Action action) const;

 private:
  std::uint64_t seed_;
  std::size_t max_depth_;
  std::size_t max_branching_;
  std::uint64_t root_;
  std::vector<std::uint64_t> table_;
};

struct WorkerMap {
  std::uint32_t worker_count = 1;

  WorkerId home(NodeKey key) const {
    return static_cast<WorkerId>(key.digest % worker_count);
  }
};

// ---------------------------------------------------------------------------
// History tables

struct HistoryEntry {
  Action action = 0;
  double w = 0.0;
  std::int64_t v = 0;
  std::int64_t t = 0;

  friend bool operator==(const HistoryEntry &, const HistoryEntry &) = default;
};

/// Snapshot of all children of one on-path node. `selected` is the on-path
/// child; `parent_visits` is the parent's V when the snapshot was taken.
struct HistoryRow {
  NodeKey parent;
  std::int64_t parent_visits = 0;
  Action selected = 0;
  std::vector<HistoryEntry> entries;

  const HistoryEntry *find(Action a) const;
  HistoryEntry *find(Action a);

  friend bool operator==(const HistoryRow &, const HistoryRow &) = default;
};

/// Row d describes the children of the depth-d node on the current path.
class HistoryTable {
 public:
  HistoryTable() = default;
  explicit HistoryTable(std::vector<HistoryRow> rows) : rows_(std::move(rows)) {}

  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }
  const std::vector<HistoryRow> &rows() const { return rows_; }
  const HistoryRow &row(std::size_t d) const { return rows_.at(d); }
  HistoryRow &bottom() { return rows_.back(); }

  void append(HistoryRow row) { rows_.push_back(std::move(row)); }
  /// Throws std::logic_error on an empty table.
  void remove_bottom();
  /// Drops rows at depth >= length.
  void truncate(std::size_t length);

  friend bool operator==(const HistoryTable &, const HistoryTable &) = default;

 private:
  std::vector<HistoryRow> rows_;
};

HistoryTable history_append(HistoryTable table, HistoryRow row);
HistoryTable history_remove_bottom(HistoryTable table);

/// Scans rows from the deepest upward and returns the depth of the deepest
/// on-path node that is still the argmax of its row (row d's on-path child is
/// at depth d + 1). Returns 0 (the root) when no row qualifies.
std::size_t history_current_best(const HistoryTable &table, const VlFormula &formula);

/// Per (row, action) the entry with larger v wins, then larger v + t, then the
/// node-resident entry. Rows present in only one table are copied.
HistoryTable history_merge(const HistoryTable &node_history, const HistoryTable &message_history);

/// Replaces the on-path entry of the deepest row with the node's own totals
/// when they are fresher, adjusting parent_visits by the same visit delta.
void history_refresh_on_path(HistoryTable &table, double own_w, std::int64_t own_v);

// ---------------------------------------------------------------------------
// Node records and the per-worker store

struct ChildEntry {
  Action action = 0;
  ChildStat stat;

  friend bool operator==(const ChildEntry &, const ChildEntry &) = default;
};

struct NodeRecord {
  NodeKey key;
  NodePath path;
  double w = 0.0;                  // own cumulative reward
  ParentAggregate agg;             // own V and sum of children t
  std::int64_t own_simulations = 0;
  std::vector<ChildEntry> children;
  std::optional<HistoryTable> node_history;  // MP-MCTS only
  bool expanded = false;
  bool terminal = false;

  std::optional<std::size_t> child_index(Action a) const;
  std::vector<ChildStat> child_stats() const;
  /// V and T recomputed from children; must equal `agg`.
  ParentAggregate recomputed() const;
  HistoryRow snapshot_row(Action selected) const;
};

/// Open-addressed per-worker table keyed by digest. Only the home worker of a
/// key may touch it; anything else is a programming error.
class NodeStore {
 public:
  NodeStore(WorkerId self, WorkerMap map) : self_(self), map_(map) {}

  NodeRecord *lookup(NodeKey key, const NodePath &path);
  const NodeRecord *lookup(NodeKey key, const NodePath &path) const;
  void write(NodeRecord record);

  std::size_t size() const { return table_.size(); }
  WorkerId self() const { return self_; }
  void for_each(const std::function<void(const NodeRecord &)> &fn) const;

 private:
  void check_home(NodeKey key) const;

  WorkerId self_;
  WorkerMap map_;
  absl::flat_hash_map<std::uint64_t, NodeRecord> table_;
};

/// One line per node, sorted by digest: "digest_hex path w v depth".
void write_tree_dump(const NodeStore &store, std::ostream &out);

}  // namespace hdmcts
