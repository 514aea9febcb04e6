#include "hdmcts/tree_store.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "hdmcts/rng.hpp"

namespace hdmcts {

// ---------------------------------------------------------------------------
// NodePath

NodePath NodePath::child(Action a) const {
  std::vector<Action> next;
  next.reserve(actions_.size() + 1);
  next.assign(actions_.begin(), actions_.end());
  next.push_back(a);
  return NodePath(std::move(next));
}

NodePath NodePath::parent() const {
  if (actions_.empty()) throw std::logic_error("root has no parent");
  return prefix(actions_.size() - 1);
}

NodePath NodePath::prefix(std::size_t length) const {
  length = std::min(length, actions_.size());
  return NodePath(std::vector<Action>(actions_.begin(), actions_.begin() + length));
}

std::string NodePath::to_string() const {
  if (actions_.empty()) return "/";
  std::string out;
  for (Action a : actions_) {
    out += '/';
    out += std::to_string(a);
  }
  return out;
}

NodePath NodePath::parse(std::string_view text) {
  if (text.empty() || text.front() != '/') {
    throw std::invalid_argument("node path must start with '/': " + std::string(text));
  }
  std::vector<Action> actions;
  std::size_t pos = 1;
  while (pos < text.size()) {
    std::size_t end = text.find('/', pos);
    if (end == std::string_view::npos) end = text.size();
    Action a = 0;
    auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + end, a);
    if (ec != std::errc() || ptr != text.data() + end) {
      throw std::invalid_argument("bad node path component in " + std::string(text));
    }
    actions.push_back(a);
    pos = end + 1;
  }
  return NodePath(std::move(actions));
}

// ---------------------------------------------------------------------------
// NodeKey / Zobrist

std::string NodeKey::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

NodeKey NodeKey::from_hex(std::string_view text) {
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value, 16);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.size() != 16) {
    throw std::invalid_argument("bad node key: " + std::string(text));
  }
  return NodeKey{value};
}

ZobristTable::ZobristTable(std::uint64_t seed, std::size_t max_depth, std::size_t max_branching)
    : seed_(seed), max_depth_(max_depth), max_branching_(max_branching) {
  if (max_depth == 0 || max_branching == 0) {
    throw std::invalid_argument("zobrist table dimensions must be positive");
  }
  Rng rng(mix_seed(seed, 0x5a0b1257ULL));
  root_ = rng();
  table_.resize(max_depth * max_branching);
  for (auto &entry : table_) entry = rng();
}

std::uint64_t ZobristTable::entry(std::size_t depth, Action action) const {
  if (depth >= max_depth_ || action >= max_branching_) {
    throw std::out_of_range("zobrist table overflow at depth " + std::to_string(depth) +
                            ", action " + std::to_string(action) + " (table is " +
                            std::to_string(max_depth_) + "x" + std::to_string(max_branching_) +
                            ")");
  }
  return table_[depth * max_branching_ + action];
}

NodeKey ZobristTable::key(const NodePath &path) const {
  std::uint64_t digest = root_;
  for (std::size_t d = 0; d < path.depth(); ++d) digest ^= entry(d, path[d]);
  return NodeKey{digest};
}

NodeKey ZobristTable::child_key(NodeKey parent, std::size_t depth, Action action) const {
  return NodeKey{parent.digest ^ entry(depth, action)};
}

// ---------------------------------------------------------------------------
// History tables

const HistoryEntry *HistoryRow::find(Action a) const {
  for (const auto &e : entries) {
    if (e.action == a) return &e;
  }
  return nullptr;
}

HistoryEntry *HistoryRow::find(Action a) {
  for (auto &e : entries) {
    if (e.action == a) return &e;
  }
  return nullptr;
}

void HistoryTable::remove_bottom() {
  if (rows_.empty()) throw std::logic_error("remove_bottom on an empty history table");
  rows_.pop_back();
}

void HistoryTable::truncate(std::size_t length) {
  if (rows_.size() > length) rows_.resize(length);
}

HistoryTable history_append(HistoryTable table, HistoryRow row) {
  table.append(std::move(row));
  return table;
}

HistoryTable history_remove_bottom(HistoryTable table) {
  table.remove_bottom();
  return table;
}

std::size_t history_current_best(const HistoryTable &table, const VlFormula &formula) {
  const auto &rows = table.rows();
  std::vector<ChildStat> stats;
  for (std::size_t d = rows.size(); d-- > 0;) {
    const HistoryRow &row = rows[d];
    if (row.entries.empty()) continue;
    stats.clear();
    ParentAggregate parent{row.parent_visits, 0};
    for (const auto &e : row.entries) {
      stats.push_back(ChildStat{e.w, e.v, e.t, 1.0});
      parent.T += e.t;
    }
    const std::size_t best = select_best_child(stats, parent, formula);
    if (row.entries[best].action == row.selected) return d + 1;
  }
  return 0;
}

namespace {

bool fresher(const HistoryEntry &candidate, const HistoryEntry &incumbent) {
  if (candidate.v != incumbent.v) return candidate.v > incumbent.v;
  return candidate.v + candidate.t > incumbent.v + incumbent.t;
}

}  // namespace

HistoryTable history_merge(const HistoryTable &node_history,
                           const HistoryTable &message_history) {
  std::vector<HistoryRow> rows = node_history.rows();
  const auto &incoming = message_history.rows();
  for (std::size_t d = 0; d < incoming.size(); ++d) {
    if (d >= rows.size()) {
      rows.push_back(incoming[d]);
      continue;
    }
    HistoryRow &mine = rows[d];
    const HistoryRow &theirs = incoming[d];
    if (!(mine.parent == theirs.parent)) continue;
    mine.parent_visits = std::max(mine.parent_visits, theirs.parent_visits);
    for (const auto &entry : theirs.entries) {
      HistoryEntry *current = mine.find(entry.action);
      if (current == nullptr) {
        mine.entries.push_back(entry);
      } else if (fresher(entry, *current)) {
        *current = entry;
      }
    }
  }
  return HistoryTable(std::move(rows));
}

void history_refresh_on_path(HistoryTable &table, double own_w, std::int64_t own_v) {
  if (table.empty()) return;
  HistoryRow &row = table.bottom();
  HistoryEntry *entry = row.find(row.selected);
  if (entry == nullptr || own_v <= entry->v) return;
  row.parent_visits += own_v - entry->v;
  entry->v = own_v;
  entry->w = own_w;
}

// ---------------------------------------------------------------------------
// NodeRecord / NodeStore

std::optional<std::size_t> NodeRecord::child_index(Action a) const {
  for (std::size_t i = 0; i < children.size(); ++i) {
    if (children[i].action == a) return i;
  }
  return std::nullopt;
}

std::vector<ChildStat> NodeRecord::child_stats() const {
  std::vector<ChildStat> out;
  out.reserve(children.size());
  for (const auto &c : children) out.push_back(c.stat);
  return out;
}

ParentAggregate NodeRecord::recomputed() const {
  ParentAggregate agg{own_simulations, 0};
  for (const auto &c : children) {
    agg.V += c.stat.v;
    agg.T += c.stat.t;
  }
  return agg;
}

HistoryRow NodeRecord::snapshot_row(Action selected) const {
  HistoryRow row;
  row.parent = key;
  row.parent_visits = agg.V;
  row.selected = selected;
  row.entries.reserve(children.size());
  for (const auto &c : children) {
    row.entries.push_back(HistoryEntry{c.action, c.stat.w, c.stat.v, c.stat.t});
  }
  return row;
}

void NodeStore::check_home(NodeKey key) const {
  if (map_.home(key) != self_) {
    throw std::logic_error("worker " + std::to_string(self_) + " touched node " + key.hex() +
                           " owned by worker " + std::to_string(map_.home(key)));
  }
}

NodeRecord *NodeStore::lookup(NodeKey key, const NodePath &path) {
  check_home(key);
  auto it = table_.find(key.digest);
  if (it == table_.end()) return nullptr;
  if (!(it->second.path == path)) {
    throw std::runtime_error("digest collision between " + it->second.path.to_string() + " and " +
                             path.to_string());
  }
  return &it->second;
}

const NodeRecord *NodeStore::lookup(NodeKey key, const NodePath &path) const {
  return const_cast<NodeStore *>(this)->lookup(key, path);
}

void NodeStore::write(NodeRecord record) {
  check_home(record.key);
  auto [it, inserted] = table_.try_emplace(record.key.digest, record);
  if (!inserted) {
    if (!(it->second.path == record.path)) {
      throw std::runtime_error("digest collision between " + it->second.path.to_string() +
                               " and " + record.path.to_string());
    }
    it->second = std::move(record);
  }
}

void NodeStore::for_each(const std::function<void(const NodeRecord &)> &fn) const {
  for (const auto &[digest, record] : table_) fn(record);
}

void write_tree_dump(const NodeStore &store, std::ostream &out) {
  std::vector<const NodeRecord *> records;
  store.for_each([&](const NodeRecord &r) { records.push_back(&r); });
  std::sort(records.begin(), records.end(),
            [](const NodeRecord *a, const NodeRecord *b) { return a->key.digest < b->key.digest; });
  for (const NodeRecord *r : records) {
    char w[32];
    auto res = std::to_chars(w, w + sizeof w, r->w);
    out << r->key.hex() << ' ' << r->path.to_string() << ' ' << std::string_view(w, res.ptr - w)
        << ' ' << r->agg.V << ' ' << r->path.depth() << '\n';
  }
}

}  // namespace hdmcts
