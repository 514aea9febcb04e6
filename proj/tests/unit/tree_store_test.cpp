#include "hdmcts/tree_store.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_set>

#include <gtest/gtest.h>

#include "gen.hpp"
#include "ucb_oracle.hpp"

namespace hdmcts {
namespace {

HistoryRow row(NodeKey parent, std::int64_t parent_visits, Action selected,
               std::vector<HistoryEntry> entries) {
  return HistoryRow{parent, parent_visits, selected, std::move(entries)};
}

// ── paths and keys ──────────────────────────────────────────────────────────

TEST(NodePath, TextRoundTrip) {
  EXPECT_EQ(NodePath{}.to_string(), "/");
  EXPECT_EQ((NodePath{0, 12, 3}).to_string(), "/0/12/3");
  EXPECT_EQ(NodePath::parse("/0/12/3"), (NodePath{0, 12, 3}));
  EXPECT_EQ(NodePath::parse("/"), NodePath{});
  EXPECT_THROW(NodePath::parse("0/1"), std::invalid_argument);
  EXPECT_THROW(NodePath::parse("/0/x"), std::invalid_argument);
  EXPECT_THROW(NodePath{}.parent(), std::logic_error);
  EXPECT_EQ((NodePath{4, 5}).parent(), NodePath{4});
}

TEST(Zobrist, RootAndDeterminism) {
  const ZobristTable z(42, 8, 4);
  EXPECT_EQ(z.key(NodePath{}), z.root());
  EXPECT_EQ(z.key(NodePath{1, 2, 3}), z.key(NodePath{1, 2, 3}));
  const ZobristTable again(42, 8, 4);
  EXPECT_EQ(again.key(NodePath{1, 2, 3}), z.key(NodePath{1, 2, 3}));
  EXPECT_NE(ZobristTable(43, 8, 4).root(), z.root());
}

TEST(Zobrist, SwappedActionsDiffer) {
  const ZobristTable z(42, 8, 4);
  // a collision would need Z[0][0]^Z[1][1] == Z[0][1]^Z[1][0]
  EXPECT_NE(z.entry(0, 0) ^ z.entry(1, 1), z.entry(0, 1) ^ z.entry(1, 0));
  EXPECT_NE(z.key(NodePath{0, 1}), z.key(NodePath{1, 0}));
}

TEST(Zobrist, IncrementalMatchesFold) {
  const ZobristTable z(9, 6, 4);
  NodeKey k = z.root();
  NodePath p;
  for (Action a : {3u, 0u, 2u, 2u, 1u}) {
    k = z.child_key(k, p.depth(), a);
    p = p.child(a);
    EXPECT_EQ(k, z.key(p));
  }
}

TEST(Zobrist, OverflowIsAnError) {
  const ZobristTable z(1, 3, 2);
  EXPECT_THROW(z.key(NodePath{0, 0, 0, 0}), std::out_of_range);
  EXPECT_THROW(z.key(NodePath{2}), std::out_of_range);
  EXPECT_THROW(ZobristTable(1, 0, 2), std::invalid_argument);
}

TEST(NodeKey, HexRoundTrip) {
  const NodeKey k{0x00ab12cd34ef5678ULL};
  EXPECT_EQ(k.hex(), "00ab12cd34ef5678");
  EXPECT_EQ(NodeKey::from_hex(k.hex()), k);
  EXPECT_THROW(NodeKey::from_hex("12"), std::invalid_argument);
}

void enumerate(const NodePath &p, std::size_t depth, std::size_t branching,
               std::vector<NodePath> &out) {
  out.push_back(p);
  if (p.depth() == depth) return;
  for (Action a = 0; a < branching; ++a) enumerate(p.child(a), depth, branching, out);
}

TEST(ZobristProperty, InjectiveOnSmallTrees) {
  for (std::uint64_t seed : {1ULL, 42ULL, 0xdeadbeefULL}) {
    const ZobristTable z(seed, 6, 4);
    std::vector<NodePath> paths;
    enumerate(NodePath{}, 6, 4, paths);
    ASSERT_EQ(paths.size(), 5461u);  // (4^7 - 1) / 3
    std::unordered_set<std::uint64_t> seen;
    for (const auto &p : paths) {
      EXPECT_TRUE(seen.insert(z.key(p).digest).second) << "collision at " << p.to_string();
    }
  }
}

// ── home workers ────────────────────────────────────────────────────────────

TEST(WorkerMap, Examples) {
  EXPECT_EQ(WorkerMap{1}.home(NodeKey{123456789}), 0u);
  EXPECT_EQ(WorkerMap{4}.home(NodeKey{7}), 3u);
}

TEST(WorkerMap, BallsInBins) {
  // Binomial(10000, 1/16): mean 625, sigma ~24.2. [400, 850] is beyond 9 sigma.
  const double sigma = std::sqrt(10000.0 * (1.0 / 16) * (15.0 / 16));
  EXPECT_LT(625 + 6 * sigma, 850);
  EXPECT_GT(625 - 6 * sigma, 400);

  const ZobristTable z(5, 16, 16);
  gen::Source g(77);
  std::vector<int> bins(16, 0);
  std::set<std::vector<Action>> used;
  while (used.size() < 10000) {
    std::vector<Action> actions(static_cast<std::size_t>(g.range(1, 16)));
    for (auto &a : actions) a = static_cast<Action>(g.range(0, 15));
    if (!used.insert(actions).second) continue;
    ++bins[WorkerMap{16}.home(z.key(NodePath(actions)))];
  }
  for (int count : bins) {
    EXPECT_GE(count, 400);
    EXPECT_LE(count, 850);
  }
}

TEST(WorkerMap, LoadBalanceOverTreeShapedNodeSets) {
  const ZobristTable z(3, 8, 4);
  std::vector<NodePath> paths;
  enumerate(NodePath{}, 5, 4, paths);  // 1365 nodes
  std::vector<int> bins(16, 0);
  for (const auto &p : paths) ++bins[WorkerMap{16}.home(z.key(p))];
  const double mean = static_cast<double>(paths.size()) / 16.0;
  EXPECT_LE(*std::max_element(bins.begin(), bins.end()) / mean, 1.5);
}

// ── store ───────────────────────────────────────────────────────────────────

TEST(NodeStore, ReadYourWrites) {
  const ZobristTable z(1, 4, 4);
  NodeStore store(0, WorkerMap{1});
  const NodePath p{1, 2};
  EXPECT_EQ(store.lookup(z.key(p), p), nullptr);

  NodeRecord r1;
  r1.key = z.key(p);
  r1.path = p;
  r1.w = 0.25;
  store.write(r1);
  ASSERT_NE(store.lookup(r1.key, p), nullptr);
  EXPECT_EQ(store.lookup(r1.key, p)->w, 0.25);

  NodeRecord r2 = r1;
  r2.w = -0.5;
  store.write(r2);
  EXPECT_EQ(store.lookup(r1.key, p)->w, -0.5);
  EXPECT_EQ(store.size(), 1u);
}

TEST(NodeStore, ForeignKeyIsFatal) {
  NodeStore store(1, WorkerMap{4});
  NodeRecord r;
  r.key = NodeKey{8};  // home 0
  EXPECT_THROW(store.write(r), std::logic_error);
  EXPECT_THROW(store.lookup(NodeKey{8}, NodePath{}), std::logic_error);
}

TEST(NodeStore, DigestCollisionIsDetected) {
  NodeStore store(0, WorkerMap{1});
  NodeRecord r;
  r.key = NodeKey{99};
  r.path = NodePath{0};
  store.write(r);
  EXPECT_THROW(store.lookup(NodeKey{99}, NodePath{1}), std::runtime_error);
}

TEST(NodeStore, TreeDumpIsSortedByDigest) {
  NodeStore store(0, WorkerMap{1});
  for (std::uint64_t d : {30u, 10u, 20u}) {
    NodeRecord r;
    r.key = NodeKey{d};
    r.path = NodePath{static_cast<Action>(d)};
    r.w = 0.5;
    r.agg.V = 2;
    store.write(r);
  }
  std::ostringstream out;
  write_tree_dump(store, out);
  EXPECT_EQ(out.str(),
            "000000000000000a /10 0.5 2 1\n"
            "0000000000000014 /20 0.5 2 1\n"
            "000000000000001e /30 0.5 2 1\n");
}

TEST(NodeRecord, RecomputedAggregate) {
  NodeRecord r;
  r.own_simulations = 1;
  r.children = {{0, ChildStat{1.0, 3, 1, 0.5}}, {1, ChildStat{0.0, 2, 2, 0.5}}};
  EXPECT_EQ(r.recomputed(), (ParentAggregate{6, 3}));
}

// ── history tables ──────────────────────────────────────────────────────────

TEST(HistoryTable, AppendRemoveExamples) {
  HistoryTable empty;
  const HistoryTable one = history_append(empty, row(NodeKey{1}, 3, 0, {{0, 1.0, 2, 0}}));
  EXPECT_EQ(one.size(), 1u);
  EXPECT_EQ(history_remove_bottom(one), empty);
  EXPECT_THROW(history_remove_bottom(empty), std::logic_error);
}

TEST(HistoryTable, RowsNameTheirParents) {
  const ZobristTable z(4, 4, 2);
  NodeRecord root;
  root.key = z.root();
  root.children = {{0, {}}, {1, {}}};
  NodeRecord mid;
  mid.path = NodePath{1};
  mid.key = z.key(mid.path);
  mid.children = {{0, {}}, {1, {}}};

  HistoryTable t;
  t = history_append(t, root.snapshot_row(1));
  t = history_append(t, mid.snapshot_row(0));
  EXPECT_EQ(t.row(0).parent, z.root());
  EXPECT_EQ(t.row(1).parent, z.key(NodePath{1}));
  EXPECT_EQ(t.row(0).selected, 1u);
}

TEST(HistoryCurrentBest, Examples) {
  const VlFormula vl{FormulaTag::VANILLA_VL, 1.0};
  // single row, on-path child is the unique max
  HistoryTable a({row(NodeKey{1}, 10, 0, {{0, 4.0, 5, 0}, {1, 0.0, 5, 0}})});
  EXPECT_EQ(history_current_best(a, vl), 1u);

  // single row, sibling w=5,v=5 dominates on-path w=0,v=5
  const double on_path = oracle::vanilla({0, 5, 0, 10, 0}, 1.0)->convert_to<double>();
  const double sibling = oracle::vanilla({5, 5, 0, 10, 0}, 1.0)->convert_to<double>();
  ASSERT_GT(sibling, on_path);
  HistoryTable b({row(NodeKey{1}, 10, 0, {{0, 0.0, 5, 0}, {1, 5.0, 5, 0}})});
  EXPECT_EQ(history_current_best(b, vl), 0u);

  // two rows: deepest dominated, upper still argmax -> resume one level up
  HistoryTable c({row(NodeKey{1}, 20, 1, {{0, 0.0, 5, 0}, {1, 8.0, 10, 0}}),
                  row(NodeKey{2}, 10, 0, {{0, 0.0, 5, 0}, {1, 5.0, 5, 0}})});
  EXPECT_EQ(history_current_best(c, vl), 1u);
}

TEST(HistoryMerge, Examples) {
  const HistoryTable node({row(NodeKey{1}, 8, 0, {{0, 1.0, 3, 0}, {1, 0.5, 2, 0}})});
  EXPECT_EQ(history_merge(node, HistoryTable{}), node);

  const HistoryTable msg({row(NodeKey{1}, 10, 0, {{0, 2.0, 5, 0}})});
  const HistoryTable merged = history_merge(node, msg);
  EXPECT_EQ(merged.row(0).find(0)->v, 5);
  EXPECT_EQ(merged.row(0).find(0)->w, 2.0);
  EXPECT_EQ(merged.row(0).find(1)->v, 2);

  const HistoryTable two({row(NodeKey{1}, 8, 0, {{0, 1.0, 3, 0}}),
                          row(NodeKey{2}, 3, 0, {{0, 1.0, 3, 0}})});
  const HistoryTable three({row(NodeKey{1}, 8, 0, {{0, 1.0, 3, 0}}),
                            row(NodeKey{2}, 3, 0, {{0, 1.0, 3, 0}}),
                            row(NodeKey{3}, 1, 1, {{1, 0.0, 1, 0}})});
  EXPECT_EQ(history_merge(two, three).size(), 3u);
}

TEST(HistoryMerge, TieBreaks) {
  const HistoryTable node({row(NodeKey{1}, 4, 0, {{0, 1.0, 3, 1}})});
  const HistoryTable more_inflight({row(NodeKey{1}, 4, 0, {{0, 0.0, 3, 2}})});
  const HistoryTable same({row(NodeKey{1}, 4, 0, {{0, 9.0, 3, 1}})});
  EXPECT_EQ(history_merge(node, more_inflight).row(0).find(0)->t, 2);
  EXPECT_EQ(history_merge(node, same).row(0).find(0)->w, 1.0);
}

TEST(HistoryRefresh, OwnTotalsReplaceStaleEntry) {
  HistoryTable t({row(NodeKey{1}, 6, 1, {{0, 1.0, 2, 0}, {1, 0.5, 3, 0}})});
  history_refresh_on_path(t, 2.5, 5);
  EXPECT_EQ(t.row(0).find(1)->v, 5);
  EXPECT_EQ(t.row(0).find(1)->w, 2.5);
  EXPECT_EQ(t.row(0).parent_visits, 8);
  history_refresh_on_path(t, 0.0, 4);  // older than the entry
  EXPECT_EQ(t.row(0).find(1)->v, 5);
}

// ── history properties ──────────────────────────────────────────────────────

HistoryRow random_row(gen::Source &g, NodeKey parent, int width) {
  HistoryRow r;
  r.parent = parent;
  r.selected = static_cast<Action>(g.range(0, width - 1));
  for (int a = 0; a < width; ++a) {
    const std::int64_t v = g.range(0, 30);
    r.entries.push_back({static_cast<Action>(a), g.real(-1, 1) * static_cast<double>(v), v,
                         g.range(0, 3)});
    r.parent_visits += v;
  }
  r.parent_visits += 1;
  return r;
}

TEST(HistoryProperty, StackDiscipline) {
  gen::Source g(101);
  for (int trial = 0; trial < 200; ++trial) {
    HistoryTable t;
    std::vector<HistoryTable> snapshots;
    for (int op = 0; op < 40; ++op) {
      if (t.empty() || g.coin(0.6)) {
        snapshots.push_back(t);
        t = history_append(t, random_row(g, NodeKey{g.bits()}, static_cast<int>(g.range(1, 5))));
      } else {
        t = history_remove_bottom(t);
        EXPECT_EQ(t, snapshots.back());
        snapshots.pop_back();
      }
      EXPECT_EQ(t.size(), snapshots.size());
    }
  }
}

HistoryTable random_table(gen::Source &g, const std::vector<NodeKey> &parents, int depth) {
  HistoryTable t;
  for (int d = 0; d < depth; ++d) t.append(random_row(g, parents[static_cast<std::size_t>(d)], 3));
  return t;
}

std::vector<HistoryEntry> sorted_entries(const HistoryRow &r) {
  auto e = r.entries;
  std::sort(e.begin(), e.end(),
            [](const HistoryEntry &a, const HistoryEntry &b) { return a.action < b.action; });
  return e;
}

TEST(HistoryProperty, MergeIsIdempotent) {
  gen::Source g(103);
  const std::vector<NodeKey> parents{NodeKey{1}, NodeKey{2}, NodeKey{3}, NodeKey{4}};
  for (int trial = 0; trial < 300; ++trial) {
    const HistoryTable a = random_table(g, parents, static_cast<int>(g.range(0, 4)));
    EXPECT_EQ(history_merge(a, a), a);
  }
}

TEST(HistoryProperty, MergeCommutesWithoutFullTies) {
  gen::Source g(107);
  const std::vector<NodeKey> parents{NodeKey{1}, NodeKey{2}, NodeKey{3}, NodeKey{4}};
  int compared = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const HistoryTable a = random_table(g, parents, static_cast<int>(g.range(0, 4)));
    const HistoryTable b = random_table(g, parents, static_cast<int>(g.range(0, 4)));
    bool full_tie = false;
    for (std::size_t d = 0; d < std::min(a.size(), b.size()); ++d) {
      for (const auto &e : a.row(d).entries) {
        const HistoryEntry *o = b.row(d).find(e.action);
        if (o != nullptr && o->v == e.v && o->t == e.t && !(*o == e)) full_tie = true;
      }
    }
    if (full_tie) continue;
    ++compared;
    const HistoryTable ab = history_merge(a, b);
    const HistoryTable ba = history_merge(b, a);
    ASSERT_EQ(ab.size(), ba.size());
    for (std::size_t d = 0; d < ab.size(); ++d) {
      EXPECT_EQ(ab.row(d).parent_visits, ba.row(d).parent_visits);
      EXPECT_EQ(sorted_entries(ab.row(d)), sorted_entries(ba.row(d)));
    }
  }
  EXPECT_GT(compared, 200);
}

}  // namespace
}  // namespace hdmcts
