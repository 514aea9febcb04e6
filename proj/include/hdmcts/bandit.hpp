#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace hdmcts {

/// Per-child bandit statistics as seen from the parent's children table.
struct ChildStat {
  double w = 0.0;       // cumulative reward
  std::int64_t v = 0;   // completed simulations
  std::int64_t t = 0;   // in-flight jobs below this child (virtual loss)
  double prior = 1.0;   // expansion probability; pruning only, never in UCB

  friend bool operator==(const ChildStat &, const ChildStat &) = default;
};

/// Parent-side aggregate: V visits and T = sum of children t.
struct ParentAggregate {
  std::int64_t V = 0;
  std::int64_t T = 0;

  friend bool operator==(const ParentAggregate &, const ParentAggregate &) = default;
};

enum class FormulaTag : std::uint8_t { UCB1, VANILLA_VL, WU, LCB_VL };

struct VlFormula {
  FormulaTag tag = FormulaTag::VANILLA_VL;
  double C = 1.0;

  double evaluate(const ChildStat &child, const ParentAggregate &parent) const;

  friend bool operator==(const VlFormula &, const VlFormula &) = default;
};

std::string_view formula_name(FormulaTag tag);
FormulaTag parse_formula(std::string_view name);

// All four return +infinity for first-play urgency. ucb1/ucb_wu are infinite
// when v == 0; ucb_vl/ucb_vl_lcb only when v + t == 0.
double ucb1(const ChildStat &child, const ParentAggregate &parent, double C);
double ucb_vl(const ChildStat &child, const ParentAggregate &parent, double C);
double ucb_wu(const ChildStat &child, const ParentAggregate &parent, double C);
double ucb_vl_lcb(const ChildStat &child, const ParentAggregate &parent, double C);

/// Argmax over children; ties go to the lowest index. Requires non-empty input.
std::size_t select_best_child(std::span<const ChildStat> children, const ParentAggregate &parent,
                              const VlFormula &formula);

}  // namespace hdmcts
