#include "hdmcts/bandit.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace hdmcts {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double exploration(double C, std::int64_t parent_visits, std::int64_t denom) {
  return C * std::sqrt(std::log(static_cast<double>(parent_visits)) / static_cast<double>(denom));
}

}  // namespace

double ucb1(const ChildStat &child, const ParentAggregate &parent, double C) {
  if (child.v == 0) return kInf;
  return child.w / static_cast<double>(child.v) + exploration(C, parent.V, child.v);
}

double ucb_vl(const ChildStat &child, const ParentAggregate &parent, double C) {
  const std::int64_t n = child.v + child.t;
  if (n == 0) return kInf;
  return (child.w + 0.0) / static_cast<double>(n) + exploration(C, parent.V + parent.T, n);
}

double ucb_wu(const ChildStat &child, const ParentAggregate &parent, double C) {
  if (child.v == 0) return kInf;
  const std::int64_t n = child.v + child.t;
  return child.w / static_cast<double>(child.v) + exploration(C, parent.V + parent.T, n);
}

double ucb_vl_lcb(const ChildStat &child, const ParentAggregate &parent, double C) {
  const std::int64_t n = child.v + child.t;
  if (n == 0) return kInf;
  const double explore = exploration(C, parent.V + parent.T, n);
  // v == 0 leaves the lower bound undefined; treat it as no penalty.
  double lcb = 0.0;
  if (child.v > 0) {
    lcb = std::min(0.0, static_cast<double>(child.t) *
                            (child.w / static_cast<double>(child.v) - explore));
  }
  return (child.w + lcb) / static_cast<double>(n) + explore;
}

double VlFormula::evaluate(const ChildStat &child, const ParentAggregate &parent) const {
  switch (tag) {
    case FormulaTag::UCB1: return ucb1(child, parent, C);
    case FormulaTag::VANILLA_VL: return ucb_vl(child, parent, C);
    case FormulaTag::WU: return ucb_wu(child, parent, C);
    case FormulaTag::LCB_VL: return ucb_vl_lcb(child, parent, C);
  }
  return ucb_vl(child, parent, C);
}

std::string_view formula_name(FormulaTag tag) {
  switch (tag) {
    case FormulaTag::UCB1: return "ucb1";
    case FormulaTag::VANILLA_VL: return "vl";
    case FormulaTag::WU: return "wu";
    case FormulaTag::LCB_VL: return "lcb";
  }
  return "vl";
}

FormulaTag parse_formula(std::string_view name) {
  if (name == "ucb1") return FormulaTag::UCB1;
  if (name == "vl") return FormulaTag::VANILLA_VL;
  if (name == "wu") return FormulaTag::WU;
  if (name == "lcb") return FormulaTag::LCB_VL;
  throw std::invalid_argument("unknown formula '" + std::string(name) +
                              "' (expected ucb1|vl|wu|lcb)");
}

std::size_t select_best_child(std::span<const ChildStat> children, const ParentAggregate &parent,
                              const VlFormula &formula) {
  assert(!children.empty());
  std::size_t best = 0;
  double best_value = formula.evaluate(children[0], parent);
  for (std::size_t i = 1; i < children.size(); ++i) {
    const double value = formula.evaluate(children[i], parent);
    if (value > best_value) {
      best = i;
      best_value = value;
    }
  }
  return best;
}

}  // namespace hdmcts
