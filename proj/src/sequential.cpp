#include "hdmcts/sequential.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace hdmcts {

namespace {

struct SeqNode {
  NodePath path;
  NodeKey key;
  double w = 0.0;
  std::int64_t visits = 0;
  std::int64_t own_simulations = 0;
  bool expanded = false;
  bool terminal = false;
  std::vector<Action> actions;
  std::vector<std::unique_ptr<SeqNode>> children;
};

bool expand(SeqNode &node, ProblemAdapter &problem, double prune) {
  std::vector<Candidate> candidates;
  try {
    candidates = problem.expand_candidates(node.path);
  } catch (const ProblemError &) {
    return false;
  }
  if (candidates.empty()) {
    node.terminal = true;
    return false;
  }
  for (const auto &c : prune_by_cumulative_prior(std::move(candidates), prune)) {
    node.actions.push_back(c.action);
  }
  node.children.resize(node.actions.size());
  node.expanded = true;
  return true;
}

std::size_t pick_ucb1(const SeqNode &node, double C) {
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < node.children.size(); ++i) {
    const SeqNode *child = node.children[i].get();
    double value = std::numeric_limits<double>::infinity();
    if (child != nullptr && child->visits > 0) {
      value = child->w / static_cast<double>(child->visits) +
              C * std::sqrt(std::log(static_cast<double>(node.visits)) /
                            static_cast<double>(child->visits));
    }
    if (value > best_value) {
      best_value = value;
      best = i;
    }
  }
  return best;
}

}  // namespace

SequentialResult run_sequential_uct(const RunConfig &cfg, ProblemAdapter &problem) {
  if (cfg.algorithm != Algorithm::SEQUENTIAL) {
    throw std::invalid_argument("run_sequential_uct needs algorithm=sequential");
  }
  if (cfg.budget.kind != BudgetKind::Simulations) {
    throw std::invalid_argument("run_sequential_uct needs budget_sims");
  }
  const ZobristTable zobrist = make_zobrist(cfg, problem);

  SeqNode root;
  root.path = problem.root_state();
  root.key = zobrist.key(root.path);
  if (problem.is_terminal(root.path) || !expand(root, problem, cfg.prune_cumulative)) {
    throw ProblemFault("the root state cannot be expanded");
  }

  SequentialResult result;
  const auto budget = static_cast<std::int64_t>(cfg.budget.amount);
  std::vector<SeqNode *> path;
  for (std::int64_t round = 0; round < budget; ++round) {
    path.assign(1, &root);
    SeqNode *node = &root;
    for (;;) {
      if (!node->expanded && !node->terminal &&
          node->visits + 1 >= static_cast<std::int64_t>(cfg.expansion_threshold)) {
        expand(*node, problem, cfg.prune_cumulative);
      }
      if (!node->expanded) break;
      const std::size_t i = pick_ucb1(*node, cfg.formula.C);
      if (!node->children[i]) {
        auto child = std::make_unique<SeqNode>();
        child->path = node->path.child(node->actions[i]);
        child->key = zobrist.key(child->path);
        child->terminal = problem.is_terminal(child->path);
        node->children[i] = std::move(child);
      }
      node = node->children[i].get();
      path.push_back(node);
    }

    Rng rng(rollout_seed(cfg.seed, node->key, node->own_simulations));
    double reward = -1.0;
    std::string solution;
    try {
      Rollout rollout = problem.rollout(node->path, rng);
      solution = std::move(rollout.solution);
      reward = problem.score(solution);
    } catch (const ProblemError &) {
      reward = -1.0;
    }
    node->own_simulations += 1;
    result.trace.push_back(SimulationRecord{node->path, reward});
    if (result.trace.size() == 1 || reward > result.best_reward) {
      result.best_reward = reward;
      result.best_solution = solution;
    }
    for (auto it = path.rbegin(); it != path.rend(); ++it) {
      (*it)->w += reward;
      (*it)->visits += 1;
    }
  }
  return result;
}

}  // namespace hdmcts
