#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hdmcts/problem.hpp"

namespace hdmcts {

std::vector<Candidate> prune_by_cumulative_prior(std::vector<Candidate> candidates,
                                                 double threshold) {
  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate &a, const Candidate &b) {
    if (a.prior != b.prior) return a.prior > b.prior;
    return a.action < b.action;
  });
  double cumulative = 0.0;
  std::size_t keep = 0;
  while (keep < candidates.size()) {
    cumulative += candidates[keep].prior;
    ++keep;
    if (cumulative >= threshold - 1e-12) break;
  }
  candidates.resize(std::max<std::size_t>(keep, candidates.empty() ? 0 : 1));
  return candidates;
}

double squash_score(double raw, double k) { return k * raw / (1.0 + k * std::abs(raw)); }

// ---------------------------------------------------------------------------
// SyntheticTree

SyntheticTree::SyntheticTree(SyntheticTreeSpec spec) : spec_(spec) {
  if (spec.depth == 0 || spec.branching == 0) {
    throw std::invalid_argument("synthetic tree needs positive depth and branching");
  }
  leaf_count_ = 1;
  for (std::size_t i = 0; i < spec.depth; ++i) {
    if (leaf_count_ > UINT64_MAX / spec.branching) {
      throw std::length_error("synthetic tree has more than 2^64 leaves");
    }
    leaf_count_ *= spec.branching;
  }
  golden_ = splitmix64(mix_seed(spec.seed, 0x901dULL)) % leaf_count_;
}

double SyntheticTree::leaf_reward(std::uint64_t leaf_index) const {
  if (leaf_index == golden_) return 1.0;
  return 2.0 * unit_from_bits(mix_seed(spec_.seed, leaf_index)) - 1.0;
}

std::uint64_t SyntheticTree::leaf_index(const State &leaf) const {
  if (leaf.depth() != spec_.depth) throw std::invalid_argument("not a leaf: " + leaf.to_string());
  std::uint64_t index = 0;
  for (std::size_t i = 0; i < leaf.depth(); ++i) {
    if (leaf[i] >= spec_.branching) throw std::invalid_argument("action out of range");
    index = index * spec_.branching + leaf[i];
  }
  return index;
}

State SyntheticTree::leaf_path(std::uint64_t leaf_index) const {
  std::vector<Action> actions(spec_.depth);
  for (std::size_t i = spec_.depth; i-- > 0;) {
    actions[i] = static_cast<Action>(leaf_index % spec_.branching);
    leaf_index /= spec_.branching;
  }
  return State(std::move(actions));
}

std::vector<Candidate> SyntheticTree::expand_candidates(const State &state) {
  if (is_terminal(state)) return {};
  std::vector<Candidate> out(spec_.branching);
  const double prior = 1.0 / static_cast<double>(spec_.branching);
  for (std::size_t a = 0; a < spec_.branching; ++a) out[a] = Candidate{static_cast<Action>(a), prior};
  return out;
}

Rollout SyntheticTree::rollout(const State &state, Rng &rng) {
  std::vector<Action> actions(state.actions().begin(), state.actions().end());
  while (actions.size() < spec_.depth) {
    auto a = static_cast<Action>(unit_real(rng) * static_cast<double>(spec_.branching));
    actions.push_back(std::min<Action>(a, static_cast<Action>(spec_.branching - 1)));
  }
  State terminal(std::move(actions));
  std::string solution = terminal.to_string();
  return Rollout{std::move(terminal), std::move(solution)};
}

double SyntheticTree::score(const std::string &solution) {
  try {
    return leaf_reward(leaf_index(NodePath::parse(solution)));
  } catch (const std::invalid_argument &e) {
    throw ProblemError(std::string("synthetic score: ") + e.what());
  }
}

Optimum synthetic_enumerate_optimum(const SyntheticTreeSpec &spec) {
  SyntheticTree tree(spec);
  if (tree.leaf_count() > 1'000'000) {
    throw std::length_error("synthetic tree too large to enumerate (" +
                            std::to_string(tree.leaf_count()) + " leaves)");
  }
  Optimum best{-2.0, {}};
  std::uint64_t best_index = 0;
  for (std::uint64_t i = 0; i < tree.leaf_count(); ++i) {
    const double r = tree.leaf_reward(i);
    if (r > best.best_reward) {
      best.best_reward = r;
      best_index = i;
    }
  }
  best.best_path = tree.leaf_path(best_index);
  return best;
}

}  // namespace hdmcts
