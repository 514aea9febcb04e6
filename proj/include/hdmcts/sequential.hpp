#pragma once

#include <string>
#include <vector>

#include "hdmcts/config.hpp"
#include "hdmcts/problem.hpp"
#include "hdmcts/worker.hpp"

namespace hdmcts {

struct SequentialResult {
  double best_reward = -1.0;
  std::string best_solution;
  std::vector<SimulationRecord> trace;  // chronological (simulated node, reward)
};

/// Classic single-threaded UCT with plain UCB1 over a pointer tree. Shares
/// only the key table, the rollout seeding and the pruning rule with the
/// distributed engine. Requires algorithm=sequential and budget_sims.
SequentialResult run_sequential_uct(const RunConfig &cfg, ProblemAdapter &problem);

}  // namespace hdmcts
