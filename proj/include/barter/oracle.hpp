#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "barter/instance.hpp"
#include "barter/random.hpp"
#include "barter/vbm.hpp"

namespace barter {

struct OracleResult {
  std::optional<Rat> best_utility;
  std::optional<Allocation> best_allocation;
  bool has_nonempty_balanced = false;
  long long enumerated_count = 0;
};

namespace detail {

// DFS over per-edge integer values with exact interval pruning on each
// agent's achievable balance. Never skips a feasible completion: an agent
// with current net delta can still reach zero only if
// -maxReceiveRest <= delta <= maxGiveRest.
class BruteForce {
 public:
  BruteForce(const BarterInstance& inst, const VbmGraph& g) : inst_(inst), g_(g) {
    caps_.resize(g.edges.size());
    for (size_t e = 0; e < g.edges.size(); ++e) {
      const Edge& ed = g.edges[e];
      caps_[e] = std::min(g.vertices[ed.left].cap, g.vertices[ed.right].cap);
    }
    agent_ids_.reserve(inst.agents.size());
    for (const auto& ag : inst.agents) agent_ids_.push_back(ag.id);
    agent_index_.resize(g.vertices.size());
    for (size_t v = 0; v < g.vertices.size(); ++v) {
      auto it = std::find(agent_ids_.begin(), agent_ids_.end(), g.vertices[v].agent);
      agent_index_[v] = int(it - agent_ids_.begin());
    }
    delta_.assign(agent_ids_.size(), Rat(0));
    give_rest_.assign(agent_ids_.size(), Rat(0));
    receive_rest_.assign(agent_ids_.size(), Rat(0));
    for (size_t e = 0; e < g.edges.size(); ++e) {
      const Edge& ed = g.edges[e];
      give_rest_[agent_index_[ed.left]] += ed.value * caps_[e];
      receive_rest_[agent_index_[ed.right]] += ed.value * caps_[e];
    }
    deg_slack_.resize(g.vertices.size());
    for (size_t v = 0; v < g.vertices.size(); ++v) deg_slack_[v] = g.vertices[v].cap;
    current_.assign(g.edges.size(), 0);
  }

  OracleResult run(bool prune) {
    prune_ = prune;
    best_utility_.reset();
    best_.reset();
    nonempty_balanced_ = false;
    count_ = 0;
    utility_ = 0;
    descend(0);
    OracleResult res;
    res.best_utility = best_utility_;
    if (best_) {
      FractionalSolution sol;
      sol.x.assign(best_->begin(), best_->end());
      res.best_allocation = allocation_from_integral(g_, sol);
    }
    res.has_nonempty_balanced = nonempty_balanced_;
    res.enumerated_count = count_;
    return res;
  }

 private:
  const BarterInstance& inst_;
  const VbmGraph& g_;
  std::vector<int> caps_;
  std::vector<AgentId> agent_ids_;
  std::vector<int> agent_index_;
  std::vector<Rat> delta_;         // given - received so far, per agent
  std::vector<Rat> give_rest_;     // undecided giving potential, per agent
  std::vector<Rat> receive_rest_;  // undecided receiving potential
  std::vector<int> deg_slack_;
  std::vector<int> current_;
  Rat utility_;
  bool prune_ = true;
  std::optional<Rat> best_utility_;
  std::optional<std::vector<int>> best_;
  bool nonempty_balanced_ = false;
  long long count_ = 0;

  bool balance_reachable() const {
    for (size_t a = 0; a < delta_.size(); ++a)
      if (delta_[a] > receive_rest_[a] || delta_[a] < -give_rest_[a]) return false;
    return true;
  }

  void descend(size_t e) {
    if (prune_ && !balance_reachable()) return;
    if (e == g_.edges.size()) {
      ++count_;
      for (const Rat& d : delta_)
        if (d != 0) return;
      bool nonempty = std::any_of(current_.begin(), current_.end(), [](int v) { return v > 0; });
      if (nonempty) nonempty_balanced_ = true;
      if (!best_utility_ || utility_ > *best_utility_) {
        best_utility_ = utility_;
        best_ = current_;
      }
      return;
    }
    const Edge& ed = g_.edges[e];
    int gi = agent_index_[ed.left], ri = agent_index_[ed.right];
    give_rest_[gi] -= ed.value * caps_[e];
    receive_rest_[ri] -= ed.value * caps_[e];
    int max_value = std::min({caps_[e], deg_slack_[ed.left], deg_slack_[ed.right]});
    for (int k = 0; k <= max_value; ++k) {
      current_[e] = k;
      delta_[gi] += ed.value * k;
      delta_[ri] -= ed.value * k;
      utility_ += ed.weight * k;
      deg_slack_[ed.left] -= k;
      deg_slack_[ed.right] -= k;
      descend(e + 1);
      deg_slack_[ed.left] += k;
      deg_slack_[ed.right] += k;
      utility_ -= ed.weight * k;
      delta_[gi] -= ed.value * k;
      delta_[ri] += ed.value * k;
    }
    current_[e] = 0;
    give_rest_[gi] += ed.value * caps_[e];
    receive_rest_[ri] += ed.value * caps_[e];
  }
};

}  // namespace detail

// Exhaustive integral solver: max-utility balanced allocation plus the
// decision "does any non-empty balanced allocation exist".
inline OracleResult brute_force(const BarterInstance& inst, int edge_limit = 24,
                                bool prune = true) {
  validate_instance(inst);
  VbmGraph g = build_vbm(inst);
  if (int(g.edges.size()) > edge_limit)
    throw TooLargeError("instance has " + std::to_string(g.edges.size()) +
                        " edges, oracle limit is " + std::to_string(edge_limit));
  // Capacitated domains are product-bounded at 2^24 combinations.
  double log_product = 0;
  for (const Edge& e : g.edges) {
    int cap = std::min(g.vertices[e.left].cap, g.vertices[e.right].cap);
    log_product += std::log2(double(cap) + 1.0);
    if (log_product > 24.0)
      throw TooLargeError("capacitated enumeration exceeds 2^24 combinations");
  }
  return detail::BruteForce(inst, g).run(prune);
}

// Lemma-9 reduction: a partition instance becomes a two-agent exchange whose
// only balanced non-empty allocations select a subset summing to half.
inline BarterInstance partition_to_bsv(const std::vector<long long>& values) {
  if (values.empty()) throw ValidationError("partition set must be non-empty");
  long long sum = 0;
  for (long long v : values) {
    if (v <= 0) throw ValidationError("partition values must be positive");
    sum += v;
  }
  if (sum % 2 != 0) throw OddSumError("partition set sum is odd");
  long long half = sum / 2;

  BarterInstance inst;
  AgentSpec a1{"1", {}, {}}, a2{"2", {}, {}};
  for (size_t j = 0; j < values.size(); ++j) {
    ItemId id = "i" + std::to_string(j + 1);
    inst.items.push_back(ItemSpec{id, Rat(values[j])});
    a1.have[id] = 1;
    a2.wish[id] = 1;
  }
  ItemId target = "i" + std::to_string(values.size() + 1);
  inst.items.push_back(ItemSpec{target, Rat(half)});
  a1.wish[target] = 1;
  a2.have[target] = 1;
  inst.agents = {a1, a2};
  return inst;
}

// Independent subset-sum decision used to cross-check the reduction.
inline bool subset_sum_exists(const std::vector<long long>& values, long long target) {
  if (target < 0) return false;
  std::vector<char> reachable(size_t(target) + 1, 0);
  reachable[0] = 1;
  for (long long v : values)
    for (long long s = target; s >= v; --s)
      if (reachable[size_t(s - v)]) reachable[size_t(s)] = 1;
  return reachable[size_t(target)] != 0;
}

// Two agents, one item each, mutual wishes, values 1 and 1/n. The only
// balanced integral allocation is empty for n >= 2, yet the relaxation
// trades a 1/n sliver.
inline BarterInstance gap_family(int n) {
  if (n < 1) throw ValidationError("gap family needs n >= 1");
  BarterInstance inst;
  inst.items = {ItemSpec{"j1", Rat(1)}, ItemSpec{"j2", Rat(1, n)}};
  inst.agents = {AgentSpec{"1", {{"j1", 1}}, {{"j2", 1}}}, AgentSpec{"2", {{"j2", 1}}, {{"j1", 1}}}};
  return inst;  // value weights: w_e = v_j
}

// Two agents, four items valued (10, 10, 20, 20), unit edge weights. Plain
// dependent rounding loses all of agent 2's given value with probability
// 1/4; the balanced engine never does.
inline BarterInstance gkps_worst_case() {
  BarterInstance inst;
  inst.items = {ItemSpec{"1", Rat(10)}, ItemSpec{"2", Rat(10)}, ItemSpec{"3", Rat(20)},
                ItemSpec{"4", Rat(20)}};
  inst.agents = {AgentSpec{"1", {{"3", 1}, {"4", 1}}, {{"1", 1}, {"2", 1}}},
                 AgentSpec{"2", {{"1", 1}, {"2", 1}}, {{"3", 1}, {"4", 1}}}};
  inst.weights.use_item_value = false;
  for (const auto& key :
       {TransferKey{"1", "2", "3"}, TransferKey{"1", "2", "4"}, TransferKey{"2", "1", "1"},
        TransferKey{"2", "1", "2"}})
    inst.weights.explicit_weights[key] = 1;
  return inst;
}

struct RandomInstanceOptions {
  int agents = 3;
  int items = 4;
  Rat density = Rat(1, 2);       // inclusion probability per (agent, item) slot
  long long value_min = 1;
  long long value_max = 10;
  int cap_min = 1;
  int cap_max = 1;
  std::uint64_t seed = 1;
};

inline BarterInstance random_instance(const RandomInstanceOptions& opt) {
  if (opt.agents < 1 || opt.items < 1) throw ValidationError("sizes must be positive");
  if (opt.density <= 0 || opt.density > 1) throw ValidationError("density must be in (0, 1]");
  if (opt.value_min < 1 || opt.value_max < opt.value_min)
    throw ValidationError("bad value range");
  if (opt.cap_min < 1 || opt.cap_max < opt.cap_min) throw ValidationError("bad cap range");
  std::mt19937_64 rng(opt.seed);
  auto pick_int = [&](long long lo, long long hi) {
    return lo + (long long)(rng() % std::uint64_t(hi - lo + 1));
  };
  BarterInstance inst;
  for (int j = 0; j < opt.items; ++j)
    inst.items.push_back(
        ItemSpec{"i" + std::to_string(j + 1), Rat(pick_int(opt.value_min, opt.value_max))});
  for (int a = 0; a < opt.agents; ++a) {
    AgentSpec ag{"a" + std::to_string(a + 1), {}, {}};
    for (int j = 0; j < opt.items; ++j) {
      if (bernoulli_exact(opt.density, rng))
        ag.have[inst.items[j].id] = int(pick_int(opt.cap_min, opt.cap_max));
      if (bernoulli_exact(opt.density, rng))
        ag.wish[inst.items[j].id] = int(pick_int(opt.cap_min, opt.cap_max));
    }
    inst.agents.push_back(ag);
  }
  validate_instance(inst);
  return inst;
}

}  // namespace barter
