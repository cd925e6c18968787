#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "barter/errors.hpp"
#include "barter/rational.hpp"

namespace barter {

using AgentId = std::string;
using ItemId = std::string;

struct ItemSpec {
  ItemId id;
  Rat value;  // must be > 0

  bool operator==(const ItemSpec&) const = default;
};

struct AgentSpec {
  AgentId id;
  std::map<ItemId, int> have;  // item -> owned copies (>= 1 when listed)
  std::map<ItemId, int> wish;  // item -> wanted copies (>= 1 when listed)

  bool operator==(const AgentSpec&) const = default;
};

// (giver, receiver, item) keys for explicit edge weights.
using TransferKey = std::tuple<AgentId, AgentId, ItemId>;

// Either every transfer of item j is worth v_j, or an explicit table
// overrides per triple (absent triples fall back to the item value).
struct TransferWeight {
  bool use_item_value = true;
  std::map<TransferKey, Rat> explicit_weights;

  bool operator==(const TransferWeight&) const = default;
};

struct FairnessGroup {
  std::vector<AgentId> agents;
  Rat floor;  // mu_p >= 0, received value the group gets in expectation

  bool operator==(const FairnessGroup&) const = default;
};

struct BarterInstance {
  std::vector<ItemSpec> items;
  std::vector<AgentSpec> agents;
  TransferWeight weights;
  std::vector<FairnessGroup> fairness;

  bool operator==(const BarterInstance&) const = default;

  const ItemSpec* find_item(const ItemId& id) const {
    for (const auto& it : items)
      if (it.id == id) return &it;
    return nullptr;
  }

  const AgentSpec* find_agent(const AgentId& id) const {
    for (const auto& ag : agents)
      if (ag.id == id) return &ag;
    return nullptr;
  }

  Rat item_value(const ItemId& id) const {
    const ItemSpec* it = find_item(id);
    if (!it) throw ValidationError("unknown item id: " + id);
    return it->value;
  }

  Rat transfer_weight(const AgentId& giver, const AgentId& receiver, const ItemId& item) const {
    if (!weights.use_item_value) {
      auto found = weights.explicit_weights.find(TransferKey{giver, receiver, item});
      if (found != weights.explicit_weights.end()) return found->second;
    }
    return item_value(item);
  }
};

struct Transfer {
  AgentId giver;
  AgentId receiver;
  ItemId item;
  int count = 1;

  bool operator==(const Transfer&) const = default;
  auto sort_key() const { return std::tie(giver, receiver, item); }
};

struct Allocation {
  std::vector<Transfer> transfers;

  bool operator==(const Allocation&) const = default;
};

struct AgentNetValue {
  Rat given;
  Rat received;
  Rat net;  // given - received; the agent's net value loss

  bool operator==(const AgentNetValue&) const = default;
};

struct NetValueReport {
  std::map<AgentId, AgentNetValue> per_agent;
  Rat utility;
};

// Returns its argument iff every model invariant holds.
inline const BarterInstance& validate_instance(const BarterInstance& inst) {
  std::set<ItemId> item_ids;
  for (const auto& it : inst.items) {
    if (!item_ids.insert(it.id).second)
      throw ValidationError("duplicate item id: " + it.id);
    if (it.value <= 0)
      throw ValidationError("non-positive value for item: " + it.id);
  }
  std::set<AgentId> agent_ids;
  for (const auto& ag : inst.agents) {
    if (!agent_ids.insert(ag.id).second)
      throw ValidationError("duplicate agent id: " + ag.id);
    for (const auto& [item, cap] : ag.have) {
      if (!item_ids.count(item))
        throw ValidationError("dangling item id in have list of agent " + ag.id + ": " + item);
      if (cap < 1)
        throw ValidationError("non-positive have capacity for agent " + ag.id + ", item " + item);
    }
    for (const auto& [item, cap] : ag.wish) {
      if (!item_ids.count(item))
        throw ValidationError("dangling item id in wish list of agent " + ag.id + ": " + item);
      if (cap < 1)
        throw ValidationError("non-positive wish capacity for agent " + ag.id + ", item " + item);
    }
  }
  if (!inst.weights.use_item_value) {
    for (const auto& [key, w] : inst.weights.explicit_weights) {
      const auto& [giver, receiver, item] = key;
      (void)w;
      const AgentSpec* g = inst.find_agent(giver);
      const AgentSpec* r = inst.find_agent(receiver);
      if (!g || !r)
        throw ValidationError("weight entry references unknown agent: " + giver + " -> " + receiver);
      if (giver == receiver)
        throw ValidationError("weight entry with giver == receiver: " + giver);
      if (!g->have.count(item) || !r->wish.count(item))
        throw ValidationError("weight entry for triple outside have/wish lists: " + giver + " -> " +
                              receiver + " item " + item);
    }
  }
  for (const auto& group : inst.fairness) {
    if (group.floor < 0) throw ValidationError("negative fairness floor");
    if (group.agents.empty()) throw ValidationError("empty fairness group");
    for (const auto& id : group.agents)
      if (!agent_ids.count(id))
        throw ValidationError("fairness group references unknown agent: " + id);
  }
  return inst;
}

// Exact per-agent given/received/net values plus total utility.
// Throws InvalidTransferError on capacity or membership violations.
inline NetValueReport evaluate_allocation(const BarterInstance& inst, const Allocation& alloc) {
  NetValueReport report;
  for (const auto& ag : inst.agents) report.per_agent[ag.id] = AgentNetValue{};
  report.utility = 0;

  std::map<std::pair<AgentId, ItemId>, long long> given_count, received_count;
  for (const auto& t : alloc.transfers) {
    const AgentSpec* giver = inst.find_agent(t.giver);
    const AgentSpec* receiver = inst.find_agent(t.receiver);
    if (!giver) throw InvalidTransferError("transfer from unknown agent: " + t.giver);
    if (!receiver) throw InvalidTransferError("transfer to unknown agent: " + t.receiver);
    if (t.giver == t.receiver)
      throw InvalidTransferError("self-transfer for agent: " + t.giver);
    if (t.count < 1) throw InvalidTransferError("non-positive transfer count");
    if (!giver->have.count(t.item))
      throw InvalidTransferError("agent " + t.giver + " does not have item " + t.item);
    if (!receiver->wish.count(t.item))
      throw InvalidTransferError("agent " + t.receiver + " does not wish item " + t.item);
    given_count[{t.giver, t.item}] += t.count;
    received_count[{t.receiver, t.item}] += t.count;

    Rat value = inst.item_value(t.item);
    Rat weight = inst.transfer_weight(t.giver, t.receiver, t.item);
    report.per_agent[t.giver].given += value * t.count;
    report.per_agent[t.receiver].received += value * t.count;
    report.utility += weight * t.count;
  }
  for (const auto& [key, total] : given_count) {
    const AgentSpec* ag = inst.find_agent(key.first);
    if (total > ag->have.at(key.second))
      throw InvalidTransferError("give capacity exceeded for agent " + key.first + ", item " +
                                 key.second);
  }
  for (const auto& [key, total] : received_count) {
    const AgentSpec* ag = inst.find_agent(key.first);
    if (total > ag->wish.at(key.second))
      throw InvalidTransferError("receive capacity exceeded for agent " + key.first + ", item " +
                                 key.second);
  }
  for (auto& [id, net] : report.per_agent) net.net = net.given - net.received;
  return report;
}

// True iff the allocation respects capacities and membership (no balance test).
inline bool allocation_feasible(const BarterInstance& inst, const Allocation& alloc) {
  try {
    evaluate_allocation(inst, alloc);
    return true;
  } catch (const InvalidTransferError&) {
    return false;
  }
}

// Largest item value over the agent's owned-and-wished set; the |D_i| bound.
inline std::optional<Rat> max_item_value(const BarterInstance& inst, const AgentSpec& agent) {
  std::optional<Rat> best;
  auto consider = [&](const ItemId& id) {
    Rat v = inst.item_value(id);
    if (!best || v > *best) best = v;
  };
  for (const auto& [item, cap] : agent.have) consider(item);
  for (const auto& [item, cap] : agent.wish) consider(item);
  return best;
}

}  // namespace barter
