#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "barter/instance.hpp"

namespace barter {

enum class Side { left, right };  // left gives, right receives

struct Vertex {
  Side side;
  AgentId agent;
  ItemId item;
  Rat value;        // v_j of the underlying item
  int cap = 1;      // eta_i(j) on the left, omega_i(j) on the right
  std::optional<int> copy_index;  // set only on expanded unit graphs

  auto sort_key() const {
    return std::make_tuple(agent, item, side == Side::right, copy_index.value_or(0));
  }

  std::string name() const {
    std::string s = (side == Side::left ? "L:" : "R:") + agent + ":" + item;
    if (copy_index) s += ":" + std::to_string(*copy_index);
    return s;
  }
};

struct Edge {
  int left = -1;   // index into VbmGraph::vertices, a left vertex
  int right = -1;  // a right vertex
  ItemId item;
  Rat weight;  // w_e
  Rat value;   // v_j, shared by both endpoints
};

// Bipartite value-balanced matching graph. Vertices and edges are kept in a
// canonical sorted order so seeded runs are bit-reproducible.
struct VbmGraph {
  std::vector<Vertex> vertices;
  std::vector<Edge> edges;
  std::vector<std::vector<int>> incident;       // vertex -> incident edge ids
  std::map<AgentId, std::vector<int>> kappa;    // agent -> owned vertex ids

  int other_end(int edge, int vertex) const {
    const Edge& e = edges[edge];
    return e.left == vertex ? e.right : e.left;
  }

  void rebuild_index() {
    incident.assign(vertices.size(), {});
    kappa.clear();
    for (size_t v = 0; v < vertices.size(); ++v) kappa[vertices[v].agent].push_back(int(v));
    for (size_t e = 0; e < edges.size(); ++e) {
      incident[edges[e].left].push_back(int(e));
      incident[edges[e].right].push_back(int(e));
    }
  }

  // Every connected component must carry a single item (and hence one value).
  void assert_item_homogeneous() const {
    std::vector<int> comp(vertices.size(), -1);
    for (size_t start = 0; start < vertices.size(); ++start) {
      if (comp[start] != -1) continue;
      comp[start] = int(start);
      std::vector<int> stack{int(start)};
      while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        for (int e : incident[v]) {
          if (vertices[v].item != edges[e].item)
            throw DefectError("component mixes items: " + vertices[v].name());
          int w = other_end(e, v);
          if (comp[w] == -1) {
            comp[w] = int(start);
            stack.push_back(w);
          }
        }
      }
    }
  }
};

namespace detail {

inline void sort_and_index(VbmGraph& g) {
  std::vector<int> order(g.vertices.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return g.vertices[a].sort_key() < g.vertices[b].sort_key();
  });
  std::vector<int> position(order.size());
  for (size_t i = 0; i < order.size(); ++i) position[order[i]] = int(i);
  std::vector<Vertex> sorted;
  sorted.reserve(g.vertices.size());
  for (int idx : order) sorted.push_back(g.vertices[idx]);
  g.vertices = std::move(sorted);
  for (Edge& e : g.edges) {
    e.left = position[e.left];
    e.right = position[e.right];
  }
  std::sort(g.edges.begin(), g.edges.end(), [](const Edge& a, const Edge& b) {
    return std::tie(a.left, a.right) < std::tie(b.left, b.right);
  });
  g.rebuild_index();
  g.assert_item_homogeneous();
}

}  // namespace detail

// Lemma-2 construction: left vertices for have-list entries, right vertices
// for wish-list entries, edges between distinct agents sharing an item.
inline VbmGraph build_vbm(const BarterInstance& inst) {
  VbmGraph g;
  std::map<std::pair<AgentId, ItemId>, int> left_ix, right_ix;
  for (const auto& ag : inst.agents) {
    for (const auto& [item, cap] : ag.have) {
      left_ix[{ag.id, item}] = int(g.vertices.size());
      g.vertices.push_back(Vertex{Side::left, ag.id, item, inst.item_value(item), cap, {}});
    }
    for (const auto& [item, cap] : ag.wish) {
      right_ix[{ag.id, item}] = int(g.vertices.size());
      g.vertices.push_back(Vertex{Side::right, ag.id, item, inst.item_value(item), cap, {}});
    }
  }
  for (const auto& giver : inst.agents) {
    for (const auto& [item, hcap] : giver.have) {
      for (const auto& receiver : inst.agents) {
        if (receiver.id == giver.id) continue;  // a self-swap is vacuous
        if (!receiver.wish.count(item)) continue;
        Edge e;
        e.left = left_ix.at({giver.id, item});
        e.right = right_ix.at({receiver.id, item});
        e.item = item;
        e.value = inst.item_value(item);
        e.weight = inst.transfer_weight(giver.id, receiver.id, item);
        g.edges.push_back(e);
      }
    }
  }
  detail::sort_and_index(g);
  return g;
}

// Per-edge values of one (possibly fractional) matching, indexed like edges.
struct FractionalSolution {
  std::vector<Rat> x;

  bool operator==(const FractionalSolution&) const = default;

  Rat degree(const VbmGraph& g, int vertex) const {
    Rat d = 0;
    for (int e : g.incident[vertex]) d += x[e];
    return d;
  }

  Rat objective(const VbmGraph& g) const {
    Rat total = 0;
    for (size_t e = 0; e < x.size(); ++e) total += g.edges[e].weight * x[e];
    return total;
  }

  bool integral() const {
    return std::all_of(x.begin(), x.end(), [](const Rat& v) { return is_integer(v); });
  }
};

// Exact left/right value sums per agent; equal iff barter-feasible.
inline std::map<AgentId, std::pair<Rat, Rat>> agent_value_sums(const VbmGraph& g,
                                                               const FractionalSolution& sol) {
  std::map<AgentId, std::pair<Rat, Rat>> sums;
  for (const auto& [agent, vs] : g.kappa) sums[agent] = {Rat(0), Rat(0)};
  for (size_t e = 0; e < g.edges.size(); ++e) {
    const Edge& ed = g.edges[e];
    sums[g.vertices[ed.left].agent].first += ed.value * sol.x[e];
    sums[g.vertices[ed.right].agent].second += ed.value * sol.x[e];
  }
  return sums;
}

inline bool barter_balanced(const VbmGraph& g, const FractionalSolution& sol) {
  for (const auto& [agent, lr] : agent_value_sums(g, sol))
    if (lr.first != lr.second) return false;
  return true;
}

// Net value loss per agent under a (typically integral) solution.
inline std::map<AgentId, Rat> net_values(const VbmGraph& g, const FractionalSolution& sol) {
  std::map<AgentId, Rat> net;
  for (const auto& [agent, lr] : agent_value_sums(g, sol)) net[agent] = lr.first - lr.second;
  return net;
}

// Aggregates an integral solution into transfers; Lemma-2 direction
// "matching -> allocation". Utility of the result equals sum w_e x_e.
inline Allocation allocation_from_integral(const VbmGraph& g, const FractionalSolution& sol) {
  std::map<std::tuple<AgentId, AgentId, ItemId>, long long> counts;
  for (size_t e = 0; e < g.edges.size(); ++e) {
    const Rat& v = sol.x[e];
    if (!is_integer(v)) throw NonIntegralError("fractional edge value: " + format_rational(v));
    if (v < 0) throw InfeasibleInputError("negative edge value");
    if (v == 0) continue;
    const Edge& ed = g.edges[e];
    counts[{g.vertices[ed.left].agent, g.vertices[ed.right].agent, ed.item}] +=
        floor_int(v).convert_to<long long>();
  }
  Allocation alloc;
  for (const auto& [key, count] : counts) {
    if (count == 0) continue;
    const auto& [giver, receiver, item] = key;
    alloc.transfers.push_back(Transfer{giver, receiver, item, int(count)});
  }
  std::sort(alloc.transfers.begin(), alloc.transfers.end(),
            [](const Transfer& a, const Transfer& b) { return a.sort_key() < b.sort_key(); });
  return alloc;
}

// Result of splitting a capacitated solution into its settled integral part
// plus a unit-capacity residue graph (Lemma 13 / Lemma 14).
struct Expansion {
  FractionalSolution base;     // integral floors on the original graph
  VbmGraph unit_graph;         // fresh unit-capacity copies, residues only
  FractionalSolution unit_x;   // one floating value per fractional edge
  std::vector<int> origin_edge;  // unit edge -> original edge id
};

// Lazy unit-copy expansion. Each fractional edge contributes exactly one
// copy-edge (so the residue graph has at most |E| floating edges); copies of
// a vertex are shared first-fit so each copy's fractional load stays <= 1.
inline Expansion expand_floating(const VbmGraph& g, const FractionalSolution& sol) {
  if (sol.x.size() != g.edges.size()) throw InfeasibleInputError("solution size mismatch");
  for (size_t e = 0; e < g.edges.size(); ++e) {
    const Edge& ed = g.edges[e];
    if (sol.x[e] < 0) throw InfeasibleInputError("negative edge value");
    if (sol.x[e] > std::min(g.vertices[ed.left].cap, g.vertices[ed.right].cap))
      throw InfeasibleInputError("edge value exceeds capacity bound");
  }
  for (size_t v = 0; v < g.vertices.size(); ++v) {
    if (sol.degree(g, int(v)) > g.vertices[v].cap)
      throw InfeasibleInputError("vertex degree exceeds capacity: " + g.vertices[v].name());
  }

  Expansion out;
  out.base.x.resize(g.edges.size());

  struct Slot {
    int unit_vertex;
    Rat load;
  };
  std::map<int, std::vector<Slot>> slots;  // original vertex -> open copies

  auto place = [&](int orig_vertex, const Rat& residue) {
    auto& list = slots[orig_vertex];
    for (auto& s : list) {
      if (s.load + residue <= 1) {
        s.load += residue;
        return s.unit_vertex;
      }
    }
    Vertex copy = g.vertices[orig_vertex];
    copy.cap = 1;
    copy.copy_index = int(list.size()) + 1;
    out.unit_graph.vertices.push_back(copy);
    int id = int(out.unit_graph.vertices.size()) - 1;
    list.push_back(Slot{id, residue});
    return id;
  };

  for (size_t e = 0; e < g.edges.size(); ++e) {
    Rat whole = floor_rat(sol.x[e]);
    Rat residue = sol.x[e] - whole;
    out.base.x[e] = whole;
    if (residue == 0) continue;
    const Edge& ed = g.edges[e];
    Edge copy;
    copy.left = place(ed.left, residue);
    copy.right = place(ed.right, residue);
    copy.item = ed.item;
    copy.value = ed.value;
    copy.weight = ed.weight;
    out.unit_graph.edges.push_back(copy);
    out.unit_x.x.push_back(residue);
    out.origin_edge.push_back(int(e));
  }

  // Canonical order for the unit graph as well; keep origin/x aligned.
  VbmGraph& ug = out.unit_graph;
  std::vector<int> vorder(ug.vertices.size());
  for (size_t i = 0; i < vorder.size(); ++i) vorder[i] = int(i);
  std::sort(vorder.begin(), vorder.end(), [&](int a, int b) {
    return ug.vertices[a].sort_key() < ug.vertices[b].sort_key();
  });
  std::vector<int> vpos(vorder.size());
  for (size_t i = 0; i < vorder.size(); ++i) vpos[vorder[i]] = int(i);
  std::vector<Vertex> vs;
  vs.reserve(ug.vertices.size());
  for (int ix : vorder) vs.push_back(ug.vertices[ix]);
  ug.vertices = std::move(vs);
  for (Edge& e : ug.edges) {
    e.left = vpos[e.left];
    e.right = vpos[e.right];
  }
  std::vector<int> eorder(ug.edges.size());
  for (size_t i = 0; i < eorder.size(); ++i) eorder[i] = int(i);
  std::sort(eorder.begin(), eorder.end(), [&](int a, int b) {
    return std::tie(ug.edges[a].left, ug.edges[a].right) <
           std::tie(ug.edges[b].left, ug.edges[b].right);
  });
  std::vector<Edge> es;
  std::vector<Rat> xs;
  std::vector<int> origins;
  for (int ix : eorder) {
    es.push_back(ug.edges[ix]);
    xs.push_back(out.unit_x.x[ix]);
    origins.push_back(out.origin_edge[ix]);
  }
  ug.edges = std::move(es);
  out.unit_x.x = std::move(xs);
  out.origin_edge = std::move(origins);
  ug.rebuild_index();
  ug.assert_item_homogeneous();
  return out;
}

// Recombines base floors with a rounded residue vector into a solution on
// the original graph.
inline FractionalSolution combine_expansion(const Expansion& exp,
                                            const FractionalSolution& unit_values) {
  FractionalSolution total = exp.base;
  for (size_t ue = 0; ue < unit_values.x.size(); ++ue)
    total.x[exp.origin_edge[ue]] += unit_values.x[ue];
  return total;
}

}  // namespace barter
