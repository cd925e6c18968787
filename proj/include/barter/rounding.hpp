#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "barter/lp.hpp"
#include "barter/random.hpp"
#include "barter/vbm.hpp"

namespace barter {

// ---------------------------------------------------------------------------
// Branch sampling

// One rounding step has two mirrored outcomes; implementations decide which
// branch to take given the first branch's probability beta/(alpha+beta).
class BranchChooser {
 public:
  virtual ~BranchChooser() = default;
  virtual bool take_first_branch(const Rat& p_first) = 0;
};

class SeededChooser final : public BranchChooser {
 public:
  explicit SeededChooser(std::uint64_t seed) : rng_(seed) {}
  bool take_first_branch(const Rat& p_first) override {
    return bernoulli_exact(p_first, rng_);
  }

 private:
  std::mt19937_64 rng_;
};

// Follows a fixed branch script, then defaults to the first branch. Records
// what it took and with which probability; drives replay and exhaustive
// outcome enumeration.
class ScriptedChooser final : public BranchChooser {
 public:
  explicit ScriptedChooser(std::vector<bool> script = {}) : script_(std::move(script)) {}
  bool take_first_branch(const Rat& p_first) override {
    bool first = at_ < script_.size() ? script_[at_] : true;
    ++at_;
    taken.push_back(first);
    probabilities.push_back(first ? p_first : Rat(1) - p_first);
    return first;
  }
  std::vector<bool> taken;
  std::vector<Rat> probabilities;

 private:
  std::vector<bool> script_;
  size_t at_ = 0;
};

// ---------------------------------------------------------------------------
// Path sequences (component cycles and walks)

struct PathSeqPath {
  std::vector<int> vertices;  // simple path; front() = s_i, back() = t_i
  std::vector<int> edges;     // edges.size() + 1 == vertices.size()

  int s() const { return vertices.front(); }
  int t() const { return vertices.back(); }
};

enum class PathSeqKind { cycle, walk };

// Ordered paths, one per distinct floating component, with consecutive
// endpoints owned by a common agent. A cycle closes the partner chain; a
// walk starts and ends at agents' sole floating vertices.
struct PathSeq {
  PathSeqKind kind = PathSeqKind::cycle;
  std::vector<PathSeqPath> paths;
};

struct Coloring {
  std::map<int, int> endpoint_sign;           // vertex -> -1 or +1
  std::vector<std::vector<int>> edge_sign;    // [path][edge] -> -1 or +1
};

struct StepMagnitudes {
  Rat alpha;
  Rat beta;
};

struct TraceStep {
  int index = 0;
  std::string kind;            // "cycle", "path", "ccc", "ccw"
  std::vector<int> endpoints;  // path endpoints (or cycle vertices)
  Rat alpha;
  Rat beta;
  Rat p_first;
  bool took_first = false;
  int floating_edges_after = 0;
  int floating_vertices_after = 0;
};

struct Trace {
  std::vector<TraceStep> steps;

  std::vector<bool> branch_script() const {
    std::vector<bool> script;
    script.reserve(steps.size());
    for (const auto& s : steps) script.push_back(s.took_first);
    return script;
  }
};

// ---------------------------------------------------------------------------
// Rounding state

// Mutable per-run state over a unit-capacity graph. Settled quantities are
// frozen: every update below touches floating edges only and re-checks the
// invariants the analysis relies on.
class RoundingState {
 public:
  RoundingState(const VbmGraph& graph, FractionalSolution x0)
      : x(std::move(x0)), graph_(&graph) {
    if (x.x.size() != graph.edges.size()) throw InfeasibleInputError("solution size mismatch");
    for (const Vertex& v : graph.vertices)
      if (v.cap != 1) throw InfeasibleInputError("rounding requires a unit-capacity graph");
    for (const Rat& v : x.x)
      if (v < 0 || v > 1) throw InfeasibleInputError("edge value outside [0, 1]");
    deg.assign(graph.vertices.size(), Rat(0));
    for (size_t e = 0; e < graph.edges.size(); ++e) {
      deg[graph.edges[e].left] += x.x[e];
      deg[graph.edges[e].right] += x.x[e];
    }
    deg_lo.resize(deg.size());
    deg_hi.resize(deg.size());
    for (size_t v = 0; v < deg.size(); ++v) {
      if (deg[v] > graph.vertices[v].cap)
        throw InfeasibleInputError("vertex degree exceeds capacity: " + graph.vertices[v].name());
      deg_lo[v] = floor_rat(deg[v]);
      deg_hi[v] = ceil_rat(deg[v]);
    }
    agents_.reserve(graph.kappa.size());
    for (const auto& [agent, verts] : graph.kappa) agents_.push_back(agent);
    agent_of_.assign(graph.vertices.size(), -1);
    for (size_t v = 0; v < graph.vertices.size(); ++v) {
      auto it = std::lower_bound(agents_.begin(), agents_.end(), graph.vertices[v].agent);
      agent_of_[v] = int(it - agents_.begin());
    }
  }

  const VbmGraph& graph() const { return *graph_; }
  FractionalSolution x;
  std::vector<Rat> deg;
  std::vector<Rat> deg_lo, deg_hi;  // floor/ceil of the input degrees (J2)
  int iteration = 0;

  bool edge_floating(int e) const { return x.x[e] > 0 && x.x[e] < 1; }
  bool vertex_floating(int v) const { return !is_integer(deg[v]); }
  int agent_of(int v) const { return agent_of_[v]; }
  const AgentId& agent_name(int a) const { return agents_[a]; }
  int num_agents() const { return int(agents_.size()); }

  int floating_edge_count() const {
    int n = 0;
    for (size_t e = 0; e < x.x.size(); ++e) n += edge_floating(int(e));
    return n;
  }
  int floating_vertex_count() const {
    int n = 0;
    for (size_t v = 0; v < deg.size(); ++v) n += vertex_floating(int(v));
    return n;
  }
  // |E^r| + |L^r| + |R^r|; must fall every iteration.
  int progress_metric() const { return floating_edge_count() + floating_vertex_count(); }

 private:
  const VbmGraph* graph_;
  std::vector<AgentId> agents_;
  std::vector<int> agent_of_;
};

// Floating-subgraph snapshot: component labels plus each agent's floating
// vertices (the partner pools), all in canonical vertex order.
struct FloatingView {
  std::vector<int> comp;                         // -1 when no incident floating edge
  std::vector<std::vector<int>> comp_vertices;   // ascending per component
  std::vector<std::vector<int>> agent_floating;  // ascending per agent index
};

inline FloatingView compute_floating_view(const RoundingState& st) {
  const VbmGraph& g = st.graph();
  FloatingView view;
  view.comp.assign(g.vertices.size(), -1);
  for (size_t start = 0; start < g.vertices.size(); ++start) {
    if (view.comp[start] != -1) continue;
    bool has_floating = false;
    for (int e : g.incident[start]) has_floating |= st.edge_floating(e);
    if (!has_floating) continue;
    int id = int(view.comp_vertices.size());
    view.comp_vertices.push_back({});
    view.comp[start] = id;
    std::vector<int> stack{int(start)};
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      view.comp_vertices[id].push_back(v);
      for (int e : g.incident[v]) {
        if (!st.edge_floating(e)) continue;
        int w = g.other_end(e, v);
        if (view.comp[w] == -1) {
          view.comp[w] = id;
          stack.push_back(w);
        }
      }
    }
    std::sort(view.comp_vertices[id].begin(), view.comp_vertices[id].end());
  }
  view.agent_floating.assign(st.num_agents(), {});
  for (size_t v = 0; v < g.vertices.size(); ++v)
    if (st.vertex_floating(int(v))) view.agent_floating[st.agent_of(int(v))].push_back(int(v));
  return view;
}

inline bool is_partnerless(const RoundingState& st, const FloatingView& view, int v) {
  const auto& pool = view.agent_floating[st.agent_of(v)];
  return pool.size() == 1 && pool[0] == v;
}

inline int lowest_partner(const RoundingState& st, const FloatingView& view, int v) {
  for (int w : view.agent_floating[st.agent_of(v)])
    if (w != v) return w;
  throw DefectError("no partner for vertex " + st.graph().vertices[v].name());
}

namespace detail {

// Preorder DFS over floating edges (ascending edge order); first floating
// vertex other than the root. Lemma 5 guarantees one exists.
inline int dfs_first_floating(const RoundingState& st, int root) {
  const VbmGraph& g = st.graph();
  std::set<int> visited{root};
  std::vector<int> stack{root};
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    if (v != root && st.vertex_floating(v)) return v;
    std::vector<int> next;
    for (int e : g.incident[v])
      if (st.edge_floating(e) && !visited.count(g.other_end(e, v)))
        next.push_back(g.other_end(e, v));
    std::sort(next.begin(), next.end(), std::greater<>());
    for (int w : next) {
      visited.insert(w);
      stack.push_back(w);
    }
  }
  throw DefectError("component has a single floating vertex: " +
                    g.vertices[root].name());
}

// Unique simple path between two vertices of one floating component.
inline PathSeqPath path_between(const RoundingState& st, int from, int to) {
  const VbmGraph& g = st.graph();
  std::map<int, std::pair<int, int>> parent;  // vertex -> (prev vertex, via edge)
  std::vector<int> stack{from};
  parent[from] = {-1, -1};
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    if (v == to) break;
    std::vector<std::pair<int, int>> next;
    for (int e : g.incident[v]) {
      if (!st.edge_floating(e)) continue;
      int w = g.other_end(e, v);
      if (!parent.count(w)) next.push_back({w, e});
    }
    std::sort(next.begin(), next.end(), std::greater<>());
    for (auto [w, e] : next) {
      parent[w] = {v, e};
      stack.push_back(w);
    }
  }
  if (!parent.count(to)) throw DefectError("no floating path between endpoints");
  PathSeqPath path;
  for (int v = to; v != -1; v = parent[v].first) {
    path.vertices.push_back(v);
    if (parent[v].second != -1) path.edges.push_back(parent[v].second);
  }
  std::reverse(path.vertices.begin(), path.vertices.end());
  std::reverse(path.edges.begin(), path.edges.end());
  return path;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Component walks

struct WalkPlan {
  int start = -1;                             // pair-0 vertex
  std::optional<int> companion;               // far endpoint of pair 0 (combined mode)
  std::vector<std::pair<int, int>> forced;    // scripted (s, t) continuations
  std::vector<int> seen;                      // initially-seen component ids
};

struct WalkResult {
  bool is_cycle = false;
  PathSeq cycle;                              // when is_cycle
  std::vector<std::pair<int, int>> pairs;     // completed (s_i, t_i) pairs otherwise
};

// The walk over connected components: hop to a partner of the previous
// endpoint, pick a second floating vertex in its component, stop when a
// component repeats (cycle), a partner reappears (cycle), or the chain dies
// at a partnerless vertex (half of a walk).
inline WalkResult component_walk(const RoundingState& st, const FloatingView& view,
                                 const WalkPlan& plan) {
  std::set<int> seen(plan.seen.begin(), plan.seen.end());
  if (view.comp[plan.start] < 0) throw DefectError("walk started outside the floating subgraph");
  seen.insert(view.comp[plan.start]);

  std::vector<std::pair<int, int>> pairs;
  std::vector<int> pair_comp{view.comp[plan.start]};
  std::vector<int> scan{plan.start};  // pair-0 vertex then s,t per pair
  size_t forced_at = 0;

  auto pair_t = [&](int k) { return k == 0 ? plan.start : pairs[k - 1].second; };

  for (;;) {
    int t_prev = pairs.empty() ? plan.start : pairs.back().second;
    bool scripted = forced_at < plan.forced.size();
    if (!scripted && is_partnerless(st, view, t_prev)) {
      WalkResult res;
      res.pairs = std::move(pairs);
      return res;
    }
    int s;
    if (scripted) {
      s = plan.forced[forced_at].first;
      if (st.agent_of(s) != st.agent_of(t_prev) || s == t_prev || !st.vertex_floating(s))
        throw DefectError("scripted walk continuation is not a partner");
    } else {
      s = lowest_partner(st, view, t_prev);
    }
    int c = view.comp[s];
    if (c < 0) throw DefectError("partner outside the floating subgraph");

    if (seen.count(c)) {
      // Component revisited: close the cycle back at its earlier path.
      auto where = std::find(pair_comp.begin(), pair_comp.end(), c);
      if (where == pair_comp.end())
        throw DefectError("revisited component missing from the walk record");
      int k = int(where - pair_comp.begin());
      PathSeq seq;
      seq.kind = PathSeqKind::cycle;
      seq.paths.push_back(detail::path_between(st, s, pair_t(k)));
      for (size_t j = size_t(k); j < pairs.size(); ++j)
        seq.paths.push_back(detail::path_between(st, pairs[j].first, pairs[j].second));
      WalkResult res;
      res.is_cycle = true;
      res.cycle = std::move(seq);
      return res;
    }

    int t;
    if (scripted) {
      t = plan.forced[forced_at].second;
      ++forced_at;
      if (view.comp[t] != c || t == s || !st.vertex_floating(t))
        throw DefectError("scripted walk pair is malformed");
    } else {
      t = detail::dfs_first_floating(st, s);
    }

    // Partner already in the walk: cut a cycle at its latest partner, which
    // is always an s-entry (agents' pools make the relation transitive).
    scan.push_back(s);
    int found = -1;
    for (int idx = int(scan.size()) - 1; idx >= 0; --idx) {
      if (scan[idx] != t && st.agent_of(scan[idx]) == st.agent_of(t)) {
        found = idx;
        break;
      }
    }
    if (found >= 0) {
      if (found == 0 || found % 2 == 0)
        throw DefectError("latest partner in walk is not an s-entry");
      int k = (found + 1) / 2;  // 1-based pair whose s was matched
      PathSeq seq;
      seq.kind = PathSeqKind::cycle;
      for (size_t j = size_t(k) - 1; j < pairs.size(); ++j)
        seq.paths.push_back(detail::path_between(st, pairs[j].first, pairs[j].second));
      seq.paths.push_back(detail::path_between(st, s, t));
      WalkResult res;
      res.is_cycle = true;
      res.cycle = std::move(seq);
      return res;
    }
    scan.push_back(t);
    pairs.push_back({s, t});
    pair_comp.push_back(c);
    seen.insert(c);
  }
}

// Spec-facing wrapper: walk from one floating vertex with default seeding.
inline WalkResult cc_walk(const RoundingState& st, const FloatingView& view, int start) {
  WalkPlan plan;
  plan.start = start;
  return component_walk(st, view, plan);
}

// ---------------------------------------------------------------------------
// Validation of path sequences against their definitional invariants.

inline void validate_pathseq(const RoundingState& st, const FloatingView& view,
                             const PathSeq& seq) {
  const VbmGraph& g = st.graph();
  if (seq.paths.empty()) throw DefectError("empty path sequence");
  std::set<int> comps;
  std::vector<int> endpoints;
  for (const auto& path : seq.paths) {
    if (path.edges.empty() || path.vertices.size() != path.edges.size() + 1)
      throw DefectError("malformed path");
    std::set<int> distinct(path.vertices.begin(), path.vertices.end());
    if (distinct.size() != path.vertices.size()) throw DefectError("path is not simple");
    for (size_t i = 0; i < path.edges.size(); ++i) {
      int e = path.edges[i];
      if (!st.edge_floating(e)) throw DefectError("settled edge inside a path");
      const Edge& ed = g.edges[e];
      bool connects = (ed.left == path.vertices[i] && ed.right == path.vertices[i + 1]) ||
                      (ed.right == path.vertices[i] && ed.left == path.vertices[i + 1]);
      if (!connects) throw DefectError("path edge does not connect consecutive vertices");
    }
    int c = view.comp[path.s()];
    for (int v : path.vertices)
      if (view.comp[v] != c) throw DefectError("path leaves its component");
    if (!comps.insert(c).second) throw DefectError("two paths share a component");
    if (!st.vertex_floating(path.s()) || !st.vertex_floating(path.t()))
      throw DefectError("path endpoint is not floating");
    endpoints.push_back(path.s());
    endpoints.push_back(path.t());
  }
  size_t q = seq.paths.size();
  auto partners = [&](int a, int b) { return a != b && st.agent_of(a) == st.agent_of(b); };
  for (size_t i = 0; i + 1 < q; ++i)
    if (!partners(seq.paths[i].t(), seq.paths[i + 1].s()))
      throw DefectError("consecutive path endpoints are not partners");
  if (seq.kind == PathSeqKind::cycle) {
    if (!partners(seq.paths[q - 1].t(), seq.paths[0].s()))
      throw DefectError("cycle endpoints do not close the partner chain");
    for (int a : endpoints) {
      int mates = 0;
      for (int b : endpoints)
        if (st.agent_of(a) == st.agent_of(b)) ++mates;
      if (mates != 2) throw DefectError("cycle endpoint without exactly one partner");
    }
  } else {
    int first = seq.paths.front().s(), last = seq.paths.back().t();
    if (!is_partnerless(st, view, first) || !is_partnerless(st, view, last))
      throw DefectError("walk ends are not partnerless");
    for (int a : endpoints) {
      int mates = 0;
      for (int b : endpoints)
        if (st.agent_of(a) == st.agent_of(b)) ++mates;
      bool is_end = a == first || a == last;
      if (mates != (is_end ? 1 : 2))
        throw DefectError("walk endpoint with wrong partner count");
    }
  }
}

// ---------------------------------------------------------------------------
// FindCCC: two walks from one component, then an uncrossing pass that stitches
// the halves together (run as one more scripted walk over the combined list).

inline PathSeq find_path_sequence(const RoundingState& st, const FloatingView& view) {
  const auto flatten = [](int head, const std::vector<std::pair<int, int>>& pairs) {
    std::vector<int> flat{head};
    for (auto [s, t] : pairs) {
      flat.push_back(s);
      flat.push_back(t);
    }
    return flat;
  };

  int s1 = -1;
  for (size_t v = 0; v < st.deg.size() && s1 < 0; ++v)
    if (st.vertex_floating(int(v))) s1 = int(v);
  if (s1 < 0) throw DefectError("no floating vertex available");
  int c0 = view.comp[s1];
  int t1 = -1;
  for (int v : view.comp_vertices[c0])
    if (v != s1 && st.vertex_floating(v)) {
      t1 = v;
      break;
    }
  if (t1 < 0) throw DefectError("component has fewer than two floating vertices");

  WalkPlan plan1;
  plan1.start = t1;
  plan1.seen = {c0};
  WalkResult w1 = component_walk(st, view, plan1);
  if (w1.is_cycle) return w1.cycle;

  WalkPlan plan2;
  plan2.start = s1;
  plan2.seen = {c0};
  WalkResult w2 = component_walk(st, view, plan2);
  if (w2.is_cycle) return w2.cycle;

  // Combined list: reversed second half, then the first half.
  std::vector<int> o1 = flatten(t1, w1.pairs);
  std::vector<int> o2 = flatten(s1, w2.pairs);
  std::vector<int> flat(o2.rbegin(), o2.rend());
  flat.insert(flat.end(), o1.begin(), o1.end());

  WalkPlan plan3;
  plan3.companion = flat[0];
  plan3.start = flat[1];
  for (size_t k = 2; k + 1 < flat.size(); k += 2)
    plan3.forced.push_back({flat[k], flat[k + 1]});
  WalkResult w3 = component_walk(st, view, plan3);
  if (w3.is_cycle) return w3.cycle;

  PathSeq seq;
  seq.kind = PathSeqKind::walk;
  seq.paths.push_back(detail::path_between(st, *plan3.companion, plan3.start));
  for (auto [s, t] : w3.pairs) seq.paths.push_back(detail::path_between(st, s, t));
  return seq;
}

// ---------------------------------------------------------------------------
// Roundable colorings

inline bool opposite_sides(const VbmGraph& g, int a, int b) {
  return g.vertices[a].side != g.vertices[b].side;
}

// Greedy forced chain: color s_1 arbitrarily (+1), then each constraint
// determines the next endpoint. For cycles the final wrap-around constraint
// holds by the parity argument; its failure means an invalid sequence.
inline Coloring roundable_coloring(const RoundingState& st, const PathSeq& seq) {
  const VbmGraph& g = st.graph();
  Coloring col;
  size_t q = seq.paths.size();
  std::vector<int> fs(q), ft(q);
  fs[0] = 1;
  for (size_t i = 0; i < q; ++i) {
    const auto& p = seq.paths[i];
    // property (i): equal colors iff endpoints sit on different graph sides
    ft[i] = opposite_sides(g, p.s(), p.t()) ? fs[i] : -fs[i];
    if (i + 1 < q)
      // property (ii) for the partner link t_i ~ s_{i+1}
      fs[i + 1] = opposite_sides(g, p.t(), seq.paths[i + 1].s()) ? ft[i] : -ft[i];
  }
  if (seq.kind == PathSeqKind::cycle) {
    bool need_equal = opposite_sides(g, seq.paths[q - 1].t(), seq.paths[0].s());
    if ((ft[q - 1] == fs[0]) != need_equal)
      throw DefectError("cycle coloring fails the closing parity check");
  }
  for (size_t i = 0; i < q; ++i) {
    col.endpoint_sign[seq.paths[i].s()] = fs[i];
    col.endpoint_sign[seq.paths[i].t()] = ft[i];
  }
  // Alternating matchings with each endpoint's incident edge in M_{f(endpoint)}.
  col.edge_sign.resize(q);
  for (size_t i = 0; i < q; ++i) {
    const auto& p = seq.paths[i];
    col.edge_sign[i].resize(p.edges.size());
    int sign = fs[i];
    for (size_t k = 0; k < p.edges.size(); ++k) {
      col.edge_sign[i][k] = sign;
      sign = -sign;
    }
    if (col.edge_sign[i].back() != ft[i])
      throw DefectError("matching decomposition contradicts the endpoint color");
  }
  return col;
}

inline void validate_coloring(const RoundingState& st, const PathSeq& seq, const Coloring& col) {
  const VbmGraph& g = st.graph();
  size_t q = seq.paths.size();
  auto sign = [&](int v) { return col.endpoint_sign.at(v); };
  for (size_t i = 0; i < q; ++i) {
    const auto& p = seq.paths[i];
    if ((sign(p.s()) == sign(p.t())) != opposite_sides(g, p.s(), p.t()))
      throw DefectError("coloring violates property (i)");
    size_t j = (i + 1) % q;
    if (seq.kind == PathSeqKind::walk && j == 0) continue;
    if ((sign(p.t()) == sign(seq.paths[j].s())) != opposite_sides(g, p.t(), seq.paths[j].s()))
      throw DefectError("coloring violates property (ii)");
  }
  for (size_t i = 0; i < q; ++i) {
    const auto& p = seq.paths[i];
    for (size_t k = 0; k + 1 < p.edges.size(); ++k)
      if (col.edge_sign[i][k] == col.edge_sign[i][k + 1])
        throw DefectError("matchings do not alternate");
    if (col.edge_sign[i].front() != sign(p.s()) || col.edge_sign[i].back() != sign(p.t()))
      throw DefectError("endpoint edge not in the endpoint's matching");
  }
}

// ---------------------------------------------------------------------------
// Step magnitudes: the smallest scaled moves that settle something.

inline StepMagnitudes compute_step_magnitudes(const RoundingState& st, const PathSeq& seq,
                                              const Coloring& col) {
  std::optional<Rat> alpha, beta;
  auto take = [](std::optional<Rat>& best, const Rat& candidate) {
    if (!best || candidate < *best) best = candidate;
  };
  for (size_t i = 0; i < seq.paths.size(); ++i) {
    const auto& p = seq.paths[i];
    const Rat& v = st.graph().edges[p.edges[0]].value;  // one item per component
    for (size_t k = 0; k < p.edges.size(); ++k) {
      const Rat& xe = st.x.x[p.edges[k]];
      if (col.edge_sign[i][k] < 0) {
        take(alpha, (Rat(1) - xe) * v);  // M_{-1} rises in the first branch
        take(beta, xe * v);
      } else {
        take(alpha, xe * v);
        take(beta, (Rat(1) - xe) * v);
      }
    }
    for (int a : {p.s(), p.t()}) {
      const Rat& d = st.deg[a];
      Rat up = (ceil_rat(d) - d) * v, down = (d - floor_rat(d)) * v;
      if (col.endpoint_sign.at(a) < 0) {
        take(alpha, up);  // f(a) = -1: degree rises with the first branch
        take(beta, down);
      } else {
        take(alpha, down);
        take(beta, up);
      }
    }
  }
  if (!alpha || !beta || *alpha <= 0 || *beta <= 0)
    throw DefectError("step magnitudes must be positive");
  return StepMagnitudes{*alpha, *beta};
}

// ---------------------------------------------------------------------------
// The probabilistic update

namespace detail {

struct StepAudit {
  int newly_settled = 0;
};

// Applies one signed move of magnitude gamma (in value units) and re-checks
// bounds, degree brackets, settlement progress and the barter deltas.
inline StepAudit apply_signed_step(RoundingState& st, const PathSeq& seq, const Coloring& col,
                                   const Rat& gamma, int direction) {
  const VbmGraph& g = st.graph();
  std::set<int> touched_vertices;
  std::map<int, Rat> net_delta;  // agent -> change in (left sum - right sum)
  std::set<int> exempt_agents;   // owners of partnerless walk ends
  if (seq.kind == PathSeqKind::walk) {
    exempt_agents.insert(st.agent_of(seq.paths.front().s()));
    exempt_agents.insert(st.agent_of(seq.paths.back().t()));
  }

  int floating_before = st.progress_metric();
  for (size_t i = 0; i < seq.paths.size(); ++i) {
    const auto& p = seq.paths[i];
    const Rat& v = g.edges[p.edges[0]].value;
    Rat move = gamma / v * direction;
    for (size_t k = 0; k < p.edges.size(); ++k) {
      int e = p.edges[k];
      if (!st.edge_floating(e)) throw DefectError("update touched a settled edge");
      Rat delta = col.edge_sign[i][k] < 0 ? move : -move;
      st.x.x[e] += delta;
      if (st.x.x[e] < 0 || st.x.x[e] > 1) throw DefectError("edge value left [0, 1]");
      const Edge& ed = g.edges[e];
      st.deg[ed.left] += delta;
      st.deg[ed.right] += delta;
      touched_vertices.insert(ed.left);
      touched_vertices.insert(ed.right);
      Rat value_delta = ed.value * delta;
      net_delta[st.agent_of(ed.left)] += value_delta;
      net_delta[st.agent_of(ed.right)] -= value_delta;
    }
  }
  for (int v : touched_vertices) {
    if (st.deg[v] < st.deg_lo[v] || st.deg[v] > st.deg_hi[v])
      throw DefectError("degree left its floor/ceil bracket: " + g.vertices[v].name());
  }
  // Lemma 10: partnered agents see exactly cancelled value changes.
  for (const auto& [agent, delta] : net_delta) {
    if (delta != 0 && !exempt_agents.count(agent))
      throw DefectError("barter delta did not cancel for agent " + st.agent_name(agent));
  }
  StepAudit audit;
  audit.newly_settled = floating_before - st.progress_metric();
  if (audit.newly_settled < 1)
    throw DefectError("rounding step settled nothing");
  return audit;
}

}  // namespace detail

// First branch with probability beta/(alpha+beta): M_{-1} gains alpha/v and
// M_{+1} loses it; otherwise the mirrored beta move. Returns taken branch.
inline bool apply_rounding_step(RoundingState& st, const PathSeq& seq, const Coloring& col,
                                const StepMagnitudes& mags, BranchChooser& chooser,
                                Trace* trace) {
  Rat p_first = mags.beta / (mags.alpha + mags.beta);
  bool first = chooser.take_first_branch(p_first);
  if (first)
    detail::apply_signed_step(st, seq, col, mags.alpha, +1);
  else
    detail::apply_signed_step(st, seq, col, mags.beta, -1);
  ++st.iteration;
  if (trace) {
    TraceStep step;
    step.index = int(trace->steps.size());
    step.kind = seq.kind == PathSeqKind::cycle ? "ccc" : "ccw";
    for (const auto& p : seq.paths) {
      step.endpoints.push_back(p.s());
      step.endpoints.push_back(p.t());
    }
    step.alpha = mags.alpha;
    step.beta = mags.beta;
    step.p_first = p_first;
    step.took_first = first;
    step.floating_edges_after = st.floating_edge_count();
    step.floating_vertices_after = st.floating_vertex_count();
    trace->steps.push_back(step);
  }
  return first;
}

// ---------------------------------------------------------------------------
// Cycle pre-processing (plain dependent rounding on cycles only)

namespace detail {

// Deterministic DFS cycle search in the floating subgraph.
inline std::optional<PathSeqPath> find_floating_cycle(const RoundingState& st) {
  const VbmGraph& g = st.graph();
  std::vector<int> state(g.vertices.size(), 0);  // 0 new, 1 on stack, 2 done
  std::vector<std::pair<int, int>> parent(g.vertices.size(), {-1, -1});
  for (size_t root = 0; root < g.vertices.size(); ++root) {
    if (state[root] != 0) continue;
    bool incident_floating = false;
    for (int e : g.incident[root]) incident_floating |= st.edge_floating(e);
    if (!incident_floating) {
      state[root] = 2;
      continue;
    }
    // Iterative DFS with explicit edge iterators.
    std::vector<std::pair<int, size_t>> stack{{int(root), 0}};
    state[root] = 1;
    while (!stack.empty()) {
      auto& [v, it] = stack.back();
      if (it >= g.incident[v].size()) {
        state[v] = 2;
        stack.pop_back();
        continue;
      }
      int e = g.incident[v][it++];
      if (!st.edge_floating(e) || e == parent[v].second) continue;
      int w = g.other_end(e, v);
      if (state[w] == 1) {
        // Back edge: unwind v .. w from the parent chain.
        PathSeqPath cycle;
        cycle.vertices.push_back(w);
        int cur = v;
        std::vector<int> vs{cur};
        std::vector<int> es;
        while (cur != w) {
          es.push_back(parent[cur].second);
          cur = parent[cur].first;
          vs.push_back(cur);
        }
        std::reverse(vs.begin(), vs.end());
        std::reverse(es.begin(), es.end());
        cycle.vertices = vs;
        cycle.edges = es;
        cycle.vertices.push_back(w);  // close the loop
        cycle.edges.push_back(e);
        return cycle;
      }
      if (state[w] == 0) {
        state[w] = 1;
        parent[w] = {v, e};
        stack.push_back({w, 0});
      }
    }
  }
  return std::nullopt;
}

// One plain rounding event on an even-length alternating edge set.
inline void round_alternating(RoundingState& st, const std::vector<int>& edges,
                              const std::string& kind, const std::vector<int>& vertices,
                              BranchChooser& chooser, Trace* trace, bool degrees_frozen) {
  std::optional<Rat> alpha, beta;
  auto take = [](std::optional<Rat>& best, const Rat& c) {
    if (!best || c < *best) best = c;
  };
  for (size_t k = 0; k < edges.size(); ++k) {
    const Rat& xe = st.x.x[edges[k]];
    if (k % 2 == 0) {
      take(alpha, Rat(1) - xe);
      take(beta, xe);
    } else {
      take(alpha, xe);
      take(beta, Rat(1) - xe);
    }
  }
  if (!alpha || !beta || *alpha <= 0 || *beta <= 0)
    throw DefectError("plain rounding magnitudes must be positive");
  Rat p_first = *beta / (*alpha + *beta);
  bool first = chooser.take_first_branch(p_first);
  Rat move = first ? *alpha : -*beta;

  std::vector<Rat> deg_before;
  if (degrees_frozen)
    for (int v : vertices) deg_before.push_back(st.deg[v]);

  int floating_before = st.progress_metric();
  for (size_t k = 0; k < edges.size(); ++k) {
    int e = edges[k];
    if (!st.edge_floating(e)) throw DefectError("plain update touched a settled edge");
    Rat delta = k % 2 == 0 ? move : -move;
    st.x.x[e] += delta;
    if (st.x.x[e] < 0 || st.x.x[e] > 1) throw DefectError("edge value left [0, 1]");
    st.deg[st.graph().edges[e].left] += delta;
    st.deg[st.graph().edges[e].right] += delta;
  }
  if (degrees_frozen) {
    for (size_t i = 0; i < vertices.size(); ++i)
      if (st.deg[vertices[i]] != deg_before[i])
        throw DefectError("cycle rounding changed a fractional degree");
  }
  for (int v : vertices)
    if (st.deg[v] < st.deg_lo[v] || st.deg[v] > st.deg_hi[v])
      throw DefectError("degree left its floor/ceil bracket");
  if (st.progress_metric() >= floating_before)
    throw DefectError("plain rounding settled nothing");
  ++st.iteration;
  if (trace) {
    TraceStep step;
    step.index = int(trace->steps.size());
    step.kind = kind;
    step.endpoints = vertices;
    step.alpha = *alpha;
    step.beta = *beta;
    step.p_first = p_first;
    step.took_first = first;
    step.floating_edges_after = st.floating_edge_count();
    step.floating_vertices_after = st.floating_vertex_count();
    trace->steps.push_back(step);
  }
}

}  // namespace detail

// Rounds cycles until the floating subgraph is a forest. Fractional degrees
// are unchanged, so every agent's barter balance survives exactly.
inline void preprocess_cycles(RoundingState& st, BranchChooser& chooser, Trace* trace) {
  for (;;) {
    auto cycle = detail::find_floating_cycle(st);
    if (!cycle) return;
    if (cycle->edges.size() % 2 != 0)
      throw DefectError("odd cycle in a bipartite graph");
    std::vector<int> distinct(cycle->vertices.begin(), cycle->vertices.end() - 1);
    detail::round_alternating(st, cycle->edges, "cycle", distinct, chooser, trace,
                              /*degrees_frozen=*/true);
  }
}

// ---------------------------------------------------------------------------
// Full engines

struct RoundingResult {
  FractionalSolution x;  // integral on the engine's input graph
  Trace trace;
  int iterations = 0;
};

// The balance-protecting engine: cycle pre-processing, then one path
// sequence per iteration until nothing floats.
inline RoundingResult round_balanced(const VbmGraph& graph, const FractionalSolution& x0,
                                     BranchChooser& chooser, bool keep_trace = true) {
  RoundingState st(graph, x0);
  Trace trace;
  Trace* tp = keep_trace ? &trace : nullptr;
  preprocess_cycles(st, chooser, tp);
  int limit = int(graph.edges.size() + graph.vertices.size()) + 1;
  int main_iterations = 0;
  while (st.floating_edge_count() > 0) {
    if (++main_iterations > limit) throw DefectError("rounding failed to terminate");
    FloatingView view = compute_floating_view(st);
    PathSeq seq = find_path_sequence(st, view);
    validate_pathseq(st, view, seq);
    Coloring col = roundable_coloring(st, seq);
    validate_coloring(st, seq, col);
    StepMagnitudes mags = compute_step_magnitudes(st, seq, col);
    apply_rounding_step(st, seq, col, mags, chooser, tp);
  }
  if (!st.x.integral()) throw DefectError("engine finished with fractional edges");
  return RoundingResult{std::move(st.x), std::move(trace), st.iteration};
}

// The plain baseline: maximal paths and cycles with unscaled magnitudes; no
// barter protection. Exhibits the total-loss failure the balanced engine
// excludes.
inline RoundingResult round_plain(const VbmGraph& graph, const FractionalSolution& x0,
                                  BranchChooser& chooser, bool keep_trace = true) {
  RoundingState st(graph, x0);
  Trace trace;
  Trace* tp = keep_trace ? &trace : nullptr;
  preprocess_cycles(st, chooser, tp);
  int limit = int(graph.edges.size() + graph.vertices.size()) + 1;
  int iterations = 0;
  while (st.floating_edge_count() > 0) {
    if (++iterations > limit) throw DefectError("rounding failed to terminate");
    // Maximal path through the lowest floating edge.
    int e0 = -1;
    for (size_t e = 0; e < graph.edges.size() && e0 < 0; ++e)
      if (st.edge_floating(int(e))) e0 = int(e);
    std::vector<int> vs{graph.edges[e0].left, graph.edges[e0].right};
    std::vector<int> es{e0};
    auto extend = [&](bool at_front) {
      for (;;) {
        int v = at_front ? vs.front() : vs.back();
        int via = at_front ? es.front() : es.back();
        int next_edge = -1;
        for (int e : graph.incident[v]) {
          if (e == via || !st.edge_floating(e)) continue;
          int w = graph.other_end(e, v);
          if (std::find(vs.begin(), vs.end(), w) != vs.end()) continue;  // stay simple
          next_edge = e;
          break;
        }
        if (next_edge < 0) return;
        int w = graph.other_end(next_edge, v);
        if (at_front) {
          vs.insert(vs.begin(), w);
          es.insert(es.begin(), next_edge);
        } else {
          vs.push_back(w);
          es.push_back(next_edge);
        }
      }
    };
    extend(false);
    extend(true);
    if (vs.front() > vs.back()) {
      std::reverse(vs.begin(), vs.end());
      std::reverse(es.begin(), es.end());
    }
    detail::round_alternating(st, es, "path", vs, chooser, tp, /*degrees_frozen=*/false);
  }
  if (!st.x.integral()) throw DefectError("engine finished with fractional edges");
  return RoundingResult{std::move(st.x), std::move(trace), st.iteration};
}

// ---------------------------------------------------------------------------
// Exhaustive branch replay

struct OutcomeLeaf {
  FractionalSolution x;  // integral outcome on the engine's input graph
  Rat probability;
  std::vector<bool> branches;
};

enum class EngineKind { balanced, plain };

// Enumerates the full branch tree; each leaf carries its exact probability.
// Throws TooLargeError past max_leaves.
inline std::vector<OutcomeLeaf> enumerate_outcomes(const VbmGraph& graph,
                                                   const FractionalSolution& x0,
                                                   EngineKind engine, size_t max_leaves = 1 << 16) {
  std::vector<OutcomeLeaf> leaves;
  std::vector<bool> script;
  for (;;) {
    ScriptedChooser chooser(script);
    RoundingResult res = engine == EngineKind::balanced
                             ? round_balanced(graph, x0, chooser, false)
                             : round_plain(graph, x0, chooser, false);
    OutcomeLeaf leaf;
    leaf.x = std::move(res.x);
    leaf.probability = 1;
    for (const Rat& p : chooser.probabilities) leaf.probability *= p;
    leaf.branches = chooser.taken;
    leaves.push_back(std::move(leaf));
    if (leaves.size() > max_leaves) throw TooLargeError("branch tree exceeds the leaf limit");
    // Next leaf: flip the deepest first-branch decision.
    std::vector<bool> taken = chooser.taken;
    int flip = -1;
    for (int i = int(taken.size()) - 1; i >= 0; --i)
      if (taken[i]) {
        flip = i;
        break;
      }
    if (flip < 0) break;
    script.assign(taken.begin(), taken.begin() + flip);
    script.push_back(false);
  }
  Rat total = 0;
  for (const auto& leaf : leaves) total += leaf.probability;
  if (total != 1) throw DefectError("leaf probabilities do not sum to one");
  return leaves;
}

// ---------------------------------------------------------------------------
// Pipeline: LP solution -> expansion -> rounding -> allocation

struct PipelineResult {
  Allocation allocation;
  NetValueReport report;
  FractionalSolution rounded;  // integral, on the original graph
  VbmGraph unit_graph;         // residue graph the trace's vertex ids refer to
  Trace trace;
  int iterations = 0;
};

// End-to-end rounding of an optimal fractional solution. The balanced engine
// guarantees |D_i| < v_i* with probability 1; that bound is asserted here on
// every run.
inline PipelineResult round_solution_with(const BarterInstance& inst, const VbmGraph& graph,
                                          const LpSolution& lp, BranchChooser& chooser,
                                          EngineKind engine = EngineKind::balanced,
                                          bool keep_trace = true) {
  Expansion exp = expand_floating(graph, lp.x);
  RoundingResult rounded =
      engine == EngineKind::balanced
          ? round_balanced(exp.unit_graph, exp.unit_x, chooser, keep_trace)
          : round_plain(exp.unit_graph, exp.unit_x, chooser, keep_trace);

  PipelineResult out;
  out.rounded = combine_expansion(exp, rounded.x);
  out.unit_graph = std::move(exp.unit_graph);
  out.trace = std::move(rounded.trace);
  out.iterations = rounded.iterations;
  // Guard for the expansion's shared-slot caveat: recombination must respect
  // the original capacities.
  for (size_t v = 0; v < graph.vertices.size(); ++v)
    if (out.rounded.degree(graph, int(v)) > graph.vertices[v].cap)
      throw DefectError("recombined solution exceeds a capacity: " + graph.vertices[v].name());
  out.allocation = allocation_from_integral(graph, out.rounded);
  out.report = evaluate_allocation(inst, out.allocation);
  if (out.report.utility != out.rounded.objective(graph))
    throw DefectError("allocation utility disagrees with the rounded objective");
  if (engine == EngineKind::balanced && barter_balanced(graph, lp.x)) {
    for (const auto& ag : inst.agents) {
      auto bound = max_item_value(inst, ag);
      if (!bound) continue;
      const Rat& net = out.report.per_agent.at(ag.id).net;
      if (abs_rat(net) >= *bound)
        throw DefectError("net value loss reached the max item value for agent " + ag.id);
    }
  }
  return out;
}

inline PipelineResult round_solution(const BarterInstance& inst, const VbmGraph& graph,
                                     const LpSolution& lp, std::uint64_t seed,
                                     EngineKind engine = EngineKind::balanced,
                                     bool keep_trace = true) {
  if (lp.status != LpStatus::optimal)
    throw InfeasibleInputError("rounding requires an optimal LP solution");
  SeededChooser chooser(seed);
  return round_solution_with(inst, graph, lp, chooser, engine, keep_trace);
}

}  // namespace barter
