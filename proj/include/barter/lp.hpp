#pragma once

#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "barter/simplex.hpp"
#include "barter/vbm.hpp"

namespace barter {

// Relaxation of the value-balanced matching integer program: per-vertex
// degree caps, per-agent barter equalities, optional group fairness floors.
struct LpProblem {
  const VbmGraph* graph = nullptr;
  LinearProgram lp;
  int num_degree_rows = 0;
  int num_barter_rows = 0;
  int num_fairness_rows = 0;
};

enum class LpStatus { optimal, infeasible };

struct LpSolution {
  LpStatus status = LpStatus::optimal;
  FractionalSolution x;
  Rat objective;
};

inline LpProblem build_lp(const VbmGraph& g,
                          const std::vector<FairnessGroup>* fairness = nullptr) {
  LpProblem problem;
  problem.graph = &g;
  problem.lp.num_vars = int(g.edges.size());
  problem.lp.objective.resize(g.edges.size());
  for (size_t e = 0; e < g.edges.size(); ++e) problem.lp.objective[e] = g.edges[e].weight;

  for (size_t v = 0; v < g.vertices.size(); ++v) {
    LpRow row;
    for (int e : g.incident[v]) row.terms.push_back({e, Rat(1)});
    row.rel = Relation::le;
    row.rhs = g.vertices[v].cap;
    row.label = "deg_" + g.vertices[v].name();
    problem.lp.rows.push_back(std::move(row));
    ++problem.num_degree_rows;
  }
  for (const auto& [agent, verts] : g.kappa) {
    LpRow row;
    for (int v : verts) {
      Rat sign = g.vertices[v].side == Side::left ? g.vertices[v].value : -g.vertices[v].value;
      for (int e : g.incident[v]) row.terms.push_back({e, sign});
    }
    row.rel = Relation::eq;
    row.rhs = 0;
    row.label = "bal_" + agent;
    problem.lp.rows.push_back(std::move(row));
    ++problem.num_barter_rows;
  }
  if (fairness) {
    int p = 0;
    for (const auto& group : *fairness) {
      LpRow row;
      for (const auto& agent : group.agents) {
        auto found = g.kappa.find(agent);
        if (found == g.kappa.end()) continue;
        for (int v : found->second) {
          if (g.vertices[v].side != Side::right) continue;
          for (int e : g.incident[v]) row.terms.push_back({e, g.vertices[v].value});
        }
      }
      row.rel = Relation::ge;
      row.rhs = group.floor;
      row.label = "fair_" + std::to_string(p++);
      problem.lp.rows.push_back(std::move(row));
      ++problem.num_fairness_rows;
    }
  }
  return problem;
}

// Pluggable solver seam; the bundled backend is the exact simplex.
struct LpBackend {
  virtual ~LpBackend() = default;
  virtual SimplexResult solve(const LinearProgram& lp) const = 0;
};

struct ExactSimplexBackend final : LpBackend {
  SimplexResult solve(const LinearProgram& lp) const override { return solve_exact(lp); }
};

inline LpSolution solve_lp(const LpProblem& problem, const LpBackend* backend = nullptr) {
  ExactSimplexBackend bundled;
  const LpBackend& engine = backend ? *backend : static_cast<const LpBackend&>(bundled);
  SimplexResult res = engine.solve(problem.lp);
  LpSolution sol;
  if (res.status == SimplexStatus::infeasible) {
    if (problem.num_fairness_rows == 0)
      throw DefectError("LP infeasible without fairness floors; x = 0 is always feasible");
    sol.status = LpStatus::infeasible;
    return sol;
  }
  sol.status = LpStatus::optimal;
  sol.x.x = std::move(res.x);
  sol.objective = res.objective;
  if (!barter_balanced(*problem.graph, sol.x))
    throw DefectError("LP optimum violates a barter equality");
  return sol;
}

// Text dump for cross-checking against external solvers; exact fractions.
inline std::string dump_lp(const LpProblem& problem) {
  std::ostringstream out;
  auto var = [](int j) { return "x" + std::to_string(j); };
  out << "Maximize\n obj:";
  bool first = true;
  for (int j = 0; j < problem.lp.num_vars; ++j) {
    const Rat& c = problem.lp.objective[j];
    if (c == 0) continue;
    out << (first ? " " : " + ") << format_rational(c) << " " << var(j);
    first = false;
  }
  if (first) out << " 0";
  out << "\nSubject To\n";
  for (const auto& row : problem.lp.rows) {
    out << " " << row.label << ":";
    bool f = true;
    for (const auto& [v, c] : row.terms) {
      out << (f ? " " : " + ") << format_rational(c) << " " << var(v);
      f = false;
    }
    if (f) out << " 0";
    const char* rel = row.rel == Relation::le ? "<=" : row.rel == Relation::ge ? ">=" : "=";
    out << " " << rel << " " << format_rational(row.rhs) << "\n";
  }
  out << "Bounds\n";
  for (int j = 0; j < problem.lp.num_vars; ++j) {
    const Edge& e = problem.graph->edges[j];
    int cap = std::min(problem.graph->vertices[e.left].cap, problem.graph->vertices[e.right].cap);
    out << " 0 <= " << var(j) << " <= " << cap << "\n";
  }
  out << "End\n";
  return out.str();
}

}  // namespace barter
