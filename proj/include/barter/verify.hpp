#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "barter/oracle.hpp"
#include "barter/rounding.hpp"

namespace barter {

struct VerifyOptions {
  long trials = 10000;
  std::uint64_t seed = 1;
  std::uint64_t subset_seed = 7;
  int exhaustive_subset_limit = 4;   // all subsets up to this size
  int sampled_subsets = 20;          // random larger subsets per vertex
  size_t exact_leaf_limit = 1 << 16; // switch to exact replay below this
  bool allow_exact = true;
  bool rerun_on_warn = true;
  EngineKind engine = EngineKind::balanced;
};

struct TrialBatch {
  const BarterInstance* instance = nullptr;
  const VbmGraph* graph = nullptr;
  FractionalSolution x0;
  Rat lp_objective;
  std::uint64_t base_seed = 0;
  std::vector<FractionalSolution> outcomes;  // integral, original graph
  std::vector<std::map<AgentId, Rat>> nets;
  std::vector<Rat> utilities;
};

enum class CheckStatus { pass, warn, fail };

struct CheckSection {
  std::string name;
  bool hard = false;          // probability-1 claims admit zero failures
  CheckStatus status = CheckStatus::pass;
  long checked = 0;
  long failures = 0;
  std::vector<std::string> notes;
};

struct VerificationReport {
  bool exact_mode = false;
  long trials = 0;
  std::uint64_t seed = 0;
  std::vector<CheckSection> sections;

  bool passed() const {
    return std::all_of(sections.begin(), sections.end(),
                       [](const CheckSection& s) { return s.status != CheckStatus::fail; });
  }
  const CheckSection* find(const std::string& name) const {
    for (const auto& s : sections)
      if (s.name == name) return &s;
    return nullptr;
  }
};

// N full rounding runs from one fractional solution; trial seeds derive from
// the base seed so batches replay identically, serial or parallel.
inline TrialBatch run_trials(const BarterInstance& inst, const VbmGraph& graph,
                             const LpSolution& lp, long trials, std::uint64_t seed,
                             EngineKind engine = EngineKind::balanced) {
  if (trials < 1) throw InfeasibleInputError("need at least one trial");
  TrialBatch batch;
  batch.instance = &inst;
  batch.graph = &graph;
  batch.x0 = lp.x;
  batch.lp_objective = lp.objective;
  batch.base_seed = seed;
  batch.outcomes.reserve(trials);
  Expansion exp = expand_floating(graph, lp.x);
  for (long t = 0; t < trials; ++t) {
    SeededChooser chooser(derive_seed(seed, std::uint64_t(t)));
    RoundingResult res = engine == EngineKind::balanced
                             ? round_balanced(exp.unit_graph, exp.unit_x, chooser, false)
                             : round_plain(exp.unit_graph, exp.unit_x, chooser, false);
    FractionalSolution total = combine_expansion(exp, res.x);
    batch.nets.push_back(net_values(graph, total));
    batch.utilities.push_back(total.objective(graph));
    batch.outcomes.push_back(std::move(total));
  }
  return batch;
}

namespace detail {

// |a - b| <= 3 * sqrt(var) done exactly: (a-b)^2 <= 9 var.
inline bool within_three_sigma(const Rat& a, const Rat& b, const Rat& variance) {
  Rat diff = a - b;
  return diff * diff <= 9 * variance;
}

inline std::string pct(const Rat& r) { return format_rational(r); }

}  // namespace detail

// P1: empirical Pr(X_e = 1) within 3 binomial sigma of x_e; settled edges
// must match exactly.
inline CheckSection check_marginals(const TrialBatch& batch) {
  CheckSection sec;
  sec.name = "marginals";
  long n = long(batch.outcomes.size());
  for (size_t e = 0; e < batch.x0.x.size(); ++e) {
    const Rat& x0 = batch.x0.x[e];
    Rat mean = 0;
    for (const auto& out : batch.outcomes) mean += out.x[e];
    mean /= n;
    ++sec.checked;
    bool ok;
    if (is_integer(x0)) {
      ok = mean == x0;
    } else if (x0 > 0 && x0 < 1) {
      Rat variance = x0 * (1 - x0) / n;
      ok = detail::within_three_sigma(mean, x0, variance);
    } else {
      // capacitated fractional edge: sample-variance comparison
      Rat var = 0;
      for (const auto& out : batch.outcomes) var += (out.x[e] - mean) * (out.x[e] - mean);
      var /= (n > 1 ? n - 1 : 1);
      ok = detail::within_three_sigma(mean, x0, var / n);
    }
    if (!ok) {
      ++sec.failures;
      sec.notes.push_back("edge " + std::to_string(e) + ": empirical " + detail::pct(mean) +
                          " vs x0 " + detail::pct(x0));
    }
  }
  sec.status = sec.failures == 0 ? CheckStatus::pass : CheckStatus::fail;
  return sec;
}

// P2: every trial, every vertex degree lands on the floor or ceiling of its
// fractional degree. Hard check, zero tolerance.
inline CheckSection check_degrees(const TrialBatch& batch) {
  CheckSection sec;
  sec.name = "degrees";
  sec.hard = true;
  const VbmGraph& g = *batch.graph;
  std::vector<Rat> lo(g.vertices.size()), hi(g.vertices.size());
  for (size_t v = 0; v < g.vertices.size(); ++v) {
    Rat d = batch.x0.degree(g, int(v));
    lo[v] = floor_rat(d);
    hi[v] = ceil_rat(d);
  }
  for (const auto& out : batch.outcomes) {
    std::vector<Rat> deg(g.vertices.size(), Rat(0));
    for (size_t e = 0; e < out.x.size(); ++e) {
      deg[g.edges[e].left] += out.x[e];
      deg[g.edges[e].right] += out.x[e];
    }
    for (size_t v = 0; v < g.vertices.size(); ++v) {
      ++sec.checked;
      if (deg[v] != lo[v] && deg[v] != hi[v]) {
        ++sec.failures;
        if (sec.notes.size() < 10)
          sec.notes.push_back("vertex " + g.vertices[v].name() + " degree " +
                              format_rational(deg[v]) + " outside {" + format_rational(lo[v]) +
                              ", " + format_rational(hi[v]) + "}");
      }
    }
  }
  sec.status = sec.failures == 0 ? CheckStatus::pass : CheckStatus::fail;
  return sec;
}

namespace detail {

// Subsets of one vertex's floating edges: all of size 2..limit, plus seeded
// random larger ones.
inline std::vector<std::vector<int>> neighborhood_subsets(const std::vector<int>& pool, int limit,
                                                          int sampled, std::uint64_t seed) {
  std::vector<std::vector<int>> subsets;
  int n = int(pool.size());
  int cap = std::min(limit, n);
  std::vector<int> pick;
  auto recurse = [&](auto&& self, int start, int want) -> void {
    if (want == 0) {
      subsets.push_back(pick);
      return;
    }
    for (int i = start; i <= n - want; ++i) {
      pick.push_back(pool[i]);
      self(self, i + 1, want - 1);
      pick.pop_back();
    }
  };
  for (int size = 2; size <= cap; ++size) recurse(recurse, 0, size);
  if (n > limit && sampled > 0) {
    std::mt19937_64 rng(seed);
    for (int s = 0; s < sampled; ++s) {
      int size = limit + 1 + int(rng() % std::uint64_t(n - limit));
      std::vector<int> shuffled = pool;
      for (int i = n - 1; i > 0; --i)
        std::swap(shuffled[i], shuffled[rng() % std::uint64_t(i + 1)]);
      std::vector<int> subset(shuffled.begin(), shuffled.begin() + size);
      std::sort(subset.begin(), subset.end());
      subsets.push_back(std::move(subset));
    }
  }
  return subsets;
}

}  // namespace detail

// P3: within any one vertex's neighborhood, joint rounding events are at
// most the product of their marginals (one-sided, 3 sigma on the product).
inline CheckSection check_neg_corr(const TrialBatch& batch, std::uint64_t subset_seed,
                                   int subset_limit = 4, int sampled = 20) {
  CheckSection sec;
  sec.name = "neg_corr";
  const VbmGraph& g = *batch.graph;
  long n = long(batch.outcomes.size());
  for (size_t v = 0; v < g.vertices.size(); ++v) {
    std::vector<int> pool;
    for (int e : g.incident[v])
      if (batch.x0.x[e] > 0 && batch.x0.x[e] < 1) pool.push_back(e);
    if (pool.size() < 2) continue;
    auto subsets = detail::neighborhood_subsets(pool, subset_limit, sampled,
                                                splitmix64(subset_seed ^ (v * 0x9E37)));
    for (const auto& subset : subsets) {
      for (int c = 0; c <= 1; ++c) {
        ++sec.checked;
        Rat joint = 0;
        std::vector<Rat> singles(subset.size(), Rat(0));
        for (const auto& out : batch.outcomes) {
          bool all = true;
          for (size_t k = 0; k < subset.size(); ++k) {
            bool hit = out.x[subset[k]] == c;
            if (hit) singles[k] += 1;
            all &= hit;
          }
          if (all) joint += 1;
        }
        joint /= n;
        Rat product = 1;
        for (auto& s : singles) product *= s / n;
        if (joint <= product) continue;  // one-sided
        Rat variance = product * (1 - product) / n;
        Rat diff = joint - product;
        if (diff * diff > 9 * variance) {
          ++sec.failures;
          if (sec.notes.size() < 10) {
            std::ostringstream what;
            what << "vertex " << g.vertices[v].name() << " |S|=" << subset.size() << " c=" << c
                 << ": joint " << format_rational(joint) << " > product "
                 << format_rational(product);
            sec.notes.push_back(what.str());
          }
        }
      }
    }
  }
  sec.status = sec.failures == 0 ? CheckStatus::pass : CheckStatus::fail;
  return sec;
}

// Theorem-level net-value checks: |D_i| < v_i* on every trial (hard) and
// mean D_i within 3 sigma of zero (statistical).
inline CheckSection check_net_values(const TrialBatch& batch) {
  CheckSection sec;
  sec.name = "net_values";
  sec.hard = true;
  long n = long(batch.outcomes.size());
  bool stats_ok = true;
  for (const auto& ag : batch.instance->agents) {
    auto bound = max_item_value(*batch.instance, ag);
    Rat mean = 0, max_abs = 0;
    long bound_violations = 0;
    for (const auto& net : batch.nets) {
      const Rat& d = net.at(ag.id);
      mean += d;
      if (abs_rat(d) > max_abs) max_abs = abs_rat(d);
      if (bound && abs_rat(d) >= *bound) ++bound_violations;
      ++sec.checked;
    }
    mean /= n;
    sec.failures += bound_violations;
    if (bound_violations > 0)
      sec.notes.push_back("agent " + ag.id + ": |D| reached bound " + format_rational(*bound) +
                          " in " + std::to_string(bound_violations) + " trials");
    Rat var = 0;
    for (const auto& net : batch.nets) {
      Rat d = net.at(ag.id) - mean;
      var += d * d;
    }
    var /= (n > 1 ? n - 1 : 1);
    bool mean_ok = var == 0 ? mean == 0 : detail::within_three_sigma(mean, Rat(0), var / n);
    if (!mean_ok) {
      stats_ok = false;
      sec.notes.push_back("agent " + ag.id + ": mean D " + format_rational(mean) +
                          " not within 3 sigma of 0");
    }
  }
  if (sec.failures > 0)
    sec.status = CheckStatus::fail;  // hard violation
  else
    sec.status = stats_ok ? CheckStatus::pass : CheckStatus::fail;
  sec.hard = sec.failures > 0;  // distinguish hard fail from statistical
  return sec;
}

// Optimal utility in expectation: mean utility within 3 sigma of the LP
// objective (exact equality when every trial agrees).
inline CheckSection check_objective(const TrialBatch& batch) {
  CheckSection sec;
  sec.name = "objective";
  long n = long(batch.outcomes.size());
  Rat mean = 0;
  for (const Rat& u : batch.utilities) mean += u;
  mean /= n;
  Rat var = 0;
  for (const Rat& u : batch.utilities) var += (u - mean) * (u - mean);
  var /= (n > 1 ? n - 1 : 1);
  sec.checked = n;
  bool ok = var == 0 ? mean == batch.lp_objective
                     : detail::within_three_sigma(mean, batch.lp_objective, var / n);
  if (!ok) {
    sec.failures = 1;
    sec.notes.push_back("mean utility " + format_rational(mean) + " vs LP objective " +
                        format_rational(batch.lp_objective));
  }
  sec.status = ok ? CheckStatus::pass : CheckStatus::fail;
  return sec;
}

// ---------------------------------------------------------------------------
// Exact replay verification for small branch trees.

struct ExactDistribution {
  std::vector<FractionalSolution> outcomes;  // original graph, integral
  std::vector<Rat> probabilities;
};

inline ExactDistribution exact_distribution(const VbmGraph& graph, const LpSolution& lp,
                                            EngineKind engine, size_t leaf_limit) {
  Expansion exp = expand_floating(graph, lp.x);
  auto leaves = enumerate_outcomes(exp.unit_graph, exp.unit_x, engine, leaf_limit);
  ExactDistribution dist;
  for (auto& leaf : leaves) {
    dist.outcomes.push_back(combine_expansion(exp, leaf.x));
    dist.probabilities.push_back(leaf.probability);
  }
  return dist;
}

// Exact-mode counterparts of the statistical checks: marginals, net-value
// expectations, the objective and negative correlation all verified as
// identities over the full outcome distribution.
inline std::vector<CheckSection> exact_checks(const BarterInstance& inst, const VbmGraph& g,
                                              const LpSolution& lp, const ExactDistribution& dist,
                                              int subset_limit) {
  std::vector<CheckSection> out;

  CheckSection marg{"marginals", false, CheckStatus::pass, 0, 0, {}};
  for (size_t e = 0; e < g.edges.size(); ++e) {
    Rat expect = 0;
    for (size_t l = 0; l < dist.outcomes.size(); ++l)
      expect += dist.probabilities[l] * dist.outcomes[l].x[e];
    ++marg.checked;
    if (expect != lp.x.x[e]) {
      ++marg.failures;
      marg.notes.push_back("edge " + std::to_string(e) + ": E[X] " + format_rational(expect) +
                           " != " + format_rational(lp.x.x[e]));
    }
  }
  marg.status = marg.failures == 0 ? CheckStatus::pass : CheckStatus::fail;
  out.push_back(marg);

  CheckSection deg{"degrees", true, CheckStatus::pass, 0, 0, {}};
  for (const auto& outcome : dist.outcomes) {
    for (size_t v = 0; v < g.vertices.size(); ++v) {
      Rat d0 = lp.x.degree(g, int(v));
      Rat d = outcome.degree(g, int(v));
      ++deg.checked;
      if (d != floor_rat(d0) && d != ceil_rat(d0)) ++deg.failures;
    }
  }
  deg.status = deg.failures == 0 ? CheckStatus::pass : CheckStatus::fail;
  out.push_back(deg);

  CheckSection corr{"neg_corr", false, CheckStatus::pass, 0, 0, {}};
  for (size_t v = 0; v < g.vertices.size(); ++v) {
    std::vector<int> pool;
    for (int e : g.incident[v])
      if (lp.x.x[e] > 0 && lp.x.x[e] < 1) pool.push_back(e);
    if (pool.size() < 2) continue;
    auto subsets = detail::neighborhood_subsets(pool, subset_limit, 0, 0);
    for (const auto& subset : subsets) {
      for (int c = 0; c <= 1; ++c) {
        ++corr.checked;
        Rat joint = 0;
        std::vector<Rat> singles(subset.size(), Rat(0));
        for (size_t l = 0; l < dist.outcomes.size(); ++l) {
          bool all = true;
          for (size_t k = 0; k < subset.size(); ++k) {
            bool hit = dist.outcomes[l].x[subset[k]] == c;
            if (hit) singles[k] += dist.probabilities[l];
            all &= hit;
          }
          if (all) joint += dist.probabilities[l];
        }
        Rat product = 1;
        for (auto& s : singles) product *= s;
        if (joint > product) {
          ++corr.failures;
          corr.notes.push_back("vertex " + g.vertices[v].name() + " c=" + std::to_string(c) +
                               ": exact joint " + format_rational(joint) + " > product " +
                               format_rational(product));
        }
      }
    }
  }
  corr.status = corr.failures == 0 ? CheckStatus::pass : CheckStatus::fail;
  out.push_back(corr);

  CheckSection net{"net_values", true, CheckStatus::pass, 0, 0, {}};
  for (const auto& ag : inst.agents) {
    auto bound = max_item_value(inst, ag);
    Rat expect = 0;
    for (size_t l = 0; l < dist.outcomes.size(); ++l) {
      auto nets = net_values(g, dist.outcomes[l]);
      const Rat& d = nets.at(ag.id);
      expect += dist.probabilities[l] * d;
      ++net.checked;
      if (bound && abs_rat(d) >= *bound) {
        ++net.failures;
        net.notes.push_back("agent " + ag.id + ": |D| = " + format_rational(abs_rat(d)) +
                            " reaches bound " + format_rational(*bound));
      }
    }
    if (expect != 0) {
      ++net.failures;
      net.notes.push_back("agent " + ag.id + ": E[D] = " + format_rational(expect) + " != 0");
    }
  }
  net.status = net.failures == 0 ? CheckStatus::pass : CheckStatus::fail;
  out.push_back(net);

  CheckSection obj{"objective", false, CheckStatus::pass, 1, 0, {}};
  Rat expect = 0;
  for (size_t l = 0; l < dist.outcomes.size(); ++l)
    expect += dist.probabilities[l] * dist.outcomes[l].objective(g);
  if (expect != lp.objective) {
    obj.failures = 1;
    obj.status = CheckStatus::fail;
    obj.notes.push_back("E[utility] " + format_rational(expect) + " != LP objective " +
                        format_rational(lp.objective));
  }
  out.push_back(obj);
  return out;
}

// ---------------------------------------------------------------------------
// Harness

inline VerificationReport run_verification_on(const BarterInstance& inst, const VbmGraph& graph,
                                              const LpSolution& lp, const VerifyOptions& opt) {
  VerificationReport report;
  report.trials = opt.trials;
  report.seed = opt.seed;

  if (opt.allow_exact && opt.engine == EngineKind::balanced) {
    try {
      ExactDistribution dist = exact_distribution(graph, lp, opt.engine, opt.exact_leaf_limit);
      report.exact_mode = true;
      report.sections = exact_checks(inst, graph, lp, dist, opt.exhaustive_subset_limit);
      return report;
    } catch (const TooLargeError&) {
      // fall through to Monte Carlo
    }
  }

  auto evaluate = [&](const TrialBatch& batch) {
    std::vector<CheckSection> sections;
    sections.push_back(check_marginals(batch));
    sections.push_back(check_degrees(batch));
    sections.push_back(
        check_neg_corr(batch, opt.subset_seed, opt.exhaustive_subset_limit, opt.sampled_subsets));
    sections.push_back(check_net_values(batch));
    sections.push_back(check_objective(batch));
    return sections;
  };

  TrialBatch batch = run_trials(inst, graph, lp, opt.trials, opt.seed, opt.engine);
  report.sections = evaluate(batch);

  // A 3-sigma miss on a statistical check is a WARN; rerun once at 10x
  // trials before declaring failure. Hard-check failures stand immediately.
  bool statistical_miss = false;
  for (const auto& s : report.sections)
    statistical_miss |= s.status == CheckStatus::fail && !s.hard;
  if (statistical_miss && opt.rerun_on_warn) {
    TrialBatch retry = run_trials(inst, graph, lp, opt.trials * 10,
                                  derive_seed(opt.seed, 0xA11CE), opt.engine);
    auto retry_sections = evaluate(retry);
    for (size_t i = 0; i < report.sections.size(); ++i) {
      CheckSection& orig = report.sections[i];
      if (orig.status != CheckStatus::fail || orig.hard) continue;
      CheckSection& again = retry_sections[i];
      if (again.status == CheckStatus::pass) {
        orig.status = CheckStatus::warn;
        orig.notes.push_back("3-sigma miss cleared on the 10x rerun");
      } else {
        orig.notes.push_back("confirmed on the 10x rerun");
      }
    }
  }
  return report;
}

inline VerificationReport run_verification(const BarterInstance& inst, const VerifyOptions& opt) {
  validate_instance(inst);
  VbmGraph graph = build_vbm(inst);
  LpSolution lp = solve_lp(build_lp(graph, &inst.fairness));
  if (lp.status != LpStatus::optimal)
    throw InfeasibleInputError("fairness floors are infeasible; nothing to verify");
  return run_verification_on(inst, graph, lp, opt);
}

inline std::string render_report_table(const VerificationReport& report) {
  std::ostringstream out;
  out << (report.exact_mode ? "mode: exact branch replay\n"
                            : "mode: monte carlo, trials=" + std::to_string(report.trials) +
                                  ", seed=" + std::to_string(report.seed) + "\n");
  for (const auto& s : report.sections) {
    const char* status = s.status == CheckStatus::pass   ? "PASS"
                         : s.status == CheckStatus::warn ? "WARN"
                                                         : "FAIL";
    out << "  " << status << "  " << s.name << "  (" << s.checked << " checks, " << s.failures
        << " failures)\n";
    for (const auto& note : s.notes) out << "        " << note << "\n";
  }
  out << (report.passed() ? "RESULT: PASS\n" : "RESULT: FAIL\n");
  return out.str();
}

}  // namespace barter
