#pragma once

#include <string>
#include <utility>
#include <vector>

#include "barter/errors.hpp"
#include "barter/rational.hpp"

namespace barter {

enum class Relation { le, eq, ge };

struct LpRow {
  std::vector<std::pair<int, Rat>> terms;  // (variable, coefficient)
  Relation rel = Relation::le;
  Rat rhs;
  std::string label;
};

// maximize c'x subject to rows, x >= 0. Upper bounds are expressed as rows
// by the caller (the VBM degree rows already imply every edge bound).
struct LinearProgram {
  int num_vars = 0;
  std::vector<Rat> objective;
  std::vector<LpRow> rows;
};

enum class SimplexStatus { optimal, infeasible };

struct SimplexResult {
  SimplexStatus status = SimplexStatus::optimal;
  std::vector<Rat> x;
  Rat objective;
};

// Two-phase primal simplex on a dense exact-rational tableau, Bland's rule
// throughout (anti-cycling, deterministic). Desk-scale by design.
class ExactSimplex {
 public:
  explicit ExactSimplex(const LinearProgram& lp) : lp_(lp) { build(); }

  SimplexResult solve() {
    SimplexResult result;
    if (!phase_one()) {
      result.status = SimplexStatus::infeasible;
      return result;
    }
    phase_two();
    result.status = SimplexStatus::optimal;
    result.x.assign(lp_.num_vars, Rat(0));
    for (int i = 0; i < m_; ++i)
      if (basis_[i] >= 0 && basis_[i] < lp_.num_vars) result.x[basis_[i]] = tab_[i][rhs_];
    result.objective = 0;
    for (int j = 0; j < lp_.num_vars; ++j) result.objective += lp_.objective[j] * result.x[j];
    verify(result.x);
    return result;
  }

 private:
  const LinearProgram& lp_;
  int m_ = 0;        // constraint rows
  int ncols_ = 0;    // structural + slack + artificial columns
  int rhs_ = 0;      // rhs column index
  int art_begin_ = 0;
  std::vector<std::vector<Rat>> tab_;  // m_+1 rows; last row = reduced costs
  std::vector<int> basis_;             // basic column per row; -2 = dead row

  static constexpr int kDead = -2;

  void build() {
    m_ = int(lp_.rows.size());
    int slacks = 0, artificials = 0;
    for (const auto& row : lp_.rows) {
      if (row.rel != Relation::eq) ++slacks;
      if (row.rel == Relation::eq || row.rel == Relation::ge) ++artificials;
    }
    ncols_ = lp_.num_vars + slacks + artificials;
    rhs_ = ncols_;
    art_begin_ = lp_.num_vars + slacks;
    tab_.assign(m_ + 1, std::vector<Rat>(ncols_ + 1, Rat(0)));
    basis_.assign(m_, -1);

    int slack_at = lp_.num_vars, art_at = art_begin_;
    for (int i = 0; i < m_; ++i) {
      const LpRow& row = lp_.rows[i];
      Rat sign = row.rhs < 0 ? -1 : 1;  // keep rhs non-negative
      Relation rel = row.rel;
      if (sign < 0) {
        if (rel == Relation::le)
          rel = Relation::ge;
        else if (rel == Relation::ge)
          rel = Relation::le;
      }
      for (const auto& [var, coeff] : row.terms) tab_[i][var] += sign * coeff;
      tab_[i][rhs_] = sign * row.rhs;
      if (rel == Relation::le) {
        tab_[i][slack_at] = 1;
        basis_[i] = slack_at++;
      } else if (rel == Relation::ge) {
        tab_[i][slack_at++] = -1;
        tab_[i][art_at] = 1;
        basis_[i] = art_at++;
      } else {
        tab_[i][art_at] = 1;
        basis_[i] = art_at++;
      }
    }
  }

  void set_phase_costs(bool phase1) {
    std::vector<Rat> cost(ncols_, Rat(0));
    if (phase1) {
      for (int j = art_begin_; j < ncols_; ++j) cost[j] = -1;
    } else {
      for (int j = 0; j < lp_.num_vars; ++j) cost[j] = lp_.objective[j];
    }
    // reduced-cost row: z_j - c_j with the current basis
    for (int j = 0; j <= ncols_; ++j) {
      Rat z = 0;
      for (int i = 0; i < m_; ++i) {
        if (basis_[i] == kDead) continue;
        const Rat& cb = cost[basis_[i]];
        if (cb != 0) z += cb * tab_[i][j];
      }
      tab_[m_][j] = z - (j < ncols_ ? cost[j] : Rat(0));
    }
  }

  void pivot(int row, int col) {
    Rat inv = Rat(1) / tab_[row][col];
    for (int j = 0; j <= ncols_; ++j) tab_[row][j] *= inv;
    for (int i = 0; i <= m_; ++i) {
      if (i == row || tab_[i][col] == 0) continue;
      Rat factor = tab_[i][col];
      for (int j = 0; j <= ncols_; ++j) tab_[i][j] -= factor * tab_[row][j];
    }
    basis_[row] = col;
  }

  // Bland: entering = lowest eligible column, leaving = lowest basic index
  // among minimum ratios. allow_artificial gates phase-2 entering columns.
  void run_simplex(bool allow_artificial) {
    for (;;) {
      int enter = -1;
      int limit = allow_artificial ? ncols_ : art_begin_;
      for (int j = 0; j < limit; ++j) {
        if (tab_[m_][j] < 0) {
          enter = j;
          break;
        }
      }
      if (enter == -1) return;
      int leave = -1;
      Rat best_ratio;
      for (int i = 0; i < m_; ++i) {
        if (basis_[i] == kDead || tab_[i][enter] <= 0) continue;
        Rat ratio = tab_[i][rhs_] / tab_[i][enter];
        if (leave == -1 || ratio < best_ratio ||
            (ratio == best_ratio && basis_[i] < basis_[leave])) {
          leave = i;
          best_ratio = ratio;
        }
      }
      if (leave == -1)
        throw DefectError("unbounded LP; impossible for box-bounded matching relaxations");
      pivot(leave, enter);
    }
  }

  bool phase_one() {
    bool any_artificial = false;
    for (int i = 0; i < m_; ++i) any_artificial |= basis_[i] >= art_begin_;
    if (any_artificial) {
      set_phase_costs(true);
      run_simplex(true);
      if (tab_[m_][rhs_] != 0) return false;  // leftover infeasibility
      // Drive artificials out of the basis; undrivable rows are redundant.
      for (int i = 0; i < m_; ++i) {
        if (basis_[i] < art_begin_ || basis_[i] == kDead) continue;
        int col = -1;
        for (int j = 0; j < art_begin_ && col == -1; ++j)
          if (tab_[i][j] != 0) col = j;
        if (col == -1)
          basis_[i] = kDead;
        else
          pivot(i, col);
      }
    }
    return true;
  }

  void phase_two() {
    set_phase_costs(false);
    run_simplex(false);
  }

  void verify(const std::vector<Rat>& x) const {
    for (const Rat& v : x)
      if (v < 0) throw DefectError("simplex returned a negative variable");
    for (const auto& row : lp_.rows) {
      Rat lhs = 0;
      for (const auto& [var, coeff] : row.terms) lhs += coeff * x[var];
      bool ok = row.rel == Relation::le   ? lhs <= row.rhs
                : row.rel == Relation::ge ? lhs >= row.rhs
                                          : lhs == row.rhs;
      if (!ok) throw DefectError("simplex solution violates row: " + row.label);
    }
  }
};

inline SimplexResult solve_exact(const LinearProgram& lp) { return ExactSimplex(lp).solve(); }

}  // namespace barter
