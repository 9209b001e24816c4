#include "tubo/lp.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace tubo::lp {

namespace {

constexpr double kEps = 1e-9;

// Dense tableau: rows are constraints, the last column is the rhs. `cost`
// holds current reduced costs for the minimization objective, `basis[i]` the
// basic variable of row i.
struct Tableau {
  int rows = 0;
  int cols = 0;  // variable columns (rhs excluded)
  std::vector<double> a;  // rows x (cols + 1)
  std::vector<double> cost;  // cols + 1 (last = -objective value)
  std::vector<int> basis;

  double& at(int r, int c) { return a[size_t(r) * (cols + 1) + c]; }
  double at(int r, int c) const { return a[size_t(r) * (cols + 1) + c]; }

  void pivot(int pr, int pc) {
    const double pv = at(pr, pc);
    for (int c = 0; c <= cols; ++c) at(pr, c) /= pv;
    for (int r = 0; r < rows; ++r) {
      if (r == pr) continue;
      const double f = at(r, pc);
      if (f == 0.0) continue;
      for (int c = 0; c <= cols; ++c) at(r, c) -= f * at(pr, c);
    }
    const double f = cost[pc];
    if (f != 0.0)
      for (int c = 0; c <= cols; ++c) cost[c] -= f * at(pr, c);
    basis[pr] = pc;
  }

  // Bland's rule: entering = lowest-index column with negative reduced cost;
  // leaving = min ratio, ties broken by the lowest basic variable index.
  // Returns false at optimality, throws if unbounded.
  bool iterate() {
    int pc = -1;
    for (int c = 0; c < cols; ++c)
      if (cost[c] < -kEps) {
        pc = c;
        break;
      }
    if (pc < 0) return false;
    int pr = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < rows; ++r) {
      const double arc = at(r, pc);
      if (arc <= kEps) continue;
      const double ratio = at(r, cols) / arc;
      if (ratio < best - kEps || (ratio < best + kEps && (pr < 0 || basis[r] < basis[pr]))) {
        best = ratio;
        pr = r;
      }
    }
    if (pr < 0) throw std::runtime_error("lp: unbounded objective");
    pivot(pr, pc);
    return true;
  }

  void run(long long max_iters) {
    while (iterate())
      if (--max_iters <= 0) throw std::runtime_error("lp: iteration limit exceeded");
  }
};

}  // namespace

Solution solve(const Problem& problem) {
  const int n = problem.num_vars;
  const int m = int(problem.constraints.size());
  if (int(problem.objective.size()) != n)
    throw std::runtime_error("lp: objective size mismatch");

  // Row-normalize so every rhs is nonnegative.
  struct Row {
    std::vector<double> coef;
    Relation rel;
    double rhs;
  };
  std::vector<Row> rows(m);
  for (int r = 0; r < m; ++r) {
    const Constraint& con = problem.constraints[r];
    rows[r].coef.assign(n, 0.0);
    for (const auto& [v, c] : con.terms) {
      if (v < 0 || v >= n) throw std::runtime_error("lp: variable index out of range");
      rows[r].coef[v] += c;
    }
    rows[r].rel = con.rel;
    rows[r].rhs = con.rhs;
    if (rows[r].rhs < 0.0) {
      for (double& c : rows[r].coef) c = -c;
      rows[r].rhs = -rows[r].rhs;
      if (rows[r].rel == Relation::LessEq) rows[r].rel = Relation::GreaterEq;
      else if (rows[r].rel == Relation::GreaterEq) rows[r].rel = Relation::LessEq;
    }
  }

  int n_slack = 0, n_art = 0;
  for (const Row& r : rows) {
    if (r.rel != Relation::Equal) ++n_slack;
    if (r.rel != Relation::LessEq) ++n_art;
  }

  Tableau t;
  t.rows = m;
  t.cols = n + n_slack + n_art;
  t.a.assign(size_t(m) * (t.cols + 1), 0.0);
  t.basis.assign(m, -1);

  int slack_at = n;
  int art_at = n + n_slack;
  std::vector<int> art_cols;
  for (int r = 0; r < m; ++r) {
    for (int v = 0; v < n; ++v) t.at(r, v) = rows[r].coef[v];
    t.at(r, t.cols) = rows[r].rhs;
    switch (rows[r].rel) {
      case Relation::LessEq:
        t.at(r, slack_at) = 1.0;
        t.basis[r] = slack_at++;
        break;
      case Relation::GreaterEq:
        t.at(r, slack_at) = -1.0;
        ++slack_at;
        t.at(r, art_at) = 1.0;
        t.basis[r] = art_at;
        art_cols.push_back(art_at++);
        break;
      case Relation::Equal:
        t.at(r, art_at) = 1.0;
        t.basis[r] = art_at;
        art_cols.push_back(art_at++);
        break;
    }
  }

  const long long max_iters = 2000LL * (t.rows + t.cols) + 10000;

  if (n_art > 0) {
    // Phase 1: minimize the sum of artificials.
    t.cost.assign(t.cols + 1, 0.0);
    for (int c : art_cols) t.cost[c] = 1.0;
    for (int r = 0; r < m; ++r)
      if (t.cost[t.basis[r]] != 0.0) {
        const double f = t.cost[t.basis[r]];
        for (int c = 0; c <= t.cols; ++c) t.cost[c] -= f * t.at(r, c);
      }
    t.run(max_iters);
    if (-t.cost[t.cols] > 1e-7) return {};  // infeasible

    // Drive leftover artificials out of the basis, dropping redundant rows.
    const int first_art = n + n_slack;
    for (int r = 0; r < m; ++r) {
      if (t.basis[r] < first_art) continue;
      int pc = -1;
      for (int c = 0; c < first_art; ++c)
        if (std::abs(t.at(r, c)) > kEps) {
          pc = c;
          break;
        }
      if (pc >= 0) t.pivot(r, pc);
      // else: the row is 0 = 0, harmless to leave in place.
    }
  }

  // Phase 2: minimize -objective over structural + slack columns only.
  const int usable = n + n_slack;
  t.cost.assign(t.cols + 1, 0.0);
  for (int v = 0; v < n; ++v) t.cost[v] = -problem.objective[v];
  // Artificial columns must never re-enter.
  for (int c : art_cols)
    for (int r = 0; r < m; ++r) t.at(r, c) = 0.0;
  for (int r = 0; r < m; ++r)
    if (t.basis[r] < usable && t.cost[t.basis[r]] != 0.0) {
      const double f = t.cost[t.basis[r]];
      for (int c = 0; c <= t.cols; ++c) t.cost[c] -= f * t.at(r, c);
    }
  t.run(max_iters);

  Solution sol;
  sol.feasible = true;
  sol.x.assign(n, 0.0);
  for (int r = 0; r < m; ++r)
    if (t.basis[r] < n) sol.x[t.basis[r]] = t.at(r, t.cols);
  for (int v = 0; v < n; ++v) sol.objective += problem.objective[v] * sol.x[v];
  return sol;
}

}  // namespace tubo::lp
