#ifndef TUBO_LP_HPP
#define TUBO_LP_HPP

#include <string>
#include <utility>
#include <vector>

namespace tubo::lp {

enum class Relation { LessEq, GreaterEq, Equal };

struct Constraint {
  std::vector<std::pair<int, double>> terms;  // (variable, coefficient)
  Relation rel = Relation::LessEq;
  double rhs = 0.0;
};

/// maximize objective . x subject to the constraints and x >= 0.
struct Problem {
  int num_vars = 0;
  std::vector<double> objective;
  std::vector<Constraint> constraints;
};

struct Solution {
  bool feasible = false;
  double objective = 0.0;
  std::vector<double> x;
};

/// Dense two-phase primal simplex with Bland's rule (no cycling). Sized for
/// the small path-LP instances this project solves; throws on iteration
/// blowup or an unbounded objective.
Solution solve(const Problem& problem);

}  // namespace tubo::lp

#endif  // TUBO_LP_HPP
