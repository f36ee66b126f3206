// Embedded linear-program solver: two-phase primal simplex on a dense tableau.
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace npa::lp {

enum class Relation { Eq, Le, Ge };
enum class Sense { Maximize, Minimize };
enum class Status { Optimal, Infeasible, Unbounded };

const char *statusName(Status s);

struct Term {
  std::size_t var;
  double coef;
};

struct Variable {
  std::string name;
  double lower = 0.0; ///< may be -infinity for a free variable
  std::optional<double> upper;
};

struct Constraint {
  std::vector<Term> terms;
  Relation rel = Relation::Le;
  double rhs = 0.0;
  std::string name;
};

/// Variables, linear constraints and a linear objective.
class LpProblem {
public:
  /// Declares a variable and returns its index.
  std::size_t addVariable(std::string name, double lower = 0.0,
                          std::optional<double> upper = std::nullopt);
  void addConstraint(std::vector<Term> terms, Relation rel, double rhs, std::string name = {});
  void setObjective(Sense sense, std::vector<Term> terms);

  const std::vector<Variable> &variables() const { return vars_; }
  const std::vector<Constraint> &constraints() const { return cons_; }
  Sense sense() const { return sense_; }
  const std::vector<Term> &objective() const { return obj_; }

  /// Throws InvalidInput when an index is undeclared or a coefficient is not finite.
  void validate() const;

private:
  std::vector<Variable> vars_;
  std::vector<Constraint> cons_;
  Sense sense_ = Sense::Minimize;
  std::vector<Term> obj_;
};

struct LpSolution {
  Status status = Status::Infeasible;
  std::vector<double> values; ///< one per declared variable when optimal
  double objectiveValue = 0.0;
  /// Entering column of every pivot, in order; exposes the pivot sequence.
  std::vector<std::size_t> pivotColumns;
};

/// Solves `p`. Pivoting uses the largest reduced cost and falls back to
/// Bland's smallest-index rule once a run of degenerate pivots suggests
/// cycling, so results are deterministic for a fixed variable order.
/// Throws NumericalInstability when pivots keep collapsing below 1e-12 or
/// the iteration limit is exceeded.
LpSolution solveLp(const LpProblem &p, double feasTol = 1e-9);

/// CPLEX-LP-style text rendering for external cross-checking.
std::string toCplexLp(const LpProblem &p);

} // namespace npa::lp
