// Differentiation of algebraic tree expressions, normalization of linear
// expressions into μ-free form, and the three-step linear solve.
#pragma once

#include "npa/algebra.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace npa {

enum class SystemKind { General, Linear, LinearMuFree };

/// Named unknowns mapped to algebraic right-hand sides.
struct EquationSystem {
  std::vector<std::string> names;
  std::vector<AlgTreeExpr> rhs;
  SystemKind kind = SystemKind::General;

  /// Throws InvalidInput when a right-hand side contradicts `kind`.
  void check() const;
};

/// Result of Γ ⊢ E ⇓ F | Θ.
struct Normalized {
  AlgTreeExpr expr;
  std::vector<std::pair<std::string, AlgTreeExpr>> equations;
};

/// Extracts a μ-free linear expression plus auxiliary equations. Each Mu
/// binder gets a fresh variable and an equation. A Concat E1 ++_Z E2 gets a
/// fresh variable for E2 as well, so the result is free of Concat too.
/// Variables not mapped by `renaming` are kept as they are.
Normalized normalize(const AlgTreeExpr &e, const std::map<std::string, std::string> &renaming,
                     FreshNames &names);

/// Differentials at a fixed summary vector. Values of closed subterms are
/// cached for the lifetime of the object.
class Differentiator {
public:
  Differentiator(const Interpretation &interp, SummaryVector nu);

  /// D_j f |_ν under γ (j is 0-based).
  AlgTreeExpr differentiate(const AlgTreeExpr &f, std::size_t j, const Valuation &gamma);
  /// Σ_j D_j f_i |_ν for each i. Procedures that f_i never calls contribute
  /// the zero differential and are skipped.
  std::vector<AlgTreeExpr> multivariate(const std::vector<AlgTreeExpr> &fs,
                                        const Valuation &gamma);

private:
  Element value(const AlgTreeExpr &e, const Valuation &gamma);
  AlgTreeExpr diff(const AlgTreeExpr &f, std::size_t j, const Valuation &gamma);

  const Interpretation &interp_;
  SummaryVector nu_;
  std::map<const void *, Element> cache_;
  std::vector<AlgTreeExpr> keepAlive_;
};

AlgTreeExpr differentiate(const AlgTreeExpr &f, std::size_t j, const SummaryVector &nu,
                          const Valuation &gamma, const Interpretation &interp);
std::vector<AlgTreeExpr> multivariateDifferential(const std::vector<AlgTreeExpr> &fs,
                                                  const SummaryVector &nu,
                                                  const Valuation &gamma,
                                                  const Interpretation &interp);

/// Procedures referenced by Call or CallLin anywhere in `e`.
std::vector<bool> calledProcedures(const AlgTreeExpr &e, std::size_t n);

struct LinearSolution {
  std::map<std::string, Element> iota; ///< auxiliary variables
  SummaryVector nu;                    ///< one value per equation of the system
};

/// Solves a linear system whose i-th unknown is the Y_i referenced by
/// CallLin(i, ·): normalize every right-hand side, run the strategy on the
/// combined μ-free system, then read off the summaries.
LinearSolution solveLinearSystem(const EquationSystem &sys, const Valuation &gamma,
                                 const Interpretation &interp);

} // namespace npa
