// The ω-continuous pre-Markov algebra contract, conversion of program trees
// to algebraic trees, and interpretation of algebraic tree expressions.
#pragma once

#include "npa/error.hpp"
#include "npa/treeexpr.hpp"

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace npa {

/// How a domain realizes cond_φ.
enum class CondKind {
  Linear,     ///< cond_φ(a, b) is jointly linear in (a, b)
  Max,        ///< an upper bound of both branches, possibly tightened by directions
  Unsupported ///< programs with conditional choice are rejected
};

/// Whether ndet is a pointwise minimum (demonic) or maximum (upper bound).
/// This also fixes the direction of the linear-programming reduction.
enum class Flavor { Min, Max };

/// Directions that may be added with nonnegative weights to the then/else
/// operands of a Max-kind cond before taking the entrywise bound.
struct MaxDirections {
  std::vector<Element> thenDirections;
  std::vector<Element> elseDirections;
  /// Entries for which directions are ignored (plain maximum).
  std::vector<bool> plainEntries;
};

/// An ω-continuous pre-Markov algebra over flat numeric carriers.
///
/// Elements are vectors of fixed dimension. ⊕ is componentwise addition and
/// ⊗ is bilinear in every shipped domain; the solve strategy relies on both.
class OmegaPma {
public:
  virtual ~OmegaPma() = default;

  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;

  Element zero() const { return Element(dimension(), 0.0); }
  virtual Element one() const = 0;

  virtual Element combine(const Element &a, const Element &b) const;
  virtual Element extend(const Element &a, const Element &b) const = 0;
  /// Some d with b ⊕ d = a. Throws SubtractUndefined when b ⋢ a beyond the
  /// subtraction tolerance; smaller negative differences clamp to zero.
  virtual Element subtract(const Element &a, const Element &b) const;
  virtual Element condChoice(const std::string &condition, const Element &a,
                             const Element &b) const;
  virtual Element probChoice(double p, const Element &a, const Element &b) const;
  virtual Element ndetChoice(const Element &a, const Element &b) const;

  /// a ⊑ b, componentwise, allowing an absolute slack of `tol·(1 + |b|)`.
  virtual bool leq(const Element &a, const Element &b, double tol = 0.0) const;
  /// Max-abs difference over components.
  virtual double distance(const Element &a, const Element &b) const;

  /// Throws UnknownAction when the domain cannot interpret the action.
  virtual Element interpretAction(const std::string &action) const = 0;

  /// Multi-line debug rendering.
  virtual std::string render(const Element &e) const;

  virtual Flavor flavor() const = 0;
  virtual CondKind condKind() const = 0;
  /// True when every element is componentwise nonnegative.
  virtual bool nonnegative() const { return true; }
  /// For Max-kind conditions: the tightening directions for `condition`.
  virtual MaxDirections condDirections(const std::string &condition) const;
  /// True when cond_φ distributes over ⊕ (checked by the law suite).
  bool condDistributes() const { return condKind() == CondKind::Linear; }

  /// Relative tolerance used by `subtract`.
  virtual double subtractTolerance() const { return 1e-9; }

  /// Throws InvalidInput if `e` has the wrong dimension or invalid entries.
  void checkElement(const Element &e) const;
};

/// Entrywise-minimal T with T ≥ a + Σ c_q·D_q and T ≥ b + Σ d_q·D'_q over
/// nonnegative weights, solved as one LP per group of coupled entries.
Element maxWithDirections(const Element &a, const Element &b, const MaxDirections &dirs);

using Valuation = std::map<std::string, Element>;
using SummaryVector = std::vector<Element>;

/// A μ-free, concat-free linear equation system handed to a solve strategy.
/// The first `summaryCount` unknowns are the procedure summaries referenced
/// by CallLin; the rest are auxiliary variables.
struct LinearSystem {
  std::vector<std::string> unknowns;
  std::vector<AlgTreeExpr> rhs;
  std::size_t summaryCount = 0;
};

/// Returns the least solution of a μ-free linear system (one element per
/// unknown, in order). Free variables outside the unknowns are read from γ.
class SolveStrategy {
public:
  virtual ~SolveStrategy() = default;
  virtual std::vector<Element> solve(const LinearSystem &sys, const Valuation &gamma,
                                     const OmegaPma &dom) const = 0;
};

/// Supplies `$mu<k>` names for variables minted during normalization.
class FreshNames {
public:
  std::string next() { return "$mu" + std::to_string(counter_++); }
  void reset() { counter_ = 0; }
  std::size_t issued() const { return counter_; }

private:
  std::size_t counter_ = 0;
};

/// Replaces ε by Const(1̄) and seq[act] by SeqConst(⟦act⟧). Throws
/// UnknownAction for actions the domain does not interpret.
AlgTreeExpr toAlgebraic(const TreeExpr &e, const OmegaPma &dom);

/// Everything interpretation needs besides the expression.
struct Interpretation {
  const OmegaPma &dom;
  const SolveStrategy &solve;
  FreshNames *names = nullptr; ///< optional; a local supply is used if null

  /// M_γ⟦e⟧(ν). μ-binders are solved by substituting ν into calls,
  /// normalizing, and invoking the strategy.
  Element operator()(const AlgTreeExpr &e, const Valuation &gamma,
                     const SummaryVector &nu) const;
};

/// Convenience wrapper around Interpretation.
Element interpret(const AlgTreeExpr &e, const Valuation &gamma, const SummaryVector &nu,
                  const OmegaPma &dom, const SolveStrategy &solve);

/// Replaces every Call(i, E) by SeqConst(ν_i, E) and every CallLin(i, c) by
/// Const(ν_i ⊗ c).
AlgTreeExpr substituteSummaries(const AlgTreeExpr &e, const SummaryVector &nu,
                                const OmegaPma &dom);

} // namespace npa
