// The shipped ω-continuous pre-Markov algebras and their linear-recursion
// solving strategy.
#pragma once

#include "npa/algebra.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace npa {

// ---------------------------------------------------------------------------
// Termination probability over the nonnegative reals
// ---------------------------------------------------------------------------

/// ⊕ = +, ⊗ = ·, ndet = min. Every action is interpreted as 1.
class RealDomain : public OmegaPma {
public:
  std::string name() const override { return "reals"; }
  std::size_t dimension() const override { return 1; }
  Element one() const override { return {1.0}; }
  Element extend(const Element &a, const Element &b) const override;
  Element interpretAction(const std::string &action) const override;
  std::string render(const Element &e) const override;
  Flavor flavor() const override { return Flavor::Min; }
  CondKind condKind() const override { return CondKind::Unsupported; }
};

// ---------------------------------------------------------------------------
// Termination probability paired with the expected increment of a variable
// ---------------------------------------------------------------------------

/// Elements (p, d) where d is the expected increment scaled by p.
/// `v := v + c` on the tracked variable (and `reward(c)`) is (1, c); other
/// actions are (1, 0). ndet is the componentwise minimum.
class PairDomain : public OmegaPma {
public:
  /// With no tracked variable, every increment `v := v + c` counts.
  explicit PairDomain(std::optional<std::string> tracked = std::nullopt);
  std::string name() const override { return "pair"; }
  std::size_t dimension() const override { return 2; }
  Element one() const override { return {1.0, 0.0}; }
  Element extend(const Element &a, const Element &b) const override;
  Element interpretAction(const std::string &action) const override;
  std::string render(const Element &e) const override;
  Flavor flavor() const override { return Flavor::Min; }
  CondKind condKind() const override { return CondKind::Unsupported; }
  const std::optional<std::string> &tracked() const { return tracked_; }

  /// Variables that some action increments by a constant.
  static std::vector<std::string> incrementedVariables(const std::vector<std::string> &actions);

private:
  std::optional<std::string> tracked_;
};

// ---------------------------------------------------------------------------
// Bayesian inference over Boolean programs
// ---------------------------------------------------------------------------

/// |S|×|S| matrices over the states of the Boolean variables (sorted by
/// name; the first variable is the most significant, true before false, so
/// with two variables the order is TT, TF, FT, FF). Rows are pre-states.
class BayesDomain : public OmegaPma {
public:
  explicit BayesDomain(std::vector<std::string> variables);
  std::string name() const override { return "bayes"; }
  std::size_t dimension() const override { return states_ * states_; }
  Element one() const override;
  Element extend(const Element &a, const Element &b) const override;
  Element condChoice(const std::string &condition, const Element &a,
                     const Element &b) const override;
  Element interpretAction(const std::string &action) const override;
  std::string render(const Element &e) const override;
  Flavor flavor() const override { return Flavor::Min; }
  CondKind condKind() const override { return CondKind::Linear; }

  const std::vector<std::string> &variables() const { return vars_; }
  std::size_t stateCount() const { return states_; }
  /// "TF"-style label of a state index.
  std::string stateLabel(std::size_t s) const;
  /// Truth value of variable `v` in state `s`.
  bool valueIn(std::size_t s, std::size_t v) const;
  /// Diagonal of Γ_φ: which pre-states satisfy the condition.
  std::vector<bool> conditionMask(const std::string &condition) const;

private:
  std::vector<std::string> vars_;
  std::size_t states_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::vector<bool>> maskCache_;
};

// ---------------------------------------------------------------------------
// Linear expectation invariants
// ---------------------------------------------------------------------------

/// A rewrite declaration for a conditional choice.
struct RewriteDecl {
  std::string condition; ///< canonical condition text
  bool thenBranch = true;
  std::string expr; ///< affine expression over program variables
  bool vanishing = false;
};

/// Reads `[{"conditionText":…, "branch":"then"|"else", "expr":…,
/// "kind":"nonneg"|"vanishing"}, …]`.
std::vector<RewriteDecl> parseRewriteJson(const std::string &text);

/// (k+1)×(k+1) matrices T with [E[1] | E[x′]] ≤ [1 | x]·T. Row and column 0
/// stand for the constant 1; variables follow sorted by name. ⊗ is the
/// matrix product, ndet is the entrywise maximum, and cond is the entrywise
/// maximum tightened by the declared rewrite functions.
class ExpInvDomain : public OmegaPma {
public:
  ExpInvDomain(std::vector<std::string> variables, std::vector<RewriteDecl> rewrites = {});
  std::string name() const override { return "expinv"; }
  std::size_t dimension() const override { return (k_ + 1) * (k_ + 1); }
  Element one() const override;
  Element extend(const Element &a, const Element &b) const override;
  Element interpretAction(const std::string &action) const override;
  std::string render(const Element &e) const override;
  Flavor flavor() const override { return Flavor::Max; }
  CondKind condKind() const override { return CondKind::Max; }
  bool nonnegative() const override { return false; }
  MaxDirections condDirections(const std::string &condition) const override;

  const std::vector<std::string> &variables() const { return vars_; }
  /// Index of a variable's row/column (1-based; 0 is the constant).
  std::size_t indexOf(const std::string &var) const;
  /// Upper bound on E[column var′] as an affine expression text.
  std::string boundText(const Element &e, std::size_t column) const;
  /// Coefficients (constant first) of the bound on E[var′].
  std::vector<double> boundCoefficients(const Element &e, const std::string &var) const;

  /// E[1] ≤ 1 plus E[v′] ≤ v for every accumulator: a variable that is
  /// never assigned, or only by `v := v + e` with nonnegative e.
  Element warmStart(const std::vector<std::string> &actions) const;
  /// Builds an element from rows of coefficients.
  Element fromRows(const std::vector<std::vector<double>> &rows) const;

private:
  std::vector<std::string> vars_;
  std::size_t k_;
  std::map<std::string, std::vector<RewriteDecl>> rewrites_;
};

// ---------------------------------------------------------------------------
// Moments of accumulated rewards
// ---------------------------------------------------------------------------

/// (k+1)-tuples of moment bounds. ⊗ is the binomial convolution, ndet the
/// componentwise maximum; `reward(c)` is ⟨c^i⟩ and other actions are 1̄.
class MomentDomain : public OmegaPma {
public:
  explicit MomentDomain(std::size_t k);
  std::string name() const override { return "moment:" + std::to_string(k_); }
  std::size_t dimension() const override { return k_ + 1; }
  Element one() const override;
  Element extend(const Element &a, const Element &b) const override;
  Element interpretAction(const std::string &action) const override;
  std::string render(const Element &e) const override;
  Flavor flavor() const override { return Flavor::Max; }
  CondKind condKind() const override { return CondKind::Unsupported; }

private:
  std::size_t k_;
  std::vector<std::vector<double>> binom_;
};

// ---------------------------------------------------------------------------
// Linear-recursion solving
// ---------------------------------------------------------------------------

struct StrategyOptions {
  /// Solve (I − A)u = c directly when no min/max nodes remain.
  bool directSolve = true;
  /// Pin unknowns whose least value is provably zero before solving.
  bool supportPrepass = true;
  double feasTol = 1e-9;
};

/// Counters describing the last solve (for diagnostics and tests).
struct StrategyStats {
  std::size_t scalarUnknowns = 0;
  std::size_t auxiliaries = 0;
  std::size_t pinned = 0;
  bool usedLp = false;
};

/// Compiles a μ-free linear system into scalar piecewise-linear equations
/// and solves it. Min-flavoured domains maximize Σ Z subject to Z ≤ both
/// operands of every min node; max-flavoured domains minimize Σ Z subject to
/// Z ≥ both operands of every max node. An unbounded program surfaces as
/// SolveFailure.
class LpSolveStrategy : public SolveStrategy {
public:
  explicit LpSolveStrategy(StrategyOptions options = {});
  std::vector<Element> solve(const LinearSystem &sys, const Valuation &gamma,
                             const OmegaPma &dom) const override;
  StrategyStats lastStats() const;

private:
  StrategyOptions options_;
  mutable std::mutex statsMutex_;
  mutable StrategyStats stats_;
};

/// Parses `reals`, `pair`, `bayes`, `expinv`, `moment:k` (k ≥ 0).
struct DomainTag {
  enum class Kind { Reals, Pair, Bayes, ExpInv, Moment } kind = Kind::Reals;
  std::size_t momentOrder = 0;
  std::string text() const;
};
DomainTag parseDomainTag(const std::string &text);

} // namespace npa
