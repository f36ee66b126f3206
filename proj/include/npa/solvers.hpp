// Outer fixpoint engines: Newton iteration and Kleene iteration, with
// convergence detection, round accounting and the sandwich check.
#pragma once

#include "npa/linearize.hpp"

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace npa {

enum class SolverMode { Newton, Kleene };

struct SolverConfig {
  std::size_t maxRounds = 200;
  double tolerance = 1e-9;
  SolverMode mode = SolverMode::Newton;
  /// Newton only: verify ν(i) ⊑ f(ν(i)) ⊑ ν(i+1) every round.
  bool checkSandwich = false;
  /// Newton only: keep ν, f(ν), δ and Δ of every round.
  bool recordTrace = false;
  /// Newton only: replaces the default ν(0) = f(0̄).
  std::optional<SummaryVector> warmStart;
};

/// The values computed during one Newton round.
struct RoundTrace {
  SummaryVector nu;
  SummaryVector fNu;
  SummaryVector delta;
  SummaryVector Delta;
};

struct Timings {
  double totalMs = 0.0;
  double evaluateMs = 0.0;  ///< computing f(ν)
  double linearizeMs = 0.0; ///< building differentials
  double solveMs = 0.0;     ///< linear-recursion solving
};

struct AnalysisResult {
  SummaryVector finalSummary;
  /// Index i of the first iterate with distance(x(i+1), x(i)) < tolerance,
  /// or maxRounds when the run stopped without converging.
  std::size_t rounds = 0;
  /// x(0), x(1), … including the final iterate.
  std::vector<SummaryVector> perRoundSummaries;
  /// Wall-clock milliseconds since the start of the run, per iterate.
  std::vector<double> elapsedMs;
  bool converged = false;
  Timings timings;
  std::vector<RoundTrace> trace;
};

/// f(ν) for closed right-hand sides.
SummaryVector applyEquations(const std::vector<AlgTreeExpr> &fs, const SummaryVector &nu,
                             const Interpretation &interp);

/// ν(0) = f(0̄) (or the warm start), δ = f(ν) ⊖ ν, Δ = least solution of
/// Y = δ ⊕ Df|ν(Y), ν' = ν ⊕ Δ. Throws SolveFailure from the strategy and
/// NonMonotoneRound when a round breaks the expected ordering.
AnalysisResult newtonSolve(const std::vector<AlgTreeExpr> &fs, const OmegaPma &dom,
                           const SolveStrategy &solve, const SolverConfig &cfg = {});

/// κ(0) = 0̄, κ(j+1) = f(κ(j)).
AnalysisResult kleeneSolve(const std::vector<AlgTreeExpr> &fs, const OmegaPma &dom,
                           const SolveStrategy &solve, const SolverConfig &cfg = {});

/// κ(i) ⊑ ν(i) ⊑ f(ν(i)) ⊑ ν(i+1) at every round recorded by both runs,
/// each comparison allowing the slack `tol·(1 + |rhs|)`. Rounds past the end
/// of the Kleene run compare against its final iterate.
bool sandwichCheck(const AnalysisResult &newton, const AnalysisResult &kleene,
                   const std::vector<AlgTreeExpr> &fs, const OmegaPma &dom,
                   const SolveStrategy &solve, double tol = 1e-9);

/// CSV with header `round,elapsed_ms,<proc>[<k>],…` and one row per iterate.
void writeTraceCsv(std::ostream &out, const AnalysisResult &result,
                   const std::vector<std::string> &procNames);

} // namespace npa
