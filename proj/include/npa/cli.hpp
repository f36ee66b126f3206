// Analysis driver: program loading, domain construction, report rendering,
// the random benchmark generator and the Monte-Carlo oracle.
#pragma once

#include "npa/domains.hpp"
#include "npa/frontend.hpp"
#include "npa/solvers.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace npa::cli {

// ---------------------------------------------------------------------------
// Programs and domains
// ---------------------------------------------------------------------------

/// A program ready for analysis. `program` is present for surface-syntax
/// input and absent for JSON equation input.
struct LoadedProgram {
  std::optional<frontend::Program> program;
  frontend::ExtractedProgram extracted;
  std::vector<std::string> actions;    ///< distinct action texts
  std::vector<std::string> conditions; ///< distinct condition texts
};

/// Surface syntax, or JSON equations when the text starts with `{`.
LoadedProgram loadProgramText(const std::string &text);
/// Reads a file and calls loadProgramText. Throws InvalidInput when the
/// file cannot be read.
LoadedProgram loadProgramFile(const std::string &path);

/// Sorted variables mentioned by the program's actions and conditions.
std::vector<std::string> programVariables(const LoadedProgram &p);

struct DomainOptions {
  std::vector<RewriteDecl> rewrites; ///< expinv only
  /// pair only: the variable whose increments are tracked. When unset, the
  /// single incremented variable of the program is used.
  std::optional<std::string> pairVariable;
};

std::unique_ptr<OmegaPma> makeDomain(const DomainTag &tag, const LoadedProgram &p,
                                     const DomainOptions &options = {});

// ---------------------------------------------------------------------------
// Analysis runs
// ---------------------------------------------------------------------------

enum class SolverChoice { Newton, Kleene, Both };
enum class OutputFormat { Text, Json, CsvTrace };

std::string solverChoiceName(SolverChoice s);
SolverChoice parseSolverChoice(const std::string &text);

struct WarmStartSpec {
  enum class Kind {
    Auto, ///< expinv: partial-correctness seed; other domains: f(0̄)
    Zero, ///< start from f(0̄) in every domain
    File  ///< JSON object mapping procedure names to elements
  } kind = Kind::Auto;
  std::string path;
};

struct RunSpec {
  std::string inputPath;
  std::optional<std::string> inputText; ///< used instead of reading inputPath
  DomainTag domain;
  SolverChoice solver = SolverChoice::Newton;
  double tolerance = 1e-9;
  std::size_t maxRounds = 200;
  /// Round limit for Kleene runs; 0 means the same as maxRounds.
  std::size_t kleeneMaxRounds = 0;
  WarmStartSpec warmStart;
  std::string rewritesPath; ///< expinv only
  std::optional<std::string> pairVariable;
  OutputFormat outputFormat = OutputFormat::Text;
  std::string tracePath; ///< CSV trace of the primary run when nonempty
  bool recordTrace = false;
};

/// The serializable part of a run.
struct Report {
  std::string input;
  std::string domain;
  std::string solver;
  std::vector<std::string> procedures;
  std::vector<std::string> summaries; ///< rendered elements
  std::vector<Element> values;        ///< raw elements
  std::size_t rounds = 0;
  bool converged = false;
  std::optional<std::size_t> kleeneRounds;
  std::optional<bool> kleeneConverged;
  std::optional<bool> sandwich;
  std::map<std::string, double> timingsMs;
  std::optional<std::string> trace;

  bool operator==(const Report &) const = default;
};

std::string reportToJson(const Report &r);
Report reportFromJson(const std::string &text);
std::string reportToText(const Report &r);

struct RunOutcome {
  Report report;
  std::shared_ptr<OmegaPma> domain;
  LoadedProgram program;
  std::optional<AnalysisResult> newton;
  std::optional<AnalysisResult> kleene;
};

/// parse → CFHG → elimination → algebraic trees → solver(s).
RunOutcome runAnalysis(const RunSpec &spec);

/// 0 converged, 2 round limit hit.
int exitCodeFor(const Report &r);
/// 3 for solver failures, 4 for input errors.
int exitCodeFor(const Error &e);

/// Warm-start vector from a JSON object `{ "Proc": element, … }` where an
/// element is a flat array or an array of rows. Procedures not listed start
/// at `fallback`.
SummaryVector parseWarmStartJson(const std::string &text, const std::vector<std::string> &procs,
                                 const OmegaPma &dom, const Element &fallback);

// ---------------------------------------------------------------------------
// Benchmark generation
// ---------------------------------------------------------------------------

struct BenchSpec {
  std::size_t programCount = 100;
  std::size_t procedureCount = 100;
  std::uint64_t seed = 1;
  /// Relative weights of the three procedure forms: a probabilistic pair of
  /// assignment-then-call branches, a guarded call pair under prob, and a
  /// call sequence.
  std::vector<double> formWeights{1.0, 1.0, 1.0};
  /// Generate no conditionals (form two degenerates to a prob of calls).
  bool omitConditions = false;
};

/// Deterministic for a given spec. Each program uses the Boolean variables
/// b1 and b2; probabilities are uniform in [0.05, 0.95] rounded to 0.001.
std::vector<std::string> generateBenchmarks(const BenchSpec &spec);

/// Writes `prog<NNN>.npa` files and returns their paths.
std::vector<std::string> writeBenchmarks(const BenchSpec &spec, const std::string &dir);

// ---------------------------------------------------------------------------
// Monte-Carlo oracle
// ---------------------------------------------------------------------------

struct OracleSpec {
  DomainTag domain;
  std::size_t trials = 1000000;
  std::size_t maxSteps = 10000;  ///< per-trial edge budget
  std::size_t maxStack = 100000; ///< per-trial call depth budget
  std::uint64_t seed = 1;
  std::size_t threads = 0; ///< 0 = hardware concurrency
  std::string procedure;   ///< entry procedure; empty = the first one
  std::map<std::string, double> initialState; ///< unset variables start at 0
  std::optional<std::string> pairVariable;
};

/// Sample means with standard errors. Entry meaning depends on the domain:
/// reals `P[term]`; pair `P[term]` and `E[Δv·1_term]`; bayes the
/// probability of terminating in each final state from the initial state;
/// moment:k `E[R^i·1_term]` for i = 0..k.
struct OracleEstimate {
  std::vector<std::string> labels;
  std::vector<double> mean;
  std::vector<double> standardError;
  std::size_t trials = 0;
  std::size_t capped = 0; ///< trials stopped by a step or stack budget
};

OracleEstimate monteCarloOracle(const frontend::Program &program, const OracleSpec &spec);

/// The entries of an analysis element comparable with an oracle estimate:
/// the whole element, except for bayes where it is the row of the initial
/// state.
std::vector<double> comparableEntries(const OmegaPma &dom, const Element &e,
                                      const std::map<std::string, double> &initialState);

/// |analysis − estimate| ≤ z·SE per entry, with the binomial SE of the
/// analysis value used for probabilities so exact 0/1 estimates are not
/// reported as infinitely precise. When the expected count of a probability
/// entry (or of its complement) is below 25, the normal approximation is
/// replaced by the exact binomial tail at the same level, reported as the
/// equivalent z.
struct OracleComparison {
  bool ok = true;
  double worstZ = 0.0;
  std::size_t worstEntry = 0;
};
OracleComparison compareWithOracle(const std::vector<double> &analysis,
                                   const OracleEstimate &estimate, const DomainTag &tag,
                                   double z = 3.0);

/// Runs `fn(i)` for i in [0, n) on up to `threads` workers (0 = hardware
/// concurrency). The first exception is rethrown after all workers stop.
void parallelFor(std::size_t n, std::size_t threads, const std::function<void(std::size_t)> &fn);

} // namespace npa::cli
