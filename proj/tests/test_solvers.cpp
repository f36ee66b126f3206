#include "doctest.h"

#include "npa/domains.hpp"
#include "npa/solvers.hpp"

#include <cmath>
#include <sstream>

using namespace npa;

namespace {

AlgTreeExpr one() { return alg::constant({1.0}); }

// X = ½ ⊕ ½·X·X
std::vector<AlgTreeExpr> squareSystem() {
  return {alg::prob(0.5, one(), alg::call(0, alg::call(0, one())))};
}

// X = prob[⅓](1, call X (ndet(call X (1), 1)))
std::vector<AlgTreeExpr> ndetSystem() {
  return {alg::prob(1.0 / 3.0, one(), alg::call(0, alg::ndet(alg::call(0, one()), one())))};
}

} // namespace

TEST_CASE("newton on the quadratic system halves the error every round") {
  RealDomain dom;
  LpSolveStrategy strat;
  SolverConfig cfg;
  cfg.tolerance = 0.0;
  cfg.maxRounds = 20;
  AnalysisResult r = newtonSolve(squareSystem(), dom, strat, cfg);
  REQUIRE(r.perRoundSummaries.size() == 21);
  for (int i = 0; i <= 20; ++i)
    CHECK(std::fabs(r.perRoundSummaries[i][0][0] - (1.0 - std::ldexp(1.0, -(i + 1)))) < 1e-12);
  CHECK_FALSE(r.converged);
}

TEST_CASE("kleene on the quadratic system converges slowly") {
  RealDomain dom;
  LpSolveStrategy strat;
  SolverConfig cfg;
  cfg.tolerance = 0.0;
  cfg.maxRounds = 20;
  AnalysisResult r = kleeneSolve(squareSystem(), dom, strat, cfg);
  REQUIRE(r.perRoundSummaries.size() == 21);
  for (int i = 1; i <= 20; ++i)
    CHECK(r.perRoundSummaries[i][0][0] <= 1.0 - 1.0 / (i + 1) + 1e-9);
}

TEST_CASE("newton and kleene sequences on the ndet system") {
  RealDomain dom;
  LpSolveStrategy strat;
  SolverConfig cfg;
  cfg.tolerance = 0.0;
  cfg.maxRounds = 3;
  cfg.recordTrace = true;
  AnalysisResult n = newtonSolve(ndetSystem(), dom, strat, cfg);
  const double nu[] = {1.0 / 3, 7.0 / 15, 127.0 / 255, 32767.0 / 65535};
  for (int i = 0; i < 4; ++i)
    CHECK(std::fabs(n.perRoundSummaries[i][0][0] - nu[i]) < 1e-12);
  // Δ(i) = (1 + 2ν² − 3ν)/(3 − 4ν)
  for (int i = 0; i < 3; ++i) {
    double v = nu[i];
    CHECK(std::fabs(n.trace[i].Delta[0][0] - (1 + 2 * v * v - 3 * v) / (3 - 4 * v)) < 1e-12);
  }
  AnalysisResult k = kleeneSolve(ndetSystem(), dom, strat, cfg);
  const double kappa[] = {0.0, 1.0 / 3, 11.0 / 27, 971.0 / 2187};
  for (int i = 0; i < 4; ++i)
    CHECK(std::fabs(k.perRoundSummaries[i][0][0] - kappa[i]) < 1e-12);
  CHECK(sandwichCheck(n, k, ndetSystem(), dom, strat));
}

TEST_CASE("round accounting on constant systems") {
  RealDomain dom;
  LpSolveStrategy strat;
  std::vector<AlgTreeExpr> fs{alg::constant({0.25})};
  AnalysisResult n = newtonSolve(fs, dom, strat);
  CHECK(n.converged);
  CHECK(n.rounds == 0);
  CHECK(n.finalSummary[0][0] == doctest::Approx(0.25));
  AnalysisResult k = kleeneSolve(fs, dom, strat);
  CHECK(k.converged);
  CHECK(k.rounds == 1);
  CHECK(sandwichCheck(n, k, fs, dom, strat));
}

TEST_CASE("both engines reach the same fixed point") {
  RealDomain dom;
  LpSolveStrategy strat;
  SolverConfig cfg;
  cfg.tolerance = 1e-12;
  cfg.maxRounds = 100000;
  cfg.checkSandwich = true;
  AnalysisResult n = newtonSolve(ndetSystem(), dom, strat, cfg);
  AnalysisResult k = kleeneSolve(ndetSystem(), dom, strat, cfg);
  CHECK(n.converged);
  CHECK(k.converged);
  CHECK(n.finalSummary[0][0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(std::fabs(n.finalSummary[0][0] - k.finalSummary[0][0]) < 1e-5);
  CHECK(n.rounds < k.rounds);
}

TEST_CASE("sandwich check rejects a run that overshoots") {
  RealDomain dom;
  LpSolveStrategy strat;
  SolverConfig cfg;
  cfg.tolerance = 0.0;
  cfg.maxRounds = 3;
  AnalysisResult n = newtonSolve(ndetSystem(), dom, strat, cfg);
  AnalysisResult k = kleeneSolve(ndetSystem(), dom, strat, cfg);
  n.perRoundSummaries[1][0][0] = 0.6;
  n.trace.clear();
  CHECK_FALSE(sandwichCheck(n, k, ndetSystem(), dom, strat));
}

TEST_CASE("warm start overrides the first iterate") {
  RealDomain dom;
  LpSolveStrategy strat;
  SolverConfig cfg;
  cfg.warmStart = SummaryVector{{0.5}};
  AnalysisResult n = newtonSolve(ndetSystem(), dom, strat, cfg);
  CHECK(n.perRoundSummaries[0][0][0] == 0.5);
  CHECK(n.converged);
  CHECK(n.rounds == 0);
  cfg.warmStart = SummaryVector{{0.5}, {0.5}};
  CHECK_THROWS_AS(newtonSolve(ndetSystem(), dom, strat, cfg), Error);
}

TEST_CASE("a warm start above the fixed point is reported as non-monotone") {
  RealDomain dom;
  LpSolveStrategy strat;
  SolverConfig cfg;
  cfg.warmStart = SummaryVector{{0.9}};
  try {
    newtonSolve(ndetSystem(), dom, strat, cfg);
    FAIL("expected an error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::NonMonotoneRound);
  }
}

TEST_CASE("invalid configurations are rejected") {
  RealDomain dom;
  LpSolveStrategy strat;
  SolverConfig cfg;
  cfg.maxRounds = 0;
  CHECK_THROWS_AS(newtonSolve(ndetSystem(), dom, strat, cfg), Error);
  cfg.maxRounds = 5;
  cfg.tolerance = -1;
  CHECK_THROWS_AS(kleeneSolve(ndetSystem(), dom, strat, cfg), Error);
  std::vector<AlgTreeExpr> open{alg::var("Z")};
  CHECK_THROWS_AS(newtonSolve(open, dom, strat), Error);
}

TEST_CASE("trace csv has one row per iterate") {
  RealDomain dom;
  LpSolveStrategy strat;
  SolverConfig cfg;
  cfg.tolerance = 0.0;
  cfg.maxRounds = 3;
  AnalysisResult n = newtonSolve(ndetSystem(), dom, strat, cfg);
  std::ostringstream out;
  writeTraceCsv(out, n, {"X"});
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "round,elapsed_ms,X[0]");
  int rows = 0;
  while (std::getline(in, line))
    ++rows;
  CHECK(rows == 4);
}
