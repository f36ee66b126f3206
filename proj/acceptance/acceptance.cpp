// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits with status 1 when any criterion fails. Pass criterion numbers as
// arguments to run a subset.
#include "npa/cli.hpp"
#include "npa/domains.hpp"
#include "npa/solvers.hpp"
#include "properties.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace npa;

namespace {

const std::string kSource = NPA_SOURCE_DIR;

struct Verdict {
  bool pass = true;
  std::string detail;
  std::vector<std::string> problems;

  void require(bool ok, const std::string &what) {
    if (!ok) {
      pass = false;
      if (problems.size() < 5)
        problems.push_back(what);
    }
  }
};

using Clock = std::chrono::steady_clock;

double secondsSince(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(const char *f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

AlgTreeExpr one() { return alg::constant({1.0}); }

// ---------------------------------------------------------------------------
// 1. Newton and Kleene on X = ½ ⊕ ½·X·X
// ---------------------------------------------------------------------------

Verdict quadraticSequences() {
  Verdict v;
  auto start = Clock::now();
  std::vector<AlgTreeExpr> fs{alg::prob(0.5, one(), alg::call(0, alg::call(0, one())))};
  RealDomain dom;
  LpSolveStrategy strat;
  SolverConfig cfg;
  cfg.tolerance = 0.0;
  cfg.maxRounds = 20;
  AnalysisResult n = newtonSolve(fs, dom, strat, cfg);
  AnalysisResult k = kleeneSolve(fs, dom, strat, cfg);
  double secs = secondsSince(start);
  double worst = 0.0;
  v.require(n.perRoundSummaries.size() == 21, "Newton produced too few iterates");
  for (std::size_t i = 0; i < n.perRoundSummaries.size() && i <= 20; ++i) {
    double want = 1.0 - std::ldexp(1.0, -static_cast<int>(i + 1));
    double err = std::fabs(n.perRoundSummaries[i][0][0] - want);
    worst = std::max(worst, err);
    v.require(err <= 1e-12, "Newton iterate " + std::to_string(i) + " off by " + fmt("%.3g", err));
  }
  v.require(k.perRoundSummaries.size() == 21, "Kleene produced too few iterates");
  double k20 = k.perRoundSummaries.back()[0][0];
  v.require(k20 <= 1.0 - 1.0 / 21.0 + 1e-9, "Kleene round 20 is " + fmt("%.12f", k20));
  v.require(secs < 1.0, "took " + fmt("%.3f", secs) + " s");
  v.detail = "newton 0..20 max error " + fmt("%.2g", worst) + ", kleene(20) = " + fmt("%.6f", k20) +
             ", " + fmt("%.3f", secs) + " s";
  return v;
}

// ---------------------------------------------------------------------------
// 2. Newton and Kleene on the ndet system
// ---------------------------------------------------------------------------

Verdict ndetSequences() {
  Verdict v;
  auto start = Clock::now();
  std::vector<AlgTreeExpr> fs{
      alg::prob(1.0 / 3.0, one(), alg::call(0, alg::ndet(alg::call(0, one()), one())))};
  RealDomain dom;
  LpSolveStrategy strat;
  SolverConfig cfg;
  cfg.tolerance = 0.0;
  cfg.maxRounds = 3;
  AnalysisResult n = newtonSolve(fs, dom, strat, cfg);
  AnalysisResult k = kleeneSolve(fs, dom, strat, cfg);
  double secs = secondsSince(start);
  const double nu[] = {1.0 / 3, 7.0 / 15, 127.0 / 255, 32767.0 / 65535};
  const double kappa[] = {0.0, 1.0 / 3, 11.0 / 27, 971.0 / 2187};
  double worst = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    if (i >= n.perRoundSummaries.size() || i >= k.perRoundSummaries.size()) {
      v.require(false, "missing iterate " + std::to_string(i));
      continue;
    }
    double en = std::fabs(n.perRoundSummaries[i][0][0] - nu[i]);
    double ek = std::fabs(k.perRoundSummaries[i][0][0] - kappa[i]);
    worst = std::max({worst, en, ek});
    v.require(en <= 1e-12, "Newton iterate " + std::to_string(i) + " off by " + fmt("%.3g", en));
    v.require(ek <= 1e-12, "Kleene iterate " + std::to_string(i) + " off by " + fmt("%.3g", ek));
  }
  v.require(secs < 1.0, "took " + fmt("%.3f", secs) + " s");
  v.detail = "max error " + fmt("%.2g", worst) + ", " + fmt("%.3f", secs) + " s";
  return v;
}

// ---------------------------------------------------------------------------
// 3. Pair domain on the branching recursion
// ---------------------------------------------------------------------------

Verdict pairDomain() {
  Verdict v;
  cli::RunSpec spec;
  spec.inputPath = kSource + "/benchmarks/fig3a.npa";
  spec.domain = parseDomainTag("pair");
  spec.tolerance = 1e-9;
  spec.maxRounds = 100;
  auto out = cli::runAnalysis(spec);
  const Element &e = out.report.values[0];
  v.require(out.report.converged, "did not converge within 100 rounds");
  v.require(std::fabs(e[0] - 1.0) <= 1e-6, "termination probability " + fmt("%.9f", e[0]));
  v.require(std::fabs(e[1] - 1.0) <= 1e-6, "expected difference " + fmt("%.9f", e[1]));
  v.detail = "(" + fmt("%.9f", e[0]) + ", " + fmt("%.9f", e[1]) + ") in " +
             std::to_string(out.report.rounds) + " rounds";
  return v;
}

// ---------------------------------------------------------------------------
// 4. Expectation-invariant Newton sequence on the recursive program
// ---------------------------------------------------------------------------

/// Bound coefficients (constant, t, x) per column 1, t and x.
struct InvRow {
  const char *label;
  std::vector<double> one, x, t;
};

Verdict expInvTable() {
  Verdict v;
  cli::RunSpec spec;
  spec.inputPath = kSource + "/benchmarks/non-linear-recursion.npa";
  spec.domain = parseDomainTag("expinv");
  spec.recordTrace = true;
  auto out = cli::runAnalysis(spec);
  const auto &dom = dynamic_cast<const ExpInvDomain &>(*out.domain);
  const AnalysisResult &r = *out.newton;
  const double third = 1.0 / 3.0, twoThirds = 2.0 / 3.0;
  const std::vector<InvRow> rows{
      {"nu0", {1, 0, 0}, {0, 0, 0}, {0, 1, 0}},
      {"f(nu0)", {1, 0, 0}, {0, 0, twoThirds}, {twoThirds, 1, third}},
      {"delta0", {0, 0, 0}, {0, 0, twoThirds}, {twoThirds, 0, third}},
      {"Delta0", {0, 0, 0}, {0, 0, twoThirds}, {13.0 / 6.0, 0, third}},
      {"nu1", {1, 0, 0}, {0, 0, twoThirds}, {13.0 / 6.0, 1, third}},
      {"f(nu1)", {1, 0, 0}, {2.0 / 27.0, 0, twoThirds}, {119.0 / 54.0, 1, third}},
      {"delta1", {0, 0, 0}, {2.0 / 27.0, 0, 0}, {1.0 / 27.0, 0, 0}},
      {"Delta1", {0, 0, 0}, {1.0 / 6.0, 0, 0}, {1.0 / 6.0, 0, 0}},
      {"nu2", {1, 0, 0}, {1.0 / 6.0, 0, twoThirds}, {7.0 / 3.0, 1, third}},
      {"f(nu2)", {1, 0, 0}, {1.0 / 6.0, 0, twoThirds}, {7.0 / 3.0, 1, third}},
  };
  std::vector<Element> got;
  for (std::size_t i = 0; i < 2 && i < r.trace.size(); ++i) {
    got.push_back(r.trace[i].nu[0]);
    got.push_back(r.trace[i].fNu[0]);
    got.push_back(r.trace[i].delta[0]);
    got.push_back(r.trace[i].Delta[0]);
  }
  if (r.perRoundSummaries.size() > 2) {
    got.push_back(r.perRoundSummaries[2][0]);
    LpSolveStrategy strat;
    Interpretation interp{dom, strat};
    std::vector<AlgTreeExpr> fs;
    for (const auto &body : out.program.extracted.bodies)
      fs.push_back(toAlgebraic(body, dom));
    got.push_back(applyEquations(fs, r.perRoundSummaries[2], interp)[0]);
  }
  v.require(got.size() == rows.size(), "the run recorded " + std::to_string(got.size()) +
                                           " of " + std::to_string(rows.size()) + " table rows");
  double worst = 0.0;
  const std::size_t width = dom.variables().size() + 1;
  auto col = [&](const Element &e, std::size_t c) {
    std::vector<double> out;
    for (std::size_t k = 0; k < width; ++k)
      out.push_back(e[k * width + c]);
    return out;
  };
  for (std::size_t i = 0; i < rows.size() && i < got.size(); ++i) {
    const std::vector<std::pair<std::size_t, const std::vector<double> *>> cols{
        {0, &rows[i].one}, {dom.indexOf("t"), &rows[i].t}, {dom.indexOf("x"), &rows[i].x}};
    for (const auto &[c, want] : cols) {
      // rows of the element are (1, t, x); the table lists (constant, t, x).
      auto have = col(got[i], c);
      for (std::size_t k = 0; k < width; ++k) {
        double err = std::fabs(have[k] - (*want)[k]);
        worst = std::max(worst, err);
        v.require(err <= 1e-6, std::string(rows[i].label) + " coefficient off by " +
                                   fmt("%.3g", err));
      }
    }
  }
  v.require(r.converged && r.rounds == 2,
            "converged = " + std::to_string(r.converged) + " at round " + std::to_string(r.rounds));
  v.detail = std::to_string(got.size()) + " table rows, max error " + fmt("%.2g", worst) +
             ", converged at round " + std::to_string(r.rounds);
  return v;
}

// ---------------------------------------------------------------------------
// 5 and 6. Expectation invariants of the benchmark programs
// ---------------------------------------------------------------------------

struct BoundSpec {
  std::string var;
  std::map<std::string, double> coefficients; ///< "1" is the constant
};

void checkBounds(Verdict &v, const std::string &file, const std::string &rewrites,
                 const std::vector<BoundSpec> &bounds, double tol, std::string &summary) {
  cli::RunSpec spec;
  spec.inputPath = kSource + "/benchmarks/" + file;
  spec.domain = parseDomainTag("expinv");
  if (!rewrites.empty())
    spec.rewritesPath = kSource + "/benchmarks/" + rewrites;
  auto out = cli::runAnalysis(spec);
  const auto &dom = dynamic_cast<const ExpInvDomain &>(*out.domain);
  const Element &e = out.report.values[0];
  v.require(out.report.converged, file + " did not converge");
  for (const auto &b : bounds) {
    std::vector<double> have = dom.boundCoefficients(e, b.var);
    std::vector<double> want(have.size(), 0.0);
    for (const auto &[name, c] : b.coefficients)
      want[name == "1" ? 0 : dom.indexOf(name)] = c;
    for (std::size_t k = 0; k < have.size(); ++k)
      v.require(std::fabs(have[k] - want[k]) <= tol,
                file + ": E[" + b.var + "'] coefficient " + std::to_string(k) + " is " +
                    fmt("%.6f", have[k]) + ", expected " + fmt("%.6f", want[k]));
    summary += " E[" + b.var + "'] <= " + dom.boundText(e, dom.indexOf(b.var)) + ";";
  }
}

Verdict randomWalk() {
  Verdict v;
  std::string summary;
  checkBounds(v, "random-walk.npa", "random-walk.rewrites.json",
              {{"t", {{"t", 1.0}, {"n", 2.0}}}, {"x", {{"n", 1.5}}}, {"y", {{"n", 0.5}}}}, 1e-4,
              summary);
  v.detail = summary;
  return v;
}

Verdict tableSpotChecks() {
  Verdict v;
  std::string summary;
  checkBounds(v, "dice.npa", "", {{"r", {{"1", 3.5}}}, {"t", {{"t", 1.0}, {"1", 4.0 / 3.0}}}},
              1e-4, summary);
  checkBounds(v, "non-linear-recursion.npa", "",
              {{"t", {{"t", 1.0}, {"x", 1.0 / 3.0}, {"1", 7.0 / 3.0}}},
               {"x", {{"x", 2.0 / 3.0}, {"1", 1.0 / 6.0}}}},
              1e-4, summary);
  checkBounds(v, "unbiased.npa", "", {{"r", {{"1", 1.5}}}}, 1e-4, summary);
  v.detail = summary;
  return v;
}

// ---------------------------------------------------------------------------
// 7. Generated Boolean programs: Newton against Kleene
// ---------------------------------------------------------------------------

cli::BenchSpec suiteSpec() {
  cli::BenchSpec spec;
  spec.programCount = 100;
  spec.procedureCount = 100;
  spec.seed = 2026;
  return spec;
}

Verdict generatedSuite() {
  Verdict v;
  auto programs = cli::generateBenchmarks(suiteSpec());
  std::vector<std::size_t> newtonRounds(programs.size()), kleeneRounds(programs.size());
  std::vector<double> diffs(programs.size(), 0.0);
  std::vector<std::string> issues(programs.size());
  cli::parallelFor(programs.size(), 0, [&](std::size_t i) {
    cli::RunSpec spec;
    spec.inputText = programs[i];
    spec.domain = parseDomainTag("bayes");
    spec.solver = cli::SolverChoice::Both;
    spec.tolerance = 1e-10;
    spec.maxRounds = 200;
    spec.kleeneMaxRounds = 1000000;
    auto out = cli::runAnalysis(spec);
    newtonRounds[i] = out.report.rounds;
    kleeneRounds[i] = out.kleene->rounds;
    const auto &a = out.newton->finalSummary, &b = out.kleene->finalSummary;
    for (std::size_t p = 0; p < a.size(); ++p)
      diffs[i] = std::max(diffs[i], out.domain->distance(a[p], b[p]));
    std::string name = "program " + std::to_string(i);
    if (!out.report.converged)
      issues[i] += name + ": Newton did not converge; ";
    if (!out.kleene->converged)
      issues[i] += name + ": Kleene did not converge; ";
    if (!out.report.sandwich.value_or(false))
      issues[i] += name + ": sandwich check failed; ";
  });
  double meanN = 0.0, meanK = 0.0, worst = 0.0;
  for (std::size_t i = 0; i < programs.size(); ++i) {
    meanN += static_cast<double>(newtonRounds[i]) / static_cast<double>(programs.size());
    meanK += static_cast<double>(kleeneRounds[i]) / static_cast<double>(programs.size());
    worst = std::max(worst, diffs[i]);
    v.require(issues[i].empty(), issues[i]);
    v.require(diffs[i] <= 1e-6,
              "program " + std::to_string(i) + " fixed points differ by " + fmt("%.3g", diffs[i]));
  }
  v.require(meanK >= 10.0 * meanN,
            "mean rounds newton " + fmt("%.2f", meanN) + " vs kleene " + fmt("%.2f", meanK));
  v.detail = std::to_string(programs.size()) + " programs, mean rounds newton " +
             fmt("%.2f", meanN) + " vs kleene " + fmt("%.2f", meanK) + " (" +
             fmt("%.1f", meanK / std::max(meanN, 1e-12)) + "x), max entry difference " +
             fmt("%.2g", worst);
  return v;
}

// ---------------------------------------------------------------------------
// 8. Property suites
// ---------------------------------------------------------------------------

Verdict propertySuites() {
  Verdict v;
  constexpr std::size_t kCases = 1000;
  std::ostringstream os;
  auto record = [&](const std::string &name, const props::Outcome &o) {
    v.require(o.ok() && o.cases >= kCases, name + ": " + o.summary());
    os << " " << name << " " << o.cases - o.failures << "/" << o.cases << ";";
  };
  std::uint64_t seed = 100;
  for (const auto &fx : props::standardFixtures()) {
    record("laws[" + fx.label + "]", props::checkAlgebraLaws(fx, kCases, ++seed));
    record("underapprox[" + fx.label + "]", props::checkUnderApproximation(fx, kCases, ++seed));
    record("normalization[" + fx.label + "]", props::checkNormalization(fx, kCases, ++seed));
    if (fx.dom->flavor() == Flavor::Min)
      record("elimination[" + fx.label + "]", props::checkElimination(fx, kCases, ++seed));
  }
  record("simplex", props::checkSimplex(kCases, ++seed));
  v.detail = os.str();
  return v;
}

// ---------------------------------------------------------------------------
// 9. Monte-Carlo cross-validation
// ---------------------------------------------------------------------------

Verdict monteCarlo() {
  Verdict v;
  auto programs = cli::generateBenchmarks(suiteSpec());
  programs.resize(20);
  const DomainTag tag = parseDomainTag("bayes");
  double worstZ = 0.0;
  std::size_t capped = 0, trials = 0;
  for (std::size_t i = 0; i < programs.size(); ++i) {
    cli::LoadedProgram prog = cli::loadProgramText(programs[i]);
    cli::OracleSpec spec;
    spec.domain = tag;
    spec.trials = 1000000;
    spec.seed = 1 + i;
    // Some generated programs are near-critical branching processes whose
    // runs terminate only after very many steps, so the step budget is
    // large. Runs that diverge grow the call stack and are stopped by the
    // depth budget instead.
    spec.maxSteps = 10000000;
    spec.maxStack = 10000;
    // Cycle through the four initial states.
    spec.initialState = {{"b1", (i & 2) ? 1.0 : 0.0}, {"b2", (i & 1) ? 1.0 : 0.0}};
    cli::OracleEstimate est = cli::monteCarloOracle(*prog.program, spec);
    cli::RunSpec run;
    run.inputText = programs[i];
    run.domain = tag;
    auto out = cli::runAnalysis(run);
    auto values = cli::comparableEntries(*out.domain, out.report.values[0], spec.initialState);
    auto cmp = cli::compareWithOracle(values, est, tag);
    worstZ = std::max(worstZ, cmp.worstZ);
    capped += est.capped;
    trials += est.trials;
    v.require(cmp.ok, "program " + std::to_string(i) + " entry " + est.labels[cmp.worstEntry] +
                          ": analysis " + fmt("%.6f", values[cmp.worstEntry]) + " vs estimate " +
                          fmt("%.6f", est.mean[cmp.worstEntry]) + " (z = " +
                          fmt("%.2f", cmp.worstZ) + ")");
  }
  v.detail = std::to_string(programs.size()) + " programs x 10^6 trials, worst z = " +
             fmt("%.2f", worstZ) + ", budget-capped trials " +
             fmt("%.1f", 100.0 * static_cast<double>(capped) / static_cast<double>(trials)) + "%";
  return v;
}

} // namespace

int main(int argc, char **argv) {
  const std::vector<std::pair<int, std::function<Verdict()>>> criteria{
      {1, quadraticSequences}, {2, ndetSequences},   {3, pairDomain},
      {4, expInvTable},        {5, randomWalk},      {6, tableSpotChecks},
      {7, generatedSuite},     {8, propertySuites},  {9, monteCarlo},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i)
    selected.insert(std::atoi(argv[i]));

  bool allPass = true;
  for (const auto &[id, run] : criteria) {
    if (!selected.empty() && !selected.count(id))
      continue;
    auto start = Clock::now();
    Verdict v;
    try {
      v = run();
    } catch (const std::exception &e) {
      v.pass = false;
      v.problems.push_back(std::string("exception: ") + e.what());
    }
    allPass = allPass && v.pass;
    std::printf("%s criterion %d: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", id, v.detail.c_str(),
                secondsSince(start));
    for (const auto &p : v.problems)
      std::printf("    %s\n", p.c_str());
    std::fflush(stdout);
  }
  return allPass ? 0 : 1;
}
