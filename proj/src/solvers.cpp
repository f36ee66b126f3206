#include "npa/solvers.hpp"

#include <chrono>
#include <cmath>

namespace npa {

namespace {

using Clock = std::chrono::steady_clock;

double msSince(Clock::time_point t) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t).count();
}

double vectorDistance(const OmegaPma &dom, const SummaryVector &a, const SummaryVector &b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    d = std::max(d, dom.distance(a[i], b[i]));
  return d;
}

bool vectorLeq(const OmegaPma &dom, const SummaryVector &a, const SummaryVector &b, double tol) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!dom.leq(a[i], b[i], tol))
      return false;
  return true;
}

void checkSystem(const std::vector<AlgTreeExpr> &fs) {
  for (std::size_t i = 0; i < fs.size(); ++i)
    if (!fs[i].closed())
      throw Error(ErrorKind::InvalidInput,
                  "equation " + std::to_string(i) + " has free variables");
}

void checkConfig(const SolverConfig &cfg) {
  if (cfg.maxRounds == 0)
    throw Error(ErrorKind::InvalidInput, "maxRounds must be positive");
  if (!(cfg.tolerance >= 0.0))
    throw Error(ErrorKind::InvalidInput, "tolerance must be nonnegative");
}

} // namespace

SummaryVector applyEquations(const std::vector<AlgTreeExpr> &fs, const SummaryVector &nu,
                             const Interpretation &interp) {
  SummaryVector out;
  out.reserve(fs.size());
  const Valuation empty;
  for (const auto &f : fs)
    out.push_back(interp(f, empty, nu));
  return out;
}

AnalysisResult newtonSolve(const std::vector<AlgTreeExpr> &fs, const OmegaPma &dom,
                           const SolveStrategy &solve, const SolverConfig &cfg) {
  checkConfig(cfg);
  checkSystem(fs);
  const auto start = Clock::now();
  FreshNames names;
  Interpretation interp{dom, solve, &names};
  const std::size_t n = fs.size();
  AnalysisResult res;

  SummaryVector nu;
  if (cfg.warmStart) {
    if (cfg.warmStart->size() != n)
      throw Error(ErrorKind::InvalidInput, "warm start has the wrong number of summaries");
    for (const auto &e : *cfg.warmStart)
      dom.checkElement(e);
    nu = *cfg.warmStart;
  } else {
    auto t = Clock::now();
    nu = applyEquations(fs, SummaryVector(n, dom.zero()), interp);
    res.timings.evaluateMs += msSince(t);
  }
  res.perRoundSummaries.push_back(nu);
  res.elapsedMs.push_back(msSince(start));

  std::vector<std::string> yNames;
  for (std::size_t i = 0; i < n; ++i)
    yNames.push_back("$Y" + std::to_string(i));

  for (std::size_t round = 0; round < cfg.maxRounds; ++round) {
    auto t = Clock::now();
    SummaryVector fNu = applyEquations(fs, nu, interp);
    res.timings.evaluateMs += msSince(t);

    SummaryVector delta(n);
    for (std::size_t i = 0; i < n; ++i) {
      try {
        delta[i] = dom.subtract(fNu[i], nu[i]);
      } catch (const Error &e) {
        if (e.kind() != ErrorKind::SubtractUndefined)
          throw;
        throw Error(ErrorKind::NonMonotoneRound, "round " + std::to_string(round) +
                                                     ": f(nu) is not above nu for procedure " +
                                                     std::to_string(i) + " (" + e.what() + ")");
      }
    }

    t = Clock::now();
    std::vector<AlgTreeExpr> diffs = multivariateDifferential(fs, nu, Valuation{}, interp);
    EquationSystem sys;
    sys.kind = SystemKind::Linear;
    sys.names = yNames;
    for (std::size_t i = 0; i < n; ++i)
      sys.rhs.push_back(alg::plus(alg::constant(delta[i]), diffs[i]));
    res.timings.linearizeMs += msSince(t);

    t = Clock::now();
    names.reset();
    LinearSolution sol = solveLinearSystem(sys, Valuation{}, interp);
    res.timings.solveMs += msSince(t);

    SummaryVector next(n);
    for (std::size_t i = 0; i < n; ++i)
      next[i] = dom.combine(nu[i], sol.nu[i]);

    if (cfg.checkSandwich) {
      if (!vectorLeq(dom, nu, fNu, cfg.tolerance) || !vectorLeq(dom, fNu, next, cfg.tolerance))
        throw Error(ErrorKind::NonMonotoneRound,
                    "round " + std::to_string(round) + " violates nu <= f(nu) <= nu'");
    }
    if (cfg.recordTrace)
      res.trace.push_back(RoundTrace{nu, fNu, delta, sol.nu});

    const double dist = vectorDistance(dom, next, nu);
    res.perRoundSummaries.push_back(next);
    res.elapsedMs.push_back(msSince(start));
    nu = std::move(next);
    if (dist < cfg.tolerance || (cfg.tolerance == 0.0 && dist == 0.0)) {
      res.rounds = round;
      res.converged = true;
      break;
    }
    res.rounds = round + 1;
  }
  res.finalSummary = nu;
  res.timings.totalMs = msSince(start);
  return res;
}

AnalysisResult kleeneSolve(const std::vector<AlgTreeExpr> &fs, const OmegaPma &dom,
                           const SolveStrategy &solve, const SolverConfig &cfg) {
  checkConfig(cfg);
  checkSystem(fs);
  const auto start = Clock::now();
  FreshNames names;
  Interpretation interp{dom, solve, &names};
  AnalysisResult res;
  SummaryVector kappa(fs.size(), dom.zero());
  res.perRoundSummaries.push_back(kappa);
  res.elapsedMs.push_back(0.0);
  for (std::size_t round = 0; round < cfg.maxRounds; ++round) {
    names.reset();
    SummaryVector next = applyEquations(fs, kappa, interp);
    const double dist = vectorDistance(dom, next, kappa);
    res.perRoundSummaries.push_back(next);
    res.elapsedMs.push_back(msSince(start));
    kappa = std::move(next);
    if (dist < cfg.tolerance || (cfg.tolerance == 0.0 && dist == 0.0)) {
      res.rounds = round;
      res.converged = true;
      break;
    }
    res.rounds = round + 1;
  }
  res.finalSummary = kappa;
  res.timings.totalMs = res.timings.evaluateMs = msSince(start);
  return res;
}

bool sandwichCheck(const AnalysisResult &newton, const AnalysisResult &kleene,
                   const std::vector<AlgTreeExpr> &fs, const OmegaPma &dom,
                   const SolveStrategy &solve, double tol) {
  if (newton.perRoundSummaries.empty() || kleene.perRoundSummaries.empty())
    return false;
  FreshNames names;
  Interpretation interp{dom, solve, &names};
  const auto &nus = newton.perRoundSummaries;
  const auto &kappas = kleene.perRoundSummaries;
  for (std::size_t i = 0; i < nus.size(); ++i) {
    const SummaryVector &kappa = kappas[std::min(i, kappas.size() - 1)];
    if (!vectorLeq(dom, kappa, nus[i], tol))
      return false;
    if (i + 1 < nus.size()) {
      SummaryVector fNu = i < newton.trace.size() ? newton.trace[i].fNu
                                                  : applyEquations(fs, nus[i], interp);
      if (!vectorLeq(dom, nus[i], fNu, tol) || !vectorLeq(dom, fNu, nus[i + 1], tol))
        return false;
    }
  }
  return true;
}

void writeTraceCsv(std::ostream &out, const AnalysisResult &result,
                   const std::vector<std::string> &procNames) {
  out << "round,elapsed_ms";
  if (!result.perRoundSummaries.empty()) {
    const auto &first = result.perRoundSummaries.front();
    for (std::size_t i = 0; i < first.size(); ++i) {
      std::string name = i < procNames.size() ? procNames[i] : "P" + std::to_string(i);
      for (std::size_t k = 0; k < first[i].size(); ++k)
        out << ',' << name << '[' << k << ']';
    }
  }
  out << '\n';
  char buf[64];
  for (std::size_t r = 0; r < result.perRoundSummaries.size(); ++r) {
    double ms = r < result.elapsedMs.size() ? result.elapsedMs[r] : 0.0;
    std::snprintf(buf, sizeof buf, "%.3f", ms);
    out << r << ',' << buf;
    for (const auto &e : result.perRoundSummaries[r])
      for (double v : e) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << ',' << buf;
      }
    out << '\n';
  }
}

} // namespace npa
