#include "properties.hpp"

#include "npa/domains.hpp"
#include "npa/frontend.hpp"
#include "npa/linearize.hpp"
#include "npa/lp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace npa::props {

void Outcome::fail(const std::string &what) {
  if (failures == 0)
    firstFailure = what;
  ++failures;
}

void Outcome::merge(const Outcome &other) {
  if (failures == 0 && other.failures > 0)
    firstFailure = other.firstFailure;
  cases += other.cases;
  failures += other.failures;
}

std::string Outcome::summary() const {
  std::ostringstream out;
  out << cases << " cases, " << failures << " failures";
  if (failures > 0)
    out << " (first: " << firstFailure << ")";
  return out.str();
}

namespace {

double uniform(Rng &rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

std::size_t pick(Rng &rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

bool chance(Rng &rng, double p) { return uniform(rng) < p; }

std::string text(const Element &e) { return defaultElementText(e); }

bool close(const Element &a, const Element &b, double tol = 1e-9) {
  if (a.size() != b.size())
    return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double scale = 1.0 + std::max(std::fabs(a[i]), std::fabs(b[i]));
    if (!(std::fabs(a[i] - b[i]) <= tol * scale))
      return false;
  }
  return true;
}

/// Mixes in 0̄ and 1̄ so that identities are exercised at their edges.
Element sample(const DomainFixture &fx, Rng &rng) {
  double u = uniform(rng);
  if (u < 0.08)
    return fx.dom->zero();
  if (u < 0.16)
    return fx.dom->one();
  return fx.element(rng);
}

/// Elements whose left multiplication is a contraction, so that linear
/// recursion through them has a finite least solution reached geometrically.
Element contraction(const DomainFixture &fx, Rng &rng) {
  Element e = fx.element(rng);
  double worst = 0.0;
  const std::size_t d = e.size();
  const std::size_t side = static_cast<std::size_t>(std::lround(std::sqrt(double(d))));
  if (fx.label == "bayes" || fx.label == "expinv") {
    for (std::size_t r = 0; r < side; ++r) {
      double row = 0.0;
      for (std::size_t c = 0; c < side; ++c)
        row += std::fabs(e[r * side + c]);
      worst = std::max(worst, row);
    }
  } else {
    worst = std::fabs(e[0]);
  }
  const double target = 0.6 * uniform(rng);
  if (worst > 0.0)
    for (double &v : e)
      v *= target / worst;
  return e;
}

// ---------------------------------------------------------------------------
// Direct evaluation with explicit iteration of μ binders
// ---------------------------------------------------------------------------

class IterativeEvaluator {
public:
  IterativeEvaluator(const OmegaPma &dom, const SummaryVector &nu) : dom_(dom), nu_(nu) {}

  Element eval(const AlgTreeExpr &e, const Valuation &env) const {
    switch (e.kind()) {
    case ExprKind::Var:
      return env.at(e.name());
    case ExprKind::Concat: {
      Valuation inner = env;
      inner[e.name()] = eval(e.right(), env);
      return eval(e.left(), inner);
    }
    case ExprKind::Mu: {
      Valuation inner = env;
      Element x = dom_.zero();
      for (int k = 0; k < 20000; ++k) {
        inner[e.name()] = x;
        Element y = eval(e.body(), inner);
        double scale = 0.0;
        for (double v : y)
          scale = std::max(scale, std::fabs(v));
        bool done = dom_.distance(x, y) <= 1e-15 * (1.0 + scale);
        x = std::move(y);
        if (done)
          break;
      }
      return x;
    }
    case ExprKind::Leaf:
    case ExprKind::Node:
      break;
    }
    const auto &kids = e.children();
    return std::visit(
        [&](const auto &sym) -> Element {
          using T = std::decay_t<decltype(sym)>;
          if constexpr (std::is_same_v<T, ConstSym>)
            return sym.value;
          else if constexpr (std::is_same_v<T, SeqConstSym>)
            return dom_.extend(sym.value, eval(kids[0], env));
          else if constexpr (std::is_same_v<T, CondSym>)
            return dom_.condChoice(sym.condition, eval(kids[0], env), eval(kids[1], env));
          else if constexpr (std::is_same_v<T, ProbSym>)
            return dom_.probChoice(sym.p, eval(kids[0], env), eval(kids[1], env));
          else if constexpr (std::is_same_v<T, NdetSym>)
            return dom_.ndetChoice(eval(kids[0], env), eval(kids[1], env));
          else if constexpr (std::is_same_v<T, CallSym>)
            return dom_.extend(nu_.at(sym.proc), eval(kids[0], env));
          else if constexpr (std::is_same_v<T, PlusSym>)
            return dom_.combine(eval(kids[0], env), eval(kids[1], env));
          else if constexpr (std::is_same_v<T, MinusSym>)
            return dom_.subtract(eval(kids[0], env), eval(kids[1], env));
          else
            return dom_.extend(nu_.at(sym.proc), sym.rightConst);
        },
        e.symbol());
  }

private:
  const OmegaPma &dom_;
  const SummaryVector &nu_;
};

double randomProbability(Rng &rng) { return std::round((0.05 + 0.9 * uniform(rng)) * 1000) / 1000; }

bool hasCond(const DomainFixture &fx) {
  return fx.dom->condKind() != CondKind::Unsupported && !fx.conditions.empty();
}

// ---------------------------------------------------------------------------
// Random expressions
// ---------------------------------------------------------------------------

/// μ-free expressions over the full alphabet with calls to `procs` procedures.
struct NonlinearShape {
  std::size_t procs = 1;
  bool ndet = true;
  bool cond = true;
};

AlgTreeExpr randomNonlinear(const DomainFixture &fx, Rng &rng, int depth, const NonlinearShape &shape) {
  if (depth == 0 || chance(rng, 0.2))
    return alg::constant(sample(fx, rng));
  auto sub = [&] { return randomNonlinear(fx, rng, depth - 1, shape); };
  std::size_t choice = pick(rng, 5);
  if ((choice == 2 && !shape.ndet) || (choice == 4 && !(shape.cond && hasCond(fx))))
    choice = 3;
  switch (choice) {
  case 0:
    return alg::seqConst(sample(fx, rng), sub());
  case 1: {
    double p = randomProbability(rng);
    AlgTreeExpr a = sub();
    return alg::prob(p, a, sub());
  }
  case 2: {
    AlgTreeExpr a = sub();
    return alg::ndet(a, sub());
  }
  case 3:
    return alg::call(pick(rng, shape.procs), sub());
  default: {
    const std::string &phi = fx.conditions[pick(rng, fx.conditions.size())];
    AlgTreeExpr a = sub();
    return alg::cond(phi, a, sub());
  }
  }
}

struct LinearGen {
  const DomainFixture &fx;
  Rng &rng;
  std::size_t procs;
  int counter = 0;

  AlgTreeExpr leaf(const std::vector<std::string> &scope) {
    double u = uniform(rng);
    if (!scope.empty() && u < 0.5)
      return alg::seqConst(contraction(fx, rng), alg::var(scope[pick(rng, scope.size())]));
    if (u < 0.75)
      return alg::constant(sample(fx, rng));
    return alg::callLin(pick(rng, procs), sample(fx, rng));
  }

  AlgTreeExpr gen(int depth, std::vector<std::string> scope, int binders) {
    if (depth == 0 || chance(rng, 0.15))
      return leaf(scope);
    std::size_t choices = hasCond(fx) ? 6 : 5;
    std::size_t c = pick(rng, choices);
    if ((c == 3 || c == 4) && binders == 0)
      c = 0;
    switch (c) {
    case 0:
      return alg::seqConst(contraction(fx, rng), gen(depth - 1, scope, binders));
    case 1:
      return alg::prob(randomProbability(rng), gen(depth - 1, scope, binders),
                       gen(depth - 1, scope, binders));
    case 2:
      return alg::ndet(gen(depth - 1, scope, binders), gen(depth - 1, scope, binders));
    case 3: {
      std::string z = "Z" + std::to_string(counter++);
      auto inner = scope;
      inner.push_back(z);
      return alg::mu(z, gen(depth - 1, inner, binders - 1));
    }
    case 4: {
      std::string z = "Z" + std::to_string(counter++);
      auto inner = scope;
      inner.push_back(z);
      AlgTreeExpr right = gen(depth - 1, scope, binders - 1);
      return alg::concat(gen(depth - 1, inner, binders - 1), z, right);
    }
    default:
      return alg::cond(fx.conditions[pick(rng, fx.conditions.size())],
                       gen(depth - 1, scope, binders), gen(depth - 1, scope, binders));
    }
  }
};

template <class F> void guarded(Outcome &out, const std::string &tag, F &&body) {
  try {
    body();
  } catch (const std::exception &e) {
    out.fail(tag + ": exception " + e.what());
  }
}

} // namespace

// ---------------------------------------------------------------------------
// Fixtures
// ---------------------------------------------------------------------------

std::vector<DomainFixture> standardFixtures() {
  std::vector<DomainFixture> out;
  out.push_back({"reals", std::make_shared<RealDomain>(),
                 [](Rng &rng) { return Element{2.0 * uniform(rng)}; },
                 {},
                 {"skip"}});
  out.push_back({"pair", std::make_shared<PairDomain>("x"),
                 [](Rng &rng) { return Element{uniform(rng), 3.0 * uniform(rng)}; },
                 {},
                 {"skip", "x := x + 1", "reward(2)"}});
  out.push_back({"bayes", std::make_shared<BayesDomain>(std::vector<std::string>{"b1", "b2"}),
                 [](Rng &rng) {
                   Element e(16);
                   for (double &v : e)
                     v = chance(rng, 0.3) ? 0.0 : uniform(rng);
                   return e;
                 },
                 {"b1", "not b1", "b1 and b2", "b1 or not b2"},
                 {"skip", "b1 := true", "b2 := false", "b1 ~ ber(0.3)", "b2 ~ ber(0.75)"}});
  out.push_back({"expinv", std::make_shared<ExpInvDomain>(std::vector<std::string>{"x", "y"}),
                 [](Rng &rng) {
                   Element e(9);
                   for (std::size_t i = 0; i < 9; ++i)
                     e[i] = (i == 3 || i == 6) ? 0.0 : 2.0 * uniform(rng);
                   return e;
                 },
                 {"x < y", "x >= 1"},
                 {"skip", "x := x + 1", "y := 2 * x + 3"}});
  out.push_back({"moment:2", std::make_shared<MomentDomain>(2),
                 [](Rng &rng) {
                   return Element{uniform(rng), 2.0 * uniform(rng), 4.0 * uniform(rng)};
                 },
                 {},
                 {"skip", "reward(1)", "reward(0.5)"}});
  return out;
}

// ---------------------------------------------------------------------------
// Algebra laws
// ---------------------------------------------------------------------------

Outcome checkAlgebraLaws(const DomainFixture &fx, std::size_t cases, std::uint64_t seed) {
  Outcome out;
  Rng rng(seed);
  const OmegaPma &D = *fx.dom;
  const Element zero = D.zero(), one = D.one();
  const double tol = 1e-9;

  for (const auto &act : fx.actions) {
    guarded(out, fx.label + " action " + act, [&] {
      Element a = D.interpretAction(act);
      D.checkElement(a);
      if (!close(D.extend(one, a), a) || !close(D.extend(a, one), a))
        out.fail(fx.label + ": 1 is not an identity for action " + act);
    });
  }

  for (std::size_t c = 0; c < cases; ++c) {
    ++out.cases;
    Element a = sample(fx, rng), b = sample(fx, rng), e = sample(fx, rng), d = sample(fx, rng);
    double p = uniform(rng);
    std::string tag = fx.label + " case " + std::to_string(c) + " a=" + text(a) + " b=" + text(b);
    const std::size_t before = out.failures;
    auto law = [&](bool holds, const char *what) {
      if (!holds && out.failures == before)
        out.fail(tag + ": " + what);
    };
    guarded(out, tag, [&] {
      // ⊕ is a commutative monoid with unit 0̄.
      law(close(D.combine(a, b), D.combine(b, a)), "combine is not commutative");
      law(close(D.combine(D.combine(a, b), e), D.combine(a, D.combine(b, e))),
          "combine is not associative");
      law(close(D.combine(a, zero), a), "0 is not a unit of combine");

      // ⊗ is a monoid with unit 1̄ and zero 0̄ that distributes over ⊕.
      law(close(D.extend(D.extend(a, b), e), D.extend(a, D.extend(b, e))),
          "extend is not associative");
      law(close(D.extend(one, a), a) && close(D.extend(a, one), a), "1 is not a unit of extend");
      law(close(D.extend(zero, a), zero) && close(D.extend(a, zero), zero),
          "0 does not annihilate");
      law(close(D.extend(a, D.combine(b, e)), D.combine(D.extend(a, b), D.extend(a, e))),
          "extend does not distribute on the left");
      law(close(D.extend(D.combine(a, b), e), D.combine(D.extend(a, e), D.extend(b, e))),
          "extend does not distribute on the right");

      // prob_p distributes over ⊕ and degenerates at 0 and 1.
      law(close(D.probChoice(p, D.combine(a, b), D.combine(e, d)),
                D.combine(D.probChoice(p, a, e), D.probChoice(p, b, d))),
          "prob does not distribute over combine");
      law(close(D.probChoice(1.0, a, b), a) && close(D.probChoice(0.0, a, b), b),
          "prob does not degenerate at 0 and 1");

      // Nondeterministic choice is a commutative idempotent bound.
      Element n = D.ndetChoice(a, b);
      law(close(n, D.ndetChoice(b, a)), "ndet is not commutative");
      law(close(D.ndetChoice(a, a), a), "ndet is not idempotent");
      if (D.flavor() == Flavor::Min)
        law(D.leq(n, a, tol) && D.leq(n, b, tol), "ndet is not below both operands");
      else
        law(D.leq(a, n, tol) && D.leq(b, n, tol), "ndet is not above both operands");

      if (hasCond(fx)) {
        const std::string &phi = fx.conditions[pick(rng, fx.conditions.size())];
        Element k = D.condChoice(phi, a, b);
        if (D.condDistributes()) {
          law(close(D.condChoice(phi, D.combine(a, b), D.combine(e, d)),
                    D.combine(D.condChoice(phi, a, e), D.condChoice(phi, b, d))),
              "cond does not distribute over combine");
          law(close(D.condChoice(phi, a, a), a), "cond is not idempotent");
        } else {
          law(D.leq(a, k, tol) && D.leq(b, k, tol), "cond is not an upper bound");
        }
      }

      // Subtraction recovers the difference.
      Element bd = D.combine(b, d);
      law(close(D.combine(b, D.subtract(bd, b)), bd), "subtract does not recombine");
      law(close(D.subtract(a, zero), a), "subtracting 0 changes the element");

      // ⊑ is compatible with ⊕ and every operator is monotone.
      Element a2 = D.combine(a, d);
      law(D.leq(a, a, 0.0) && D.leq(a, a2, tol), "a is not below a + d");
      law(D.leq(D.combine(a, b), D.combine(a2, b), tol), "combine is not monotone");
      law(D.leq(D.extend(a, b), D.extend(a2, b), tol) &&
              D.leq(D.extend(b, a), D.extend(b, a2), tol),
          "extend is not monotone");
      law(D.leq(D.probChoice(p, a, b), D.probChoice(p, a2, b), tol) &&
              D.leq(D.probChoice(p, b, a), D.probChoice(p, b, a2), tol),
          "prob is not monotone");
      law(D.leq(D.ndetChoice(a, b), D.ndetChoice(a2, b), tol), "ndet is not monotone");
      if (hasCond(fx)) {
        const std::string &phi = fx.conditions[pick(rng, fx.conditions.size())];
        law(D.leq(D.condChoice(phi, a, b), D.condChoice(phi, a2, b), tol) &&
                D.leq(D.condChoice(phi, b, a), D.condChoice(phi, b, a2), tol),
            "cond is not monotone");
      }

      if (fx.label == "expinv") {
        Element m = D.extend(a, b);
        law(m[3] == 0.0 && m[6] == 0.0, "extend leaves the block shape");
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Under-approximation of the linearization
// ---------------------------------------------------------------------------

Outcome checkUnderApproximation(const DomainFixture &fx, std::size_t cases, std::uint64_t seed) {
  Outcome out;
  Rng rng(seed);
  const OmegaPma &D = *fx.dom;
  LpSolveStrategy strat;
  Interpretation interp{D, strat};
  for (std::size_t c = 0; c < cases; ++c) {
    ++out.cases;
    // Single equations may use every operator. Sums of partial differentials
    // of a minimum or maximum can overshoot, so systems of two equations
    // avoid ndet. A cond that does not distribute over ⊕ is linearized
    // branchwise, which is not an under-approximation either.
    NonlinearShape shape;
    shape.cond = D.condDistributes();
    if (c % 2 == 1) {
      shape.procs = 2;
      shape.ndet = false;
    }
    const std::size_t procs = shape.procs;
    std::vector<AlgTreeExpr> fs;
    for (std::size_t i = 0; i < procs; ++i)
      fs.push_back(randomNonlinear(fx, rng, 4, shape));
    SummaryVector nu, delta, moved;
    for (std::size_t i = 0; i < procs; ++i) {
      nu.push_back(sample(fx, rng));
      delta.push_back(sample(fx, rng));
      moved.push_back(D.combine(nu.back(), delta.back()));
    }
    std::string tag = fx.label + " case " + std::to_string(c);
    guarded(out, tag, [&] {
      auto diffs = multivariateDifferential(fs, nu, Valuation{}, interp);
      for (std::size_t i = 0; i < procs; ++i) {
        Element lhs = D.combine(interp(fs[i], {}, nu), interp(diffs[i], {}, delta));
        Element rhs = interp(fs[i], {}, moved);
        if (!D.leq(lhs, rhs, 1e-9)) {
          out.fail(tag + ": f(nu) + Df(delta) = " + text(lhs) + " exceeds f(nu + delta) = " +
                   text(rhs) + " for " + toSexpr(fs[i], text));
          return;
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization soundness
// ---------------------------------------------------------------------------

Outcome checkNormalization(const DomainFixture &fx, std::size_t cases, std::uint64_t seed) {
  Outcome out;
  Rng rng(seed);
  const OmegaPma &D = *fx.dom;
  LpSolveStrategy strat;
  const std::size_t procs = 2;
  for (std::size_t c = 0; c < cases; ++c) {
    ++out.cases;
    LinearGen gen{fx, rng, procs};
    AlgTreeExpr e = gen.gen(5, {}, 2);
    SummaryVector nu{sample(fx, rng), sample(fx, rng)};
    std::string tag = fx.label + " case " + std::to_string(c) + " " + toSexpr(e, text);
    guarded(out, tag, [&] {
      Element expected = IterativeEvaluator(D, nu).eval(e, {});

      FreshNames names;
      Normalized n = normalize(substituteSummaries(e, nu, D), {}, names);
      if (containsMu(n.expr)) {
        out.fail(tag + ": normal form still has a binder");
        return;
      }
      LinearSystem sys;
      for (const auto &[name, rhs] : n.equations) {
        sys.unknowns.push_back(name);
        sys.rhs.push_back(rhs);
      }
      Valuation iota;
      if (!sys.unknowns.empty()) {
        auto values = strat.solve(sys, {}, D);
        for (std::size_t i = 0; i < values.size(); ++i)
          iota[sys.unknowns[i]] = values[i];
      }
      Element viaNormalForm = interpret(n.expr, iota, nu, D, strat);
      Element direct = interpret(e, {}, nu, D, strat);
      if (!close(viaNormalForm, expected, 1e-7) || !close(direct, expected, 1e-7))
        out.fail(tag + ": normal form gives " + text(viaNormalForm) + ", interpretation " +
                 text(direct) + ", iteration " + text(expected));
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elimination versus Kleene iteration of node equations
// ---------------------------------------------------------------------------

Outcome checkElimination(const DomainFixture &fx, std::size_t cases, std::uint64_t seed) {
  Outcome out;
  Rng rng(seed);
  const OmegaPma &D = *fx.dom;
  LpSolveStrategy strat;
  std::vector<Element> actionValues;
  for (const auto &a : fx.actions)
    actionValues.push_back(D.interpretAction(a));

  for (std::size_t c = 0; c < cases; ++c) {
    ++out.cases;
    const std::size_t k = 2 + pick(rng, 5);
    frontend::Cfhg g;
    for (std::size_t v = 0; v < k; ++v)
      g.nodes.push_back(v);
    g.entry = 0;
    g.exit = k - 1;
    std::vector<std::size_t> actionOf(k, 0);
    for (std::size_t v = 0; v + 1 < k; ++v) {
      frontend::HyperEdge edge;
      edge.source = v;
      std::size_t choices = hasCond(fx) ? 5 : 4;
      switch (pick(rng, choices)) {
      case 0:
        actionOf[v] = pick(rng, fx.actions.size());
        edge.command = SeqActSym{fx.actions[actionOf[v]]};
        break;
      case 1:
        edge.command = ProbSym{randomProbability(rng)};
        break;
      case 2:
        edge.command = NdetSym{};
        break;
      case 3:
        edge.command = CallSym{0};
        break;
      default:
        edge.command = CondSym{fx.conditions[pick(rng, fx.conditions.size())]};
        break;
      }
      for (std::size_t t = 0; t < arity(edge.command); ++t)
        edge.targets.push_back(pick(rng, k));
      g.edges.push_back(edge);
    }
    SummaryVector nu{contraction(fx, rng)};
    std::string tag = fx.label + " case " + std::to_string(c);

    guarded(out, tag, [&] {
      // Jacobi-style Kleene iteration directly on the graph.
      std::vector<Element> val(k, D.zero());
      val[k - 1] = D.one();
      for (int round = 0; round < 10000; ++round) {
        std::vector<Element> next = val;
        for (const auto &edge : g.edges) {
          const auto &t = edge.targets;
          next[edge.source] = std::visit(
              [&](const auto &sym) -> Element {
                using T = std::decay_t<decltype(sym)>;
                if constexpr (std::is_same_v<T, SeqActSym>)
                  return D.extend(actionValues[actionOf[edge.source]], val[t[0]]);
                else if constexpr (std::is_same_v<T, ProbSym>)
                  return D.probChoice(sym.p, val[t[0]], val[t[1]]);
                else if constexpr (std::is_same_v<T, NdetSym>)
                  return D.ndetChoice(val[t[0]], val[t[1]]);
                else if constexpr (std::is_same_v<T, CallSym>)
                  return D.extend(nu[0], val[t[0]]);
                else if constexpr (std::is_same_v<T, CondSym>)
                  return D.condChoice(sym.condition, val[t[0]], val[t[1]]);
                else
                  return D.one();
              },
              edge.command);
        }
        double dist = 0.0;
        for (std::size_t v = 0; v < k; ++v)
          dist = std::max(dist, D.distance(next[v], val[v]));
        val = std::move(next);
        if (dist == 0.0)
          break;
      }

      auto solved = frontend::bekicEliminate(frontend::extractEquations(g));
      const TreeExpr &entry = solved.at(frontend::nodeVar(g.entry));
      Element viaElimination = interpret(toAlgebraic(entry, D), {}, nu, D, strat);
      if (!close(viaElimination, val[0], 1e-6))
        out.fail(tag + ": elimination gives " + text(viaElimination) + ", iteration " +
                 text(val[0]) + " for " + toSexpr(entry));
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simplex versus vertex enumeration
// ---------------------------------------------------------------------------

Outcome checkSimplex(std::size_t cases, std::uint64_t seed) {
  Outcome out;
  Rng rng(seed);
  auto integer = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  for (std::size_t c = 0; c < cases; ++c) {
    ++out.cases;
    const std::size_t n = 1 + pick(rng, 4);
    const std::size_t m = pick(rng, 6);
    lp::LpProblem prob;
    struct Row {
      std::vector<double> a;
      lp::Relation rel;
      double b;
    };
    std::vector<Row> rows;
    for (std::size_t j = 0; j < n; ++j) {
      double lo = chance(rng, 0.5) ? 0.0 : -3.0;
      double hi = lo + integer(1, 10);
      prob.addVariable("x" + std::to_string(j), lo, hi);
      std::vector<double> unit(n, 0.0);
      unit[j] = 1.0;
      rows.push_back({unit, lp::Relation::Ge, lo});
      rows.push_back({unit, lp::Relation::Le, hi});
    }
    for (std::size_t i = 0; i < m; ++i) {
      Row r{std::vector<double>(n), lp::Relation::Le, double(integer(-10, 20))};
      std::vector<lp::Term> terms;
      for (std::size_t j = 0; j < n; ++j) {
        r.a[j] = integer(-5, 5);
        if (r.a[j] != 0.0)
          terms.push_back({j, r.a[j]});
      }
      std::size_t rel = pick(rng, 5);
      r.rel = rel < 2 ? lp::Relation::Le : rel < 4 ? lp::Relation::Ge : lp::Relation::Eq;
      prob.addConstraint(terms, r.rel, r.b);
      rows.push_back(r);
    }
    std::vector<double> obj(n);
    std::vector<lp::Term> objTerms;
    for (std::size_t j = 0; j < n; ++j) {
      obj[j] = integer(-5, 5);
      objTerms.push_back({j, obj[j]});
    }
    const lp::Sense sense = chance(rng, 0.5) ? lp::Sense::Maximize : lp::Sense::Minimize;
    prob.setObjective(sense, objTerms);

    auto feasible = [&](const Eigen::VectorXd &x) {
      for (const auto &r : rows) {
        double lhs = 0.0;
        for (std::size_t j = 0; j < n; ++j)
          lhs += r.a[j] * x[j];
        double slack = 1e-7 * (1.0 + std::fabs(r.b));
        if ((r.rel == lp::Relation::Le && lhs > r.b + slack) ||
            (r.rel == lp::Relation::Ge && lhs < r.b - slack) ||
            (r.rel == lp::Relation::Eq && std::fabs(lhs - r.b) > slack))
          return false;
      }
      return true;
    };

    // Every vertex of the bounded polyhedron has n linearly independent tight rows.
    std::optional<double> best;
    std::vector<std::size_t> idx(n);
    std::function<void(std::size_t, std::size_t)> choose = [&](std::size_t pos, std::size_t from) {
      if (pos == n) {
        Eigen::MatrixXd A(n, n);
        Eigen::VectorXd b(n);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < n; ++j)
            A(i, j) = rows[idx[i]].a[j];
          b[i] = rows[idx[i]].b;
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
        if (lu.rank() < static_cast<Eigen::Index>(n))
          return;
        Eigen::VectorXd x = lu.solve(b);
        if (!feasible(x))
          return;
        double v = 0.0;
        for (std::size_t j = 0; j < n; ++j)
          v += obj[j] * x[j];
        if (!best || (sense == lp::Sense::Maximize ? v > *best : v < *best))
          best = v;
        return;
      }
      for (std::size_t r = from; r < rows.size(); ++r) {
        idx[pos] = r;
        choose(pos + 1, r + 1);
      }
    };
    choose(0, 0);

    std::string tag = "lp case " + std::to_string(c);
    guarded(out, tag, [&] {
      lp::LpSolution sol = lp::solveLp(prob);
      if (!best) {
        if (sol.status != lp::Status::Infeasible)
          out.fail(tag + ": enumeration finds no vertex but simplex reports " +
                   lp::statusName(sol.status) + "\n" + lp::toCplexLp(prob));
        return;
      }
      if (sol.status != lp::Status::Optimal) {
        out.fail(tag + ": simplex reports " + std::string(lp::statusName(sol.status)) +
                 " but the optimum is " + std::to_string(*best) + "\n" + lp::toCplexLp(prob));
        return;
      }
      Eigen::VectorXd x(n);
      for (std::size_t j = 0; j < n; ++j)
        x[j] = sol.values[j];
      if (!feasible(x) || std::fabs(sol.objectiveValue - *best) > 1e-6 * (1.0 + std::fabs(*best)))
        out.fail(tag + ": simplex objective " + std::to_string(sol.objectiveValue) +
                 " versus enumeration " + std::to_string(*best) + "\n" + lp::toCplexLp(prob));
    });
  }
  return out;
}

} // namespace npa::props
