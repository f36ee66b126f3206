#include "doctest.h"

#include "npa/domains.hpp"
#include "npa/frontend.hpp"
#include "npa/linearize.hpp"

#include <cmath>

using namespace npa;

namespace {

AlgTreeExpr one() { return alg::constant({1.0}); }

// X = ½ ⊕ ½·X·X
AlgTreeExpr quadratic() { return alg::prob(0.5, one(), alg::call(0, alg::call(0, one()))); }

// X = prob[⅓](1, call X (ndet(call X (1), 1)))
AlgTreeExpr ndetBody() {
  return alg::prob(1.0 / 3.0, one(), alg::call(0, alg::ndet(alg::call(0, one()), one())));
}

Element eval(const AlgTreeExpr &e, const OmegaPma &dom, const SummaryVector &nu,
             const Valuation &gamma = {}) {
  LpSolveStrategy strat;
  return interpret(e, gamma, nu, dom, strat);
}

/// Δ for the Newton step at ν: least Y with Y = (f(ν) ⊖ ν) ⊕ Df|ν(Y).
double newtonStep(const AlgTreeExpr &f, double nu) {
  RealDomain dom;
  LpSolveStrategy strat;
  Interpretation in{dom, strat};
  Element fnu = in(f, {}, {{nu}});
  auto df = multivariateDifferential({f}, {{nu}}, {}, in);
  EquationSystem sys;
  sys.names = {"Y"};
  sys.rhs = {alg::plus(alg::constant(dom.subtract(fnu, {nu})), df[0])};
  sys.kind = SystemKind::Linear;
  return solveLinearSystem(sys, {}, in).nu[0][0];
}

const char *kNested = R"(
proc main() begin
  while true do
    b1 ~ ber(0.5);
    while b1 || b2 do
      if prob(0.1) then return fi;
      if b1 then b1 ~ ber(0.2) else b2 ~ ber(0.8) fi
    od
  od
end
)";

} // namespace

TEST_CASE("interpretation of the quadratic system at zero") {
  RealDomain dom;
  CHECK(eval(quadratic(), dom, {{0.0}})[0] == doctest::Approx(0.5));
  CHECK(eval(quadratic(), dom, {{0.5}})[0] == doctest::Approx(0.625));
}

TEST_CASE("constants ignore the valuation and the summaries") {
  PairDomain dom("x");
  CHECK(eval(alg::constant({0.3, 0.7}), dom, {{0.9, 0.1}}) == Element{0.3, 0.7});
}

TEST_CASE("a μ-binder over the pair domain") {
  PairDomain dom("x");
  Element inc = dom.interpretAction("x := x + 1");
  CHECK(inc == Element{1.0, 1.0});
  auto e = alg::mu("Z", alg::prob(0.75, alg::seqConst(inc, alg::var("Z")), alg::constant(dom.one())));
  Element v = eval(e, dom, {});
  CHECK(v[0] == doctest::Approx(1.0));
  CHECK(v[1] == doctest::Approx(3.0));
}

TEST_CASE("conversion of program trees") {
  RealDomain reals;
  CHECK(alphaEqual(toAlgebraic(tree::eps(), reals), alg::constant({1.0})));
  MomentDomain moment(2);
  AlgTreeExpr r = toAlgebraic(tree::seq("reward(2)", tree::eps()), moment);
  CHECK(alphaEqual(r, alg::seqConst({1.0, 2.0, 4.0}, alg::constant(moment.one()))));
  BayesDomain bayes({"b1"});
  CHECK_THROWS_AS(toAlgebraic(tree::seq("q := 3", tree::eps()), bayes), Error);
}

TEST_CASE("conversion preserves meaning") {
  RealDomain dom;
  auto t = tree::prob(0.25, tree::seq("x := 1", tree::call(0, tree::eps())),
                      tree::ndet(tree::eps(), tree::call(0, tree::call(0, tree::eps()))));
  double nu = 0.6;
  double direct = 0.25 * nu + 0.75 * std::min(1.0, nu * nu);
  CHECK(eval(toAlgebraic(t, dom), dom, {{nu}})[0] == doctest::Approx(direct));
}

TEST_CASE("summary substitution") {
  RealDomain dom;
  AlgTreeExpr s = substituteSummaries(alg::call(0, alg::callLin(0, {0.5})), {{0.4}}, dom);
  CHECK_FALSE(containsCall(s));
  CHECK(eval(s, dom, {{0.0}})[0] == doctest::Approx(0.4 * 0.4 * 0.5));
}

TEST_CASE("linearity predicates") {
  CHECK_FALSE(isLinear(quadratic()));
  CHECK(isLinear(alg::plus(alg::callLin(0, {1.0}), one())));
  CHECK(usesLinearOnlySymbols(alg::minus(one(), one())));
  CHECK(containsMu(alg::mu("Z", alg::var("Z"))));
}

TEST_CASE("the differential of a constant is zero") {
  RealDomain dom;
  LpSolveStrategy strat;
  Interpretation in{dom, strat};
  AlgTreeExpr d = differentiate(alg::constant({0.7}), 0, {{0.3}}, {}, in);
  CHECK(eval(d, dom, {{5.0}})[0] == 0.0);
}

TEST_CASE("the differential of the quadratic system is ν·Y") {
  RealDomain dom;
  LpSolveStrategy strat;
  Interpretation in{dom, strat};
  for (double nu : {0.0, 0.25, 0.5, 0.9}) {
    auto d = multivariateDifferential({quadratic()}, {{nu}}, {}, in);
    REQUIRE(d.size() == 1);
    CHECK(isLinear(d[0]));
    for (double y : {0.0, 0.1, 0.7})
      CHECK(eval(d[0], dom, {{y}})[0] == doctest::Approx(nu * y));
  }
}

TEST_CASE("the ndet differential matches its piecewise closed form") {
  RealDomain dom;
  LpSolveStrategy strat;
  Interpretation in{dom, strat};
  for (double nu : {0.0, 1.0 / 3.0, 0.45}) {
    auto d = multivariateDifferential({ndetBody()}, {{nu}}, {}, in);
    for (double y : {0.0, 0.05, 0.3}) {
      double m = std::min(nu, 1.0);
      double expected = (2.0 / 3.0) * (y * m + nu * (std::min(nu + y, 1.0) - m));
      CHECK(eval(d[0], dom, {{y}})[0] == doctest::Approx(expected));
    }
  }
}

TEST_CASE("procedures that are never called contribute nothing") {
  RealDomain dom;
  LpSolveStrategy strat;
  Interpretation in{dom, strat};
  std::vector<AlgTreeExpr> fs{alg::call(1, one()), one()};
  auto d = multivariateDifferential(fs, {{0.2}, {0.3}}, {}, in);
  auto called = calledProcedures(d[0], 2);
  CHECK_FALSE(called[0]);
  CHECK(called[1]);
  CHECK_FALSE(calledProcedures(d[1], 2)[0]);
}

TEST_CASE("the differential of a μ-binder inside a condition") {
  BayesDomain dom({"b"});
  LpSolveStrategy strat;
  Interpretation in{dom, strat};
  Element c1 = dom.interpretAction("b ~ ber(0.5)");
  Element c2 = dom.interpretAction("b := false");
  // f = μZ. cond[b](call X (seq c1 Z), c2)
  AlgTreeExpr f = alg::mu("Z", alg::cond("b", alg::call(0, alg::seqConst(c1, alg::var("Z"))),
                                         alg::constant(c2)));
  Element nu{0.5, 0.0, 0.0, 0.5};
  Element fnu = in(f, {}, {nu});
  AlgTreeExpr d = differentiate(f, 0, {nu}, {}, in);
  AlgTreeExpr expected =
      alg::mu("Z", alg::cond("b",
                             alg::plus(alg::callLin(0, dom.extend(c1, fnu)),
                                       alg::seqConst(nu, alg::seqConst(c1, alg::var("Z")))),
                             alg::constant(dom.zero())));
  CHECK(alphaEqual(d, expected,
                   [](const AlgSymbol &a, const AlgSymbol &b) { return algSymbolNear(a, b, 1e-12); }));
}

TEST_CASE("newton steps on the ndet system") {
  for (double nu : {0.0, 1.0 / 3.0, 7.0 / 15.0, 0.49}) {
    double expected = (1 + 2 * nu * nu - 3 * nu) / (3 - 4 * nu);
    CHECK(newtonStep(ndetBody(), nu) == doctest::Approx(expected).epsilon(1e-10));
  }
  CHECK(newtonStep(ndetBody(), 1.0 / 3.0) == doctest::Approx(2.0 / 15.0).epsilon(1e-12));
}

TEST_CASE("a scalar geometric system") {
  RealDomain dom;
  LpSolveStrategy strat;
  Interpretation in{dom, strat};
  EquationSystem sys;
  sys.names = {"Y"};
  sys.rhs = {alg::plus(alg::constant({2.0 / 15.0}), alg::callLin(0, {4.0 / 9.0}))};
  sys.kind = SystemKind::LinearMuFree;
  CHECK(solveLinearSystem(sys, {}, in).nu[0][0] == doctest::Approx(0.24).epsilon(1e-12));

  sys.rhs = {alg::constant({0.0})};
  CHECK(solveLinearSystem(sys, {}, in).nu[0][0] == 0.0);
}

TEST_CASE("system kinds are checked") {
  EquationSystem sys;
  sys.names = {"Y"};
  sys.rhs = {quadratic()};
  sys.kind = SystemKind::Linear;
  CHECK_THROWS_AS(sys.check(), Error);
  sys.rhs = {alg::mu("Z", alg::prob(0.5, alg::var("Z"), one()))};
  CHECK_NOTHROW(sys.check());
  sys.kind = SystemKind::LinearMuFree;
  CHECK_THROWS_AS(sys.check(), Error);
}

TEST_CASE("normalizing a constant emits no equations") {
  FreshNames names;
  Normalized n = normalize(alg::constant({0.4}), {}, names);
  CHECK(alphaEqual(n.expr, alg::constant({0.4})));
  CHECK(n.equations.empty());
}

TEST_CASE("normalizing nested binders") {
  // μZ1. μZ2. prob[p](Z2, Z1)
  FreshNames names;
  Normalized n = normalize(alg::mu("Z1", alg::mu("Z2", alg::prob(0.3, alg::var("Z2"), alg::var("Z1")))),
                           {}, names);
  REQUIRE(n.equations.size() == 2);
  REQUIRE(n.expr.kind() == ExprKind::Var);
  const std::string outer = n.expr.name();
  const std::size_t o = n.equations[0].first == outer ? 0 : 1;
  const auto &outerRhs = n.equations[o].second;
  const auto &[inner, innerRhs] = n.equations[1 - o];
  CHECK(n.equations[o].first == outer);
  CHECK(outer.rfind("$mu", 0) == 0);
  CHECK(inner.rfind("$mu", 0) == 0);
  CHECK(alphaEqual(outerRhs, alg::var(inner)));
  CHECK(alphaEqual(innerRhs, alg::prob(0.3, alg::var(inner), alg::var(outer))));
}

TEST_CASE("normalizing the nested-loop program over the bayes domain") {
  auto ex = frontend::extractProgram(frontend::parse(kNested));
  BayesDomain dom({"b1", "b2"});
  AlgTreeExpr e = toAlgebraic(ex.bodies[0], dom);
  FreshNames names;
  Normalized n = normalize(e, {}, names);
  REQUIRE(n.equations.size() == 2);
  Element c1 = dom.interpretAction("b1 ~ ber(0.5)");
  Element c2 = dom.interpretAction("b1 ~ ber(0.2)");
  Element c3 = dom.interpretAction("b2 ~ ber(0.8)");
  const std::string z1 = n.expr.name();
  const std::size_t o = n.equations[0].first == z1 ? 0 : 1;
  const std::string z2 = n.equations[1 - o].first;
  REQUIRE(n.equations[o].first == z1);
  const AlgTreeExpr &rhs1 = n.equations[o].second;
  CHECK(alphaEqual(rhs1, alg::seqConst(c1, alg::var(z2))));
  AlgTreeExpr rhs2 = alg::cond(
      "b1 or b2",
      alg::prob(0.1, alg::constant(dom.one()),
                alg::cond("b1", alg::seqConst(c2, alg::var(z2)), alg::seqConst(c3, alg::var(z2)))),
      alg::var(z1));
  CHECK(alphaEqual(n.equations[1 - o].second, rhs2));

  // The least solution agrees with long Kleene iteration of the two equations.
  Valuation g{{z1, dom.zero()}, {z2, dom.zero()}};
  for (int k = 0; k < 10000; ++k) {
    Element a = eval(rhs1, dom, {}, g);
    Element b = eval(rhs2, dom, {}, g);
    g[z1] = a;
    g[z2] = b;
  }
  Element viaStrategy = eval(e, dom, {});
  CHECK(dom.distance(viaStrategy, g[z1]) < 1e-8);
}

TEST_CASE("fresh names do not collide with program variables") {
  FreshNames names;
  Normalized n = normalize(alg::mu("$mu0x", alg::prob(0.5, alg::var("$mu0x"), one())), {}, names);
  for (const auto &[name, rhs] : n.equations)
    CHECK(name != "$mu0x");
}
