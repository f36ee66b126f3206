#include "doctest.h"

#include "npa/error.hpp"
#include "npa/lp.hpp"
#include "properties.hpp"

#include <cmath>
#include <limits>

using namespace npa;
using namespace npa::lp;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

} // namespace

TEST_CASE("a textbook maximization") {
  LpProblem p;
  auto x = p.addVariable("x"), y = p.addVariable("y");
  p.addConstraint({{x, 1}}, Relation::Le, 4);
  p.addConstraint({{y, 2}}, Relation::Le, 12);
  p.addConstraint({{x, 3}, {y, 2}}, Relation::Le, 18);
  p.setObjective(Sense::Maximize, {{x, 3}, {y, 5}});
  LpSolution s = solveLp(p);
  REQUIRE(s.status == Status::Optimal);
  CHECK(s.objectiveValue == doctest::Approx(36));
  CHECK(s.values[x] == doctest::Approx(2));
  CHECK(s.values[y] == doctest::Approx(6));
  CHECK_FALSE(s.pivotColumns.empty());
}

TEST_CASE("a minimization with covering constraints") {
  LpProblem p;
  auto x = p.addVariable("x"), y = p.addVariable("y");
  p.addConstraint({{x, 1}, {y, 2}}, Relation::Ge, 4);
  p.addConstraint({{x, 3}, {y, 1}}, Relation::Ge, 6);
  p.setObjective(Sense::Minimize, {{x, 1}, {y, 1}});
  LpSolution s = solveLp(p);
  REQUIRE(s.status == Status::Optimal);
  CHECK(s.objectiveValue == doctest::Approx(2.8));
  CHECK(s.values[x] == doctest::Approx(1.6));
  CHECK(s.values[y] == doctest::Approx(1.2));
}

TEST_CASE("equality constraints") {
  LpProblem p;
  auto x = p.addVariable("x"), y = p.addVariable("y");
  p.addConstraint({{x, 1}, {y, 1}}, Relation::Eq, 1);
  p.setObjective(Sense::Maximize, {{x, 2}, {y, 1}});
  LpSolution s = solveLp(p);
  REQUIRE(s.status == Status::Optimal);
  CHECK(s.objectiveValue == doctest::Approx(2));
  CHECK(s.values[x] == doctest::Approx(1));
}

TEST_CASE("infeasible programs") {
  LpProblem p;
  auto x = p.addVariable("x");
  p.addConstraint({{x, 1}}, Relation::Le, 1);
  p.addConstraint({{x, 1}}, Relation::Ge, 2);
  p.setObjective(Sense::Minimize, {{x, 1}});
  CHECK(solveLp(p).status == Status::Infeasible);

  LpProblem q;
  auto a = q.addVariable("a", 0.0, 1.0);
  q.addConstraint({{a, 1}}, Relation::Eq, 3);
  CHECK(solveLp(q).status == Status::Infeasible);
}

TEST_CASE("unbounded programs") {
  LpProblem p;
  auto x = p.addVariable("x"), y = p.addVariable("y");
  p.addConstraint({{x, 1}, {y, -1}}, Relation::Le, 1);
  p.setObjective(Sense::Maximize, {{x, 1}});
  CHECK(solveLp(p).status == Status::Unbounded);

  LpProblem q;
  auto f = q.addVariable("f", -kInf);
  q.setObjective(Sense::Minimize, {{f, 1}});
  CHECK(solveLp(q).status == Status::Unbounded);
}

TEST_CASE("free variables and finite bounds") {
  LpProblem p;
  auto x = p.addVariable("x", -kInf);
  auto y = p.addVariable("y", -2.0, 2.5);
  p.addConstraint({{x, 1}}, Relation::Ge, -3);
  p.setObjective(Sense::Minimize, {{x, 1}, {y, -1}});
  LpSolution s = solveLp(p);
  REQUIRE(s.status == Status::Optimal);
  CHECK(s.values[x] == doctest::Approx(-3));
  CHECK(s.values[y] == doctest::Approx(2.5));
  CHECK(s.objectiveValue == doctest::Approx(-5.5));
}

TEST_CASE("a cycling-prone degenerate program terminates") {
  // Beale's example: the largest-coefficient rule cycles without safeguards.
  LpProblem p;
  auto x4 = p.addVariable("x4"), x5 = p.addVariable("x5"), x6 = p.addVariable("x6"),
       x7 = p.addVariable("x7");
  p.addConstraint({{x4, 0.25}, {x5, -8}, {x6, -1}, {x7, 9}}, Relation::Le, 0);
  p.addConstraint({{x4, 0.5}, {x5, -12}, {x6, -0.5}, {x7, 3}}, Relation::Le, 0);
  p.addConstraint({{x6, 1}}, Relation::Le, 1);
  p.setObjective(Sense::Maximize, {{x4, 0.75}, {x5, -20}, {x6, 0.5}, {x7, -6}});
  LpSolution s = solveLp(p);
  REQUIRE(s.status == Status::Optimal);
  CHECK(s.objectiveValue == doctest::Approx(1.25));
}

TEST_CASE("redundant equalities are tolerated") {
  LpProblem p;
  auto x = p.addVariable("x"), y = p.addVariable("y");
  p.addConstraint({{x, 1}, {y, 1}}, Relation::Eq, 2);
  p.addConstraint({{x, 2}, {y, 2}}, Relation::Eq, 4);
  p.setObjective(Sense::Maximize, {{x, 1}});
  LpSolution s = solveLp(p);
  REQUIRE(s.status == Status::Optimal);
  CHECK(s.values[x] == doctest::Approx(2));
}

TEST_CASE("the empty program") {
  LpProblem p;
  p.addVariable("x");
  p.setObjective(Sense::Minimize, {});
  LpSolution s = solveLp(p);
  REQUIRE(s.status == Status::Optimal);
  CHECK(s.objectiveValue == 0.0);
}

TEST_CASE("invalid programs are rejected") {
  LpProblem p;
  p.addVariable("x");
  p.addConstraint({{3, 1.0}}, Relation::Le, 1);
  CHECK_THROWS_AS(p.validate(), Error);

  LpProblem q;
  auto x = q.addVariable("x");
  q.addConstraint({{x, std::nan("")}}, Relation::Le, 1);
  CHECK_THROWS_AS(solveLp(q), Error);
}

TEST_CASE("cplex text rendering") {
  LpProblem p;
  auto x = p.addVariable("x", -kInf), y = p.addVariable("y", 0.0, 4.0);
  p.addConstraint({{x, 1}, {y, -2}}, Relation::Ge, 1, "link");
  p.setObjective(Sense::Maximize, {{y, 1}});
  std::string text = toCplexLp(p);
  CHECK(text.find("Maximize") != std::string::npos);
  CHECK(text.find("Subject To") != std::string::npos);
  CHECK(text.find("link:") != std::string::npos);
  CHECK(text.find("x free") != std::string::npos);
  CHECK(text.find("0 <= y <= 4") != std::string::npos);
}

TEST_CASE("simplex agrees with vertex enumeration on random programs") {
  props::Outcome o = props::checkSimplex(500, 99);
  INFO(o.summary());
  CHECK(o.ok());
}
