#include "doctest.h"

#include "npa/cli.hpp"
#include "npa/domains.hpp"

#include <cmath>
#include <numeric>

using namespace npa;

namespace {

const std::string kSource = NPA_SOURCE_DIR;

cli::RunOutcome runText(const std::string &text, const std::string &domain) {
  cli::RunSpec spec;
  spec.inputText = text;
  spec.domain = parseDomainTag(domain);
  return cli::runAnalysis(spec);
}

/// (constant, then one coefficient per variable) of the bound on column `col`.
std::vector<double> column(const ExpInvDomain &dom, const Element &e, std::size_t col) {
  std::size_t n = dom.variables().size() + 1;
  std::vector<double> out;
  for (std::size_t r = 0; r < n; ++r)
    out.push_back(e[r * n + col]);
  return out;
}

void checkColumn(const std::vector<double> &got, const std::vector<double> &want) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i)
    CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-9));
}

} // namespace

TEST_CASE("domain tags") {
  CHECK(parseDomainTag("reals").kind == DomainTag::Kind::Reals);
  DomainTag m = parseDomainTag("moment:3");
  CHECK(m.kind == DomainTag::Kind::Moment);
  CHECK(m.momentOrder == 3);
  CHECK(m.text() == "moment:3");
  CHECK_THROWS_AS(parseDomainTag("moment:x"), Error);
  CHECK_THROWS_AS(parseDomainTag("integers"), Error);
}

TEST_CASE("real operations") {
  RealDomain d;
  CHECK(d.extend({0.5}, {0.4}) == Element{0.2});
  CHECK(d.ndetChoice({0.5}, {0.4}) == Element{0.4});
  CHECK(d.probChoice(0.25, {1.0}, {0.0})[0] == doctest::Approx(0.25));
  CHECK(d.interpretAction("x := 7") == Element{1.0});
  CHECK_THROWS_AS(d.subtract({0.1}, {0.5}), Error);
  CHECK(d.subtract({0.5}, {0.5 + 1e-13}) == Element{0.0});
}

TEST_CASE("pair operations") {
  PairDomain d("x");
  CHECK(d.extend({0.5, 1.0}, {0.4, 2.0}) == Element{0.2, 0.5 * 2.0 + 0.4 * 1.0});
  CHECK(d.interpretAction("x := x + 3") == Element{1.0, 3.0});
  CHECK(d.interpretAction("y := y + 3") == Element{1.0, 0.0});
  CHECK(d.interpretAction("reward(2)") == Element{1.0, 2.0});
  CHECK(PairDomain::incrementedVariables({"x := x + 1", "y := 2", "z := z + 4"}) ==
        std::vector<std::string>{"x", "z"});
}

TEST_CASE("bayes sampling matrices") {
  BayesDomain d({"b2", "b1"});
  CHECK(d.variables() == std::vector<std::string>{"b1", "b2"});
  CHECK(d.stateLabel(0) == "TT");
  CHECK(d.stateLabel(1) == "TF");
  CHECK(d.stateLabel(2) == "FT");
  CHECK(d.stateLabel(3) == "FF");
  for (double p : {0.0, 0.5, 1.0, 0.3}) {
    Element m = d.interpretAction("b1 ~ ber(" + std::to_string(p) + ")");
    // Row s moves to b1 = T with probability p and keeps b2.
    Element want{p, 0, 1 - p, 0, 0, p, 0, 1 - p, p, 0, 1 - p, 0, 0, p, 0, 1 - p};
    for (std::size_t i = 0; i < 16; ++i)
      CHECK(m[i] == doctest::Approx(want[i]));
    for (std::size_t r = 0; r < 4; ++r)
      CHECK(m[4 * r] + m[4 * r + 1] + m[4 * r + 2] + m[4 * r + 3] == doctest::Approx(1.0));
  }
  Element set = d.interpretAction("b2 := false");
  Element want{0, 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 1, 0, 0, 0, 1};
  CHECK(set == want);
  CHECK_THROWS_AS(d.interpretAction("b3 := true"), Error);
}

TEST_CASE("bayes conditions project rows") {
  BayesDomain d({"b1", "b2"});
  CHECK(d.conditionMask("b1 or b2") == std::vector<bool>{true, true, true, false});
  CHECK(d.conditionMask("not b1 and b2") == std::vector<bool>{false, false, true, false});
  Element a(16, 1.0), b(16, 2.0);
  Element c = d.condChoice("b1", a, b);
  CHECK(c[0] == 1.0);
  CHECK(c[7] == 1.0);
  CHECK(c[8] == 2.0);
  CHECK(c[15] == 2.0);
}

TEST_CASE("the bayes strategy agrees with a dense linear solve") {
  // Z = c ⊕ A·Z with A = ½·(b1 ~ ber(0.3)), c = ½·(b2 := true).
  BayesDomain d({"b1", "b2"});
  Element a = d.interpretAction("b1 ~ ber(0.3)");
  Element c = d.interpretAction("b2 := true");
  LinearSystem sys;
  sys.unknowns = {"Z"};
  sys.rhs = {alg::prob(0.5, alg::seqConst(a, alg::var("Z")), alg::constant(c))};
  LpSolveStrategy strat;
  Element z = strat.solve(sys, {}, d)[0];
  // (I − ½A)Z = ½C by Gauss–Jordan elimination.
  std::vector<std::vector<double>> m(4, std::vector<double>(8, 0.0));
  for (int r = 0; r < 4; ++r)
    for (int k = 0; k < 4; ++k) {
      m[r][k] = (r == k ? 1.0 : 0.0) - 0.5 * a[4 * r + k];
      m[r][4 + k] = 0.5 * c[4 * r + k];
    }
  for (int col = 0; col < 4; ++col) {
    double piv = m[col][col];
    for (auto &v : m[col])
      v /= piv;
    for (int r = 0; r < 4; ++r)
      if (r != col) {
        double f = m[r][col];
        for (int k = 0; k < 8; ++k)
          m[r][k] -= f * m[col][k];
      }
  }
  for (int r = 0; r < 4; ++r)
    for (int k = 0; k < 4; ++k)
      CHECK(z[4 * r + k] == doctest::Approx(m[r][4 + k]).epsilon(1e-10));
}

TEST_CASE("the identity system") {
  BayesDomain d({"b1", "b2"});
  LinearSystem sys;
  sys.unknowns = {"Z"};
  sys.rhs = {alg::constant(d.one())};
  LpSolveStrategy strat;
  CHECK(strat.solve(sys, {}, d)[0] == d.one());
  LinearSystem empty;
  CHECK(strat.solve(empty, {}, d).empty());
}

TEST_CASE("moment convolution") {
  MomentDomain d(2);
  Element u{1.0, 2.0, 3.0}, v{0.5, 1.0, 4.0};
  CHECK(d.extend(u, v) == Element{0.5, 1.0 * 1.0 + 2.0 * 0.5, 4.0 + 2 * 2.0 * 1.0 + 3.0 * 0.5});
  CHECK(d.interpretAction("reward(3)") == Element{1.0, 3.0, 9.0});
  CHECK(d.interpretAction("x := 4") == d.one());
  CHECK(d.ndetChoice({1, 2, 3}, {2, 1, 3}) == Element{2, 2, 3});
}

TEST_CASE("moments of a geometric reward") {
  auto out = runText("proc main() begin while prob(3/4) do reward(1) od end", "moment:2");
  Element v = out.report.values[0];
  CHECK(v[0] == doctest::Approx(1.0));
  CHECK(v[1] == doctest::Approx(3.0));
  // E[R²] = p(1 + p)/(1 − p)² for a geometric count with continuation p.
  CHECK(v[2] == doctest::Approx(0.75 * 1.75 / 0.0625));
}

TEST_CASE("moment programs with conditions are rejected") {
  CHECK_THROWS_AS(
      runText("proc main() begin if x < 1 then reward(1) else skip fi end", "moment:1"), Error);
}

TEST_CASE("expectation-invariant actions") {
  ExpInvDomain d({"y", "x"});
  CHECK(d.variables() == std::vector<std::string>{"x", "y"});
  Element a = d.interpretAction("x := 2*x - y + 3");
  checkColumn(column(d, a, d.indexOf("x")), {3, 2, -1});
  checkColumn(column(d, a, d.indexOf("y")), {0, 0, 1});
  checkColumn(column(d, a, 0), {1, 0, 0});
  CHECK(d.boundCoefficients(a, "x") == std::vector<double>{3, 2, -1});
}

TEST_CASE("the first newton round of the recursive expectation program") {
  cli::RunSpec spec;
  spec.inputPath = kSource + "/benchmarks/non-linear-recursion.npa";
  spec.domain = parseDomainTag("expinv");
  spec.recordTrace = true;
  auto out = cli::runAnalysis(spec);
  auto &dom = dynamic_cast<ExpInvDomain &>(*out.domain);
  REQUIRE(out.newton);
  REQUIRE_FALSE(out.newton->trace.empty());
  const Element &delta0 = out.newton->trace[0].Delta[0];
  // Columns t and x; rows are (1, t, x).
  checkColumn(column(dom, delta0, dom.indexOf("x")), {0, 0, 2.0 / 3.0});
  checkColumn(column(dom, delta0, dom.indexOf("t")), {13.0 / 6.0, 0, 1.0 / 3.0});
  const Element &last = out.report.values[0];
  checkColumn(column(dom, last, dom.indexOf("x")), {1.0 / 6.0, 0, 2.0 / 3.0});
  checkColumn(column(dom, last, dom.indexOf("t")), {7.0 / 3.0, 1, 1.0 / 3.0});
}

TEST_CASE("conditions without rewrites take the entrywise maximum") {
  ExpInvDomain d({"x"});
  Element a = d.fromRows({{1, 2}, {0, -1}});
  Element b = d.fromRows({{0.5, -3}, {0, 4}});
  CHECK(d.condChoice("x < 1", a, b) == d.fromRows({{1, 2}, {0, 4}}));
}

TEST_CASE("a vanishing rewrite tightens the bound") {
  std::vector<RewriteDecl> rw{{"x - y < n", true, "n - x + y - 1", false},
                              {"x - y < n", false, "n - x + y", true}};
  ExpInvDomain d({"n", "t", "x", "y"}, rw);
  auto identity = [&](std::vector<double> tColumn) {
    std::vector<std::vector<double>> rows(5, std::vector<double>(5, 0.0));
    for (std::size_t i = 0; i < 5; ++i)
      rows[i][i] = 1.0;
    for (std::size_t r = 0; r < 5; ++r)
      rows[r][d.indexOf("t")] = tColumn[r];
    return d.fromRows(rows);
  };
  // then: E[t'] ≤ t + 2n − 2x + 2y, else: E[t'] ≤ t
  Element a = identity({0, 2, 1, -2, 2});
  Element b = identity({0, 0, 1, 0, 0});
  Element c = d.condChoice("x - y < n", a, b);
  checkColumn(column(d, c, d.indexOf("t")), {0, 2, 1, -2, 2});

  ExpInvDomain plain({"n", "t", "x", "y"});
  Element m = plain.condChoice("x - y < n", a, b);
  checkColumn(column(plain, m, plain.indexOf("t")), {0, 2, 1, 0, 2});
}

TEST_CASE("rewrite declarations parse from json") {
  auto rw = parseRewriteJson(
      R"([{"conditionText": "x < n", "branch": "else", "expr": "n - x", "kind": "vanishing"}])");
  REQUIRE(rw.size() == 1);
  CHECK(rw[0].condition == "x < n");
  CHECK_FALSE(rw[0].thenBranch);
  CHECK(rw[0].vanishing);
  CHECK_THROWS_AS(parseRewriteJson(R"([{"branch": "sideways"}])"), Error);
}

TEST_CASE("the partial-correctness seed") {
  ExpInvDomain d({"t", "x"});
  Element w = d.warmStart({"t := t + 1", "x := 0"});
  checkColumn(column(d, w, 0), {1, 0, 0});
  checkColumn(column(d, w, d.indexOf("t")), {0, 1, 0});
  checkColumn(column(d, w, d.indexOf("x")), {0, 0, 0});
}

TEST_CASE("elements are validated") {
  RealDomain r;
  CHECK_THROWS_AS(r.checkElement({0.1, 0.2}), Error);
  CHECK_THROWS_AS(r.checkElement({-1.0}), Error);
  CHECK_THROWS_AS(r.checkElement({std::nan("")}), Error);
  CHECK_NOTHROW(r.checkElement({0.3}));
}
