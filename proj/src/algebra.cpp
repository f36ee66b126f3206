#include "npa/algebra.hpp"

#include "npa/linearize.hpp"
#include "npa/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace npa {

// ---------------------------------------------------------------------------
// OmegaPma defaults
// ---------------------------------------------------------------------------

void OmegaPma::checkElement(const Element &e) const {
  if (e.size() != dimension())
    throw Error(ErrorKind::InvalidInput, name() + ": element has dimension " +
                                             std::to_string(e.size()) + ", expected " +
                                             std::to_string(dimension()));
  for (double x : e) {
    if (std::isnan(x))
      throw Error(ErrorKind::InvalidInput, name() + ": element has a NaN entry");
    if (nonnegative() && x < 0.0)
      throw Error(ErrorKind::InvalidInput, name() + ": element has a negative entry");
  }
}

Element OmegaPma::combine(const Element &a, const Element &b) const {
  Element r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    r[i] = a[i] + b[i];
  return r;
}

Element OmegaPma::subtract(const Element &a, const Element &b) const {
  Element r(a.size());
  const double tol = subtractTolerance();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isinf(a[i]) && a[i] > 0) {
      r[i] = a[i];
      continue;
    }
    double d = a[i] - b[i];
    if (d < 0 && nonnegative()) {
      if (d < -tol * (1.0 + std::fabs(a[i]) + std::fabs(b[i])))
        throw Error(ErrorKind::SubtractUndefined,
                    name() + ": cannot subtract, component " + std::to_string(i) + " would be " +
                        std::to_string(d));
      d = 0.0;
    }
    r[i] = d;
  }
  return r;
}

Element OmegaPma::condChoice(const std::string &condition, const Element &a,
                             const Element &b) const {
  switch (condKind()) {
  case CondKind::Max:
    return maxWithDirections(a, b, condDirections(condition));
  case CondKind::Unsupported:
  case CondKind::Linear:
    break;
  }
  throw Error(ErrorKind::UnsupportedCondition,
              name() + " does not support conditional choice on '" + condition + "'");
}

Element OmegaPma::probChoice(double p, const Element &a, const Element &b) const {
  Element r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    // Skip zero-weighted operands so that 0·∞ does not produce NaN.
    double x = p == 0.0 ? 0.0 : p * a[i];
    double y = p == 1.0 ? 0.0 : (1.0 - p) * b[i];
    r[i] = x + y;
  }
  return r;
}

Element OmegaPma::ndetChoice(const Element &a, const Element &b) const {
  Element r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    r[i] = flavor() == Flavor::Min ? std::min(a[i], b[i]) : std::max(a[i], b[i]);
  return r;
}

bool OmegaPma::leq(const Element &a, const Element &b, double tol) const {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isinf(b[i]) && b[i] > 0)
      continue;
    if (a[i] > b[i] + tol * (1.0 + std::fabs(b[i])))
      return false;
  }
  return true;
}

double OmegaPma::distance(const Element &a, const Element &b) const {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i])
      continue;
    d = std::max(d, std::fabs(a[i] - b[i]));
  }
  return d;
}

std::string OmegaPma::render(const Element &e) const { return defaultElementText(e); }

MaxDirections OmegaPma::condDirections(const std::string &) const { return {}; }

// ---------------------------------------------------------------------------
// Tightened maximum
// ---------------------------------------------------------------------------

Element maxWithDirections(const Element &a, const Element &b, const MaxDirections &dirs) {
  const std::size_t d = a.size();
  Element r(d);
  for (std::size_t k = 0; k < d; ++k)
    r[k] = std::max(a[k], b[k]);
  if (dirs.thenDirections.empty() && dirs.elseDirections.empty())
    return r;

  auto plain = [&](std::size_t k) { return k < dirs.plainEntries.size() && dirs.plainEntries[k]; };

  // Group entries coupled by a common direction.
  std::vector<std::size_t> parent(d);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x)
      x = parent[x] = parent[parent[x]];
    return x;
  };
  struct Dir {
    const Element *vec;
    bool thenSide;
    std::size_t group = 0;
    bool used = false;
  };
  std::vector<Dir> all;
  for (const auto &v : dirs.thenDirections)
    all.push_back({&v, true});
  for (const auto &v : dirs.elseDirections)
    all.push_back({&v, false});
  for (auto &dir : all) {
    std::optional<std::size_t> first;
    for (std::size_t k = 0; k < d; ++k) {
      if ((*dir.vec)[k] == 0.0 || plain(k))
        continue;
      dir.used = true;
      if (!first)
        first = k;
      else
        parent[find(k)] = find(*first);
    }
    if (first)
      dir.group = *first;
  }
  for (auto &dir : all)
    if (dir.used)
      dir.group = find(dir.group);

  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < d; ++k)
    if (!plain(k))
      groups[find(k)].push_back(k);

  for (const auto &[root, entries] : groups) {
    std::vector<const Dir *> gd;
    for (const auto &dir : all)
      if (dir.used && dir.group == root)
        gd.push_back(&dir);
    if (gd.empty())
      continue;
    lp::LpProblem prob;
    std::map<std::size_t, std::size_t> tv;
    const double inf = std::numeric_limits<double>::infinity();
    for (std::size_t k : entries)
      tv[k] = prob.addVariable("T" + std::to_string(k), -inf);
    std::vector<std::size_t> mv;
    for (std::size_t q = 0; q < gd.size(); ++q)
      mv.push_back(prob.addVariable("c" + std::to_string(q)));
    for (std::size_t k : entries) {
      for (int side = 0; side < 2; ++side) {
        std::vector<lp::Term> terms{{tv[k], 1.0}};
        for (std::size_t q = 0; q < gd.size(); ++q)
          if (gd[q]->thenSide == (side == 0) && (*gd[q]->vec)[k] != 0.0)
            terms.push_back({mv[q], -(*gd[q]->vec)[k]});
        prob.addConstraint(std::move(terms), lp::Relation::Ge, side == 0 ? a[k] : b[k]);
      }
    }
    std::vector<lp::Term> obj;
    for (std::size_t k : entries)
      obj.push_back({tv[k], 1.0});
    prob.setObjective(lp::Sense::Minimize, obj);
    auto sol = lp::solveLp(prob);
    if (sol.status != lp::Status::Optimal)
      throw Error(ErrorKind::SolveFailure, std::string("tightened conditional bound is ") +
                                               lp::statusName(sol.status));
    for (std::size_t k : entries)
      r[k] = sol.values[tv[k]];
  }
  return r;
}

// ---------------------------------------------------------------------------
// Conversion and interpretation
// ---------------------------------------------------------------------------

AlgTreeExpr toAlgebraic(const TreeExpr &e, const OmegaPma &dom) {
  std::map<std::string, Element> actionCache;
  std::function<AlgTreeExpr(const TreeExpr &)> go = [&](const TreeExpr &t) -> AlgTreeExpr {
    switch (t.kind()) {
    case ExprKind::Var:
      return AlgTreeExpr::var(t.name());
    case ExprKind::Concat:
      return AlgTreeExpr::concat(go(t.left()), t.name(), go(t.right()));
    case ExprKind::Mu:
      return AlgTreeExpr::mu(t.name(), go(t.body()));
    case ExprKind::Leaf:
    case ExprKind::Node:
      break;
    }
    const Symbol &s = t.symbol();
    std::vector<AlgTreeExpr> kids;
    for (const auto &c : t.children())
      kids.push_back(go(c));
    if (std::holds_alternative<EpsSym>(s))
      return alg::constant(dom.one());
    if (auto a = std::get_if<SeqActSym>(&s)) {
      auto it = actionCache.find(a->action);
      if (it == actionCache.end())
        it = actionCache.emplace(a->action, dom.interpretAction(a->action)).first;
      return alg::seqConst(it->second, kids[0]);
    }
    if (auto c = std::get_if<CondSym>(&s))
      return alg::cond(c->condition, kids[0], kids[1]);
    if (auto p = std::get_if<ProbSym>(&s))
      return alg::prob(p->p, kids[0], kids[1]);
    if (std::holds_alternative<NdetSym>(s))
      return alg::ndet(kids[0], kids[1]);
    return alg::call(std::get<CallSym>(s).proc, kids[0]);
  };
  return go(e);
}

AlgTreeExpr substituteSummaries(const AlgTreeExpr &e, const SummaryVector &nu,
                                const OmegaPma &dom) {
  std::map<const void *, AlgTreeExpr> memo;
  std::function<AlgTreeExpr(const AlgTreeExpr &)> go = [&](const AlgTreeExpr &t) {
    auto it = memo.find(t.id());
    if (it != memo.end())
      return it->second;
    AlgTreeExpr r = t;
    switch (t.kind()) {
    case ExprKind::Var:
      break;
    case ExprKind::Concat:
      r = AlgTreeExpr::concat(go(t.left()), t.name(), go(t.right()));
      break;
    case ExprKind::Mu:
      r = AlgTreeExpr::mu(t.name(), go(t.body()));
      break;
    case ExprKind::Leaf:
      if (auto cl = std::get_if<CallLinSym>(&t.symbol()))
        r = alg::constant(dom.extend(nu.at(cl->proc), cl->rightConst));
      break;
    case ExprKind::Node: {
      std::vector<AlgTreeExpr> kids;
      for (const auto &c : t.children())
        kids.push_back(go(c));
      if (auto c = std::get_if<CallSym>(&t.symbol()))
        r = alg::seqConst(nu.at(c->proc), kids[0]);
      else
        r = AlgTreeExpr::node(t.symbol(), std::move(kids));
      break;
    }
    }
    memo.emplace(t.id(), r);
    return r;
  };
  return go(e);
}

namespace {

class Evaluator {
public:
  Evaluator(const Interpretation &in, const SummaryVector &nu, FreshNames &names)
      : in_(in), nu_(nu), names_(names) {}

  Element eval(const AlgTreeExpr &e, const Valuation &gamma) {
    const OmegaPma &dom = in_.dom;
    switch (e.kind()) {
    case ExprKind::Var: {
      auto it = gamma.find(e.name());
      if (it == gamma.end())
        throw Error(ErrorKind::InvalidInput, "no value for free variable " + e.name());
      return it->second;
    }
    case ExprKind::Concat: {
      Valuation g2 = gamma;
      g2[e.name()] = eval(e.right(), gamma);
      return eval(e.left(), g2);
    }
    case ExprKind::Mu:
      return evalMu(e, gamma);
    case ExprKind::Leaf:
    case ExprKind::Node:
      break;
    }
    const AlgSymbol &s = e.symbol();
    return std::visit(
        [&](const auto &sym) -> Element {
          using T = std::decay_t<decltype(sym)>;
          if constexpr (std::is_same_v<T, ConstSym>) {
            return sym.value;
          } else if constexpr (std::is_same_v<T, SeqConstSym>) {
            return dom.extend(sym.value, eval(e.children()[0], gamma));
          } else if constexpr (std::is_same_v<T, CondSym>) {
            return dom.condChoice(sym.condition, eval(e.children()[0], gamma),
                                  eval(e.children()[1], gamma));
          } else if constexpr (std::is_same_v<T, ProbSym>) {
            return dom.probChoice(sym.p, eval(e.children()[0], gamma),
                                  eval(e.children()[1], gamma));
          } else if constexpr (std::is_same_v<T, NdetSym>) {
            return dom.ndetChoice(eval(e.children()[0], gamma), eval(e.children()[1], gamma));
          } else if constexpr (std::is_same_v<T, CallSym>) {
            return dom.extend(summary(sym.proc), eval(e.children()[0], gamma));
          } else if constexpr (std::is_same_v<T, PlusSym>) {
            return dom.combine(eval(e.children()[0], gamma), eval(e.children()[1], gamma));
          } else if constexpr (std::is_same_v<T, MinusSym>) {
            return dom.subtract(eval(e.children()[0], gamma), eval(e.children()[1], gamma));
          } else {
            return dom.extend(summary(sym.proc), sym.rightConst);
          }
        },
        s);
  }

private:
  const Element &summary(std::size_t i) const {
    if (i >= nu_.size())
      throw Error(ErrorKind::InvalidInput,
                  "summary vector has no entry for procedure " + std::to_string(i + 1));
    return nu_[i];
  }

  Element evalMu(const AlgTreeExpr &e, const Valuation &gamma) {
    if (!e.body().hasFree(e.name()))
      return eval(e.body(), gamma);
    AlgTreeExpr lin = substituteSummaries(e, nu_, in_.dom);
    std::map<std::string, std::string> renaming;
    Normalized n = normalize(lin, renaming, names_);
    LinearSystem sys;
    for (auto &[name, rhs] : n.equations) {
      sys.unknowns.push_back(name);
      sys.rhs.push_back(rhs);
    }
    std::vector<Element> vals = in_.solve.solve(sys, gamma, in_.dom);
    Valuation g2 = gamma;
    for (std::size_t i = 0; i < sys.unknowns.size(); ++i)
      g2[sys.unknowns[i]] = vals[i];
    return eval(n.expr, g2);
  }

  const Interpretation &in_;
  const SummaryVector &nu_;
  FreshNames &names_;
};

} // namespace

Element Interpretation::operator()(const AlgTreeExpr &e, const Valuation &gamma,
                                   const SummaryVector &nu) const {
  FreshNames local;
  Evaluator ev(*this, nu, names ? *names : local);
  return ev.eval(e, gamma);
}

Element interpret(const AlgTreeExpr &e, const Valuation &gamma, const SummaryVector &nu,
                  const OmegaPma &dom, const SolveStrategy &solve) {
  Interpretation in{dom, solve, nullptr};
  return in(e, gamma, nu);
}

} // namespace npa
