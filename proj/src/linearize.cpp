#include "npa/linearize.hpp"

#include <functional>

namespace npa {

void EquationSystem::check() const {
  if (names.size() != rhs.size())
    throw Error(ErrorKind::InvalidInput, "equation system has mismatched names and right-hand sides");
  if (kind == SystemKind::General)
    return;
  for (std::size_t i = 0; i < rhs.size(); ++i) {
    if (!isLinear(rhs[i]))
      throw Error(ErrorKind::InvalidInput, "equation for " + names[i] + " is not linear");
    if (kind == SystemKind::LinearMuFree && containsMu(rhs[i]))
      throw Error(ErrorKind::InvalidInput, "equation for " + names[i] + " contains a binder");
  }
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

namespace {

class Normalizer {
public:
  explicit Normalizer(FreshNames &names) : names_(names) {}

  AlgTreeExpr go(const AlgTreeExpr &e, const std::map<std::string, std::string> &ren) {
    switch (e.kind()) {
    case ExprKind::Var: {
      auto it = ren.find(e.name());
      return it == ren.end() ? e : AlgTreeExpr::var(it->second);
    }
    case ExprKind::Leaf:
      return e;
    case ExprKind::Concat: {
      AlgTreeExpr right = go(e.right(), ren);
      std::string z = names_.next();
      equations.emplace_back(z, right);
      auto inner = ren;
      inner[e.name()] = z;
      return go(e.left(), inner);
    }
    case ExprKind::Mu: {
      std::string z = names_.next();
      auto inner = ren;
      inner[e.name()] = z;
      AlgTreeExpr body = go(e.body(), inner);
      equations.emplace_back(z, body);
      return AlgTreeExpr::var(z);
    }
    case ExprKind::Node:
      break;
    }
    if (!needsWork(e, ren))
      return e;
    std::vector<AlgTreeExpr> kids;
    for (const auto &c : e.children())
      kids.push_back(go(c, ren));
    return AlgTreeExpr::node(e.symbol(), std::move(kids));
  }

  std::vector<std::pair<std::string, AlgTreeExpr>> equations;

private:
  bool hasBinder(const AlgTreeExpr &e) {
    auto it = binder_.find(e.id());
    if (it != binder_.end())
      return it->second;
    bool r = e.kind() == ExprKind::Mu || e.kind() == ExprKind::Concat;
    if (!r && e.kind() == ExprKind::Node)
      for (const auto &c : e.children())
        if (hasBinder(c)) {
          r = true;
          break;
        }
    binder_[e.id()] = r;
    return r;
  }

  bool needsWork(const AlgTreeExpr &e, const std::map<std::string, std::string> &ren) {
    if (hasBinder(e))
      return true;
    for (const auto &v : e.freeVars())
      if (ren.count(v))
        return true;
    return false;
  }

  FreshNames &names_;
  std::map<const void *, bool> binder_;
};

} // namespace

Normalized normalize(const AlgTreeExpr &e, const std::map<std::string, std::string> &renaming,
                     FreshNames &names) {
  Normalizer n(names);
  AlgTreeExpr f = n.go(e, renaming);
  return Normalized{f, std::move(n.equations)};
}

// ---------------------------------------------------------------------------
// Differentiation
// ---------------------------------------------------------------------------

std::vector<bool> calledProcedures(const AlgTreeExpr &e, std::size_t n) {
  std::vector<bool> out(n, false);
  std::set<const void *> seen;
  std::function<void(const AlgTreeExpr &)> go = [&](const AlgTreeExpr &t) {
    if (!seen.insert(t.id()).second)
      return;
    switch (t.kind()) {
    case ExprKind::Var:
      return;
    case ExprKind::Concat:
      go(t.left());
      go(t.right());
      return;
    case ExprKind::Mu:
      go(t.body());
      return;
    case ExprKind::Leaf:
    case ExprKind::Node:
      break;
    }
    if (auto c = std::get_if<CallSym>(&t.symbol()); c && c->proc < n)
      out[c->proc] = true;
    if (auto c = std::get_if<CallLinSym>(&t.symbol()); c && c->proc < n)
      out[c->proc] = true;
    for (const auto &k : t.children())
      go(k);
  };
  go(e);
  return out;
}

Differentiator::Differentiator(const Interpretation &interp, SummaryVector nu)
    : interp_(interp), nu_(std::move(nu)) {}

Element Differentiator::value(const AlgTreeExpr &e, const Valuation &gamma) {
  if (!e.closed())
    return interp_(e, gamma, nu_);
  auto it = cache_.find(e.id());
  if (it != cache_.end())
    return it->second;
  Element v = interp_(e, gamma, nu_);
  keepAlive_.push_back(e);
  cache_.emplace(e.id(), v);
  return v;
}

AlgTreeExpr Differentiator::diff(const AlgTreeExpr &f, std::size_t j, const Valuation &gamma) {
  const OmegaPma &dom = interp_.dom;
  switch (f.kind()) {
  case ExprKind::Var:
    return f;
  case ExprKind::Concat: {
    Valuation g2 = gamma;
    g2[f.name()] = value(f.right(), gamma);
    return AlgTreeExpr::concat(diff(f.left(), j, g2), f.name(), diff(f.right(), j, gamma));
  }
  case ExprKind::Mu: {
    Valuation g2 = gamma;
    g2[f.name()] = value(f, gamma);
    return AlgTreeExpr::mu(f.name(), diff(f.body(), j, g2));
  }
  case ExprKind::Leaf:
  case ExprKind::Node:
    break;
  }
  const AlgSymbol &s = f.symbol();
  if (std::holds_alternative<ConstSym>(s))
    return alg::constant(dom.zero());
  if (std::holds_alternative<PlusSym>(s) || std::holds_alternative<MinusSym>(s) ||
      std::holds_alternative<CallLinSym>(s))
    throw Error(ErrorKind::InvalidInput, "cannot differentiate an already linearized expression");
  const auto &kids = f.children();
  if (auto sc = std::get_if<SeqConstSym>(&s))
    return alg::seqConst(sc->value, diff(kids[0], j, gamma));
  if (auto c = std::get_if<CallSym>(&s)) {
    AlgTreeExpr inner = alg::seqConst(nu_.at(c->proc), diff(kids[0], j, gamma));
    if (c->proc != j)
      return inner;
    return alg::plus(alg::callLin(j, value(kids[0], gamma)), inner);
  }
  if (auto c = std::get_if<CondSym>(&s))
    return alg::cond(c->condition, diff(kids[0], j, gamma), diff(kids[1], j, gamma));
  if (auto p = std::get_if<ProbSym>(&s))
    return alg::prob(p->p, diff(kids[0], j, gamma), diff(kids[1], j, gamma));
  // Ndet: (g(ν) ⊕ Dg) ndet (h(ν) ⊕ Dh) ⊖ f(ν).
  AlgTreeExpr left = alg::plus(alg::constant(value(kids[0], gamma)), diff(kids[0], j, gamma));
  AlgTreeExpr right = alg::plus(alg::constant(value(kids[1], gamma)), diff(kids[1], j, gamma));
  return alg::minus(alg::ndet(left, right), alg::constant(value(f, gamma)));
}

AlgTreeExpr Differentiator::differentiate(const AlgTreeExpr &f, std::size_t j,
                                          const Valuation &gamma) {
  return diff(f, j, gamma);
}

std::vector<AlgTreeExpr> Differentiator::multivariate(const std::vector<AlgTreeExpr> &fs,
                                                      const Valuation &gamma) {
  std::vector<AlgTreeExpr> out;
  const std::size_t n = nu_.size();
  for (const auto &f : fs) {
    std::vector<bool> called = calledProcedures(f, n);
    std::optional<AlgTreeExpr> acc;
    for (std::size_t j = 0; j < n; ++j) {
      if (!called[j])
        continue;
      AlgTreeExpr d = diff(f, j, gamma);
      acc = acc ? alg::plus(*acc, d) : d;
    }
    out.push_back(acc ? *acc : alg::constant(interp_.dom.zero()));
  }
  return out;
}

AlgTreeExpr differentiate(const AlgTreeExpr &f, std::size_t j, const SummaryVector &nu,
                          const Valuation &gamma, const Interpretation &interp) {
  Differentiator d(interp, nu);
  return d.differentiate(f, j, gamma);
}

std::vector<AlgTreeExpr> multivariateDifferential(const std::vector<AlgTreeExpr> &fs,
                                                  const SummaryVector &nu,
                                                  const Valuation &gamma,
                                                  const Interpretation &interp) {
  Differentiator d(interp, nu);
  return d.multivariate(fs, gamma);
}

// ---------------------------------------------------------------------------
// Three-step linear solve
// ---------------------------------------------------------------------------

LinearSolution solveLinearSystem(const EquationSystem &sys, const Valuation &gamma,
                                 const Interpretation &interp) {
  if (sys.names.size() != sys.rhs.size())
    throw Error(ErrorKind::InvalidInput, "equation system has mismatched names and right-hand sides");
  FreshNames local;
  FreshNames &names = interp.names ? *interp.names : local;
  LinearSystem lin;
  lin.summaryCount = sys.names.size();
  std::vector<std::pair<std::string, AlgTreeExpr>> aux;
  const std::map<std::string, std::string> identity;
  for (std::size_t i = 0; i < sys.rhs.size(); ++i) {
    if (!isLinear(sys.rhs[i]))
      throw Error(ErrorKind::InvalidInput, "equation for " + sys.names[i] + " is not linear");
    Normalized n = normalize(sys.rhs[i], identity, names);
    lin.unknowns.push_back(sys.names[i]);
    lin.rhs.push_back(n.expr);
    for (auto &eq : n.equations)
      aux.push_back(std::move(eq));
  }
  for (auto &[name, rhs] : aux) {
    lin.unknowns.push_back(name);
    lin.rhs.push_back(rhs);
  }
  std::vector<Element> vals = interp.solve.solve(lin, gamma, interp.dom);
  LinearSolution out;
  for (std::size_t i = 0; i < lin.unknowns.size(); ++i) {
    if (i < lin.summaryCount)
      out.nu.push_back(vals[i]);
    else
      out.iota.emplace(lin.unknowns[i], vals[i]);
  }
  return out;
}

} // namespace npa
