#include "npa/domains.hpp"
#include "npa/lp.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <limits>
#include <unordered_map>

namespace npa {

namespace {

/// A vector-valued affine form: constant + Σ_s coef[s]·x_s over scalar
/// variables x_s, where each coefficient is a domain-sized vector.
struct SymVec {
  Element constant;
  std::map<std::size_t, Element> coef;

  bool isConstant() const { return coef.empty(); }
};

/// A scalar affine form c + Σ a_v·x_v.
struct Affine {
  double constant = 0.0;
  std::vector<std::pair<std::size_t, double>> terms;
};

enum class NodeKind { Min, Max, TightMax };

/// d consecutive auxiliary scalars bounded by both operands.
struct AuxNode {
  NodeKind kind;
  std::size_t first;
  SymVec left;
  SymVec right;
  MaxDirections dirs;
};

class Compiler {
public:
  Compiler(const LinearSystem &sys, const Valuation &gamma, const OmegaPma &dom)
      : sys_(sys), gamma_(gamma), dom_(dom), d_(dom.dimension()) {
    for (std::size_t i = 0; i < sys.unknowns.size(); ++i)
      if (!index_.emplace(sys.unknowns[i], i).second)
        throw Error(ErrorKind::InvalidInput, "unknown " + sys.unknowns[i] + " defined twice");
    nextVar_ = sys.unknowns.size() * d_;
  }

  void run() {
    defs_.reserve(sys_.rhs.size());
    for (const auto &r : sys_.rhs)
      defs_.push_back(compile(r));
  }

  std::size_t dim() const { return d_; }
  std::size_t varCount() const { return nextVar_; }
  std::size_t unknownScalars() const { return sys_.unknowns.size() * d_; }
  const std::vector<SymVec> &defs() const { return defs_; }
  const std::vector<AuxNode> &aux() const { return aux_; }

  static Affine component(const SymVec &v, std::size_t k) {
    Affine a;
    a.constant = v.constant[k];
    for (const auto &[s, c] : v.coef)
      if (c[k] != 0.0)
        a.terms.emplace_back(s, c[k]);
    return a;
  }

private:
  SymVec constant(Element c) const { return SymVec{std::move(c), {}}; }

  SymVec unitVector(std::size_t unknown) const {
    SymVec v{dom_.zero(), {}};
    for (std::size_t k = 0; k < d_; ++k) {
      Element e(d_, 0.0);
      e[k] = 1.0;
      v.coef.emplace(unknown * d_ + k, std::move(e));
    }
    return v;
  }

  template <class F> SymVec mapLinear(const SymVec &a, F f) const {
    SymVec r{f(a.constant), {}};
    for (const auto &[s, c] : a.coef)
      r.coef.emplace(s, f(c));
    return r;
  }

  /// r = α·a + β·b.
  SymVec lincomb(double alpha, const SymVec &a, double beta, const SymVec &b) const {
    auto mix = [&](const Element *x, const Element *y) {
      Element r(d_, 0.0);
      for (std::size_t k = 0; k < d_; ++k) {
        double v = 0.0;
        if (x && alpha != 0.0 && (*x)[k] != 0.0)
          v += alpha * (*x)[k];
        if (y && beta != 0.0 && (*y)[k] != 0.0)
          v += beta * (*y)[k];
        r[k] = v;
      }
      return r;
    };
    SymVec r{mix(&a.constant, &b.constant), {}};
    for (const auto &[s, c] : a.coef) {
      auto it = b.coef.find(s);
      r.coef.emplace(s, mix(&c, it == b.coef.end() ? nullptr : &it->second));
    }
    for (const auto &[s, c] : b.coef)
      if (!a.coef.count(s))
        r.coef.emplace(s, mix(nullptr, &c));
    return r;
  }

  SymVec linearCond(const std::string &cond, const SymVec &a, const SymVec &b) const {
    const Element zero = dom_.zero();
    SymVec r{dom_.condChoice(cond, a.constant, b.constant), {}};
    for (const auto &[s, c] : a.coef) {
      auto it = b.coef.find(s);
      r.coef.emplace(s, dom_.condChoice(cond, c, it == b.coef.end() ? zero : it->second));
    }
    for (const auto &[s, c] : b.coef)
      if (!a.coef.count(s))
        r.coef.emplace(s, dom_.condChoice(cond, zero, c));
    return r;
  }

  SymVec auxNode(NodeKind kind, SymVec a, SymVec b, MaxDirections dirs = {}) {
    AuxNode node{kind, nextVar_, std::move(a), std::move(b), std::move(dirs)};
    nextVar_ += d_;
    SymVec r{dom_.zero(), {}};
    for (std::size_t k = 0; k < d_; ++k) {
      Element e(d_, 0.0);
      e[k] = 1.0;
      r.coef.emplace(node.first + k, std::move(e));
    }
    aux_.push_back(std::move(node));
    return r;
  }

  SymVec compile(const AlgTreeExpr &e) {
    auto it = memo_.find(e.id());
    if (it != memo_.end())
      return it->second;
    SymVec r = compileUncached(e);
    keep_.push_back(e);
    memo_.emplace(e.id(), r);
    return r;
  }

  SymVec compileUncached(const AlgTreeExpr &e) {
    switch (e.kind()) {
    case ExprKind::Var: {
      auto u = index_.find(e.name());
      if (u != index_.end())
        return unitVector(u->second);
      auto g = gamma_.find(e.name());
      if (g != gamma_.end())
        return constant(g->second);
      throw Error(ErrorKind::InvalidInput, "free variable " + e.name() + " has no value");
    }
    case ExprKind::Concat:
    case ExprKind::Mu:
      throw Error(ErrorKind::InvalidInput, "solve strategy expects a normalized system");
    case ExprKind::Leaf:
    case ExprKind::Node:
      break;
    }
    const AlgSymbol &s = e.symbol();
    const auto &kids = e.children();
    if (auto c = std::get_if<ConstSym>(&s))
      return constant(c->value);
    if (auto c = std::get_if<SeqConstSym>(&s)) {
      SymVec g = compile(kids[0]);
      return mapLinear(g, [&](const Element &x) { return dom_.extend(c->value, x); });
    }
    if (auto c = std::get_if<CallLinSym>(&s)) {
      if (c->proc >= sys_.summaryCount)
        throw Error(ErrorKind::InvalidInput, "linear call refers to an unknown summary");
      SymVec unit = unitVector(c->proc);
      return mapLinear(unit, [&](const Element &x) { return dom_.extend(x, c->rightConst); });
    }
    if (std::holds_alternative<CallSym>(s))
      throw Error(ErrorKind::InvalidInput, "solve strategy expects a linear system without calls");
    if (auto p = std::get_if<ProbSym>(&s))
      return lincomb(p->p, compile(kids[0]), 1.0 - p->p, compile(kids[1]));
    if (std::holds_alternative<PlusSym>(s))
      return lincomb(1.0, compile(kids[0]), 1.0, compile(kids[1]));
    if (std::holds_alternative<MinusSym>(s)) {
      SymVec a = compile(kids[0]);
      SymVec b = compile(kids[1]);
      if (!b.isConstant())
        throw Error(ErrorKind::InvalidInput, "subtrahend of a linear expression must be constant");
      if (a.isConstant())
        return constant(dom_.subtract(a.constant, b.constant));
      return lincomb(1.0, a, -1.0, b);
    }
    if (auto c = std::get_if<CondSym>(&s)) {
      SymVec a = compile(kids[0]);
      SymVec b = compile(kids[1]);
      switch (dom_.condKind()) {
      case CondKind::Linear:
        return linearCond(c->condition, a, b);
      case CondKind::Max:
        if (a.isConstant() && b.isConstant())
          return constant(dom_.condChoice(c->condition, a.constant, b.constant));
        return auxNode(NodeKind::TightMax, std::move(a), std::move(b),
                       dom_.condDirections(c->condition));
      case CondKind::Unsupported:
        break;
      }
      throw Error(ErrorKind::UnsupportedCondition,
                  dom_.name() + " does not support conditional choice on '" + c->condition + "'");
    }
    // Ndet.
    SymVec a = compile(kids[0]);
    SymVec b = compile(kids[1]);
    if (a.isConstant() && b.isConstant())
      return constant(dom_.ndetChoice(a.constant, b.constant));
    return auxNode(dom_.flavor() == Flavor::Min ? NodeKind::Min : NodeKind::Max, std::move(a),
                   std::move(b));
  }

  const LinearSystem &sys_;
  const Valuation &gamma_;
  const OmegaPma &dom_;
  std::size_t d_;
  std::map<std::string, std::size_t> index_;
  std::size_t nextVar_ = 0;
  std::vector<SymVec> defs_;
  std::vector<AuxNode> aux_;
  std::unordered_map<const void *, SymVec> memo_;
  std::vector<AlgTreeExpr> keep_;
};

bool formNonzero(const Affine &a, const std::vector<char> &nz) {
  if (a.constant != 0.0)
    return true;
  for (const auto &[v, c] : a.terms)
    if (c != 0.0 && nz[v])
      return true;
  return false;
}

} // namespace

LpSolveStrategy::LpSolveStrategy(StrategyOptions options) : options_(options) {}

StrategyStats LpSolveStrategy::lastStats() const {
  std::lock_guard<std::mutex> lock(statsMutex_);
  return stats_;
}

std::vector<Element> LpSolveStrategy::solve(const LinearSystem &sys, const Valuation &gamma,
                                            const OmegaPma &dom) const {
  if (sys.unknowns.size() != sys.rhs.size())
    throw Error(ErrorKind::InvalidInput, "linear system has mismatched unknowns and equations");
  const std::size_t d = dom.dimension();
  if (sys.unknowns.empty())
    return {};
  Compiler comp(sys, gamma, dom);
  comp.run();

  const std::size_t nU = comp.unknownScalars();
  const std::size_t nV = comp.varCount();

  // Scalar forms.
  std::vector<Affine> defs(nU);
  for (std::size_t i = 0; i < comp.defs().size(); ++i)
    for (std::size_t k = 0; k < d; ++k)
      defs[i * d + k] = Compiler::component(comp.defs()[i], k);
  struct AuxScalar {
    NodeKind kind;
    Affine left, right;
    std::size_t node, k;
  };
  std::vector<AuxScalar> aux;
  aux.reserve(nV - nU);
  for (std::size_t a = 0; a < comp.aux().size(); ++a) {
    const AuxNode &node = comp.aux()[a];
    for (std::size_t k = 0; k < d; ++k)
      aux.push_back(AuxScalar{node.kind, Compiler::component(node.left, k),
                              Compiler::component(node.right, k), a, k});
  }
  for (const auto &f : defs)
    if (!std::isfinite(f.constant))
      throw Error(ErrorKind::SolveFailure, "linear system has a non-finite constant");
  for (const auto &a : aux)
    if (!std::isfinite(a.left.constant) || !std::isfinite(a.right.constant))
      throw Error(ErrorKind::SolveFailure, "linear system has a non-finite constant");

  // Entries that a tightening direction can move are never pinned.
  std::vector<char> directed(aux.size(), 0);
  for (std::size_t i = 0; i < aux.size(); ++i) {
    const AuxNode &node = comp.aux()[aux[i].node];
    const std::size_t k = aux[i].k;
    if (aux[i].kind != NodeKind::TightMax ||
        (k < node.dirs.plainEntries.size() && node.dirs.plainEntries[k]))
      continue;
    for (const auto *dirs : {&node.dirs.thenDirections, &node.dirs.elseDirections})
      for (const auto &d : *dirs)
        directed[i] = directed[i] || d[k] != 0.0;
  }

  // Least "possibly nonzero" fixpoint.
  std::vector<char> nz(nV, options_.supportPrepass ? 0 : 1);
  if (options_.supportPrepass) {
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::size_t v = 0; v < nU; ++v)
        if (!nz[v] && formNonzero(defs[v], nz))
          nz[v] = changed = true;
      for (std::size_t i = 0; i < aux.size(); ++i) {
        std::size_t v = nU + i;
        if (nz[v])
          continue;
        bool l = formNonzero(aux[i].left, nz), r = formNonzero(aux[i].right, nz);
        bool now = aux[i].kind == NodeKind::Min ? (l && r) : (l || r);
        now = now || directed[i];
        if (now)
          nz[v] = changed = true;
      }
    }
  }

  StrategyStats stats;
  stats.scalarUnknowns = nU;
  stats.auxiliaries = aux.size();
  for (char c : nz)
    stats.pinned += c ? 0 : 1;

  bool activeAux = false;
  for (std::size_t i = 0; i < aux.size(); ++i)
    activeAux = activeAux || nz[nU + i];

  std::vector<double> value(nV, 0.0);
  bool solved = false;

  if (!activeAux && options_.directSolve) {
    std::vector<std::size_t> col(nU, SIZE_MAX);
    std::vector<std::size_t> live;
    for (std::size_t v = 0; v < nU; ++v)
      if (nz[v]) {
        col[v] = live.size();
        live.push_back(v);
      }
    const auto m = static_cast<Eigen::Index>(live.size());
    if (m == 0) {
      solved = true;
    } else {
      std::vector<Eigen::Triplet<double>> trip;
      Eigen::VectorXd rhs(m);
      for (std::size_t r = 0; r < live.size(); ++r) {
        const Affine &f = defs[live[r]];
        rhs[static_cast<Eigen::Index>(r)] = f.constant;
        trip.emplace_back(r, r, 1.0);
        for (const auto &[v, c] : f.terms)
          if (v < nU && nz[v])
            trip.emplace_back(r, col[v], -c);
      }
      Eigen::SparseMatrix<double> A(m, m);
      A.setFromTriplets(trip.begin(), trip.end());
      A.makeCompressed();
      Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
      lu.analyzePattern(A);
      lu.factorize(A);
      if (lu.info() == Eigen::Success) {
        Eigen::VectorXd x = lu.solve(rhs);
        bool ok = lu.info() == Eigen::Success && x.allFinite();
        if (ok) {
          double scale = 1.0 + (m > 0 ? x.cwiseAbs().maxCoeff() : 0.0);
          Eigen::VectorXd resid = A * x - rhs;
          ok = resid.cwiseAbs().maxCoeff() <= 1e-7 * scale;
          if (ok && dom.nonnegative())
            ok = x.minCoeff() >= -1e-9 * scale;
        }
        if (ok) {
          for (std::size_t r = 0; r < live.size(); ++r) {
            double v = x[static_cast<Eigen::Index>(r)];
            value[live[r]] = dom.nonnegative() ? std::max(v, 0.0) : v;
          }
          solved = true;
        }
      }
    }
  }

  if (!solved) {
    stats.usedLp = true;
    lp::LpProblem prob;
    const double lower = dom.nonnegative() ? 0.0 : -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> lpVar(nV, SIZE_MAX);
    std::vector<lp::Term> objective;
    for (std::size_t v = 0; v < nV; ++v)
      if (nz[v]) {
        lpVar[v] = prob.addVariable("z" + std::to_string(v), lower);
        objective.push_back({lpVar[v], 1.0});
      }
    auto termsOf = [&](const Affine &f, std::vector<lp::Term> &out, double sign) {
      for (const auto &[v, c] : f.terms)
        if (nz[v])
          out.push_back({lpVar[v], sign * c});
    };
    for (std::size_t v = 0; v < nU; ++v) {
      if (!nz[v])
        continue;
      std::vector<lp::Term> t{{lpVar[v], 1.0}};
      termsOf(defs[v], t, -1.0);
      prob.addConstraint(std::move(t), lp::Relation::Eq, defs[v].constant);
    }
    // Multipliers for tightened maxima, one per direction and node.
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> mult;
    for (std::size_t i = 0; i < aux.size(); ++i) {
      std::size_t v = nU + i;
      if (!nz[v])
        continue;
      const AuxScalar &a = aux[i];
      const lp::Relation rel = a.kind == NodeKind::Min ? lp::Relation::Le : lp::Relation::Ge;
      const AuxNode &node = comp.aux()[a.node];
      bool plain = a.kind != NodeKind::TightMax ||
                   (a.k < node.dirs.plainEntries.size() && node.dirs.plainEntries[a.k]);
      for (int side = 0; side < 2; ++side) {
        const Affine &f = side == 0 ? a.left : a.right;
        std::vector<lp::Term> t{{lpVar[v], 1.0}};
        termsOf(f, t, -1.0);
        if (!plain) {
          const auto &dirs = side == 0 ? node.dirs.thenDirections : node.dirs.elseDirections;
          for (std::size_t q = 0; q < dirs.size(); ++q) {
            if (dirs[q][a.k] == 0.0)
              continue;
            auto key = std::make_pair(a.node, (side == 0 ? 0 : node.dirs.thenDirections.size()) + q);
            auto it = mult.find(key);
            if (it == mult.end())
              it = mult.emplace(key, prob.addVariable("c" + std::to_string(mult.size()))).first;
            t.push_back({it->second, -dirs[q][a.k]});
          }
        }
        prob.addConstraint(std::move(t), rel, f.constant);
      }
    }
    prob.setObjective(dom.flavor() == Flavor::Min ? lp::Sense::Maximize : lp::Sense::Minimize,
                      objective);
    lp::LpSolution sol = lp::solveLp(prob, options_.feasTol);
    if (sol.status == lp::Status::Unbounded)
      throw Error(ErrorKind::SolveFailure, "linear system has no finite least solution (LP unbounded)");
    if (sol.status == lp::Status::Infeasible)
      throw Error(ErrorKind::SolveFailure, "linear system LP is infeasible");
    for (std::size_t v = 0; v < nV; ++v)
      if (nz[v])
        value[v] = sol.values[lpVar[v]];
  }

  {
    std::lock_guard<std::mutex> lock(statsMutex_);
    stats_ = stats;
  }
  std::vector<Element> out(sys.unknowns.size(), Element(d, 0.0));
  for (std::size_t i = 0; i < sys.unknowns.size(); ++i)
    for (std::size_t k = 0; k < d; ++k)
      out[i][k] = value[i * d + k];
  return out;
}

} // namespace npa
