// Regular infinite-tree expressions: the program IR and its algebraic variant.
//
// An expression is a finite term built from four constructors. Leaf holds a
// nullary symbol or a free variable, Node applies a symbol to children,
// Concat(E1, Z, E2) plugs E2 into the free occurrences of Z in E1, and
// Mu(Z, E) denotes the infinite self-substitution of E for Z.  Expressions are
// immutable and structurally shared, so copying a handle is cheap.
#pragma once

#include "npa/error.hpp"

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace npa {

/// A domain element in flattened numeric form (see algebra.hpp).
using Element = std::vector<double>;

// ---------------------------------------------------------------------------
// Program alphabet
// ---------------------------------------------------------------------------

struct EpsSym {
  bool operator==(const EpsSym &) const = default;
};
/// seq[act]: run a data action, then continue with the single child.
struct SeqActSym {
  std::string action;
  bool operator==(const SeqActSym &) const = default;
};
/// cond[φ]: the first child runs when φ holds, the second otherwise.
struct CondSym {
  std::string condition;
  bool operator==(const CondSym &) const = default;
};
/// prob[p]: the first child runs with probability p.
struct ProbSym {
  double p = 0.5;
  bool operator==(const ProbSym &) const = default;
};
struct NdetSym {
  bool operator==(const NdetSym &) const = default;
};
/// call[X_i]: invoke procedure `proc` (0-based), then continue with the child.
struct CallSym {
  std::size_t proc = 0;
  bool operator==(const CallSym &) const = default;
};

using Symbol = std::variant<EpsSym, SeqActSym, CondSym, ProbSym, NdetSym, CallSym>;

std::size_t arity(const Symbol &s);

// ---------------------------------------------------------------------------
// Algebraic alphabet
// ---------------------------------------------------------------------------

struct ConstSym {
  Element value;
  bool operator==(const ConstSym &) const = default;
};
/// seq[c]: extend by a constant on the left of the single child.
struct SeqConstSym {
  Element value;
  bool operator==(const SeqConstSym &) const = default;
};
struct PlusSym {
  bool operator==(const PlusSym &) const = default;
};
struct MinusSym {
  bool operator==(const MinusSym &) const = default;
};
/// call_lin[Y_i; c]: the linearized call, interpreted as Y_i ⊗ c.
struct CallLinSym {
  std::size_t proc = 0;
  Element rightConst;
  bool operator==(const CallLinSym &) const = default;
};

using AlgSymbol = std::variant<ConstSym, SeqConstSym, CondSym, ProbSym, NdetSym, CallSym,
                               PlusSym, MinusSym, CallLinSym>;

std::size_t arity(const AlgSymbol &s);

// ---------------------------------------------------------------------------
// Expressions
// ---------------------------------------------------------------------------

enum class ExprKind { Leaf, Var, Node, Concat, Mu };

using VarSet = std::set<std::string>;

/// Handle to an immutable expression node over alphabet `Sym`.
template <class Sym> class BasicExpr {
public:
  BasicExpr() : BasicExpr(makeVar("_")) {}

  static BasicExpr leaf(Sym sym);
  static BasicExpr var(std::string name) { return makeVar(std::move(name)); }
  static BasicExpr node(Sym sym, std::vector<BasicExpr> children);
  /// E1 ++_Z E2. Throws InvalidInput when Z occurs free in E2.
  static BasicExpr concat(BasicExpr left, std::string boundVar, BasicExpr right);
  static BasicExpr mu(std::string boundVar, BasicExpr body);

  ExprKind kind() const { return rep_->kind; }
  /// Symbol of a Leaf or Node.
  const Sym &symbol() const { return *rep_->sym; }
  /// Name of a Var, or the bound variable of Concat/Mu.
  const std::string &name() const { return rep_->name; }
  const std::vector<BasicExpr> &children() const { return rep_->kids; }
  const BasicExpr &left() const { return rep_->kids[0]; }
  const BasicExpr &right() const { return rep_->kids[1]; }
  const BasicExpr &body() const { return rep_->kids[0]; }

  /// Free variables, computed once at construction.
  const VarSet &freeVars() const { return rep_->free; }
  bool hasFree(const std::string &v) const { return rep_->free.count(v) != 0; }
  bool closed() const { return rep_->free.empty(); }
  /// Number of constructors in the term.
  std::size_t size() const { return rep_->size; }
  /// Identity of the shared node, usable as a cache key.
  const void *id() const { return rep_.get(); }

private:
  struct Rep {
    ExprKind kind;
    std::optional<Sym> sym;
    std::string name;
    std::vector<BasicExpr> kids;
    VarSet free;
    std::size_t size = 1;
  };
  explicit BasicExpr(std::shared_ptr<const Rep> rep) : rep_(std::move(rep)) {}
  static BasicExpr makeVar(std::string name);

  std::shared_ptr<const Rep> rep_;
};

using TreeExpr = BasicExpr<Symbol>;
using AlgTreeExpr = BasicExpr<AlgSymbol>;

template <class Sym> BasicExpr<Sym> BasicExpr<Sym>::makeVar(std::string name) {
  auto rep = std::make_shared<Rep>();
  rep->kind = ExprKind::Var;
  rep->free.insert(name);
  rep->name = std::move(name);
  return BasicExpr(std::move(rep));
}

template <class Sym> BasicExpr<Sym> BasicExpr<Sym>::leaf(Sym sym) {
  if (arity(sym) != 0)
    throw Error(ErrorKind::InvalidInput, "leaf symbol must have arity 0");
  auto rep = std::make_shared<Rep>();
  rep->kind = ExprKind::Leaf;
  rep->sym = std::move(sym);
  return BasicExpr(std::move(rep));
}

template <class Sym>
BasicExpr<Sym> BasicExpr<Sym>::node(Sym sym, std::vector<BasicExpr> children) {
  if (arity(sym) == 0 && children.empty())
    return leaf(std::move(sym));
  if (arity(sym) != children.size())
    throw Error(ErrorKind::InvalidInput, "symbol arity does not match child count");
  auto rep = std::make_shared<Rep>();
  rep->kind = ExprKind::Node;
  rep->sym = std::move(sym);
  for (const auto &c : children) {
    rep->free.insert(c.freeVars().begin(), c.freeVars().end());
    rep->size += c.size();
  }
  rep->kids = std::move(children);
  return BasicExpr(std::move(rep));
}

template <class Sym>
BasicExpr<Sym> BasicExpr<Sym>::concat(BasicExpr left, std::string boundVar, BasicExpr right) {
  if (right.hasFree(boundVar))
    throw Error(ErrorKind::InvalidInput,
                "concatenation variable " + boundVar + " occurs free on the right");
  auto rep = std::make_shared<Rep>();
  rep->kind = ExprKind::Concat;
  rep->free = left.freeVars();
  rep->free.erase(boundVar);
  rep->free.insert(right.freeVars().begin(), right.freeVars().end());
  rep->size = 1 + left.size() + right.size();
  rep->name = std::move(boundVar);
  rep->kids = {std::move(left), std::move(right)};
  return BasicExpr(std::move(rep));
}

template <class Sym> BasicExpr<Sym> BasicExpr<Sym>::mu(std::string boundVar, BasicExpr body) {
  auto rep = std::make_shared<Rep>();
  rep->kind = ExprKind::Mu;
  rep->free = body.freeVars();
  rep->free.erase(boundVar);
  rep->size = 1 + body.size();
  rep->name = std::move(boundVar);
  rep->kids = {std::move(body)};
  return BasicExpr(std::move(rep));
}

// ---------------------------------------------------------------------------
// Generic term operations
// ---------------------------------------------------------------------------

/// Picks `base` primed as often as needed to avoid every name in `avoid`.
std::string freshName(const std::string &base, const VarSet &avoid);

template <class Sym> VarSet freeVars(const BasicExpr<Sym> &e) { return e.freeVars(); }

/// Renames free occurrences of `from` to the (fresh) name `to`.
template <class Sym>
BasicExpr<Sym> renameFree(const BasicExpr<Sym> &e, const std::string &from,
                          const std::string &to);

/// Capture-avoiding substitution of `replacement` for free `var` in `e`.
template <class Sym>
BasicExpr<Sym> substitute(const BasicExpr<Sym> &e, const std::string &var,
                          const BasicExpr<Sym> &replacement) {
  using E = BasicExpr<Sym>;
  if (!e.hasFree(var))
    return e;
  switch (e.kind()) {
  case ExprKind::Var:
    return replacement;
  case ExprKind::Leaf:
    return e;
  case ExprKind::Node: {
    std::vector<E> kids;
    kids.reserve(e.children().size());
    for (const auto &c : e.children())
      kids.push_back(substitute(c, var, replacement));
    return E::node(e.symbol(), std::move(kids));
  }
  case ExprKind::Concat: {
    E right = substitute(e.right(), var, replacement);
    if (e.name() == var)
      return E::concat(e.left(), e.name(), right);
    std::string z = e.name();
    E left = e.left();
    if (replacement.hasFree(z)) {
      VarSet avoid = replacement.freeVars();
      avoid.insert(left.freeVars().begin(), left.freeVars().end());
      avoid.insert(right.freeVars().begin(), right.freeVars().end());
      avoid.insert(var);
      std::string fresh = freshName(z, avoid);
      left = renameFree(left, z, fresh);
      z = fresh;
    }
    return E::concat(substitute(left, var, replacement), z, right);
  }
  case ExprKind::Mu: {
    std::string z = e.name();
    E body = e.body();
    if (replacement.hasFree(z)) {
      VarSet avoid = replacement.freeVars();
      avoid.insert(body.freeVars().begin(), body.freeVars().end());
      avoid.insert(var);
      std::string fresh = freshName(z, avoid);
      body = renameFree(body, z, fresh);
      z = fresh;
    }
    return E::mu(z, substitute(body, var, replacement));
  }
  }
  return e;
}

template <class Sym>
BasicExpr<Sym> renameFree(const BasicExpr<Sym> &e, const std::string &from,
                          const std::string &to) {
  return substitute(e, from, BasicExpr<Sym>::var(to));
}

/// Number of free occurrences of `var` in `e` (bound occurrences excluded).
template <class Sym> std::size_t countFree(const BasicExpr<Sym> &e, const std::string &var) {
  if (!e.hasFree(var))
    return 0;
  switch (e.kind()) {
  case ExprKind::Var:
    return 1;
  case ExprKind::Leaf:
    return 0;
  case ExprKind::Node: {
    std::size_t n = 0;
    for (const auto &c : e.children())
      n += countFree(c, var);
    return n;
  }
  case ExprKind::Concat:
    return (e.name() == var ? 0 : countFree(e.left(), var)) + countFree(e.right(), var);
  case ExprKind::Mu:
    return countFree(e.body(), var);
  }
  return 0;
}

namespace detail {
template <class Sym, class Eq>
bool alphaEqualRec(const BasicExpr<Sym> &a, const BasicExpr<Sym> &b,
                   std::vector<std::pair<std::string, std::string>> &env, const Eq &symEq) {
  if (a.kind() != b.kind())
    return false;
  switch (a.kind()) {
  case ExprKind::Var: {
    for (auto it = env.rbegin(); it != env.rend(); ++it) {
      bool la = it->first == a.name();
      bool lb = it->second == b.name();
      if (la || lb)
        return la && lb;
    }
    return a.name() == b.name();
  }
  case ExprKind::Leaf:
    return symEq(a.symbol(), b.symbol());
  case ExprKind::Node: {
    if (!symEq(a.symbol(), b.symbol()) || a.children().size() != b.children().size())
      return false;
    for (std::size_t i = 0; i < a.children().size(); ++i)
      if (!alphaEqualRec(a.children()[i], b.children()[i], env, symEq))
        return false;
    return true;
  }
  case ExprKind::Concat: {
    if (!alphaEqualRec(a.right(), b.right(), env, symEq))
      return false;
    env.emplace_back(a.name(), b.name());
    bool ok = alphaEqualRec(a.left(), b.left(), env, symEq);
    env.pop_back();
    return ok;
  }
  case ExprKind::Mu: {
    env.emplace_back(a.name(), b.name());
    bool ok = alphaEqualRec(a.body(), b.body(), env, symEq);
    env.pop_back();
    return ok;
  }
  }
  return false;
}
} // namespace detail

/// Structural equality up to renaming of bound variables.
template <class Sym, class Eq>
bool alphaEqual(const BasicExpr<Sym> &a, const BasicExpr<Sym> &b, const Eq &symEq) {
  std::vector<std::pair<std::string, std::string>> env;
  return detail::alphaEqualRec(a, b, env, symEq);
}

template <class Sym> bool alphaEqual(const BasicExpr<Sym> &a, const BasicExpr<Sym> &b) {
  return alphaEqual(a, b, [](const Sym &x, const Sym &y) { return x == y; });
}

/// Symbol equality on the algebraic alphabet with a tolerance on constants.
bool algSymbolNear(const AlgSymbol &a, const AlgSymbol &b, double tol);

// ---------------------------------------------------------------------------
// Convenience constructors for program trees
// ---------------------------------------------------------------------------

namespace tree {
TreeExpr eps();
TreeExpr var(const std::string &name);
TreeExpr seq(const std::string &action, TreeExpr next);
TreeExpr cond(const std::string &condition, TreeExpr thenBranch, TreeExpr elseBranch);
TreeExpr prob(double p, TreeExpr first, TreeExpr second);
TreeExpr ndet(TreeExpr first, TreeExpr second);
TreeExpr call(std::size_t proc, TreeExpr next);
TreeExpr concat(TreeExpr left, const std::string &z, TreeExpr right);
TreeExpr mu(const std::string &z, TreeExpr body);
} // namespace tree

namespace alg {
AlgTreeExpr constant(Element c);
AlgTreeExpr seqConst(Element c, AlgTreeExpr next);
AlgTreeExpr var(const std::string &name);
AlgTreeExpr cond(const std::string &condition, AlgTreeExpr a, AlgTreeExpr b);
AlgTreeExpr prob(double p, AlgTreeExpr a, AlgTreeExpr b);
AlgTreeExpr ndet(AlgTreeExpr a, AlgTreeExpr b);
AlgTreeExpr call(std::size_t proc, AlgTreeExpr next);
AlgTreeExpr plus(AlgTreeExpr a, AlgTreeExpr b);
AlgTreeExpr minus(AlgTreeExpr a, AlgTreeExpr b);
AlgTreeExpr callLin(std::size_t proc, Element rightConst);
AlgTreeExpr concat(AlgTreeExpr left, const std::string &z, AlgTreeExpr right);
AlgTreeExpr mu(const std::string &z, AlgTreeExpr body);
} // namespace alg

// ---------------------------------------------------------------------------
// Linearity
// ---------------------------------------------------------------------------

/// Largest number of CallLin leaves on any root-to-leaf path; a CallLin leaf
/// is nullary, so this is 0 or 1, but the scan is kept explicit for audits.
std::size_t maxCallLinPerPath(const AlgTreeExpr &e);
/// True when the expression contains a Call node anywhere.
bool containsCall(const AlgTreeExpr &e);
/// True when the expression contains a Mu binder anywhere.
bool containsMu(const AlgTreeExpr &e);
/// True when the expression lies in the linear alphabet: no Call node and at
/// most one CallLin per root-to-leaf path.
bool isLinear(const AlgTreeExpr &e);
/// True when Plus, Minus or CallLin occurs (these require linearity).
bool usesLinearOnlySymbols(const AlgTreeExpr &e);

// ---------------------------------------------------------------------------
// Depth-bounded unfolding (test oracle)
// ---------------------------------------------------------------------------

/// A finite tree whose Unknown leaves mark truncated subtrees.
struct UnfoldedTree {
  bool unknown = false;
  Symbol symbol;
  std::vector<UnfoldedTree> children;

  bool operator==(const UnfoldedTree &) const = default;
};

/// Depth-`depth` truncation of the infinite tree denoted by closed `e`.
/// Nullary symbols are always shown; a symbol of positive arity needs one
/// unit of depth, otherwise it becomes Unknown.
UnfoldedTree unfold(const TreeExpr &e, std::size_t depth);
/// Refinement order: Unknown is below everything.
bool refines(const UnfoldedTree &coarse, const UnfoldedTree &fine);
std::string toString(const UnfoldedTree &t, const std::vector<std::string> *procNames = nullptr);

// ---------------------------------------------------------------------------
// S-expression text form
// ---------------------------------------------------------------------------

/// Renders a probability as `a/b` when a small exact rational exists,
/// otherwise as a round-tripping decimal.
std::string formatProbability(double p);
/// Parses `a/b`, an integer, or a decimal.
double parseProbability(const std::string &text);

/// `(mu Z (prob 3/4 (seq "x:=x+1" Z) eps))`-style rendering.
std::string toSexpr(const TreeExpr &e, const std::vector<std::string> *procNames = nullptr);

using ElementPrinter = std::function<std::string(const Element &)>;
std::string toSexpr(const AlgTreeExpr &e, const ElementPrinter &printElement,
                    const std::vector<std::string> *procNames = nullptr);
std::string defaultElementText(const Element &e);

/// Resolves a procedure name used inside `(call NAME E)`.
using ProcResolver = std::function<std::optional<std::size_t>(const std::string &)>;
TreeExpr parseSexpr(const std::string &text, const ProcResolver &resolve);

} // namespace npa
