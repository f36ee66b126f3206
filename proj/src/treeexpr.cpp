#include "npa/treeexpr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace npa {

const char *errorKindName(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::Syntax:
    return "SyntaxError";
  case ErrorKind::InvalidInput:
    return "InvalidInput";
  case ErrorKind::UnknownAction:
    return "UnknownAction";
  case ErrorKind::UnsupportedCondition:
    return "UnsupportedCondition";
  case ErrorKind::SubtractUndefined:
    return "SubtractUndefined";
  case ErrorKind::SolveFailure:
    return "SolveFailure";
  case ErrorKind::NonMonotoneRound:
    return "NonMonotoneRound";
  case ErrorKind::NumericalInstability:
    return "NumericalInstability";
  case ErrorKind::NdetUnsupported:
    return "NdetUnsupported";
  }
  return "Error";
}

Error::Error(ErrorKind kind, const std::string &message)
    : std::runtime_error(std::string(errorKindName(kind)) + ": " + message), kind_(kind) {}

Error::Error(ErrorKind kind, const std::string &message, int line, int column)
    : std::runtime_error(std::string(errorKindName(kind)) + " at " + std::to_string(line) +
                         ":" + std::to_string(column) + ": " + message),
      kind_(kind), line_(line), column_(column) {}

std::size_t arity(const Symbol &s) {
  return std::visit(
      [](const auto &x) -> std::size_t {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, EpsSym>)
          return 0;
        else if constexpr (std::is_same_v<T, SeqActSym> || std::is_same_v<T, CallSym>)
          return 1;
        else
          return 2;
      },
      s);
}

std::size_t arity(const AlgSymbol &s) {
  return std::visit(
      [](const auto &x) -> std::size_t {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, ConstSym> || std::is_same_v<T, CallLinSym>)
          return 0;
        else if constexpr (std::is_same_v<T, SeqConstSym> || std::is_same_v<T, CallSym>)
          return 1;
        else
          return 2;
      },
      s);
}

std::string freshName(const std::string &base, const VarSet &avoid) {
  std::string name = base + "'";
  while (avoid.count(name))
    name += "'";
  return name;
}

static bool elementNear(const Element &a, const Element &b, double tol) {
  if (a.size() != b.size())
    return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!(std::fabs(a[i] - b[i]) <= tol))
      return false;
  return true;
}

bool algSymbolNear(const AlgSymbol &a, const AlgSymbol &b, double tol) {
  if (a.index() != b.index())
    return false;
  if (auto *ca = std::get_if<ConstSym>(&a))
    return elementNear(ca->value, std::get<ConstSym>(b).value, tol);
  if (auto *sa = std::get_if<SeqConstSym>(&a))
    return elementNear(sa->value, std::get<SeqConstSym>(b).value, tol);
  if (auto *la = std::get_if<CallLinSym>(&a)) {
    const auto &lb = std::get<CallLinSym>(b);
    return la->proc == lb.proc && elementNear(la->rightConst, lb.rightConst, tol);
  }
  if (auto *pa = std::get_if<ProbSym>(&a))
    return std::fabs(pa->p - std::get<ProbSym>(b).p) <= tol;
  return a == b;
}

// ---------------------------------------------------------------------------

namespace tree {
TreeExpr eps() { return TreeExpr::leaf(EpsSym{}); }
TreeExpr var(const std::string &name) { return TreeExpr::var(name); }
TreeExpr seq(const std::string &action, TreeExpr next) {
  return TreeExpr::node(SeqActSym{action}, {std::move(next)});
}
TreeExpr cond(const std::string &condition, TreeExpr a, TreeExpr b) {
  return TreeExpr::node(CondSym{condition}, {std::move(a), std::move(b)});
}
TreeExpr prob(double p, TreeExpr a, TreeExpr b) {
  if (!(p >= 0.0 && p <= 1.0))
    throw Error(ErrorKind::InvalidInput, "probability outside [0,1]");
  return TreeExpr::node(ProbSym{p}, {std::move(a), std::move(b)});
}
TreeExpr ndet(TreeExpr a, TreeExpr b) {
  return TreeExpr::node(NdetSym{}, {std::move(a), std::move(b)});
}
TreeExpr call(std::size_t proc, TreeExpr next) {
  return TreeExpr::node(CallSym{proc}, {std::move(next)});
}
TreeExpr concat(TreeExpr left, const std::string &z, TreeExpr right) {
  return TreeExpr::concat(std::move(left), z, std::move(right));
}
TreeExpr mu(const std::string &z, TreeExpr body) { return TreeExpr::mu(z, std::move(body)); }
} // namespace tree

namespace alg {
AlgTreeExpr constant(Element c) { return AlgTreeExpr::leaf(ConstSym{std::move(c)}); }
AlgTreeExpr seqConst(Element c, AlgTreeExpr next) {
  return AlgTreeExpr::node(SeqConstSym{std::move(c)}, {std::move(next)});
}
AlgTreeExpr var(const std::string &name) { return AlgTreeExpr::var(name); }
AlgTreeExpr cond(const std::string &condition, AlgTreeExpr a, AlgTreeExpr b) {
  return AlgTreeExpr::node(CondSym{condition}, {std::move(a), std::move(b)});
}
AlgTreeExpr prob(double p, AlgTreeExpr a, AlgTreeExpr b) {
  return AlgTreeExpr::node(ProbSym{p}, {std::move(a), std::move(b)});
}
AlgTreeExpr ndet(AlgTreeExpr a, AlgTreeExpr b) {
  return AlgTreeExpr::node(NdetSym{}, {std::move(a), std::move(b)});
}
AlgTreeExpr call(std::size_t proc, AlgTreeExpr next) {
  return AlgTreeExpr::node(CallSym{proc}, {std::move(next)});
}
AlgTreeExpr plus(AlgTreeExpr a, AlgTreeExpr b) {
  return AlgTreeExpr::node(PlusSym{}, {std::move(a), std::move(b)});
}
AlgTreeExpr minus(AlgTreeExpr a, AlgTreeExpr b) {
  return AlgTreeExpr::node(MinusSym{}, {std::move(a), std::move(b)});
}
AlgTreeExpr callLin(std::size_t proc, Element rightConst) {
  return AlgTreeExpr::leaf(CallLinSym{proc, std::move(rightConst)});
}
AlgTreeExpr concat(AlgTreeExpr left, const std::string &z, AlgTreeExpr right) {
  return AlgTreeExpr::concat(std::move(left), z, std::move(right));
}
AlgTreeExpr mu(const std::string &z, AlgTreeExpr body) {
  return AlgTreeExpr::mu(z, std::move(body));
}
} // namespace alg

// ---------------------------------------------------------------------------

std::size_t maxCallLinPerPath(const AlgTreeExpr &e) {
  switch (e.kind()) {
  case ExprKind::Var:
    return 0;
  case ExprKind::Leaf:
    return std::holds_alternative<CallLinSym>(e.symbol()) ? 1 : 0;
  default: {
    std::size_t best = 0;
    for (const auto &c : e.children())
      best = std::max(best, maxCallLinPerPath(c));
    return best;
  }
  }
}

bool containsCall(const AlgTreeExpr &e) {
  if (e.kind() == ExprKind::Node && std::holds_alternative<CallSym>(e.symbol()))
    return true;
  for (const auto &c : e.children())
    if (containsCall(c))
      return true;
  return false;
}

bool containsMu(const AlgTreeExpr &e) {
  if (e.kind() == ExprKind::Mu)
    return true;
  for (const auto &c : e.children())
    if (containsMu(c))
      return true;
  return false;
}

bool isLinear(const AlgTreeExpr &e) { return !containsCall(e) && maxCallLinPerPath(e) <= 1; }

bool usesLinearOnlySymbols(const AlgTreeExpr &e) {
  if (e.kind() == ExprKind::Node || e.kind() == ExprKind::Leaf) {
    const auto &s = e.symbol();
    if (std::holds_alternative<PlusSym>(s) || std::holds_alternative<MinusSym>(s) ||
        std::holds_alternative<CallLinSym>(s))
      return true;
  }
  for (const auto &c : e.children())
    if (usesLinearOnlySymbols(c))
      return true;
  return false;
}

// ---------------------------------------------------------------------------
// Unfolding
// ---------------------------------------------------------------------------

namespace {

struct Closure;
using Env = std::shared_ptr<const std::map<std::string, std::shared_ptr<Closure>>>;
struct Closure {
  TreeExpr expr;
  Env env;
};

Env bind(const Env &env, const std::string &z, std::shared_ptr<Closure> c) {
  auto m = std::make_shared<std::map<std::string, std::shared_ptr<Closure>>>(*env);
  (*m)[z] = std::move(c);
  return m;
}

UnfoldedTree unknownTree() {
  UnfoldedTree t;
  t.unknown = true;
  return t;
}

// `budget` bounds how many binders can be crossed without emitting a symbol;
// exhausting it means the term is unguarded and denotes no symbol at all.
UnfoldedTree unfoldRec(const TreeExpr &e, const Env &env, std::size_t depth, std::size_t budget) {
  switch (e.kind()) {
  case ExprKind::Var: {
    auto it = env->find(e.name());
    if (it == env->end())
      throw Error(ErrorKind::InvalidInput, "unfold requires a closed expression");
    if (budget == 0)
      return unknownTree();
    return unfoldRec(it->second->expr, it->second->env, depth, budget - 1);
  }
  case ExprKind::Leaf: {
    UnfoldedTree t;
    t.symbol = e.symbol();
    return t;
  }
  case ExprKind::Node: {
    if (depth == 0)
      return unknownTree();
    UnfoldedTree t;
    t.symbol = e.symbol();
    for (const auto &c : e.children())
      t.children.push_back(unfoldRec(c, env, depth - 1, 64));
    return t;
  }
  case ExprKind::Concat: {
    auto c = std::make_shared<Closure>(Closure{e.right(), env});
    return unfoldRec(e.left(), bind(env, e.name(), c), depth, budget);
  }
  case ExprKind::Mu: {
    auto c = std::make_shared<Closure>(Closure{e, env});
    return unfoldRec(e.body(), bind(env, e.name(), c), depth, budget);
  }
  }
  return unknownTree();
}

std::string procLabel(std::size_t i, const std::vector<std::string> *names) {
  if (names && i < names->size())
    return (*names)[i];
  return "#" + std::to_string(i + 1);
}

std::string quote(const std::string &s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\')
      out += '\\';
    out += c;
  }
  return out + "\"";
}

} // namespace

UnfoldedTree unfold(const TreeExpr &e, std::size_t depth) {
  return unfoldRec(e, std::make_shared<std::map<std::string, std::shared_ptr<Closure>>>(), depth,
                   64);
}

bool refines(const UnfoldedTree &coarse, const UnfoldedTree &fine) {
  if (coarse.unknown)
    return true;
  if (fine.unknown || !(coarse.symbol == fine.symbol) ||
      coarse.children.size() != fine.children.size())
    return false;
  for (std::size_t i = 0; i < coarse.children.size(); ++i)
    if (!refines(coarse.children[i], fine.children[i]))
      return false;
  return true;
}

static std::string symbolHead(const Symbol &s, const std::vector<std::string> *names) {
  return std::visit(
      [&](const auto &x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, EpsSym>)
          return "eps";
        else if constexpr (std::is_same_v<T, SeqActSym>)
          return "seq " + quote(x.action);
        else if constexpr (std::is_same_v<T, CondSym>)
          return "cond " + quote(x.condition);
        else if constexpr (std::is_same_v<T, ProbSym>)
          return "prob " + formatProbability(x.p);
        else if constexpr (std::is_same_v<T, NdetSym>)
          return "ndet";
        else
          return "call " + procLabel(x.proc, names);
      },
      s);
}

std::string toString(const UnfoldedTree &t, const std::vector<std::string> *procNames) {
  if (t.unknown)
    return "?";
  if (t.children.empty())
    return symbolHead(t.symbol, procNames);
  std::string out = "(" + symbolHead(t.symbol, procNames);
  for (const auto &c : t.children)
    out += " " + toString(c, procNames);
  return out + ")";
}

// ---------------------------------------------------------------------------
// Text form
// ---------------------------------------------------------------------------

std::string formatProbability(double p) {
  for (long long b = 1; b <= 100000; ++b) {
    double a = std::round(p * static_cast<double>(b));
    if (a / static_cast<double>(b) == p) {
      long long ai = static_cast<long long>(a);
      if (b == 1)
        return std::to_string(ai);
      return std::to_string(ai) + "/" + std::to_string(b);
    }
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", p);
  return buf;
}

double parseProbability(const std::string &text) {
  auto slash = text.find('/');
  try {
    std::size_t used = 0;
    if (slash == std::string::npos) {
      double v = std::stod(text, &used);
      if (used != text.size())
        throw Error(ErrorKind::Syntax, "bad number '" + text + "'");
      return v;
    }
    std::string num = text.substr(0, slash), den = text.substr(slash + 1);
    double a = std::stod(num, &used);
    if (used != num.size())
      throw Error(ErrorKind::Syntax, "bad number '" + text + "'");
    double b = std::stod(den, &used);
    if (used != den.size() || b == 0.0)
      throw Error(ErrorKind::Syntax, "bad number '" + text + "'");
    return a / b;
  } catch (const std::logic_error &) {
    throw Error(ErrorKind::Syntax, "bad number '" + text + "'");
  }
}

std::string toSexpr(const TreeExpr &e, const std::vector<std::string> *procNames) {
  switch (e.kind()) {
  case ExprKind::Var:
    return e.name();
  case ExprKind::Leaf:
    return symbolHead(e.symbol(), procNames);
  case ExprKind::Node: {
    std::string out = "(" + symbolHead(e.symbol(), procNames);
    for (const auto &c : e.children())
      out += " " + toSexpr(c, procNames);
    return out + ")";
  }
  case ExprKind::Concat:
    return "(concat " + toSexpr(e.left(), procNames) + " " + e.name() + " " +
           toSexpr(e.right(), procNames) + ")";
  case ExprKind::Mu:
    return "(mu " + e.name() + " " + toSexpr(e.body(), procNames) + ")";
  }
  return "";
}

std::string defaultElementText(const Element &e) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (i)
      os << " ";
    os << e[i];
  }
  os << "]";
  return os.str();
}

std::string toSexpr(const AlgTreeExpr &e, const ElementPrinter &pe,
                    const std::vector<std::string> *procNames) {
  auto head = [&](const AlgSymbol &s) -> std::string {
    return std::visit(
        [&](const auto &x) -> std::string {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, ConstSym>)
            return "(const " + pe(x.value) + ")";
          else if constexpr (std::is_same_v<T, SeqConstSym>)
            return "seqc " + pe(x.value);
          else if constexpr (std::is_same_v<T, CondSym>)
            return "cond " + quote(x.condition);
          else if constexpr (std::is_same_v<T, ProbSym>)
            return "prob " + formatProbability(x.p);
          else if constexpr (std::is_same_v<T, NdetSym>)
            return "ndet";
          else if constexpr (std::is_same_v<T, CallSym>)
            return "call " + procLabel(x.proc, procNames);
          else if constexpr (std::is_same_v<T, PlusSym>)
            return "plus";
          else if constexpr (std::is_same_v<T, MinusSym>)
            return "minus";
          else
            return "(calllin " + procLabel(x.proc, procNames) + " " + pe(x.rightConst) + ")";
        },
        s);
  };
  switch (e.kind()) {
  case ExprKind::Var:
    return e.name();
  case ExprKind::Leaf:
    return head(e.symbol());
  case ExprKind::Node: {
    std::string out = "(" + head(e.symbol());
    for (const auto &c : e.children())
      out += " " + toSexpr(c, pe, procNames);
    return out + ")";
  }
  case ExprKind::Concat:
    return "(concat " + toSexpr(e.left(), pe, procNames) + " " + e.name() + " " +
           toSexpr(e.right(), pe, procNames) + ")";
  case ExprKind::Mu:
    return "(mu " + e.name() + " " + toSexpr(e.body(), pe, procNames) + ")";
  }
  return "";
}

namespace {

class SexprParser {
public:
  SexprParser(const std::string &text, const ProcResolver &resolve)
      : text_(text), resolve_(resolve) {}

  TreeExpr parseAll() {
    TreeExpr e = parseExpr();
    skipSpace();
    if (pos_ != text_.size())
      fail("trailing input");
    return e;
  }

private:
  [[noreturn]] void fail(const std::string &msg) const {
    int line = 1, col = 1;
    for (std::size_t i = 0; i < pos_ && i < text_.size(); ++i) {
      if (text_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(ErrorKind::Syntax, msg, line, col);
  }

  void skipSpace() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
  }

  std::string atom() {
    skipSpace();
    std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) &&
           text_[pos_] != '(' && text_[pos_] != ')' && text_[pos_] != '"')
      ++pos_;
    if (start == pos_)
      fail("expected an atom");
    return text_.substr(start, pos_ - start);
  }

  std::string stringLit() {
    skipSpace();
    if (pos_ >= text_.size() || text_[pos_] != '"')
      fail("expected a quoted string");
    ++pos_;
    std::string out;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      if (text_[pos_] == '\\' && pos_ + 1 < text_.size())
        ++pos_;
      out += text_[pos_++];
    }
    if (pos_ >= text_.size())
      fail("unterminated string");
    ++pos_;
    return out;
  }

  void expect(char c) {
    skipSpace();
    if (pos_ >= text_.size() || text_[pos_] != c)
      fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  TreeExpr parseExpr() {
    skipSpace();
    if (pos_ >= text_.size())
      fail("unexpected end of input");
    if (text_[pos_] != '(') {
      std::string a = atom();
      if (a == "eps")
        return tree::eps();
      return tree::var(a);
    }
    ++pos_;
    std::string head = atom();
    TreeExpr result;
    if (head == "seq") {
      std::string act = stringLit();
      result = tree::seq(act, parseExpr());
    } else if (head == "cond") {
      std::string c = stringLit();
      TreeExpr a = parseExpr();
      result = tree::cond(c, a, parseExpr());
    } else if (head == "prob") {
      std::string ptext = atom();
      double p = parseProbability(ptext);
      if (!(p >= 0.0 && p <= 1.0))
        fail("probability outside [0,1]");
      TreeExpr a = parseExpr();
      result = tree::prob(p, a, parseExpr());
    } else if (head == "ndet") {
      TreeExpr a = parseExpr();
      result = tree::ndet(a, parseExpr());
    } else if (head == "call") {
      std::string name = atom();
      auto idx = resolve_(name);
      if (!idx)
        fail("unknown procedure '" + name + "'");
      result = tree::call(*idx, parseExpr());
    } else if (head == "mu") {
      std::string z = atom();
      result = tree::mu(z, parseExpr());
    } else if (head == "concat") {
      TreeExpr l = parseExpr();
      std::string z = atom();
      TreeExpr r = parseExpr();
      if (r.hasFree(z))
        fail("concatenation variable occurs free on the right");
      result = tree::concat(l, z, r);
    } else {
      fail("unknown constructor '" + head + "'");
    }
    expect(')');
    return result;
  }

  const std::string &text_;
  const ProcResolver &resolve_;
  std::size_t pos_ = 0;
};

} // namespace

TreeExpr parseSexpr(const std::string &text, const ProcResolver &resolve) {
  return SexprParser(text, resolve).parseAll();
}

} // namespace npa
