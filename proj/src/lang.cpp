#include "npa/lang.hpp"

#include "npa/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

namespace npa::lang {

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

std::vector<Token> tokenize(const std::string &src) {
  std::vector<Token> out;
  int line = 1, col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n && i < src.size(); ++k, ++i) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else if ((static_cast<unsigned char>(src[i]) & 0xC0) != 0x80) {
        ++col;
      }
    }
  };
  auto push = [&](Tok kind, std::string text, std::size_t len, double num = 0.0) {
    Token t;
    t.kind = kind;
    t.text = std::move(text);
    t.number = num;
    t.line = line;
    t.column = col;
    t.offset = i;
    t.length = len;
    out.push_back(std::move(t));
    advance(len);
  };
  static const char *twoChar[] = {":=", "<=", ">=", "==", "!=", "&&", "||"};
  while (i < src.size()) {
    unsigned char c = static_cast<unsigned char>(src[i]);
    if (std::isspace(c)) {
      advance(1);
      continue;
    }
    if (c == '#' || (c == '/' && i + 1 < src.size() && src[i + 1] == '/')) {
      while (i < src.size() && src[i] != '\n')
        advance(1);
      continue;
    }
    if (std::isalpha(c) || c == '_') {
      std::size_t j = i;
      while (j < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_' || src[j] == '\''))
        ++j;
      push(Tok::Ident, src.substr(i, j - i), j - i);
      continue;
    }
    if (std::isdigit(c) || (c == '.' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::size_t j = i;
      while (j < src.size() && (std::isdigit(static_cast<unsigned char>(src[j])) || src[j] == '.'))
        ++j;
      if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < src.size() && (src[k] == '+' || src[k] == '-'))
          ++k;
        if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
          j = k;
          while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j])))
            ++j;
        }
      }
      std::string text = src.substr(i, j - i);
      double v = 0.0;
      auto res = std::from_chars(text.data(), text.data() + text.size(), v);
      if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw Error(ErrorKind::Syntax, "malformed number '" + text + "'", line, col);
      push(Tok::Number, text, j - i, v);
      continue;
    }
    if (src.compare(i, 3, "\xE2\x88\xA7") == 0) {
      push(Tok::Punct, "&&", 3);
      continue;
    }
    if (src.compare(i, 3, "\xE2\x88\xA8") == 0) {
      push(Tok::Punct, "||", 3);
      continue;
    }
    if (src.compare(i, 2, "\xC2\xAC") == 0) {
      push(Tok::Punct, "!", 2);
      continue;
    }
    bool matched = false;
    for (const char *tc : twoChar) {
      if (src.compare(i, 2, tc) == 0) {
        push(Tok::Punct, tc, 2);
        matched = true;
        break;
      }
    }
    if (matched)
      continue;
    if (std::string("~();,+-*/<>=!{}").find(static_cast<char>(c)) != std::string::npos) {
      push(Tok::Punct, std::string(1, static_cast<char>(c)), 1);
      continue;
    }
    throw Error(ErrorKind::Syntax, std::string("unexpected character '") + static_cast<char>(c) + "'",
                line, col);
  }
  Token end;
  end.kind = Tok::End;
  end.line = line;
  end.column = col;
  end.offset = src.size();
  out.push_back(end);
  return out;
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

namespace {
ExprPtr mk(Op op, std::vector<ExprPtr> args = {}) {
  auto e = std::make_shared<Expr>();
  e->op = op;
  e->args = std::move(args);
  return e;
}
ExprPtr mkNum(double v) {
  auto e = std::make_shared<Expr>();
  e->op = Op::Num;
  e->num = v;
  return e;
}
std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}
} // namespace

const Token &ExprParser::peek(std::size_t ahead) const {
  std::size_t k = std::min(pos_ + ahead, toks_.size() - 1);
  return toks_[k];
}

bool ExprParser::isPunct(const std::string &p, std::size_t ahead) const {
  const auto &t = peek(ahead);
  return t.kind == Tok::Punct && t.text == p;
}

bool ExprParser::isIdent(const std::string &word, std::size_t ahead) const {
  const auto &t = peek(ahead);
  return t.kind == Tok::Ident && t.text == word;
}

const Token &ExprParser::next() {
  const Token &t = peek();
  if (pos_ < toks_.size() - 1)
    ++pos_;
  return t;
}

void ExprParser::expectPunct(const std::string &p) {
  if (!isPunct(p))
    fail("expected '" + p + "'");
  next();
}

void ExprParser::fail(const std::string &message) const {
  const auto &t = peek();
  std::string near = t.kind == Tok::End ? "end of input" : "'" + t.text + "'";
  throw Error(ErrorKind::Syntax, message + " near " + near, t.line, t.column);
}

ExprPtr ExprParser::parseExpr() { return parseOr(); }

ExprPtr ExprParser::parseOr() {
  ExprPtr l = parseAnd();
  while (isPunct("||") || isIdent("or")) {
    next();
    l = mk(Op::Or, {l, parseAnd()});
  }
  return l;
}

ExprPtr ExprParser::parseAnd() {
  ExprPtr l = parseNot();
  while (isPunct("&&") || isIdent("and")) {
    next();
    l = mk(Op::And, {l, parseNot()});
  }
  return l;
}

ExprPtr ExprParser::parseNot() {
  if (isPunct("!") || isIdent("not")) {
    next();
    return mk(Op::Not, {parseNot()});
  }
  return parseCompare();
}

ExprPtr ExprParser::parseCompare() {
  ExprPtr l = parseAdd();
  static const std::pair<const char *, Op> ops[] = {{"<", Op::Lt},  {"<=", Op::Le}, {">", Op::Gt},
                                                    {">=", Op::Ge}, {"==", Op::Eq}, {"=", Op::Eq},
                                                    {"!=", Op::Ne}};
  for (const auto &[txt, op] : ops) {
    if (isPunct(txt)) {
      next();
      return mk(op, {l, parseAdd()});
    }
  }
  return l;
}

ExprPtr ExprParser::parseAdd() {
  ExprPtr l = parseMul();
  while (isPunct("+") || isPunct("-")) {
    Op op = next().text == "+" ? Op::Add : Op::Sub;
    l = mk(op, {l, parseMul()});
  }
  return l;
}

ExprPtr ExprParser::parseMul() {
  ExprPtr l = parseUnary();
  while (isPunct("*") || isPunct("/")) {
    Op op = next().text == "*" ? Op::Mul : Op::Div;
    l = mk(op, {l, parseUnary()});
  }
  return l;
}

ExprPtr ExprParser::parseUnary() {
  if (isPunct("-")) {
    next();
    ExprPtr inner = parseUnary();
    if (inner->op == Op::Num)
      return mkNum(-inner->num);
    return mk(Op::Neg, {inner});
  }
  return parseAtom();
}

ExprPtr ExprParser::parseAtom() {
  const Token &t = peek();
  if (t.kind == Tok::Number) {
    next();
    return mkNum(t.number);
  }
  if (t.kind == Tok::Ident) {
    if (t.text == "true" || t.text == "false") {
      next();
      auto e = std::make_shared<Expr>();
      e->op = Op::Bool;
      e->num = t.text == "true" ? 1.0 : 0.0;
      return e;
    }
    static const std::set<std::string> reserved = {"then", "else", "fi",  "do",   "od",
                                                   "end",  "and",  "or",  "not",  "begin",
                                                   "proc", "while", "if", "call", "return"};
    if (reserved.count(t.text))
      fail("unexpected keyword");
    next();
    auto e = std::make_shared<Expr>();
    e->op = Op::Var;
    e->name = t.text;
    return e;
  }
  if (isPunct("(")) {
    next();
    ExprPtr e = parseOr();
    expectPunct(")");
    return e;
  }
  fail("expected an expression");
}

double ExprParser::parseConstant() {
  ExprPtr e = parseAdd();
  std::set<std::string> vars;
  collectVariables(*e, vars);
  if (!vars.empty())
    fail("expected a constant");
  return evaluate(*e, {});
}

Action ExprParser::parseAction() {
  Action a;
  if (isIdent("skip")) {
    next();
    a.kind = Action::Kind::Skip;
    return a;
  }
  if (isIdent("reward") && isPunct("(", 1)) {
    next();
    next();
    a.kind = Action::Kind::Reward;
    a.reward = parseConstant();
    expectPunct(")");
    return a;
  }
  if (isIdent("assume") && isPunct("(", 1)) {
    next();
    next();
    a.kind = Action::Kind::Assume;
    a.expr = parseExpr();
    expectPunct(")");
    return a;
  }
  const Token &t = peek();
  if (t.kind != Tok::Ident)
    fail("expected an action");
  a.var = t.text;
  next();
  if (isPunct(":=")) {
    next();
    a.kind = Action::Kind::Assign;
    a.expr = parseExpr();
    return a;
  }
  if (isPunct("~")) {
    next();
    const Token &d = peek();
    if (d.kind != Tok::Ident)
      fail("expected a distribution");
    std::string dname = lower(d.text);
    next();
    expectPunct("(");
    std::vector<double> params{parseConstant()};
    while (isPunct(",")) {
      next();
      params.push_back(parseConstant());
    }
    expectPunct(")");
    a.kind = Action::Kind::Sample;
    if (dname == "ber" || dname == "bernoulli") {
      if (params.size() != 1 || params[0] < 0.0 || params[0] > 1.0)
        fail("ber expects one probability in [0,1]");
      a.dist.kind = Dist::Kind::Ber;
    } else if (dname == "uniform") {
      if (params.size() != 2 || params[0] > params[1] || params[0] != std::floor(params[0]) ||
          params[1] != std::floor(params[1]))
        fail("uniform expects integer bounds a <= b");
      a.dist.kind = Dist::Kind::Uniform;
    } else {
      fail("unknown distribution '" + d.text + "'");
    }
    a.dist.params = params;
    return a;
  }
  fail("expected ':=' or '~'");
}

double Dist::mean() const {
  switch (kind) {
  case Kind::Ber:
    return params.at(0);
  case Kind::Uniform:
    return 0.5 * (params.at(0) + params.at(1));
  }
  return 0.0;
}

ExprPtr parseCondition(const std::string &text) {
  auto toks = tokenize(text);
  ExprParser p(toks, 0);
  ExprPtr e = p.parseExpr();
  if (p.peek().kind != Tok::End)
    p.fail("trailing input in condition");
  return e;
}

Action parseAction(const std::string &text) {
  auto toks = tokenize(text);
  ExprParser p(toks, 0);
  Action a = p.parseAction();
  if (p.peek().kind != Tok::End)
    p.fail("trailing input in action");
  return a;
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

std::string formatNumber(double v) {
  if (v == 0.0)
    return "0";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {
int precedence(Op op) {
  switch (op) {
  case Op::Or:
    return 1;
  case Op::And:
    return 2;
  case Op::Not:
    return 3;
  case Op::Lt:
  case Op::Le:
  case Op::Gt:
  case Op::Ge:
  case Op::Eq:
  case Op::Ne:
    return 4;
  case Op::Add:
  case Op::Sub:
    return 5;
  case Op::Mul:
  case Op::Div:
    return 6;
  case Op::Neg:
    return 7;
  default:
    return 8;
  }
}

const char *opText(Op op) {
  switch (op) {
  case Op::Or:
    return "or";
  case Op::And:
    return "and";
  case Op::Lt:
    return "<";
  case Op::Le:
    return "<=";
  case Op::Gt:
    return ">";
  case Op::Ge:
    return ">=";
  case Op::Eq:
    return "==";
  case Op::Ne:
    return "!=";
  case Op::Add:
    return "+";
  case Op::Sub:
    return "-";
  case Op::Mul:
    return "*";
  case Op::Div:
    return "/";
  default:
    return "?";
  }
}

std::string printAt(const Expr &e, int minPrec) {
  int p = precedence(e.op);
  std::string s;
  switch (e.op) {
  case Op::Num:
    s = formatNumber(e.num);
    if (e.num < 0 && minPrec > 5)
      s = "(" + s + ")";
    return s;
  case Op::Bool:
    return e.num != 0.0 ? "true" : "false";
  case Op::Var:
    return e.name;
  case Op::Not:
    s = "not " + printAt(*e.args[0], p);
    break;
  case Op::Neg:
    s = "-" + printAt(*e.args[0], p + 1);
    break;
  default: {
    bool nonAssoc = p == 4;
    s = printAt(*e.args[0], nonAssoc ? p + 1 : p) + " " + opText(e.op) + " " +
        printAt(*e.args[1], p + 1);
  }
  }
  return p < minPrec ? "(" + s + ")" : s;
}
} // namespace

std::string toString(const Expr &e) { return printAt(e, 0); }

std::string toString(const Action &a) {
  switch (a.kind) {
  case Action::Kind::Skip:
    return "skip";
  case Action::Kind::Assign:
    return a.var + " := " + toString(*a.expr);
  case Action::Kind::Sample: {
    std::string s = a.var + " ~ " + (a.dist.kind == Dist::Kind::Ber ? "ber(" : "uniform(");
    for (std::size_t i = 0; i < a.dist.params.size(); ++i)
      s += (i ? ", " : "") + formatNumber(a.dist.params[i]);
    return s + ")";
  }
  case Action::Kind::Reward:
    return "reward(" + formatNumber(a.reward) + ")";
  case Action::Kind::Assume:
    return "assume(" + toString(*a.expr) + ")";
  }
  return "";
}

std::string canonicalAction(const std::string &text) { return toString(parseAction(text)); }
std::string canonicalCondition(const std::string &text) {
  return toString(*parseCondition(text));
}

void collectVariables(const Expr &e, std::set<std::string> &out) {
  if (e.op == Op::Var)
    out.insert(e.name);
  for (const auto &a : e.args)
    collectVariables(*a, out);
}

void collectVariables(const Action &a, std::set<std::string> &out) {
  if (!a.var.empty())
    out.insert(a.var);
  if (a.expr)
    collectVariables(*a.expr, out);
}

double evaluate(const Expr &e, const std::map<std::string, double> &state) {
  auto arg = [&](std::size_t i) { return evaluate(*e.args[i], state); };
  switch (e.op) {
  case Op::Num:
  case Op::Bool:
    return e.num;
  case Op::Var: {
    auto it = state.find(e.name);
    return it == state.end() ? 0.0 : it->second;
  }
  case Op::Not:
    return arg(0) != 0.0 ? 0.0 : 1.0;
  case Op::And:
    return (arg(0) != 0.0 && arg(1) != 0.0) ? 1.0 : 0.0;
  case Op::Or:
    return (arg(0) != 0.0 || arg(1) != 0.0) ? 1.0 : 0.0;
  case Op::Neg:
    return -arg(0);
  case Op::Add:
    return arg(0) + arg(1);
  case Op::Sub:
    return arg(0) - arg(1);
  case Op::Mul:
    return arg(0) * arg(1);
  case Op::Div:
    return arg(0) / arg(1);
  case Op::Lt:
    return arg(0) < arg(1) ? 1.0 : 0.0;
  case Op::Le:
    return arg(0) <= arg(1) ? 1.0 : 0.0;
  case Op::Gt:
    return arg(0) > arg(1) ? 1.0 : 0.0;
  case Op::Ge:
    return arg(0) >= arg(1) ? 1.0 : 0.0;
  case Op::Eq:
    return arg(0) == arg(1) ? 1.0 : 0.0;
  case Op::Ne:
    return arg(0) != arg(1) ? 1.0 : 0.0;
  }
  return 0.0;
}

std::optional<Affine> toAffine(const Expr &e) {
  auto scale = [](Affine a, double k) {
    a.constant *= k;
    for (auto &[v, c] : a.coef)
      c *= k;
    return a;
  };
  auto add = [](Affine a, const Affine &b, double k) {
    a.constant += k * b.constant;
    for (const auto &[v, c] : b.coef)
      a.coef[v] += k * c;
    return a;
  };
  switch (e.op) {
  case Op::Num: {
    Affine a;
    a.constant = e.num;
    return a;
  }
  case Op::Var: {
    Affine a;
    a.coef[e.name] = 1.0;
    return a;
  }
  case Op::Neg: {
    auto a = toAffine(*e.args[0]);
    if (!a)
      return std::nullopt;
    return scale(*a, -1.0);
  }
  case Op::Add:
  case Op::Sub: {
    auto a = toAffine(*e.args[0]);
    auto b = toAffine(*e.args[1]);
    if (!a || !b)
      return std::nullopt;
    return add(*a, *b, e.op == Op::Add ? 1.0 : -1.0);
  }
  case Op::Mul: {
    auto a = toAffine(*e.args[0]);
    auto b = toAffine(*e.args[1]);
    if (!a || !b)
      return std::nullopt;
    bool aConst = std::all_of(a->coef.begin(), a->coef.end(), [](auto &p) { return p.second == 0.0; });
    bool bConst = std::all_of(b->coef.begin(), b->coef.end(), [](auto &p) { return p.second == 0.0; });
    if (aConst)
      return scale(*b, a->constant);
    if (bConst)
      return scale(*a, b->constant);
    return std::nullopt;
  }
  case Op::Div: {
    auto a = toAffine(*e.args[0]);
    auto b = toAffine(*e.args[1]);
    if (!a || !b)
      return std::nullopt;
    bool bConst = std::all_of(b->coef.begin(), b->coef.end(), [](auto &p) { return p.second == 0.0; });
    if (!bConst || b->constant == 0.0)
      return std::nullopt;
    return scale(*a, 1.0 / b->constant);
  }
  default:
    return std::nullopt;
  }
}

std::string toString(const Affine &a) {
  std::string s;
  for (const auto &[v, c] : a.coef) {
    if (c == 0.0)
      continue;
    if (s.empty())
      s = (c < 0 ? "-" : "");
    else
      s += c < 0 ? " - " : " + ";
    double m = std::fabs(c);
    if (m != 1.0)
      s += formatNumber(m) + "*";
    s += v;
  }
  if (a.constant != 0.0 || s.empty()) {
    if (s.empty())
      s = formatNumber(a.constant);
    else
      s += (a.constant < 0 ? " - " : " + ") + formatNumber(std::fabs(a.constant));
  }
  return s;
}

bool isBooleanFormula(const Expr &e) {
  switch (e.op) {
  case Op::Bool:
  case Op::Var:
    return true;
  case Op::Not:
  case Op::And:
  case Op::Or:
    return std::all_of(e.args.begin(), e.args.end(),
                       [](const ExprPtr &a) { return isBooleanFormula(*a); });
  default:
    return false;
  }
}

bool evaluateBool(const Expr &e, const std::map<std::string, bool> &state) {
  switch (e.op) {
  case Op::Bool:
    return e.num != 0.0;
  case Op::Var: {
    auto it = state.find(e.name);
    if (it == state.end())
      throw Error(ErrorKind::InvalidInput, "unknown Boolean variable " + e.name);
    return it->second;
  }
  case Op::Not:
    return !evaluateBool(*e.args[0], state);
  case Op::And:
    return evaluateBool(*e.args[0], state) && evaluateBool(*e.args[1], state);
  case Op::Or:
    return evaluateBool(*e.args[0], state) || evaluateBool(*e.args[1], state);
  default:
    throw Error(ErrorKind::UnsupportedCondition, "not a Boolean formula: " + toString(e));
  }
}

} // namespace npa::lang
