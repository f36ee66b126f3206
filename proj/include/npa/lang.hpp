// Lexer and expression language shared by the program parser, the per-domain
// action/condition interpreters, and the concrete-execution oracle.
#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace npa::lang {

// ---------------------------------------------------------------------------
// Tokens
// ---------------------------------------------------------------------------

enum class Tok { Ident, Number, Punct, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  double number = 0.0;
  int line = 1;
  int column = 1;
  std::size_t offset = 0; ///< byte offset of the first character
  std::size_t length = 0;
};

/// Splits `source` into tokens. `//` and `#` start line comments.
/// Unicode ∧ ∨ ¬ are accepted as `and`, `or`, `not`.
std::vector<Token> tokenize(const std::string &source);

// ---------------------------------------------------------------------------
// Expressions
// ---------------------------------------------------------------------------

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

enum class Op { Num, Bool, Var, Not, And, Or, Neg, Add, Sub, Mul, Div, Lt, Le, Gt, Ge, Eq, Ne };

struct Expr {
  Op op = Op::Num;
  double num = 0.0;
  std::string name;
  std::vector<ExprPtr> args;
};

/// Distribution of a sampling action `x ~ dist`.
struct Dist {
  enum class Kind { Ber, Uniform } kind = Kind::Ber;
  std::vector<double> params;
  /// Mean of the distribution (a Boolean `true` counts as 1).
  double mean() const;
};

/// A parsed data action.
struct Action {
  enum class Kind { Skip, Assign, Sample, Reward, Assume } kind = Kind::Skip;
  std::string var; ///< target of Assign / Sample
  ExprPtr expr;    ///< Assign right-hand side, Assume condition
  Dist dist;       ///< Sample distribution
  double reward = 0.0;
};

/// Recursive-descent parser over a token range; used both for stand-alone
/// action/condition text and for the statement parser of the frontend.
class ExprParser {
public:
  ExprParser(const std::vector<Token> &toks, std::size_t pos) : toks_(toks), pos_(pos) {}
  ExprPtr parseExpr();
  /// Parses `IDENT := expr`, `IDENT ~ dist`, `skip`, `reward(c)` or `assume(φ)`.
  Action parseAction();
  std::size_t position() const { return pos_; }

  const Token &peek(std::size_t ahead = 0) const;
  bool isPunct(const std::string &p, std::size_t ahead = 0) const;
  bool isIdent(const std::string &word, std::size_t ahead = 0) const;
  const Token &next();
  void expectPunct(const std::string &p);
  [[noreturn]] void fail(const std::string &message) const;

private:
  ExprPtr parseOr();
  ExprPtr parseAnd();
  ExprPtr parseNot();
  ExprPtr parseCompare();
  ExprPtr parseAdd();
  ExprPtr parseMul();
  ExprPtr parseUnary();
  ExprPtr parseAtom();
  double parseConstant();

  const std::vector<Token> &toks_;
  std::size_t pos_;
};

ExprPtr parseCondition(const std::string &text);
Action parseAction(const std::string &text);

/// Canonical rendering with minimal parentheses; parse(print(e)) = e.
std::string toString(const Expr &e);
std::string toString(const Action &a);
/// Canonical text of an action or condition source string.
std::string canonicalAction(const std::string &text);
std::string canonicalCondition(const std::string &text);
/// Shortest round-tripping decimal rendering.
std::string formatNumber(double v);

/// Variables mentioned by an expression / action.
void collectVariables(const Expr &e, std::set<std::string> &out);
void collectVariables(const Action &a, std::set<std::string> &out);

/// Evaluates `e` on a concrete state (Booleans are 0/1). Unbound variables
/// read as 0.
double evaluate(const Expr &e, const std::map<std::string, double> &state);

/// An affine form c + Σ a_v·v.
struct Affine {
  double constant = 0.0;
  std::map<std::string, double> coef;
};
/// Returns the affine form of `e`, or nothing when `e` is not affine.
std::optional<Affine> toAffine(const Expr &e);
std::string toString(const Affine &a);

/// True when `e` only uses Boolean connectives, variables and constants.
bool isBooleanFormula(const Expr &e);
/// Evaluates a Boolean formula on an assignment of the given variables.
bool evaluateBool(const Expr &e, const std::map<std::string, bool> &state);

} // namespace npa::lang
