#include "npa/domains.hpp"

#include "npa/lang.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "json.hpp"

namespace npa {

namespace {

double mulNoNan(double a, double b) {
  if (a == 0.0 || b == 0.0)
    return 0.0;
  return a * b;
}

std::string num(double v) {
  if (std::isinf(v))
    return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

/// Rounds to 10 significant digits for display; |v| < 1e-12 becomes 0.
double displayValue(double v) {
  if (!std::isfinite(v))
    return v;
  if (std::fabs(v) < 1e-12)
    return 0.0;
  return std::stod(num(v));
}

lang::Action parseActionFor(const std::string &domain, const std::string &text) {
  try {
    return lang::parseAction(text);
  } catch (const Error &e) {
    throw Error(ErrorKind::UnknownAction, domain + " cannot parse action '" + text + "'");
  }
}

std::vector<double> matmul(const Element &a, const Element &b, std::size_t n) {
  std::vector<double> r(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      double x = a[i * n + k];
      if (x == 0.0)
        continue;
      for (std::size_t j = 0; j < n; ++j)
        r[i * n + j] += mulNoNan(x, b[k * n + j]);
    }
  return r;
}

Element identity(std::size_t n) {
  Element r(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    r[i * n + i] = 1.0;
  return r;
}

} // namespace

// ---------------------------------------------------------------------------
// RealDomain
// ---------------------------------------------------------------------------

Element RealDomain::extend(const Element &a, const Element &b) const {
  return {mulNoNan(a[0], b[0])};
}

Element RealDomain::interpretAction(const std::string &action) const {
  parseActionFor(name(), action);
  return {1.0};
}

std::string RealDomain::render(const Element &e) const { return num(e[0]); }

// ---------------------------------------------------------------------------
// PairDomain
// ---------------------------------------------------------------------------

PairDomain::PairDomain(std::optional<std::string> tracked) : tracked_(std::move(tracked)) {}

Element PairDomain::extend(const Element &a, const Element &b) const {
  return {mulNoNan(a[0], b[0]), mulNoNan(a[0], b[1]) + mulNoNan(b[0], a[1])};
}

namespace {
/// The constant c when `a` is `v := v + c`.
std::optional<double> incrementOf(const lang::Action &a) {
  if (a.kind != lang::Action::Kind::Assign)
    return std::nullopt;
  auto aff = lang::toAffine(*a.expr);
  if (!aff)
    return std::nullopt;
  for (const auto &[v, c] : aff->coef)
    if (c != (v == a.var ? 1.0 : 0.0))
      return std::nullopt;
  auto it = aff->coef.find(a.var);
  if (it == aff->coef.end() || it->second != 1.0)
    return std::nullopt;
  return aff->constant;
}
} // namespace

std::vector<std::string>
PairDomain::incrementedVariables(const std::vector<std::string> &actions) {
  std::set<std::string> out;
  for (const auto &t : actions) {
    auto a = lang::parseAction(t);
    if (incrementOf(a))
      out.insert(a.var);
  }
  return {out.begin(), out.end()};
}

Element PairDomain::interpretAction(const std::string &action) const {
  lang::Action a = parseActionFor(name(), action);
  if (a.kind == lang::Action::Kind::Reward)
    return {1.0, a.reward};
  if (a.kind == lang::Action::Kind::Assume)
    throw Error(ErrorKind::UnknownAction, "pair domain does not support assume");
  if (auto inc = incrementOf(a); inc && (!tracked_ || *tracked_ == a.var))
    return {1.0, *inc};
  if (tracked_ && a.var == *tracked_ && a.kind != lang::Action::Kind::Skip)
    throw Error(ErrorKind::UnknownAction,
                "pair domain only interprets constant increments of " + *tracked_ + ": '" +
                    action + "'");
  return {1.0, 0.0};
}

std::string PairDomain::render(const Element &e) const {
  return "(" + num(e[0]) + ", " + num(e[1]) + ")";
}

// ---------------------------------------------------------------------------
// BayesDomain
// ---------------------------------------------------------------------------

BayesDomain::BayesDomain(std::vector<std::string> variables) : vars_(std::move(variables)) {
  std::sort(vars_.begin(), vars_.end());
  vars_.erase(std::unique(vars_.begin(), vars_.end()), vars_.end());
  if (vars_.size() > 12)
    throw Error(ErrorKind::InvalidInput, "bayes domain supports at most 12 Boolean variables");
  states_ = std::size_t{1} << vars_.size();
}

Element BayesDomain::one() const { return identity(states_); }

Element BayesDomain::extend(const Element &a, const Element &b) const {
  return matmul(a, b, states_);
}

bool BayesDomain::valueIn(std::size_t s, std::size_t v) const {
  // The first variable is the most significant bit; bit value 0 means true.
  std::size_t bit = vars_.size() - 1 - v;
  return ((s >> bit) & 1u) == 0;
}

std::string BayesDomain::stateLabel(std::size_t s) const {
  std::string out;
  for (std::size_t v = 0; v < vars_.size(); ++v)
    out += valueIn(s, v) ? 'T' : 'F';
  return out.empty() ? "*" : out;
}

std::vector<bool> BayesDomain::conditionMask(const std::string &condition) const {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = maskCache_.find(condition);
    if (it != maskCache_.end())
      return it->second;
  }
  lang::ExprPtr e;
  try {
    e = lang::parseCondition(condition);
  } catch (const Error &) {
    throw Error(ErrorKind::UnsupportedCondition, "cannot parse condition '" + condition + "'");
  }
  if (!lang::isBooleanFormula(*e))
    throw Error(ErrorKind::UnsupportedCondition,
                "bayes conditions must be Boolean formulas: '" + condition + "'");
  std::set<std::string> used;
  lang::collectVariables(*e, used);
  for (const auto &v : used)
    if (!std::binary_search(vars_.begin(), vars_.end(), v))
      throw Error(ErrorKind::UnsupportedCondition, "unknown Boolean variable " + v);
  std::vector<bool> mask(states_);
  for (std::size_t s = 0; s < states_; ++s) {
    std::map<std::string, bool> st;
    for (std::size_t v = 0; v < vars_.size(); ++v)
      st[vars_[v]] = valueIn(s, v);
    mask[s] = lang::evaluateBool(*e, st);
  }
  std::lock_guard<std::mutex> lock(mutex_);
  maskCache_.emplace(condition, mask);
  return mask;
}

Element BayesDomain::condChoice(const std::string &condition, const Element &a,
                                const Element &b) const {
  std::vector<bool> mask = conditionMask(condition);
  Element r(a.size());
  for (std::size_t s = 0; s < states_; ++s) {
    const Element &src = mask[s] ? a : b;
    std::copy(src.begin() + static_cast<long>(s * states_),
              src.begin() + static_cast<long>((s + 1) * states_),
              r.begin() + static_cast<long>(s * states_));
  }
  return r;
}

Element BayesDomain::interpretAction(const std::string &action) const {
  lang::Action a = parseActionFor(name(), action);
  if (a.kind == lang::Action::Kind::Skip)
    return one();
  auto varIndex = [&](const std::string &v) {
    auto it = std::lower_bound(vars_.begin(), vars_.end(), v);
    if (it == vars_.end() || *it != v)
      throw Error(ErrorKind::UnknownAction, "unknown Boolean variable " + v + " in '" + action + "'");
    return static_cast<std::size_t>(it - vars_.begin());
  };
  const std::size_t n = states_;
  Element r(n * n, 0.0);
  auto setVar = [&](std::size_t s, std::size_t v, bool value) {
    std::size_t bit = std::size_t{1} << (vars_.size() - 1 - v);
    return value ? (s & ~bit) : (s | bit);
  };
  if (a.kind == lang::Action::Kind::Sample) {
    if (a.dist.kind != lang::Dist::Kind::Ber)
      throw Error(ErrorKind::UnknownAction, "bayes domain samples only from ber(p): '" + action + "'");
    double p = a.dist.params.at(0);
    std::size_t v = varIndex(a.var);
    for (std::size_t s = 0; s < n; ++s) {
      r[s * n + setVar(s, v, true)] += p;
      r[s * n + setVar(s, v, false)] += 1.0 - p;
    }
    return r;
  }
  if (a.kind == lang::Action::Kind::Assign) {
    std::size_t v = varIndex(a.var);
    const lang::Expr &e = *a.expr;
    bool constant = e.op == lang::Op::Num && (e.num == 0.0 || e.num == 1.0);
    if (!constant && !lang::isBooleanFormula(e))
      throw Error(ErrorKind::UnknownAction, "bayes assignments need a Boolean formula: '" + action + "'");
    for (std::size_t s = 0; s < n; ++s) {
      bool value;
      if (constant) {
        value = e.num != 0.0;
      } else {
        std::map<std::string, bool> st;
        for (std::size_t w = 0; w < vars_.size(); ++w)
          st[vars_[w]] = valueIn(s, w);
        try {
          value = lang::evaluateBool(e, st);
        } catch (const Error &) {
          throw Error(ErrorKind::UnknownAction, "unknown variable in '" + action + "'");
        }
      }
      r[s * n + setVar(s, v, value)] = 1.0;
    }
    return r;
  }
  throw Error(ErrorKind::UnknownAction, "bayes domain cannot interpret '" + action + "'");
}

std::string BayesDomain::render(const Element &e) const {
  std::ostringstream os;
  os << "      ";
  for (std::size_t c = 0; c < states_; ++c)
    os << ' ' << std::setw(17) << stateLabel(c);
  for (std::size_t r = 0; r < states_; ++r) {
    os << "\n" << std::setw(6) << stateLabel(r);
    for (std::size_t c = 0; c < states_; ++c)
      os << ' ' << std::setw(17) << num(e[r * states_ + c]);
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// ExpInvDomain
// ---------------------------------------------------------------------------

std::vector<RewriteDecl> parseRewriteJson(const std::string &text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception &e) {
    throw Error(ErrorKind::Syntax, std::string("invalid rewrite JSON: ") + e.what());
  }
  if (!j.is_array())
    throw Error(ErrorKind::InvalidInput, "rewrite declarations must be a JSON list");
  std::vector<RewriteDecl> out;
  for (const auto &item : j) {
    if (!item.is_object() || !item.contains("conditionText") || !item.contains("branch") ||
        !item.contains("expr") || !item.contains("kind"))
      throw Error(ErrorKind::InvalidInput,
                  "each rewrite needs conditionText, branch, expr and kind");
    RewriteDecl d;
    d.condition = lang::canonicalCondition(item["conditionText"].get<std::string>());
    std::string branch = item["branch"].get<std::string>();
    std::string kind = item["kind"].get<std::string>();
    if (branch != "then" && branch != "else")
      throw Error(ErrorKind::InvalidInput, "rewrite branch must be then or else");
    if (kind != "nonneg" && kind != "vanishing")
      throw Error(ErrorKind::InvalidInput, "rewrite kind must be nonneg or vanishing");
    d.thenBranch = branch == "then";
    d.vanishing = kind == "vanishing";
    d.expr = item["expr"].get<std::string>();
    out.push_back(d);
  }
  return out;
}

ExpInvDomain::ExpInvDomain(std::vector<std::string> variables, std::vector<RewriteDecl> rewrites)
    : vars_(std::move(variables)) {
  std::sort(vars_.begin(), vars_.end());
  vars_.erase(std::unique(vars_.begin(), vars_.end()), vars_.end());
  k_ = vars_.size();
  for (auto &r : rewrites) {
    auto e = lang::parseCondition(r.expr);
    auto aff = lang::toAffine(*e);
    if (!aff)
      throw Error(ErrorKind::InvalidInput, "rewrite expression is not affine: " + r.expr);
    for (const auto &[v, c] : aff->coef)
      if (c != 0.0 && !std::binary_search(vars_.begin(), vars_.end(), v))
        throw Error(ErrorKind::InvalidInput, "rewrite mentions unknown variable " + v);
    rewrites_[r.condition].push_back(r);
  }
}

std::size_t ExpInvDomain::indexOf(const std::string &var) const {
  auto it = std::lower_bound(vars_.begin(), vars_.end(), var);
  if (it == vars_.end() || *it != var)
    throw Error(ErrorKind::InvalidInput, "unknown variable " + var);
  return static_cast<std::size_t>(it - vars_.begin()) + 1;
}

Element ExpInvDomain::one() const { return identity(k_ + 1); }

Element ExpInvDomain::extend(const Element &a, const Element &b) const {
  return matmul(a, b, k_ + 1);
}

Element ExpInvDomain::interpretAction(const std::string &action) const {
  lang::Action a = parseActionFor(name(), action);
  const std::size_t n = k_ + 1;
  Element r = one();
  switch (a.kind) {
  case lang::Action::Kind::Skip:
    return r;
  case lang::Action::Kind::Assign: {
    auto aff = lang::toAffine(*a.expr);
    if (!aff)
      throw Error(ErrorKind::UnknownAction, "expinv assignments must be affine: '" + action + "'");
    std::size_t col = indexOf(a.var);
    for (std::size_t i = 0; i < n; ++i)
      r[i * n + col] = 0.0;
    r[col] = aff->constant;
    for (const auto &[v, c] : aff->coef)
      if (c != 0.0)
        r[indexOf(v) * n + col] = c;
    return r;
  }
  case lang::Action::Kind::Sample: {
    std::size_t col = indexOf(a.var);
    for (std::size_t i = 0; i < n; ++i)
      r[i * n + col] = 0.0;
    r[col] = a.dist.mean();
    return r;
  }
  case lang::Action::Kind::Reward:
  case lang::Action::Kind::Assume:
    break;
  }
  throw Error(ErrorKind::UnknownAction, "expinv domain cannot interpret '" + action + "'");
}

MaxDirections ExpInvDomain::condDirections(const std::string &condition) const {
  MaxDirections out;
  const std::size_t n = k_ + 1;
  out.plainEntries.assign(n * n, false);
  for (std::size_t i = 0; i < n; ++i)
    out.plainEntries[i * n] = true;
  auto it = rewrites_.find(condition);
  if (it == rewrites_.end())
    return out;
  for (const auto &r : it->second) {
    auto aff = *lang::toAffine(*lang::parseCondition(r.expr));
    std::vector<double> row(n, 0.0);
    row[0] = aff.constant;
    for (const auto &[v, c] : aff.coef)
      if (c != 0.0)
        row[indexOf(v)] += c;
    for (int sign : {1, -1}) {
      if (sign < 0 && !r.vanishing)
        continue;
      for (std::size_t col = 1; col < n; ++col) {
        Element d(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
          d[i * n + col] = sign * row[i];
        (r.thenBranch ? out.thenDirections : out.elseDirections).push_back(std::move(d));
      }
    }
  }
  return out;
}

std::string ExpInvDomain::boundText(const Element &e, std::size_t column) const {
  const std::size_t n = k_ + 1;
  lang::Affine aff;
  aff.constant = displayValue(e[column]);
  for (std::size_t i = 1; i < n; ++i)
    aff.coef[vars_[i - 1]] = displayValue(e[i * n + column]);
  return lang::toString(aff);
}

std::vector<double> ExpInvDomain::boundCoefficients(const Element &e,
                                                    const std::string &var) const {
  const std::size_t n = k_ + 1;
  std::size_t col = indexOf(var);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = e[i * n + col];
  return out;
}

std::string ExpInvDomain::render(const Element &e) const {
  std::ostringstream os;
  const std::size_t n = k_ + 1;
  os << "E[1] <= " << num(e[0]);
  for (std::size_t c = 1; c < n; ++c)
    os << "\nE[" << vars_[c - 1] << "'] <= " << boundText(e, c);
  return os.str();
}

Element ExpInvDomain::warmStart(const std::vector<std::string> &actions) const {
  const std::size_t n = k_ + 1;
  std::vector<bool> accumulator(k_, true);
  for (const auto &t : actions) {
    lang::Action a = lang::parseAction(t);
    if (a.kind != lang::Action::Kind::Assign && a.kind != lang::Action::Kind::Sample)
      continue;
    std::size_t idx = indexOf(a.var) - 1;
    bool ok = false;
    if (a.kind == lang::Action::Kind::Assign) {
      if (auto aff = lang::toAffine(*a.expr)) {
        ok = aff->constant >= 0.0;
        auto self = aff->coef.find(a.var);
        ok = ok && self != aff->coef.end() && self->second == 1.0;
        for (const auto &[v, c] : aff->coef)
          ok = ok && c >= 0.0;
      }
    }
    if (!ok)
      accumulator[idx] = false;
  }
  Element r(n * n, 0.0);
  r[0] = 1.0;
  for (std::size_t i = 0; i < k_; ++i)
    if (accumulator[i])
      r[(i + 1) * n + (i + 1)] = 1.0;
  return r;
}

Element ExpInvDomain::fromRows(const std::vector<std::vector<double>> &rows) const {
  const std::size_t n = k_ + 1;
  if (rows.size() != n)
    throw Error(ErrorKind::InvalidInput, "expected " + std::to_string(n) + " rows");
  Element r;
  for (const auto &row : rows) {
    if (row.size() != n)
      throw Error(ErrorKind::InvalidInput, "expected " + std::to_string(n) + " columns");
    r.insert(r.end(), row.begin(), row.end());
  }
  return r;
}

// ---------------------------------------------------------------------------
// MomentDomain
// ---------------------------------------------------------------------------

MomentDomain::MomentDomain(std::size_t k) : k_(k), binom_(k + 1, std::vector<double>(k + 1, 0.0)) {
  for (std::size_t i = 0; i <= k; ++i) {
    binom_[i][0] = 1.0;
    for (std::size_t j = 1; j <= i; ++j)
      binom_[i][j] = binom_[i - 1][j - 1] + (j <= i - 1 ? binom_[i - 1][j] : 0.0);
  }
}

Element MomentDomain::one() const {
  Element r(k_ + 1, 0.0);
  r[0] = 1.0;
  return r;
}

Element MomentDomain::extend(const Element &a, const Element &b) const {
  Element r(k_ + 1, 0.0);
  for (std::size_t i = 0; i <= k_; ++i)
    for (std::size_t j = 0; j <= i; ++j)
      r[i] += binom_[i][j] * mulNoNan(a[j], b[i - j]);
  return r;
}

Element MomentDomain::interpretAction(const std::string &action) const {
  lang::Action a = parseActionFor(name(), action);
  if (a.kind == lang::Action::Kind::Assume)
    throw Error(ErrorKind::UnknownAction, "moment domain does not support assume");
  if (a.kind != lang::Action::Kind::Reward)
    return one();
  if (a.reward < 0)
    throw Error(ErrorKind::UnknownAction, "rewards must be nonnegative: '" + action + "'");
  Element r(k_ + 1);
  for (std::size_t i = 0; i <= k_; ++i)
    r[i] = std::pow(a.reward, static_cast<double>(i));
  return r;
}

std::string MomentDomain::render(const Element &e) const {
  std::string s = "<";
  for (std::size_t i = 0; i < e.size(); ++i)
    s += (i ? ", " : "") + num(e[i]);
  return s + ">";
}

// ---------------------------------------------------------------------------
// Domain tags
// ---------------------------------------------------------------------------

std::string DomainTag::text() const {
  switch (kind) {
  case Kind::Reals:
    return "reals";
  case Kind::Pair:
    return "pair";
  case Kind::Bayes:
    return "bayes";
  case Kind::ExpInv:
    return "expinv";
  case Kind::Moment:
    return "moment:" + std::to_string(momentOrder);
  }
  return "reals";
}

DomainTag parseDomainTag(const std::string &text) {
  DomainTag t;
  if (text == "reals")
    t.kind = DomainTag::Kind::Reals;
  else if (text == "pair")
    t.kind = DomainTag::Kind::Pair;
  else if (text == "bayes")
    t.kind = DomainTag::Kind::Bayes;
  else if (text == "expinv")
    t.kind = DomainTag::Kind::ExpInv;
  else if (text.rfind("moment:", 0) == 0) {
    t.kind = DomainTag::Kind::Moment;
    std::string k = text.substr(7);
    if (k.empty() || !std::all_of(k.begin(), k.end(), ::isdigit))
      throw Error(ErrorKind::InvalidInput, "moment order must be a nonnegative integer");
    t.momentOrder = std::stoul(k);
  } else {
    throw Error(ErrorKind::InvalidInput, "unknown domain '" + text + "'");
  }
  return t;
}

} // namespace npa
