#include "npa/lp.hpp"

#include "npa/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>

namespace npa::lp {

const char *statusName(Status s) {
  switch (s) {
  case Status::Optimal:
    return "optimal";
  case Status::Infeasible:
    return "infeasible";
  case Status::Unbounded:
    return "unbounded";
  }
  return "unknown";
}

std::size_t LpProblem::addVariable(std::string name, double lower, std::optional<double> upper) {
  vars_.push_back(Variable{std::move(name), lower, upper});
  return vars_.size() - 1;
}

void LpProblem::addConstraint(std::vector<Term> terms, Relation rel, double rhs,
                              std::string name) {
  cons_.push_back(Constraint{std::move(terms), rel, rhs, std::move(name)});
}

void LpProblem::setObjective(Sense sense, std::vector<Term> terms) {
  sense_ = sense;
  obj_ = std::move(terms);
}

void LpProblem::validate() const {
  auto check = [&](const std::vector<Term> &ts) {
    for (const auto &t : ts) {
      if (t.var >= vars_.size())
        throw Error(ErrorKind::InvalidInput, "LP term references an undeclared variable");
      if (!std::isfinite(t.coef))
        throw Error(ErrorKind::InvalidInput, "LP coefficient is not finite");
    }
  };
  for (const auto &c : cons_) {
    check(c.terms);
    if (!std::isfinite(c.rhs))
      throw Error(ErrorKind::InvalidInput, "LP right-hand side is not finite");
  }
  check(obj_);
  for (const auto &v : vars_) {
    if (std::isnan(v.lower) || v.lower == std::numeric_limits<double>::infinity())
      throw Error(ErrorKind::InvalidInput, "LP lower bound must be finite or -inf");
    if (v.upper && !std::isfinite(*v.upper))
      throw Error(ErrorKind::InvalidInput, "LP upper bound must be finite");
  }
}

namespace {

constexpr double kPivotTol = 1e-9;
constexpr double kCostTol = 1e-11;
constexpr double kRatioSlack = 1e-9;
constexpr std::size_t kDegenerateRunBeforeBland = 50;
constexpr std::size_t kReinvertEvery = 50;

/// Dense simplex tableau in the form  T·y = rhs,  y ≥ 0,  minimize c·y.
/// The initial rows are kept so that the tableau of the current basis can
/// be recomputed from scratch, which discards accumulated round-off.
class Tableau {
public:
  Tableau(std::size_t rows, std::size_t cols) : m_(rows), n_(cols), t_(rows * (cols + 1), 0.0) {}

  double &at(std::size_t i, std::size_t j) { return t_[i * (n_ + 1) + j]; }
  double at(std::size_t i, std::size_t j) const { return t_[i * (n_ + 1) + j]; }
  double &rhs(std::size_t i) { return at(i, n_); }
  double rhs(std::size_t i) const { return at(i, n_); }
  std::size_t rows() const { return m_; }
  std::size_t cols() const { return n_; }

  /// Records the current contents as the initial rows.
  void freeze() { orig_ = t_; }

  void pivot(std::size_t r, std::size_t c, std::vector<double> &cost) {
    double *pr = &t_[r * (n_ + 1)];
    double inv = 1.0 / pr[c];
    for (std::size_t j = 0; j <= n_; ++j)
      pr[j] *= inv;
    pr[c] = 1.0;
    for (std::size_t i = 0; i < m_; ++i) {
      if (i == r)
        continue;
      double *pi = &t_[i * (n_ + 1)];
      double f = pi[c];
      if (f == 0.0)
        continue;
      for (std::size_t j = 0; j <= n_; ++j)
        pi[j] -= f * pr[j];
      pi[c] = 0.0;
      if (std::fabs(pi[n_]) < 1e-13)
        pi[n_] = 0.0;
    }
    double f = cost[c];
    if (f != 0.0) {
      for (std::size_t j = 0; j <= n_; ++j)
        cost[j] -= f * pr[j];
      cost[c] = 0.0;
    }
  }

  void dropRow(std::size_t r) {
    auto erase = [&](std::vector<double> &v) {
      v.erase(v.begin() + static_cast<std::ptrdiff_t>(r * (n_ + 1)),
              v.begin() + static_cast<std::ptrdiff_t>((r + 1) * (n_ + 1)));
    };
    erase(t_);
    erase(orig_);
    --m_;
  }

  /// Replaces the tableau by B⁻¹·T₀ for the basis matrix B of `basis`.
  /// Returns false and leaves the tableau untouched when B is singular.
  bool reinvert(const std::vector<std::size_t> &basis) {
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const auto m = static_cast<Eigen::Index>(m_);
    const auto w = static_cast<Eigen::Index>(n_ + 1);
    Eigen::Map<const RowMajor> orig(orig_.data(), m, w);
    Eigen::MatrixXd b(m, m);
    for (Eigen::Index k = 0; k < m; ++k)
      b.col(k) = orig.col(static_cast<Eigen::Index>(basis[static_cast<std::size_t>(k)]));
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(b);
    // PartialPivLU does not report singularity; check the factor diagonal.
    const auto &lu_ = lu.matrixLU();
    double maxDiag = 0.0, minDiag = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < m; ++k) {
      maxDiag = std::max(maxDiag, std::fabs(lu_(k, k)));
      minDiag = std::min(minDiag, std::fabs(lu_(k, k)));
    }
    if (m > 0 && !(minDiag > 1e-11 * std::max(1.0, maxDiag)))
      return false;
    RowMajor fresh = lu.solve(RowMajor(orig));
    if (!fresh.allFinite())
      return false;
    std::copy(fresh.data(), fresh.data() + fresh.size(), t_.begin());
    for (std::size_t k = 0; k < m_; ++k) {
      for (std::size_t i = 0; i < m_; ++i)
        at(i, basis[k]) = i == k ? 1.0 : 0.0;
      if (std::fabs(rhs(k)) < 1e-13)
        rhs(k) = 0.0;
    }
    return true;
  }

private:
  std::size_t m_, n_;
  std::vector<double> t_;
  std::vector<double> orig_;
};

/// Reduced costs (and the negated objective in the last slot) of `base` for
/// the current basis.
void priceOut(const Tableau &t, const std::vector<std::size_t> &basis,
              const std::vector<double> &base, std::vector<double> &cost) {
  cost = base;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    double cb = base[basis[i]];
    if (cb != 0.0)
      for (std::size_t j = 0; j <= t.cols(); ++j)
        cost[j] -= cb * t.at(i, j);
  }
  for (std::size_t i = 0; i < t.rows(); ++i)
    cost[basis[i]] = 0.0;
}

enum class IterResult { Optimal, Unbounded };

class Simplex {
public:
  Simplex(Tableau &t, std::vector<std::size_t> &basis, std::vector<char> &allowed,
          std::vector<std::size_t> &pivots)
      : t_(t), basis_(basis), allowed_(allowed), pivots_(pivots), skipped_(t.cols(), 0) {}

  /// Minimizes `base`·y from the current basis; `cost` holds the reduced costs.
  IterResult run(const std::vector<double> &base, std::vector<double> &cost) {
    const std::size_t limit = 50000 + 50 * (t_.rows() + t_.cols());
    std::size_t sinceRefresh = 0;
    auto refresh = [&] {
      bool ok = sinceRefresh > 0 && t_.reinvert(basis_);
      if (ok)
        priceOut(t_, basis_, base, cost);
      sinceRefresh = 0;
      std::fill(skipped_.begin(), skipped_.end(), 0);
      return ok;
    };
    for (std::size_t iter = 0; iter < limit; ++iter) {
      if (sinceRefresh >= kReinvertEvery)
        refresh();
      std::size_t enter = chooseEntering(cost);
      if (enter == npos) {
        // Confirm optimality on a freshly factorized tableau.
        if (refresh())
          continue;
        return IterResult::Optimal;
      }
      std::size_t leave = chooseLeaving(enter);
      if (leave == npos) {
        // A column whose only positive entries are below the pivot tolerance,
        // or whose reduced cost is at noise level, is set aside until the next
        // pivot instead of being reported as a ray.
        bool ambiguous = cost[enter] > -1e-9;
        for (std::size_t i = 0; i < t_.rows() && !ambiguous; ++i)
          ambiguous = t_.at(i, enter) > 1e-12;
        if (!ambiguous) {
          if (refresh())
            continue;
          return IterResult::Unbounded;
        }
        skipped_[enter] = 1;
        continue;
      }
      if (t_.rhs(leave) <= 1e-12) {
        if (++degenerateRun_ >= kDegenerateRunBeforeBland)
          bland_ = true;
      } else {
        degenerateRun_ = 0;
      }
      t_.pivot(leave, enter, cost);
      basis_[leave] = enter;
      pivots_.push_back(enter);
      std::fill(skipped_.begin(), skipped_.end(), 0);
      ++sinceRefresh;
    }
    throw Error(ErrorKind::NumericalInstability, "simplex iteration limit exceeded");
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
  std::size_t chooseEntering(const std::vector<double> &cost) const {
    std::size_t best = npos;
    double bestVal = -kCostTol;
    for (std::size_t j = 0; j < t_.cols(); ++j) {
      if (!allowed_[j] || skipped_[j] || cost[j] >= -kCostTol)
        continue;
      if (bland_)
        return j;
      if (cost[j] < bestVal) {
        bestVal = cost[j];
        best = j;
      }
    }
    return best;
  }

  /// Two-pass ratio test: the first pass bounds the step with a small
  /// slack, the second picks the largest pivot element within that bound
  /// (or, under Bland's rule, the smallest basic index among rows whose
  /// pivot is not negligible next to the largest one).
  std::size_t chooseLeaving(std::size_t enter) const {
    double theta = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < t_.rows(); ++i) {
      double a = t_.at(i, enter);
      if (a > kPivotTol)
        theta = std::min(theta, (std::max(0.0, t_.rhs(i)) + kRatioSlack) / a);
    }
    if (std::isinf(theta))
      return npos;
    double maxA = 0.0;
    for (std::size_t i = 0; i < t_.rows(); ++i) {
      double a = t_.at(i, enter);
      if (a > kPivotTol && std::max(0.0, t_.rhs(i)) / a <= theta)
        maxA = std::max(maxA, a);
    }
    std::size_t best = npos;
    for (std::size_t i = 0; i < t_.rows(); ++i) {
      double a = t_.at(i, enter);
      if (!(a > kPivotTol && std::max(0.0, t_.rhs(i)) / a <= theta))
        continue;
      if (bland_) {
        if (a >= 1e-3 * maxA && (best == npos || basis_[i] < basis_[best]))
          best = i;
      } else if (best == npos || a > t_.at(best, enter) ||
                 (a == t_.at(best, enter) && basis_[i] < basis_[best])) {
        best = i;
      }
    }
    return best;
  }

  Tableau &t_;
  std::vector<std::size_t> &basis_;
  std::vector<char> &allowed_;
  std::vector<std::size_t> &pivots_;
  std::vector<char> skipped_;
  bool bland_ = false;
  std::size_t degenerateRun_ = 0;
};

/// How an original variable maps onto nonnegative tableau columns.
struct ColumnMap {
  std::size_t plus;
  std::size_t minus; ///< npos unless the variable is free
  double shift;      ///< x = shift + y (or y⁺ − y⁻ when free)
};

} // namespace

LpSolution solveLp(const LpProblem &p, double feasTol) {
  p.validate();
  constexpr std::size_t npos = Simplex::npos;
  const auto &vars = p.variables();

  std::vector<ColumnMap> cmap;
  std::size_t ny = 0;
  for (const auto &v : vars) {
    if (std::isinf(v.lower))
      cmap.push_back({ny++, ny++, 0.0});
    else
      cmap.push_back({ny++, npos, v.lower});
  }

  struct Row {
    std::vector<double> a;
    Relation rel;
    double b;
  };
  std::vector<Row> rows;
  auto addRow = [&](const std::vector<Term> &terms, Relation rel, double b) {
    Row r{std::vector<double>(ny, 0.0), rel, b};
    for (const auto &t : terms) {
      const auto &cm = cmap[t.var];
      r.a[cm.plus] += t.coef;
      if (cm.minus != npos)
        r.a[cm.minus] -= t.coef;
      r.b -= t.coef * cm.shift;
    }
    if (r.b < 0) {
      for (auto &x : r.a)
        x = -x;
      r.b = -r.b;
      if (r.rel == Relation::Le)
        r.rel = Relation::Ge;
      else if (r.rel == Relation::Ge)
        r.rel = Relation::Le;
    }
    rows.push_back(std::move(r));
  };
  for (const auto &c : p.constraints())
    addRow(c.terms, c.rel, c.rhs);
  for (std::size_t j = 0; j < vars.size(); ++j)
    if (vars[j].upper)
      addRow({Term{j, 1.0}}, Relation::Le, *vars[j].upper);

  std::size_t nslack = 0, nart = 0;
  for (const auto &r : rows) {
    if (r.rel != Relation::Eq)
      ++nslack;
    if (r.rel != Relation::Le)
      ++nart;
  }
  const std::size_t m = rows.size();
  const std::size_t ncols = ny + nslack + nart;
  Tableau t(m, ncols);
  std::vector<std::size_t> basis(m);
  std::vector<char> isArt(ncols, 0);
  std::size_t sc = ny, ac = ny + nslack;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < ny; ++j)
      t.at(i, j) = rows[i].a[j];
    t.rhs(i) = rows[i].b;
    if (rows[i].rel == Relation::Le) {
      t.at(i, sc) = 1.0;
      basis[i] = sc++;
    } else {
      if (rows[i].rel == Relation::Ge)
        t.at(i, sc++) = -1.0;
      t.at(i, ac) = 1.0;
      isArt[ac] = 1;
      basis[i] = ac++;
    }
  }

  LpSolution sol;
  std::vector<char> allowed(ncols, 1);
  double scale = 1.0;
  for (const auto &r : rows)
    scale = std::max(scale, r.b);

  t.freeze();

  // Phase 1: minimise the sum of artificials.
  if (nart > 0) {
    std::vector<double> base(ncols + 1, 0.0), cost;
    for (std::size_t j = 0; j < ncols; ++j)
      if (isArt[j])
        base[j] = 1.0;
    priceOut(t, basis, base, cost);
    Simplex sx(t, basis, allowed, sol.pivotColumns);
    // The phase-one objective is bounded below by zero, so an apparent ray
    // only reflects round-off in reduced costs near the optimum.
    sx.run(base, cost);
    double infeas = -cost[ncols];
    if (infeas > feasTol * scale) {
      sol.status = Status::Infeasible;
      return sol;
    }
    // Drive remaining artificials out of the basis or drop redundant rows.
    for (std::size_t i = 0; i < t.rows();) {
      if (!isArt[basis[i]]) {
        ++i;
        continue;
      }
      std::size_t col = npos;
      double best = 1e-9;
      for (std::size_t j = 0; j < ncols; ++j)
        if (!isArt[j] && std::fabs(t.at(i, j)) > best) {
          best = std::fabs(t.at(i, j));
          col = j;
        }
      if (col == npos) {
        t.dropRow(i);
        basis.erase(basis.begin() + static_cast<std::ptrdiff_t>(i));
        continue;
      }
      t.pivot(i, col, cost);
      basis[i] = col;
      sol.pivotColumns.push_back(col);
      ++i;
    }
    for (std::size_t j = 0; j < ncols; ++j)
      if (isArt[j])
        allowed[j] = 0;
    t.reinvert(basis);
  }

  // Phase 2: the real objective, always minimised internally.
  std::vector<double> c(ncols + 1, 0.0);
  double sign = p.sense() == Sense::Maximize ? -1.0 : 1.0;
  for (const auto &term : p.objective()) {
    const auto &cm = cmap[term.var];
    c[cm.plus] += sign * term.coef;
    if (cm.minus != npos)
      c[cm.minus] -= sign * term.coef;
  }
  std::vector<double> cost;
  priceOut(t, basis, c, cost);
  Simplex sx(t, basis, allowed, sol.pivotColumns);
  if (sx.run(c, cost) == IterResult::Unbounded) {
    sol.status = Status::Unbounded;
    return sol;
  }

  std::vector<double> y(ncols, 0.0);
  for (std::size_t i = 0; i < t.rows(); ++i)
    y[basis[i]] = std::max(0.0, t.rhs(i));
  sol.values.resize(vars.size());
  for (std::size_t j = 0; j < vars.size(); ++j) {
    const auto &cm = cmap[j];
    double x = cm.shift + y[cm.plus];
    if (cm.minus != npos)
      x -= y[cm.minus];
    sol.values[j] = x;
  }
  double obj = 0.0;
  for (const auto &term : p.objective())
    obj += term.coef * sol.values[term.var];
  sol.objectiveValue = obj;
  sol.status = Status::Optimal;
  return sol;
}

namespace {
std::string lpName(const std::string &raw, std::size_t idx, char prefix) {
  std::string out;
  for (char ch : raw) {
    if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '.')
      out += ch;
    else
      out += '_';
  }
  if (out.empty() || std::isdigit(static_cast<unsigned char>(out[0])) || out[0] == '.')
    out = std::string(1, prefix) + std::to_string(idx) + (out.empty() ? "" : "_" + out);
  return out;
}

void writeTerms(std::ostream &os, const std::vector<Term> &ts,
                const std::vector<std::string> &names) {
  bool first = true;
  for (const auto &t : ts) {
    if (t.coef == 0.0)
      continue;
    os << (t.coef < 0 ? (first ? "-" : " - ") : (first ? "" : " + "));
    double a = std::fabs(t.coef);
    if (a != 1.0)
      os << a << " ";
    os << names[t.var];
    first = false;
  }
  if (first)
    os << "0 " << (names.empty() ? std::string("x") : names[0]);
}
} // namespace

std::string toCplexLp(const LpProblem &p) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < p.variables().size(); ++j)
    names.push_back(lpName(p.variables()[j].name, j, 'x'));
  std::ostringstream os;
  os.precision(17);
  os << (p.sense() == Sense::Maximize ? "Maximize\n" : "Minimize\n") << " obj: ";
  writeTerms(os, p.objective(), names);
  os << "\nSubject To\n";
  for (std::size_t i = 0; i < p.constraints().size(); ++i) {
    const auto &c = p.constraints()[i];
    os << " " << lpName(c.name, i, 'c') << ": ";
    writeTerms(os, c.terms, names);
    os << (c.rel == Relation::Eq ? " = " : c.rel == Relation::Le ? " <= " : " >= ") << c.rhs
       << "\n";
  }
  os << "Bounds\n";
  for (std::size_t j = 0; j < p.variables().size(); ++j) {
    const auto &v = p.variables()[j];
    if (std::isinf(v.lower)) {
      if (v.upper)
        os << " -inf <= " << names[j] << " <= " << *v.upper << "\n";
      else
        os << " " << names[j] << " free\n";
    } else if (v.upper) {
      os << " " << v.lower << " <= " << names[j] << " <= " << *v.upper << "\n";
    } else if (v.lower != 0.0) {
      os << " " << names[j] << " >= " << v.lower << "\n";
    }
  }
  os << "End\n";
  return os.str();
}

} // namespace npa::lp
