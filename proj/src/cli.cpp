#include "npa/cli.hpp"

#include "npa/lang.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace npa::cli {

using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double msSince(Clock::time_point t) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t).count();
}

std::string readFile(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorKind::InvalidInput, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void collectTexts(const TreeExpr &root, std::set<std::string> &actions,
                  std::set<std::string> &conditions) {
  std::set<const void *> seen;
  std::vector<TreeExpr> todo{root};
  while (!todo.empty()) {
    TreeExpr e = todo.back();
    todo.pop_back();
    if (!seen.insert(e.id()).second)
      continue;
    switch (e.kind()) {
    case ExprKind::Var:
      break;
    case ExprKind::Concat:
      todo.push_back(e.left());
      todo.push_back(e.right());
      break;
    case ExprKind::Mu:
      todo.push_back(e.body());
      break;
    case ExprKind::Leaf:
    case ExprKind::Node:
      if (auto s = std::get_if<SeqActSym>(&e.symbol()))
        actions.insert(s->action);
      if (auto c = std::get_if<CondSym>(&e.symbol()))
        conditions.insert(c->condition);
      for (const auto &k : e.children())
        todo.push_back(k);
      break;
    }
  }
}

std::vector<std::string> variablesOf(const std::vector<std::string> &actions,
                                     const std::vector<std::string> &conditions) {
  std::set<std::string> vars;
  for (const auto &a : actions)
    lang::collectVariables(lang::parseAction(a), vars);
  for (const auto &c : conditions)
    lang::collectVariables(*lang::parseCondition(c), vars);
  return {vars.begin(), vars.end()};
}

json elementToJson(const Element &e) {
  json arr = json::array();
  for (double v : e) {
    if (std::isfinite(v))
      arr.push_back(v);
    else if (std::isnan(v))
      arr.push_back("nan");
    else
      arr.push_back(v > 0 ? "inf" : "-inf");
  }
  return arr;
}

double numberFromJson(const json &j) {
  if (j.is_number())
    return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf")
      return std::numeric_limits<double>::infinity();
    if (s == "-inf")
      return -std::numeric_limits<double>::infinity();
    if (s == "nan")
      return std::numeric_limits<double>::quiet_NaN();
  }
  throw Error(ErrorKind::InvalidInput, "expected a number, got " + j.dump());
}

// Portable uniform variates from a 64-bit generator.
double unitInterval(std::mt19937_64 &rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::size_t below(std::mt19937_64 &rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(unitInterval(rng) * static_cast<double>(n)));
}

} // namespace

// ---------------------------------------------------------------------------
// Programs and domains
// ---------------------------------------------------------------------------

LoadedProgram loadProgramText(const std::string &text) {
  LoadedProgram out;
  std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    out.extracted = frontend::loadEquationJson(text);
    std::set<std::string> actions, conditions;
    for (const auto &b : out.extracted.bodies)
      collectTexts(b, actions, conditions);
    out.actions.assign(actions.begin(), actions.end());
    out.conditions.assign(conditions.begin(), conditions.end());
    return out;
  }
  out.program = frontend::parse(text);
  out.extracted = frontend::extractProgram(*out.program);
  out.actions = out.program->actionTable;
  out.conditions = out.program->conditionTable;
  return out;
}

LoadedProgram loadProgramFile(const std::string &path) { return loadProgramText(readFile(path)); }

std::vector<std::string> programVariables(const LoadedProgram &p) {
  return variablesOf(p.actions, p.conditions);
}

std::unique_ptr<OmegaPma> makeDomain(const DomainTag &tag, const LoadedProgram &p,
                                     const DomainOptions &options) {
  if (!options.rewrites.empty() && tag.kind != DomainTag::Kind::ExpInv)
    throw Error(ErrorKind::InvalidInput, "rewrite declarations require the expinv domain");
  if (options.pairVariable && tag.kind != DomainTag::Kind::Pair)
    throw Error(ErrorKind::InvalidInput, "a tracked variable requires the pair domain");
  switch (tag.kind) {
  case DomainTag::Kind::Reals:
    return std::make_unique<RealDomain>();
  case DomainTag::Kind::Pair: {
    if (options.pairVariable)
      return std::make_unique<PairDomain>(options.pairVariable);
    auto inc = PairDomain::incrementedVariables(p.actions);
    if (inc.size() > 1)
      throw Error(ErrorKind::InvalidInput,
                  "pair domain: several incremented variables, choose one to track");
    if (inc.empty())
      return std::make_unique<PairDomain>();
    return std::make_unique<PairDomain>(inc.front());
  }
  case DomainTag::Kind::Bayes:
    return std::make_unique<BayesDomain>(programVariables(p));
  case DomainTag::Kind::ExpInv: {
    std::set<std::string> vars;
    for (const auto &v : programVariables(p))
      vars.insert(v);
    for (const auto &r : options.rewrites)
      lang::collectVariables(*lang::parseCondition(r.expr), vars);
    return std::make_unique<ExpInvDomain>(std::vector<std::string>(vars.begin(), vars.end()),
                                          options.rewrites);
  }
  case DomainTag::Kind::Moment:
    return std::make_unique<MomentDomain>(tag.momentOrder);
  }
  throw Error(ErrorKind::InvalidInput, "unknown domain");
}

// ---------------------------------------------------------------------------
// Analysis runs
// ---------------------------------------------------------------------------

std::string solverChoiceName(SolverChoice s) {
  switch (s) {
  case SolverChoice::Newton:
    return "newton";
  case SolverChoice::Kleene:
    return "kleene";
  case SolverChoice::Both:
    return "both";
  }
  return "?";
}

SolverChoice parseSolverChoice(const std::string &text) {
  if (text == "newton")
    return SolverChoice::Newton;
  if (text == "kleene")
    return SolverChoice::Kleene;
  if (text == "both")
    return SolverChoice::Both;
  throw Error(ErrorKind::InvalidInput, "unknown solver '" + text + "' (newton, kleene, both)");
}

SummaryVector parseWarmStartJson(const std::string &text, const std::vector<std::string> &procs,
                                 const OmegaPma &dom, const Element &fallback) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception &e) {
    throw Error(ErrorKind::InvalidInput, std::string("warm start: ") + e.what());
  }
  if (!j.is_object())
    throw Error(ErrorKind::InvalidInput, "warm start must be a JSON object");
  SummaryVector out(procs.size(), fallback);
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto pos = std::find(procs.begin(), procs.end(), it.key());
    if (pos == procs.end())
      throw Error(ErrorKind::InvalidInput, "warm start names unknown procedure " + it.key());
    Element e;
    if (!it.value().is_array())
      throw Error(ErrorKind::InvalidInput, "warm start for " + it.key() + " must be an array");
    for (const auto &x : it.value()) {
      if (x.is_array())
        for (const auto &y : x)
          e.push_back(numberFromJson(y));
      else
        e.push_back(numberFromJson(x));
    }
    dom.checkElement(e);
    out[static_cast<std::size_t>(pos - procs.begin())] = std::move(e);
  }
  return out;
}

std::string reportToJson(const Report &r) {
  json j;
  j["input"] = r.input;
  j["domain"] = r.domain;
  j["solver"] = r.solver;
  j["rounds"] = r.rounds;
  j["converged"] = r.converged;
  j["procedures"] = r.procedures;
  json summaries = json::object(), values = json::object();
  for (std::size_t i = 0; i < r.procedures.size(); ++i) {
    summaries[r.procedures[i]] = i < r.summaries.size() ? r.summaries[i] : "";
    values[r.procedures[i]] = i < r.values.size() ? elementToJson(r.values[i]) : json::array();
  }
  j["summaries"] = summaries;
  j["values"] = values;
  if (r.kleeneRounds)
    j["kleeneRounds"] = *r.kleeneRounds;
  if (r.kleeneConverged)
    j["kleeneConverged"] = *r.kleeneConverged;
  if (r.sandwich)
    j["sandwich"] = *r.sandwich;
  j["timingsMs"] = r.timingsMs;
  if (r.trace)
    j["trace"] = *r.trace;
  return j.dump(2);
}

Report reportFromJson(const std::string &text) {
  try {
    json j = json::parse(text);
    Report r;
    r.input = j.value("input", "");
    r.domain = j.at("domain").get<std::string>();
    r.solver = j.at("solver").get<std::string>();
    r.rounds = j.at("rounds").get<std::size_t>();
    r.converged = j.at("converged").get<bool>();
    r.procedures = j.at("procedures").get<std::vector<std::string>>();
    for (const auto &p : r.procedures) {
      r.summaries.push_back(j.at("summaries").at(p).get<std::string>());
      Element e;
      for (const auto &x : j.at("values").at(p))
        e.push_back(numberFromJson(x));
      r.values.push_back(std::move(e));
    }
    if (j.contains("kleeneRounds"))
      r.kleeneRounds = j["kleeneRounds"].get<std::size_t>();
    if (j.contains("kleeneConverged"))
      r.kleeneConverged = j["kleeneConverged"].get<bool>();
    if (j.contains("sandwich"))
      r.sandwich = j["sandwich"].get<bool>();
    if (j.contains("timingsMs"))
      r.timingsMs = j["timingsMs"].get<std::map<std::string, double>>();
    if (j.contains("trace"))
      r.trace = j["trace"].get<std::string>();
    return r;
  } catch (const json::exception &e) {
    throw Error(ErrorKind::InvalidInput, std::string("report: ") + e.what());
  }
}

std::string reportToText(const Report &r) {
  std::ostringstream os;
  os << "domain: " << r.domain << "\nsolver: " << r.solver << "\nrounds: " << r.rounds
     << (r.converged ? " (converged)" : " (round limit reached)") << '\n';
  if (r.kleeneRounds)
    os << "kleene rounds: " << *r.kleeneRounds
       << (r.kleeneConverged.value_or(false) ? " (converged)" : " (round limit reached)") << '\n';
  if (r.sandwich)
    os << "sandwich check: " << (*r.sandwich ? "passed" : "FAILED") << '\n';
  for (std::size_t i = 0; i < r.procedures.size(); ++i) {
    os << r.procedures[i] << ":\n";
    std::istringstream lines(i < r.summaries.size() ? r.summaries[i] : "");
    std::string line;
    while (std::getline(lines, line))
      os << "  " << line << '\n';
  }
  if (r.trace)
    os << "trace: " << *r.trace << '\n';
  return os.str();
}

RunOutcome runAnalysis(const RunSpec &spec) {
  const auto start = Clock::now();
  RunOutcome out;
  Report &rep = out.report;
  rep.input = spec.inputPath;
  rep.domain = spec.domain.text();
  rep.solver = solverChoiceName(spec.solver);

  auto t = Clock::now();
  out.program = spec.inputText ? loadProgramText(*spec.inputText) : loadProgramFile(spec.inputPath);
  rep.timingsMs["load"] = msSince(t);

  DomainOptions options;
  options.pairVariable = spec.pairVariable;
  if (!spec.rewritesPath.empty()) {
    if (spec.domain.kind != DomainTag::Kind::ExpInv)
      throw Error(ErrorKind::InvalidInput, "rewrite declarations require the expinv domain");
    options.rewrites = parseRewriteJson(readFile(spec.rewritesPath));
  }
  out.domain = makeDomain(spec.domain, out.program, options);
  const OmegaPma &dom = *out.domain;

  t = Clock::now();
  std::vector<AlgTreeExpr> fs;
  for (const auto &b : out.program.extracted.bodies)
    fs.push_back(toAlgebraic(b, dom));
  rep.timingsMs["toAlgebraic"] = msSince(t);
  rep.procedures = out.program.extracted.names;

  LpSolveStrategy strategy;
  SolverConfig cfg;
  cfg.maxRounds = spec.maxRounds;
  cfg.tolerance = spec.tolerance;
  cfg.recordTrace = spec.recordTrace || spec.solver == SolverChoice::Both;

  const std::size_t n = fs.size();
  auto *expinv = dynamic_cast<const ExpInvDomain *>(&dom);
  Element seed = expinv ? expinv->warmStart(out.program.actions) : dom.zero();
  switch (spec.warmStart.kind) {
  case WarmStartSpec::Kind::Auto:
    if (expinv)
      cfg.warmStart = SummaryVector(n, seed);
    break;
  case WarmStartSpec::Kind::Zero:
    break;
  case WarmStartSpec::Kind::File:
    cfg.warmStart = parseWarmStartJson(readFile(spec.warmStart.path), rep.procedures, dom, seed);
    break;
  }

  if (spec.solver != SolverChoice::Kleene) {
    out.newton = newtonSolve(fs, dom, strategy, cfg);
    rep.timingsMs["newton.total"] = out.newton->timings.totalMs;
    rep.timingsMs["newton.evaluate"] = out.newton->timings.evaluateMs;
    rep.timingsMs["newton.linearize"] = out.newton->timings.linearizeMs;
    rep.timingsMs["newton.solve"] = out.newton->timings.solveMs;
  }
  if (spec.solver != SolverChoice::Newton) {
    SolverConfig kcfg = cfg;
    kcfg.warmStart.reset();
    if (spec.kleeneMaxRounds)
      kcfg.maxRounds = spec.kleeneMaxRounds;
    out.kleene = kleeneSolve(fs, dom, strategy, kcfg);
    rep.timingsMs["kleene.total"] = out.kleene->timings.totalMs;
  }
  const AnalysisResult &primary = out.newton ? *out.newton : *out.kleene;
  rep.rounds = primary.rounds;
  rep.converged = primary.converged;
  if (out.newton && out.kleene) {
    rep.kleeneRounds = out.kleene->rounds;
    rep.kleeneConverged = out.kleene->converged;
    rep.sandwich = sandwichCheck(*out.newton, *out.kleene, fs, dom, strategy,
                                 std::max(spec.tolerance, 1e-9));
  }
  for (const auto &e : primary.finalSummary) {
    rep.summaries.push_back(dom.render(e));
    rep.values.push_back(e);
  }
  if (!spec.tracePath.empty()) {
    std::ofstream csv(spec.tracePath);
    if (!csv)
      throw Error(ErrorKind::InvalidInput, "cannot write " + spec.tracePath);
    writeTraceCsv(csv, primary, rep.procedures);
    rep.trace = spec.tracePath;
  }
  rep.timingsMs["total"] = msSince(start);
  return out;
}

int exitCodeFor(const Report &r) {
  bool ok = r.converged && r.kleeneConverged.value_or(true);
  return ok ? 0 : 2;
}

int exitCodeFor(const Error &e) {
  switch (e.kind()) {
  case ErrorKind::SubtractUndefined:
  case ErrorKind::SolveFailure:
  case ErrorKind::NonMonotoneRound:
  case ErrorKind::NumericalInstability:
    return 3;
  default:
    return 4;
  }
}

// ---------------------------------------------------------------------------
// Benchmark generation
// ---------------------------------------------------------------------------

std::vector<std::string> generateBenchmarks(const BenchSpec &spec) {
  if (spec.formWeights.size() != 3)
    throw Error(ErrorKind::InvalidInput, "exactly three form weights are required");
  double total = 0.0;
  for (double w : spec.formWeights) {
    if (!(w >= 0.0))
      throw Error(ErrorKind::InvalidInput, "form weights must be nonnegative");
    total += w;
  }
  if (!(total > 0.0))
    throw Error(ErrorKind::InvalidInput, "form weights must not all be zero");
  if (spec.programCount > 0 && spec.procedureCount == 0)
    throw Error(ErrorKind::InvalidInput, "programs need at least one procedure");

  const char *vars[] = {"b1", "b2"};
  const char *bools[] = {"true", "false"};
  std::vector<std::string> out;
  for (std::size_t prog = 0; prog < spec.programCount; ++prog) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed),
                      static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(prog)};
    std::mt19937_64 rng(seq);
    const std::size_t n = spec.procedureCount;
    auto proc = [&] { return "X" + std::to_string(below(rng, n)); };
    auto prob = [&] {
      double p = 0.05 + 0.9 * unitInterval(rng);
      return lang::formatNumber(std::round(p * 1000.0) / 1000.0);
    };
    std::ostringstream os;
    for (std::size_t i = 0; i < n; ++i) {
      double u = unitInterval(rng) * total;
      int form = u < spec.formWeights[0] ? 0 : (u < spec.formWeights[0] + spec.formWeights[1] ? 1 : 2);
      if (spec.formWeights[form] == 0.0)
        form = spec.formWeights[2] > 0 ? 2 : (spec.formWeights[1] > 0 ? 1 : 0);
      os << "proc X" << i << "() begin\n  ";
      if (form == 0) {
        std::string p = prob();
        std::string x = vars[below(rng, 2)], a = bools[below(rng, 2)], ci = proc();
        std::string y = vars[below(rng, 2)], b = bools[below(rng, 2)], cj = proc();
        os << "if prob(" << p << ") then " << x << " := " << a << "; call " << ci << " else "
           << y << " := " << b << "; call " << cj << " fi";
      } else if (form == 1) {
        std::string p = prob();
        std::string x = vars[below(rng, 2)], ci = proc(), cj = proc();
        if (spec.omitConditions)
          os << "if prob(" << p << ") then call " << ci << " else skip fi";
        else
          os << "if prob(" << p << ") then if " << x << " then call " << ci << " else call "
             << cj << " fi else skip fi";
      } else {
        std::string ci = proc(), cj = proc();
        os << "call " << ci << "; call " << cj;
      }
      os << "\nend\n";
    }
    out.push_back(os.str());
  }
  return out;
}

std::vector<std::string> writeBenchmarks(const BenchSpec &spec, const std::string &dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> paths;
  auto progs = generateBenchmarks(spec);
  for (std::size_t i = 0; i < progs.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "prog%03zu.npa", i);
    std::string path = (std::filesystem::path(dir) / name).string();
    std::ofstream f(path);
    if (!f)
      throw Error(ErrorKind::InvalidInput, "cannot write " + path);
    f << progs[i];
    paths.push_back(path);
  }
  return paths;
}

// ---------------------------------------------------------------------------
// Monte-Carlo oracle
// ---------------------------------------------------------------------------

void parallelFor(std::size_t n, std::size_t threads, const std::function<void(std::size_t)> &fn) {
  if (threads == 0)
    threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i)
      fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failureMutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n)
          return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failureMutex);
          if (!failure)
            failure = std::current_exception();
          next = n;
          return;
        }
      }
    });
  for (auto &th : pool)
    th.join();
  if (failure)
    std::rethrow_exception(failure);
}

namespace {

/// Expression tree with variables resolved to state slots.
struct Compiled {
  lang::Op op = lang::Op::Num;
  double num = 0.0;
  int slot = -1;
  std::vector<Compiled> args;

  double eval(const std::vector<double> &st) const {
    using lang::Op;
    switch (op) {
    case Op::Num:
    case Op::Bool:
      return num;
    case Op::Var:
      return st[static_cast<std::size_t>(slot)];
    case Op::Not:
      return args[0].eval(st) != 0.0 ? 0.0 : 1.0;
    case Op::And:
      return (args[0].eval(st) != 0.0 && args[1].eval(st) != 0.0) ? 1.0 : 0.0;
    case Op::Or:
      return (args[0].eval(st) != 0.0 || args[1].eval(st) != 0.0) ? 1.0 : 0.0;
    case Op::Neg:
      return -args[0].eval(st);
    case Op::Add:
      return args[0].eval(st) + args[1].eval(st);
    case Op::Sub:
      return args[0].eval(st) - args[1].eval(st);
    case Op::Mul:
      return args[0].eval(st) * args[1].eval(st);
    case Op::Div:
      return args[0].eval(st) / args[1].eval(st);
    case Op::Lt:
      return args[0].eval(st) < args[1].eval(st) ? 1.0 : 0.0;
    case Op::Le:
      return args[0].eval(st) <= args[1].eval(st) ? 1.0 : 0.0;
    case Op::Gt:
      return args[0].eval(st) > args[1].eval(st) ? 1.0 : 0.0;
    case Op::Ge:
      return args[0].eval(st) >= args[1].eval(st) ? 1.0 : 0.0;
    case Op::Eq:
      return args[0].eval(st) == args[1].eval(st) ? 1.0 : 0.0;
    case Op::Ne:
      return args[0].eval(st) != args[1].eval(st) ? 1.0 : 0.0;
    }
    return 0.0;
  }
};

Compiled compileExpr(const lang::Expr &e, const std::map<std::string, int> &slots) {
  Compiled c;
  c.op = e.op;
  c.num = e.num;
  if (e.op == lang::Op::Var)
    c.slot = slots.at(e.name);
  for (const auto &a : e.args)
    c.args.push_back(compileExpr(*a, slots));
  return c;
}

struct CompiledAction {
  lang::Action::Kind kind = lang::Action::Kind::Skip;
  int slot = -1;
  Compiled expr;
  lang::Dist dist;
  double reward = 0.0;
};

enum class EdgeKind { None, Seq, Cond, Prob, Call };

struct CompiledEdge {
  EdgeKind kind = EdgeKind::None;
  std::size_t a = 0, b = 0; ///< targets
  std::size_t payload = 0;  ///< action, condition or callee index
  double p = 0.0;
};

struct Machine {
  std::vector<CompiledEdge> edges; ///< indexed by node id
  std::vector<std::size_t> entries;
  std::vector<CompiledAction> actions;
  std::vector<Compiled> conditions;
  std::size_t slots = 0;
};

struct TrialResult {
  enum class End { Terminated, Killed, Capped } end = End::Terminated;
  std::vector<double> state;
  double reward = 0.0;
};

TrialResult runTrial(const Machine &m, std::size_t entry, const std::vector<double> &init,
                     std::mt19937_64 &rng, std::size_t maxSteps, std::size_t maxStack,
                     std::vector<std::size_t> &stack) {
  TrialResult r;
  r.state = init;
  stack.clear();
  std::size_t node = m.entries[entry];
  std::size_t steps = 0;
  for (;;) {
    const CompiledEdge &e = m.edges[node];
    if (e.kind == EdgeKind::None) {
      if (stack.empty())
        return r;
      node = stack.back();
      stack.pop_back();
      continue;
    }
    if (++steps > maxSteps) {
      r.end = TrialResult::End::Capped;
      return r;
    }
    switch (e.kind) {
    case EdgeKind::Seq: {
      const CompiledAction &a = m.actions[e.payload];
      switch (a.kind) {
      case lang::Action::Kind::Skip:
        break;
      case lang::Action::Kind::Assign:
        r.state[static_cast<std::size_t>(a.slot)] = a.expr.eval(r.state);
        break;
      case lang::Action::Kind::Sample: {
        double u = unitInterval(rng);
        double v;
        if (a.dist.kind == lang::Dist::Kind::Ber) {
          v = u < a.dist.params[0] ? 1.0 : 0.0;
        } else {
          double lo = a.dist.params[0], hi = a.dist.params[1];
          v = std::min(hi, lo + std::floor(u * (hi - lo + 1.0)));
        }
        r.state[static_cast<std::size_t>(a.slot)] = v;
        break;
      }
      case lang::Action::Kind::Reward:
        r.reward += a.reward;
        break;
      case lang::Action::Kind::Assume:
        if (a.expr.eval(r.state) == 0.0) {
          r.end = TrialResult::End::Killed;
          return r;
        }
        break;
      }
      node = e.a;
      break;
    }
    case EdgeKind::Cond:
      node = m.conditions[e.payload].eval(r.state) != 0.0 ? e.a : e.b;
      break;
    case EdgeKind::Prob:
      node = unitInterval(rng) < e.p ? e.a : e.b;
      break;
    case EdgeKind::Call:
      if (stack.size() >= maxStack) {
        r.end = TrialResult::End::Capped;
        return r;
      }
      stack.push_back(e.a);
      node = m.entries[e.payload];
      break;
    case EdgeKind::None:
      break;
    }
  }
}

Machine compileProgram(const frontend::Program &prog, const std::vector<std::string> &vars) {
  Machine m;
  std::map<std::string, int> slots;
  for (std::size_t i = 0; i < vars.size(); ++i)
    slots[vars[i]] = static_cast<int>(i);
  m.slots = vars.size();
  std::map<std::string, std::size_t> actionIndex, condIndex;
  for (std::size_t i = 0; i < prog.actionTable.size(); ++i) {
    lang::Action a = lang::parseAction(prog.actionTable[i]);
    CompiledAction c;
    c.kind = a.kind;
    if (!a.var.empty())
      c.slot = slots.at(a.var);
    if (a.expr)
      c.expr = compileExpr(*a.expr, slots);
    c.dist = a.dist;
    c.reward = a.reward;
    m.actions.push_back(std::move(c));
    actionIndex[prog.actionTable[i]] = i;
  }
  for (std::size_t i = 0; i < prog.conditionTable.size(); ++i) {
    m.conditions.push_back(compileExpr(*lang::parseCondition(prog.conditionTable[i]), slots));
    condIndex[prog.conditionTable[i]] = i;
  }
  std::size_t maxNode = 0;
  for (const auto &p : prog.procedures)
    for (auto v : p.graph.nodes)
      maxNode = std::max(maxNode, v);
  m.edges.assign(maxNode + 1, CompiledEdge{});
  for (const auto &p : prog.procedures) {
    m.entries.push_back(p.graph.entry);
    for (const auto &e : p.graph.edges) {
      CompiledEdge c;
      std::visit(
          [&](const auto &s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, SeqActSym>) {
              c.kind = EdgeKind::Seq;
              c.payload = actionIndex.at(s.action);
            } else if constexpr (std::is_same_v<T, CondSym>) {
              c.kind = EdgeKind::Cond;
              c.payload = condIndex.at(s.condition);
            } else if constexpr (std::is_same_v<T, ProbSym>) {
              c.kind = EdgeKind::Prob;
              c.p = s.p;
            } else if constexpr (std::is_same_v<T, CallSym>) {
              c.kind = EdgeKind::Call;
              c.payload = s.proc;
            } else if constexpr (std::is_same_v<T, NdetSym>) {
              throw Error(ErrorKind::NdetUnsupported,
                          "the oracle cannot simulate nondeterministic choice");
            } else {
              c.kind = EdgeKind::None;
            }
          },
          e.command);
      if (!e.targets.empty())
        c.a = e.targets[0];
      if (e.targets.size() > 1)
        c.b = e.targets[1];
      m.edges[e.source] = c;
    }
  }
  return m;
}

/// Per-chunk sums, merged in chunk order.
struct Accumulator {
  std::size_t trials = 0, capped = 0;
  std::vector<double> sum, sumSq;
};

} // namespace

OracleEstimate monteCarloOracle(const frontend::Program &program, const OracleSpec &spec) {
  for (const auto &p : program.procedures)
    for (const auto &e : p.graph.edges)
      if (std::holds_alternative<NdetSym>(e.command))
        throw Error(ErrorKind::NdetUnsupported, "the oracle cannot simulate nondeterministic choice");
  if (program.procedures.empty())
    throw Error(ErrorKind::InvalidInput, "program has no procedures");
  if (spec.trials == 0)
    throw Error(ErrorKind::InvalidInput, "at least one trial is required");

  std::vector<std::string> vars = variablesOf(program.actionTable, program.conditionTable);
  for (const auto &[v, x] : spec.initialState)
    if (!std::binary_search(vars.begin(), vars.end(), v))
      vars.insert(std::upper_bound(vars.begin(), vars.end(), v), v);
  Machine m = compileProgram(program, vars);
  std::vector<double> init(vars.size(), 0.0);
  for (const auto &[v, x] : spec.initialState)
    init[static_cast<std::size_t>(std::lower_bound(vars.begin(), vars.end(), v) - vars.begin())] = x;

  std::size_t entry = 0;
  if (!spec.procedure.empty()) {
    auto idx = program.indexOf(spec.procedure);
    if (!idx)
      throw Error(ErrorKind::InvalidInput, "unknown procedure " + spec.procedure);
    entry = *idx;
  }

  OracleEstimate est;
  std::size_t width = 0;
  std::function<void(const TrialResult &, std::vector<double> &)> observe;
  switch (spec.domain.kind) {
  case DomainTag::Kind::Reals:
    est.labels = {"P[term]"};
    width = 1;
    observe = [](const TrialResult &, std::vector<double> &x) { x[0] = 1.0; };
    break;
  case DomainTag::Kind::Pair: {
    std::optional<std::string> tracked = spec.pairVariable;
    if (!tracked) {
      auto inc = PairDomain::incrementedVariables(program.actionTable);
      if (inc.size() > 1)
        throw Error(ErrorKind::InvalidInput, "pair oracle: several incremented variables");
      if (inc.size() == 1)
        tracked = inc.front();
    }
    int slot = -1;
    if (tracked) {
      auto it = std::lower_bound(vars.begin(), vars.end(), *tracked);
      if (it == vars.end() || *it != *tracked)
        throw Error(ErrorKind::InvalidInput, "unknown variable " + *tracked);
      slot = static_cast<int>(it - vars.begin());
    }
    est.labels = {"P[term]", "E[delta]"};
    width = 2;
    std::vector<double> start = init;
    observe = [slot, start](const TrialResult &r, std::vector<double> &x) {
      x[0] = 1.0;
      double d = r.reward;
      if (slot >= 0)
        d += r.state[static_cast<std::size_t>(slot)] - start[static_cast<std::size_t>(slot)];
      x[1] = d;
    };
    break;
  }
  case DomainTag::Kind::Bayes: {
    BayesDomain dom(variablesOf(program.actionTable, program.conditionTable));
    const auto &bv = dom.variables();
    std::vector<int> slotOf;
    for (const auto &v : bv)
      slotOf.push_back(static_cast<int>(std::lower_bound(vars.begin(), vars.end(), v) - vars.begin()));
    width = dom.stateCount();
    for (std::size_t s = 0; s < width; ++s)
      est.labels.push_back(dom.stateLabel(s));
    const std::size_t nb = bv.size();
    observe = [slotOf, nb](const TrialResult &r, std::vector<double> &x) {
      std::size_t s = 0;
      for (std::size_t v = 0; v < nb; ++v)
        if (r.state[static_cast<std::size_t>(slotOf[v])] == 0.0)
          s |= std::size_t{1} << (nb - 1 - v);
      x[s] = 1.0;
    };
    break;
  }
  case DomainTag::Kind::Moment: {
    const std::size_t k = spec.domain.momentOrder;
    width = k + 1;
    for (std::size_t i = 0; i <= k; ++i)
      est.labels.push_back("E[R^" + std::to_string(i) + "]");
    observe = [k](const TrialResult &r, std::vector<double> &x) {
      double p = 1.0;
      for (std::size_t i = 0; i <= k; ++i) {
        x[i] = p;
        p *= r.reward;
      }
    };
    break;
  }
  case DomainTag::Kind::ExpInv:
    throw Error(ErrorKind::InvalidInput, "the oracle supports reals, pair, bayes and moment:k");
  }

  constexpr std::size_t chunk = 1 << 14;
  const std::size_t chunks = (spec.trials + chunk - 1) / chunk;
  std::vector<Accumulator> acc(chunks);
  parallelFor(chunks, spec.threads, [&](std::size_t c) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed),
                      static_cast<std::uint32_t>(spec.seed >> 32), static_cast<std::uint32_t>(c),
                      0x6f7261u};
    std::mt19937_64 rng(seq);
    Accumulator &a = acc[c];
    a.sum.assign(width, 0.0);
    a.sumSq.assign(width, 0.0);
    std::vector<double> x(width);
    std::vector<std::size_t> stack;
    const std::size_t n = std::min(chunk, spec.trials - c * chunk);
    for (std::size_t i = 0; i < n; ++i) {
      TrialResult r = runTrial(m, entry, init, rng, spec.maxSteps, spec.maxStack, stack);
      ++a.trials;
      if (r.end == TrialResult::End::Capped)
        ++a.capped;
      if (r.end != TrialResult::End::Terminated)
        continue;
      std::fill(x.begin(), x.end(), 0.0);
      observe(r, x);
      for (std::size_t j = 0; j < width; ++j) {
        a.sum[j] += x[j];
        a.sumSq[j] += x[j] * x[j];
      }
    }
  });

  std::vector<double> sum(width, 0.0), sumSq(width, 0.0);
  for (const auto &a : acc) {
    est.trials += a.trials;
    est.capped += a.capped;
    for (std::size_t j = 0; j < width; ++j) {
      sum[j] += a.sum[j];
      sumSq[j] += a.sumSq[j];
    }
  }
  const double n = static_cast<double>(est.trials);
  for (std::size_t j = 0; j < width; ++j) {
    double mean = sum[j] / n;
    double var = std::max(0.0, sumSq[j] / n - mean * mean);
    est.mean.push_back(mean);
    est.standardError.push_back(std::sqrt(var / n));
  }
  return est;
}

std::vector<double> comparableEntries(const OmegaPma &dom, const Element &e,
                                      const std::map<std::string, double> &initialState) {
  auto *bayes = dynamic_cast<const BayesDomain *>(&dom);
  if (!bayes)
    return e;
  const auto &vars = bayes->variables();
  std::size_t s = 0;
  for (std::size_t v = 0; v < vars.size(); ++v) {
    auto it = initialState.find(vars[v]);
    if (it == initialState.end() || it->second == 0.0)
      s |= std::size_t{1} << (vars.size() - 1 - v);
  }
  const std::size_t n = bayes->stateCount();
  return std::vector<double>(e.begin() + static_cast<std::ptrdiff_t>(s * n),
                             e.begin() + static_cast<std::ptrdiff_t>((s + 1) * n));
}

namespace {

// Both tails of Binomial(n, p) at k, summed outward from k with the pmf ratio.
std::pair<double, double> binomialTails(double n, double p, double k) {
  if (p <= 0.0)
    return {1.0, k <= 0.0 ? 1.0 : 0.0};
  if (p >= 1.0)
    return {k >= n ? 1.0 : 0.0, 1.0};
  const double logPmf = std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1) +
                        k * std::log(p) + (n - k) * std::log1p(-p);
  const double pmfK = std::exp(logPmf);
  const double odds = p / (1.0 - p);
  double lower = pmfK, upper = pmfK;
  double term = pmfK;
  for (double j = k; j > 0.0; --j) {
    term *= j / (n - j + 1.0) / odds;
    lower += term;
    if (term < lower * 1e-17 && j < n * p)
      break;
  }
  term = pmfK;
  for (double j = k; j < n; ++j) {
    term *= (n - j) / (j + 1.0) * odds;
    upper += term;
    if (term < upper * 1e-17 && j > n * p)
      break;
  }
  return {std::min(lower, 1.0), std::min(upper, 1.0)};
}

// The z with P(N(0,1) > z) = tail.
double normalQuantileOfTail(double tail) {
  if (tail <= 0.0)
    return HUGE_VAL;
  if (tail >= 0.5)
    return 0.0;
  double lo = 0.0, hi = 40.0;
  for (int it = 0; it < 100; ++it) {
    double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(mid / std::sqrt(2.0)) > tail ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Expected counts below this use the exact binomial test instead of the
// normal approximation.
constexpr double kExactBinomialBelow = 25.0;

} // namespace

OracleComparison compareWithOracle(const std::vector<double> &analysis,
                                   const OracleEstimate &estimate, const DomainTag &tag,
                                   double z) {
  if (analysis.size() != estimate.mean.size())
    throw Error(ErrorKind::InvalidInput, "analysis and estimate sizes differ");
  OracleComparison out;
  const double n = static_cast<double>(estimate.trials);
  for (std::size_t j = 0; j < analysis.size(); ++j) {
    bool probability = tag.kind == DomainTag::Kind::Reals || tag.kind == DomainTag::Kind::Bayes ||
                       j == 0;
    double se = estimate.standardError[j];
    double diff = std::fabs(analysis[j] - estimate.mean[j]);
    double score = 0.0;
    if (probability) {
      double p = std::clamp(analysis[j], 0.0, 1.0);
      se = std::sqrt(p * (1.0 - p) / n);
      if (std::min(p, 1.0 - p) * n < kExactBinomialBelow) {
        double k = std::round(estimate.mean[j] * n);
        auto [lower, upper] = binomialTails(n, p, k);
        score = normalQuantileOfTail(std::min(lower, upper));
      } else {
        score = diff <= 1e-9 ? 0.0 : diff / se;
      }
    } else {
      score = diff <= 1e-9 ? 0.0 : (se > 0.0 ? diff / se : HUGE_VAL);
    }
    if (score > out.worstZ) {
      out.worstZ = score;
      out.worstEntry = j;
    }
    if (score > z)
      out.ok = false;
  }
  return out;
}

} // namespace npa::cli
