#include "npa/frontend.hpp"

#include "npa/lang.hpp"

#include <algorithm>
#include <functional>
#include <memory>
#include <set>

#include "json.hpp"

namespace npa::frontend {

// ---------------------------------------------------------------------------
// Cfhg / Program helpers
// ---------------------------------------------------------------------------

const HyperEdge *Cfhg::outgoing(NodeId v) const {
  for (const auto &e : edges)
    if (e.source == v)
      return &e;
  return nullptr;
}

std::size_t Cfhg::incomingCount(NodeId v) const {
  std::size_t n = 0;
  for (const auto &e : edges)
    n += static_cast<std::size_t>(std::count(e.targets.begin(), e.targets.end(), v));
  return n;
}

void Cfhg::validate() const {
  std::set<NodeId> known(nodes.begin(), nodes.end());
  if (!known.count(entry) || !known.count(exit))
    throw Error(ErrorKind::InvalidInput, "entry or exit is not a node of the graph");
  std::map<NodeId, int> out;
  for (const auto &e : edges) {
    if (!known.count(e.source))
      throw Error(ErrorKind::InvalidInput, "edge source is not a node of the graph");
    if (e.targets.size() != arity(e.command) || e.targets.empty())
      throw Error(ErrorKind::InvalidInput, "edge destination count does not match its command");
    for (NodeId t : e.targets)
      if (!known.count(t))
        throw Error(ErrorKind::InvalidInput, "edge destination is not a node of the graph");
    ++out[e.source];
  }
  if (out.count(exit))
    throw Error(ErrorKind::InvalidInput, "exit node has an outgoing edge");
  for (NodeId v : nodes)
    if (v != exit && out[v] != 1)
      throw Error(ErrorKind::InvalidInput,
                  "node " + std::to_string(v) + " must have exactly one outgoing edge");
}

std::vector<std::string> Program::procedureNames() const {
  std::vector<std::string> out;
  for (const auto &p : procedures)
    out.push_back(p.name);
  return out;
}

std::optional<std::size_t> Program::indexOf(const std::string &name) const {
  for (std::size_t i = 0; i < procedures.size(); ++i)
    if (procedures[i].name == name)
      return i;
  return std::nullopt;
}

std::optional<std::size_t> ExtractedProgram::indexOf(const std::string &name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name)
      return i;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Statement AST and parser
// ---------------------------------------------------------------------------

namespace {

struct Guard {
  enum class Kind { Prob, Ndet, Cond, True } kind = Kind::Cond;
  double p = 0.0;
  std::string condition;
};

struct Stmt;
using StmtList = std::vector<std::unique_ptr<Stmt>>;

struct Stmt {
  enum class Kind { Action, Call, Return, Break, Continue, If, While } kind = Kind::Action;
  std::string text; ///< canonical action text, or callee name
  Guard guard;
  StmtList body;
  StmtList elseBody;
  int line = 0;
  int column = 0;
};

struct ProcAst {
  std::string name;
  StmtList body;
  int line = 0;
  int column = 0;
};

class StmtParser {
public:
  explicit StmtParser(const std::vector<lang::Token> &toks) : p_(toks, 0) {}

  std::vector<ProcAst> parseProgram() {
    std::vector<ProcAst> procs;
    while (p_.peek().kind != lang::Tok::End)
      procs.push_back(parseProc());
    if (procs.empty())
      p_.fail("a program needs at least one procedure");
    return procs;
  }

private:
  void expectWord(const std::string &w) {
    if (!p_.isIdent(w))
      p_.fail("expected '" + w + "'");
    p_.next();
  }

  ProcAst parseProc() {
    ProcAst proc;
    proc.line = p_.peek().line;
    proc.column = p_.peek().column;
    expectWord("proc");
    if (p_.peek().kind != lang::Tok::Ident)
      p_.fail("expected a procedure name");
    proc.name = p_.next().text;
    p_.expectPunct("(");
    p_.expectPunct(")");
    expectWord("begin");
    proc.body = parseStmts();
    expectWord("end");
    return proc;
  }

  bool atTerminator() const {
    static const char *terms[] = {"end", "fi", "od", "else"};
    for (const char *t : terms)
      if (p_.isIdent(t))
        return true;
    return p_.peek().kind == lang::Tok::End;
  }

  StmtList parseStmts() {
    StmtList out;
    out.push_back(parseStmt());
    while (p_.isPunct(";")) {
      p_.next();
      if (atTerminator())
        break;
      out.push_back(parseStmt());
    }
    return out;
  }

  Guard parseGuard() {
    Guard g;
    if (p_.isIdent("prob") && p_.isPunct("(", 1)) {
      p_.next();
      p_.next();
      auto e = p_.parseExpr();
      std::set<std::string> vars;
      lang::collectVariables(*e, vars);
      if (!vars.empty())
        p_.fail("prob expects a constant");
      g.kind = Guard::Kind::Prob;
      g.p = lang::evaluate(*e, {});
      if (!(g.p >= 0.0 && g.p <= 1.0))
        p_.fail("probability outside [0,1]");
      p_.expectPunct(")");
      return g;
    }
    if (p_.isPunct("*")) {
      p_.next();
      g.kind = Guard::Kind::Ndet;
      return g;
    }
    if (p_.isIdent("true") && (p_.isIdent("do", 1) || p_.isIdent("then", 1))) {
      p_.next();
      g.kind = Guard::Kind::True;
      return g;
    }
    g.kind = Guard::Kind::Cond;
    g.condition = lang::toString(*p_.parseExpr());
    return g;
  }

  std::unique_ptr<Stmt> parseStmt() {
    auto s = std::make_unique<Stmt>();
    s->line = p_.peek().line;
    s->column = p_.peek().column;
    if (p_.isIdent("call")) {
      p_.next();
      if (p_.peek().kind != lang::Tok::Ident)
        p_.fail("expected a procedure name after 'call'");
      s->kind = Stmt::Kind::Call;
      s->text = p_.next().text;
      if (p_.isPunct("(")) {
        p_.next();
        p_.expectPunct(")");
      }
      return s;
    }
    if (p_.isIdent("return") || p_.isIdent("break") || p_.isIdent("continue")) {
      std::string w = p_.next().text;
      s->kind = w == "return"  ? Stmt::Kind::Return
                : w == "break" ? Stmt::Kind::Break
                               : Stmt::Kind::Continue;
      return s;
    }
    if (p_.isIdent("if")) {
      p_.next();
      s->kind = Stmt::Kind::If;
      s->guard = parseGuard();
      expectWord("then");
      s->body = parseStmts();
      if (p_.isIdent("else")) {
        p_.next();
        s->elseBody = parseStmts();
      }
      expectWord("fi");
      return s;
    }
    if (p_.isIdent("while")) {
      p_.next();
      s->kind = Stmt::Kind::While;
      s->guard = parseGuard();
      expectWord("do");
      s->body = parseStmts();
      expectWord("od");
      return s;
    }
    if (p_.peek().kind == lang::Tok::Ident && p_.isPunct("(", 1) && p_.isPunct(")", 2) &&
        !p_.isIdent("skip") && !p_.isIdent("reward") && !p_.isIdent("assume")) {
      s->kind = Stmt::Kind::Call;
      s->text = p_.next().text;
      p_.next();
      p_.next();
      return s;
    }
    s->kind = Stmt::Kind::Action;
    s->text = lang::toString(p_.parseAction());
    return s;
  }

  lang::ExprParser p_;
};

// ---------------------------------------------------------------------------
// CFHG construction
// ---------------------------------------------------------------------------

class GraphBuilder {
public:
  GraphBuilder(NodeId &counter, const std::map<std::string, std::size_t> &procIndex,
               std::vector<std::string> &actions, std::vector<std::string> &conditions)
      : counter_(counter), procIndex_(procIndex), actions_(actions), conditions_(conditions) {}

  Cfhg build(const StmtList &body) {
    NodeId exit = newNode();
    exit_ = exit;
    NodeId entry = find(compileList(body, exit, std::nullopt));
    if (entry == exit) {
      entry = newNode();
      addEdge(entry, {exit}, SeqActSym{"skip"});
      noteAction("skip");
    }
    Cfhg g;
    g.entry = entry;
    g.exit = exit;
    for (NodeId v : nodes_)
      if (find(v) == v)
        g.nodes.push_back(v);
    for (auto &e : edges_) {
      e.source = find(e.source);
      for (auto &t : e.targets)
        t = find(t);
      g.edges.push_back(e);
    }
    g.validate();
    return g;
  }

private:
  struct Loop {
    NodeId head;
    NodeId exit;
  };

  NodeId newNode() {
    NodeId v = counter_++;
    nodes_.push_back(v);
    parent_[v] = v;
    return v;
  }

  NodeId find(NodeId v) {
    while (parent_[v] != v)
      v = parent_[v] = parent_[parent_[v]];
    return v;
  }

  void addEdge(NodeId src, std::vector<NodeId> targets, Symbol cmd) {
    edges_.push_back(HyperEdge{src, std::move(targets), std::move(cmd)});
  }

  void noteAction(const std::string &t) {
    if (std::find(actions_.begin(), actions_.end(), t) == actions_.end())
      actions_.push_back(t);
  }
  void noteCondition(const std::string &t) {
    if (std::find(conditions_.begin(), conditions_.end(), t) == conditions_.end())
      conditions_.push_back(t);
  }

  Symbol guardSymbol(const Guard &g) {
    switch (g.kind) {
    case Guard::Kind::Prob:
      return ProbSym{g.p};
    case Guard::Kind::Ndet:
      return NdetSym{};
    case Guard::Kind::True:
      noteCondition("true");
      return CondSym{"true"};
    case Guard::Kind::Cond:
      noteCondition(g.condition);
      return CondSym{g.condition};
    }
    return NdetSym{};
  }

  NodeId compileList(const StmtList &list, NodeId succ, std::optional<Loop> loop) {
    for (auto it = list.rbegin(); it != list.rend(); ++it)
      succ = compile(**it, succ, loop);
    return succ;
  }

  NodeId compile(const Stmt &s, NodeId succ, std::optional<Loop> loop) {
    switch (s.kind) {
    case Stmt::Kind::Action: {
      if (s.text == "skip")
        return succ;
      NodeId v = newNode();
      addEdge(v, {succ}, SeqActSym{s.text});
      noteAction(s.text);
      return v;
    }
    case Stmt::Kind::Call: {
      auto it = procIndex_.find(s.text);
      if (it == procIndex_.end())
        throw Error(ErrorKind::Syntax, "call to unknown procedure '" + s.text + "'", s.line,
                    s.column);
      NodeId v = newNode();
      addEdge(v, {succ}, CallSym{it->second});
      return v;
    }
    case Stmt::Kind::Return:
      return exit_;
    case Stmt::Kind::Break:
    case Stmt::Kind::Continue:
      if (!loop)
        throw Error(ErrorKind::Syntax, "break/continue outside a loop", s.line, s.column);
      return s.kind == Stmt::Kind::Break ? loop->exit : loop->head;
    case Stmt::Kind::If: {
      NodeId t = compileList(s.body, succ, loop);
      NodeId e = s.elseBody.empty() ? succ : compileList(s.elseBody, succ, loop);
      NodeId v = newNode();
      addEdge(v, {t, e}, guardSymbol(s.guard));
      return v;
    }
    case Stmt::Kind::While: {
      NodeId h = newNode();
      NodeId b = compileList(s.body, h, Loop{h, succ});
      if (s.guard.kind == Guard::Kind::True) {
        if (find(b) == find(h)) {
          addEdge(h, {h}, SeqActSym{"skip"});
          noteAction("skip");
          return h;
        }
        parent_[find(h)] = find(b);
        return find(b);
      }
      addEdge(h, {b, succ}, guardSymbol(s.guard));
      return h;
    }
    }
    return succ;
  }

  NodeId &counter_;
  const std::map<std::string, std::size_t> &procIndex_;
  std::vector<std::string> &actions_;
  std::vector<std::string> &conditions_;
  std::vector<NodeId> nodes_;
  std::vector<HyperEdge> edges_;
  std::map<NodeId, NodeId> parent_;
  NodeId exit_ = 0;
};

} // namespace

Program parse(const std::string &source) {
  auto toks = lang::tokenize(source);
  StmtParser sp(toks);
  auto asts = sp.parseProgram();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < asts.size(); ++i) {
    if (!index.emplace(asts[i].name, i).second)
      throw Error(ErrorKind::Syntax, "duplicate procedure '" + asts[i].name + "'", asts[i].line,
                  asts[i].column);
  }
  Program prog;
  NodeId counter = 1;
  for (const auto &a : asts) {
    GraphBuilder gb(counter, index, prog.actionTable, prog.conditionTable);
    prog.procedures.push_back(Procedure{a.name, gb.build(a.body)});
  }
  return prog;
}

// ---------------------------------------------------------------------------
// Equations and elimination
// ---------------------------------------------------------------------------

std::string nodeVar(NodeId v) { return "Z" + std::to_string(v); }

NodeEquations extractEquations(const Cfhg &g) {
  std::map<NodeId, const HyperEdge *> out;
  for (const auto &e : g.edges)
    out[e.source] = &e;

  std::vector<NodeId> order;
  std::set<NodeId> seen;
  // Iterative depth-first search recording postorder.
  std::vector<std::pair<NodeId, std::size_t>> stack{{g.entry, 0}};
  seen.insert(g.entry);
  while (!stack.empty()) {
    auto &[v, k] = stack.back();
    auto it = out.find(v);
    if (it != out.end() && k < it->second->targets.size()) {
      NodeId w = it->second->targets[k++];
      if (seen.insert(w).second)
        stack.emplace_back(w, 0);
      continue;
    }
    order.push_back(v);
    stack.pop_back();
  }
  std::vector<NodeId> rest;
  for (NodeId v : g.nodes)
    if (!seen.count(v))
      rest.push_back(v);
  std::sort(rest.begin(), rest.end());
  order.insert(order.end(), rest.begin(), rest.end());

  NodeEquations eqs;
  for (NodeId v : order) {
    if (v == g.exit) {
      eqs.emplace_back(nodeVar(v), tree::eps());
      continue;
    }
    const HyperEdge *e = out.at(v);
    std::vector<TreeExpr> kids;
    for (NodeId t : e->targets)
      kids.push_back(tree::var(nodeVar(t)));
    eqs.emplace_back(nodeVar(v), TreeExpr::node(e->command, std::move(kids)));
  }
  return eqs;
}

namespace {
TreeExpr plug(const TreeExpr &into, const std::string &z, const TreeExpr &solution) {
  if (countFree(into, z) <= 1)
    return substitute(into, z, solution);
  return tree::concat(into, z, solution);
}
} // namespace

std::map<std::string, TreeExpr> bekicEliminate(const NodeEquations &eqs) {
  const std::size_t n = eqs.size();
  std::vector<std::string> z(n);
  std::vector<TreeExpr> r(n);
  std::set<std::string> lhs;
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = eqs[i].first;
    r[i] = eqs[i].second;
    if (!lhs.insert(z[i]).second)
      throw Error(ErrorKind::InvalidInput, "variable " + z[i] + " has two equations");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (r[i].hasFree(z[i]))
      r[i] = tree::mu(z[i], r[i]);
    for (std::size_t j = i + 1; j < n; ++j)
      if (r[j].hasFree(z[i]))
        r[j] = plug(r[j], z[i], r[i]);
  }
  for (std::size_t i = n; i-- > 1;)
    for (std::size_t j = 0; j < i; ++j)
      if (r[j].hasFree(z[i]))
        r[j] = plug(r[j], z[i], r[i]);
  std::map<std::string, TreeExpr> out;
  for (std::size_t i = 0; i < n; ++i)
    out.emplace(z[i], r[i]);
  return out;
}

ExtractedProgram extractProgram(const Program &p) {
  ExtractedProgram out;
  for (const auto &proc : p.procedures) {
    auto sol = bekicEliminate(extractEquations(proc.graph));
    const TreeExpr &body = sol.at(nodeVar(proc.graph.entry));
    if (!body.closed())
      throw Error(ErrorKind::InvalidInput, "elimination left free variables in " + proc.name);
    out.names.push_back(proc.name);
    out.bodies.push_back(body);
  }
  return out;
}

ExtractedProgram loadEquationJson(const std::string &text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception &e) {
    throw Error(ErrorKind::Syntax, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("procs") || !j["procs"].is_array())
    throw Error(ErrorKind::InvalidInput, "expected an object with a \"procs\" array");
  ExtractedProgram out;
  for (const auto &p : j["procs"]) {
    if (!p.contains("name") || !p["name"].is_string() || !p.contains("expr") ||
        !p["expr"].is_string())
      throw Error(ErrorKind::InvalidInput, "each proc needs string fields name and expr");
    std::string name = p["name"];
    if (out.indexOf(name))
      throw Error(ErrorKind::InvalidInput, "duplicate procedure '" + name + "'");
    out.names.push_back(name);
  }
  auto resolve = [&](const std::string &name) { return out.indexOf(name); };
  for (const auto &p : j["procs"]) {
    TreeExpr e = parseSexpr(p["expr"].get<std::string>(), resolve);
    if (!e.closed())
      throw Error(ErrorKind::InvalidInput,
                  "expression of " + p["name"].get<std::string>() + " has free variables");
    out.bodies.push_back(e);
  }
  if (out.names.empty())
    throw Error(ErrorKind::InvalidInput, "no procedures given");
  return out;
}

} // namespace npa::frontend
