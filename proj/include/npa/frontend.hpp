// Program parser, control-flow hyper-graphs, equation extraction, and
// Gaussian-elimination-style conversion to closed tree expressions.
#pragma once

#include "npa/treeexpr.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace npa::frontend {

using NodeId = std::size_t;

struct HyperEdge {
  NodeId source = 0;
  std::vector<NodeId> targets;
  Symbol command;
};

/// Control-flow hyper-graph of one procedure.
struct Cfhg {
  std::vector<NodeId> nodes;
  std::vector<HyperEdge> edges;
  NodeId entry = 0;
  NodeId exit = 0;

  /// The unique outgoing edge of `v`, or null for the exit node.
  const HyperEdge *outgoing(NodeId v) const;
  /// Throws InvalidInput when a structural invariant is violated: the exit
  /// has an outgoing edge, another node lacks exactly one outgoing edge, or
  /// a destination count differs from the command's arity.
  void validate() const;
  std::size_t incomingCount(NodeId v) const;
};

struct Procedure {
  std::string name;
  Cfhg graph;
};

/// A parsed program: procedures with their CFHGs plus the distinct action
/// and condition texts (their index is the id).
struct Program {
  std::vector<Procedure> procedures;
  std::vector<std::string> actionTable;
  std::vector<std::string> conditionTable;

  std::vector<std::string> procedureNames() const;
  std::optional<std::size_t> indexOf(const std::string &name) const;
};

/// Parses the surface language. Throws Syntax errors with line/column.
///
///   program := proc+
///   proc    := "proc" IDENT "(" ")" "begin" stmts "end"
///   stmts   := stmt (";" stmt)* [";"]
///   stmt    := "skip" | IDENT ":=" expr | IDENT "~" dist | "reward" "(" c ")"
///            | "assume" "(" expr ")" | "call" IDENT ["(" ")"] | IDENT "(" ")"
///            | "return" | "break" | "continue"
///            | "if" guard "then" stmts ["else" stmts] "fi"
///            | "while" guard "do" stmts "od"
///   guard   := "prob" "(" c ")" | "*" | expr
Program parse(const std::string &source);

/// One equation Z_v = Cmd(e)(Z_u1, ..., Z_uk) per node, plus Z_exit = ε.
using NodeEquations = std::vector<std::pair<std::string, TreeExpr>>;

/// Name of the equation variable of node `v`.
std::string nodeVar(NodeId v);

/// Extracts node equations, ordered for elimination: a depth-first postorder
/// from the entry (the exit side first, the entry last), then any
/// unreachable nodes in id order.
NodeEquations extractEquations(const Cfhg &g);

/// Algorithm-1 elimination in the given equation order. Front-solving closes
/// self-recursion with Mu and eliminates each variable from later equations;
/// back-solving substitutes closed solutions into earlier ones.  Elimination
/// plugs a solution in directly when the variable occurs at most once and
/// otherwise keeps an explicit Concat node.
std::map<std::string, TreeExpr> bekicEliminate(const NodeEquations &eqs);

/// Procedures as closed tree expressions, ready for analysis.
struct ExtractedProgram {
  std::vector<std::string> names;
  std::vector<TreeExpr> bodies;

  std::optional<std::size_t> indexOf(const std::string &name) const;
};

/// Runs extraction and elimination for every procedure of `p`.
ExtractedProgram extractProgram(const Program &p);

/// Reads `{ "procs": [{ "name": ..., "expr": <S-expression> }] }`.
ExtractedProgram loadEquationJson(const std::string &json);

} // namespace npa::frontend
