#ifndef TESTS_SUPPORT_REFERENCE_HPP
#define TESTS_SUPPORT_REFERENCE_HPP

// Reference tree-walking resolution interpreter over the source AST.
// Built independently of the bytecode pipeline so it can serve as the
// ground-truth oracle: SLD resolution with clause-order depth-first
// search, standard cut semantics, and the same builtin set the clause
// compiler accepts. Solutions are rendered with the same conventions as
// the engine (query variables in order of first appearance, unbound
// variables printed _A, _B, ... per solution).

#include <cstdint>
#include <string>
#include <vector>

#include "tracewam/ast.hpp"

namespace refint {

struct Result {
  std::vector<std::string> solutions;
  bool limit_hit = false;  // step budget exhausted; comparison not meaningful
  bool cyclic = false;     // a unification required binding a variable to a
                           // term containing it; the engine has no
                           // occurs-check, so the run is not comparable
};

// Runs the goal conjunction against the clauses of `prog` to exhaustion
// (or max_solutions > 0). step_limit > 0 bounds the number of resolution
// steps as a safety net.
Result solve(const tracewam::ast::ParsedProgram& prog,
             const std::vector<tracewam::ast::TermPtr>& goals, int64_t max_solutions = 0,
             int64_t step_limit = 0);

}  // namespace refint

#endif
