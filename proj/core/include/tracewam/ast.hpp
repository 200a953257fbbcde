#ifndef TRACEWAM_AST_HPP
#define TRACEWAM_AST_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace tracewam::ast {

// Source-level term representation produced by the parser and consumed
// by the clause compiler (and the reference interpreter in the tests).
struct Term;
using TermPtr = std::shared_ptr<const Term>;

enum class Kind { Var, Atom, Int, Struct, List, Nil };

struct Term {
  Kind kind;
  std::string name;           // Var, Atom, Struct functor
  int64_t value = 0;          // Int
  std::vector<TermPtr> args;  // Struct args; List: [head, tail]
};

TermPtr mk_var(std::string name);
TermPtr mk_atom(std::string name);
TermPtr mk_int(int64_t v);
TermPtr mk_struct(std::string functor, std::vector<TermPtr> args);
TermPtr mk_list(TermPtr head, TermPtr tail);
TermPtr mk_nil();

std::string to_string(const TermPtr& t);

struct SourceClause {
  TermPtr head;
  std::vector<TermPtr> body;  // empty for facts
};

struct ParsedProgram {
  std::vector<SourceClause> clauses;
  TermPtr initialization;  // goal from :- initialization(G), may be null
};

struct ParseError {
  std::string message;
  int line = 0;
  int column = 0;
};

// Throws ParseError on malformed input.
ParsedProgram parse_program(std::string_view text);

// Parses a single goal (conjunction allowed), as given to the CLI via -g.
std::vector<TermPtr> parse_goal(std::string_view text);

}  // namespace tracewam::ast

#endif
