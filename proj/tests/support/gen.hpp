#ifndef TESTS_SUPPORT_GEN_HPP
#define TESTS_SUPPORT_GEN_HPP

// Seeded random test-data generation. All randomness flows from one
// mt19937_64 seeded via the TRACEWAM_SEED environment variable (fixed
// default otherwise), so failures reproduce exactly.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "tracewam/ast.hpp"
#include "tracewam/term.hpp"

namespace testgen {

uint64_t seed_from_env(uint64_t fallback = 0x7ace3a9dULL);

class Gen {
 public:
  explicit Gen(uint64_t seed) : rng_(seed) {}

  std::mt19937_64& rng() { return rng_; }
  int pick(int lo, int hi);  // inclusive

  // Random term of at most the given depth. Variables are drawn from
  // `vars` when non-empty (repeats allowed); ground terms otherwise.
  tracewam::ast::TermPtr term(int depth, const std::vector<std::string>& vars);
  tracewam::ast::TermPtr ground_term(int depth);

  // Random terminating program: predicates p0..pk whose clause bodies
  // call only strictly lower-numbered predicates, so every query is
  // finite. Returns the parsed program plus the name/arity of the top
  // predicate (the intended query target).
  struct Prog {
    tracewam::ast::ParsedProgram parsed;
    std::string top_name;
    int top_arity = 1;
  };
  Prog program();

  // Random query against the program's top predicate: a mix of partial
  // structure and fresh variables in each argument.
  std::vector<tracewam::ast::TermPtr> query(const Prog& p);

 private:
  std::mt19937_64 rng_;
};

// Builds a source term on an engine heap; variables share cells through
// `var_cells`. Returns the root cell.
tracewam::Cell build_on_heap(tracewam::Heap& heap, tracewam::SymbolTable& syms,
                             const tracewam::ast::TermPtr& t,
                             std::map<std::string, tracewam::Addr>& var_cells);

}  // namespace testgen

#endif
