#ifndef TESTS_SUPPORT_NAIVE_UNIFY_HPP
#define TESTS_SUPPORT_NAIVE_UNIFY_HPP

// Naive recursive unification oracle over source terms, with an explicit
// name-keyed substitution. Deliberately the simplest possible
// implementation: no sharing, no trail, substitution applied by
// rewriting. Used as ground truth for the engine-level unifier.

#include <map>
#include <string>

#include "tracewam/ast.hpp"

namespace oracle {

using Subst = std::map<std::string, tracewam::ast::TermPtr>;

// Attempts to unify a and b under (and extending) s. No occurs-check,
// matching the engine; callers keep inputs acyclic (e.g. one side
// ground, or disjoint variable sets with no shared repeats).
bool unify(const tracewam::ast::TermPtr& a, const tracewam::ast::TermPtr& b, Subst& s);

// Rewrites t under s until fixpoint on variables.
tracewam::ast::TermPtr apply(const tracewam::ast::TermPtr& t, const Subst& s);

// Canonical text with the engine's variable-naming scheme (_A, _B, ...
// by first appearance); equal strings mean equal terms up to renaming.
std::string format(const tracewam::ast::TermPtr& t);

}  // namespace oracle

#endif
