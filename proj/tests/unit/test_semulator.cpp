#include <string>
#include <vector>

#include "doctest.h"
#include "tracewam/machine.hpp"
#include "tracewam/semulator.hpp"

using namespace tracewam;
namespace ast = tracewam::ast;

namespace {

const char* kQsort = R"(
app([], L, L).
app([H|T], L, [H|R]) :- app(T, L, R).
part(_, [], [], []).
part(P, [H|T], [H|L], R) :- H =< P, !, part(P, T, L, R).
part(P, [H|T], L, [H|R]) :- part(P, T, L, R).
qsort([], []).
qsort([P|T], S) :- part(P, T, L, R), qsort(L, SL), qsort(R, SR), app(SL, [P|SR], S).
rnd(0, _, []) :- !.
rnd(N, S, [V|T]) :-
  N > 0, V is S mod 100, S1 is (S * 75 + 74) mod 65537,
  N1 is N - 1, rnd(N1, S1, T).
main(N, L) :- rnd(N, 12345, R), qsort(R, L).
)";

QueryOutcome run(const std::string& src, const std::string& goal, MachineOptions o,
                 RunStats* st = nullptr) {
  return run_program_text(src, goal, o, st);
}

MachineOptions opts(bool jit, bool mutability = true) {
  MachineOptions o;
  o.jit = jit;
  o.mutability = mutability;
  o.critical_threshold = 3;
  o.hot_threshold = 6;
  o.validate = true;  // structural checks on every installed s.emulator
  return o;
}

const char* kFlip = R"(
step(1).
step(a).
drive([]).
drive([X|T]) :- step(X), drive(T).
)";

// Warm-up shaped so the whole critical->hot window (thresholds 3/6) fits
// in one query over integer-only elements: the gen-1 trace then covers
// the list loop, the nil exit, and the return edge, and the only event
// it cannot answer later is an atom element.
const char* kFlipWarm = "drive([1]), drive([1]), drive([1,1,1,1,1,1,1])";

// A list with `pairs` repetitions of 1,a. Kept modest per query because
// goal literals are register-bounded; callers issue several queries.
std::string mixed_goal(int pairs) {
  std::string g = "drive([";
  for (int i = 0; i < pairs; ++i) g += i ? ",1,a" : "1,a";
  return g + "])";
}

}  // namespace

TEST_CASE("specialized answers are identical to the default emulator's") {
  QueryOutcome ref = run(kQsort, "main(120, L)", opts(false));
  for (bool mut : {false, true}) {
    QueryOutcome spec = run(kQsort, "main(120, L)", opts(true, mut));
    REQUIRE(!spec.resource_error);
    REQUIRE(spec.solutions.size() == ref.solutions.size());
    for (size_t i = 0; i < ref.solutions.size(); ++i) CHECK(spec.solutions[i] == ref.solutions[i]);
  }
}

TEST_CASE("specialization runs and replaces default dispatching") {
  RunStats st;
  QueryOutcome out = run(kQsort, "main(200, L)", opts(true), &st);
  REQUIRE(!out.resource_error);
  CHECK(st.installs >= 1);
  CHECK(st.semulator_entries > 0);
  CHECK(st.guard_evals > 0);
  // the specialized program answers most head entries, so type-test work
  // collapses well below the default path's
  RunStats def;
  run(kQsort, "main(200, L)", opts(false), &def);
  CHECK(st.type_test_evals < def.type_test_evals);
}

TEST_CASE("type flip: one elementary-block side exit, one rebuild, then silence") {
  ast::ParsedProgram parsed = ast::parse_program(kFlip);
  Program prog = link_program(parsed);
  CodeAddr warm = compile_query(prog, ast::parse_goal(kFlipWarm));
  // the first atom sits mid-list so the rebuild recording closes when the
  // trace head is re-entered on the next element
  CodeAddr flip = compile_query(prog, ast::parse_goal("drive([1,1,1,1,a,1,1])"));

  MachineOptions o = opts(true);
  {
    Machine m(prog, o);
    m.run_query(warm);
    CHECK(m.stats().installs == 1);
    CHECK(m.stats().side_exits_elementary == 0);
    CHECK(m.stats().rebuilds == 0);
  }

  SymId s = prog.syms.intern("drive");
  const PredicateEntry& pe = prog.preds[static_cast<size_t>(prog.find_pred(s, 1))];
  REQUIRE(pe.semulator != nullptr);
  CHECK(pe.semulator->generation == 1);

  {
    Machine m(prog, o);
    m.run_query(flip);
    CHECK(m.stats().side_exits_elementary == 1);  // exactly the first atom element
    CHECK(m.stats().rebuilds == 1);
  }
  CHECK(pe.semulator->generation == 2);

  // generation 2 covers both element types: 1000+ further calls, zero exits
  int64_t sx = 0, rebuilds = 0;
  std::vector<CodeAddr> afters;
  for (int i = 0; i < 13; ++i) afters.push_back(compile_query(prog, ast::parse_goal(mixed_goal(40))));
  for (CodeAddr q : afters) {
    Machine m(prog, o);
    m.run_query(q);
    sx += m.stats().side_exits_elementary;
    rebuilds += m.stats().rebuilds;
  }
  CHECK(sx == 0);
  CHECK(rebuilds == 0);
  CHECK(pe.semulator->generation == 2);
}

TEST_CASE("with mutability disabled a side exit pins the default path") {
  ast::ParsedProgram parsed = ast::parse_program(kFlip);
  Program prog = link_program(parsed);
  CodeAddr warm = compile_query(prog, ast::parse_goal(kFlipWarm));
  CodeAddr flip = compile_query(prog, ast::parse_goal("drive([1,1,1,1,a,1,1])"));
  MachineOptions o = opts(true, false);
  {
    Machine m(prog, o);
    m.run_query(warm);
    CHECK(m.stats().installs == 1);
  }
  Machine m(prog, o);
  QueryOutcome out = m.run_query(flip);
  REQUIRE(out.solutions.size() == 1);
  CHECK(m.stats().rebuilds == 0);
  SymId s = prog.syms.intern("drive");
  const PredicateEntry& pe = prog.preds[static_cast<size_t>(prog.find_pred(s, 1))];
  CHECK(pe.pinned_default);
}

TEST_CASE("gc exception exits and resumes inside the s.emulator") {
  MachineOptions small = opts(true);
  small.heap_cells = 1u << 10;
  RunStats st;
  QueryOutcome out = run(kQsort, "main(200, L)", small, &st);
  REQUIRE(!out.resource_error);
  CHECK(st.reclamations > 0);
  CHECK(st.reclamations_in_semulator > 0);
  CHECK(st.side_exits_gc > 0);
  CHECK(st.semulator_gc_resumes > 0);

  QueryOutcome big = run(kQsort, "main(200, L)", opts(true));
  REQUIRE(out.solutions.size() == big.solutions.size());
  for (size_t i = 0; i < big.solutions.size(); ++i) CHECK(out.solutions[i] == big.solutions[i]);
}

TEST_CASE("installed micro-op programs pass the structural validator") {
  ast::ParsedProgram parsed = ast::parse_program(kQsort);
  Program prog = link_program(parsed);
  CodeAddr q = compile_query(prog, ast::parse_goal("main(150, L)"));
  Machine m(prog, opts(true));
  m.run_query(q);
  int installed = 0;
  for (const auto& pe : prog.preds) {
    if (!pe.semulator) continue;
    ++installed;
    CHECK(validate_semulator(*pe.semulator) == "");
    CHECK(pe.semulator->guard_count > 0);
    CHECK(!pe.semulator->entry_map.empty());
  }
  CHECK(installed >= 1);
}

TEST_CASE("rebuild cap demotes a hopelessly polymorphic predicate permanently") {
  // every element alternates through fresh shapes faster than traces can
  // stabilize; after kMaxRebuilds the predicate pins to the default path
  std::string src = R"(
kind(1). kind(a). kind([]). kind([_|_]). kind(f(_)).
d([]).
d([X|T]) :- kind(X), d(T).
)";
  std::string g = "d([";
  for (int i = 0; i < 40; ++i) {
    const char* elems[] = {"1", "a", "[]", "[9]", "f(0)"};
    if (i) g += ",";
    g += elems[(i / 2) % 5];
  }
  g += "])";
  ast::ParsedProgram parsed = ast::parse_program(src);
  Program prog = link_program(parsed);
  std::vector<CodeAddr> queries;
  for (int r = 0; r < 30; ++r) queries.push_back(compile_query(prog, ast::parse_goal(g)));
  MachineOptions o = opts(true);
  for (CodeAddr q : queries) {
    Machine m(prog, o);
    QueryOutcome out = m.run_query(q);
    REQUIRE(!out.solutions.empty());
  }
  SymId s = prog.syms.intern("d");
  const PredicateEntry& pe = prog.preds[static_cast<size_t>(prog.find_pred(s, 1))];
  CHECK(pe.rebuild_count <= kMaxRebuilds);
}
