#include <string>

#include "doctest.h"
#include "tracewam/machine.hpp"

using namespace tracewam;

namespace {

struct RunOut {
  QueryOutcome out;
  RunStats stats;
};

RunOut run(const std::string& src, const std::string& goal, size_t heap_cells, bool jit) {
  MachineOptions o;
  o.jit = jit;
  o.critical_threshold = 3;
  o.hot_threshold = 6;
  o.heap_cells = heap_cells;
  RunOut r;
  r.out = run_program_text(src, goal, o, &r.stats);
  return r;
}

const char* kNrev = R"(
app([], L, L).
app([H|T], L, [H|R]) :- app(T, L, R).
nrev([], []).
nrev([H|T], R) :- nrev(T, RT), app(RT, [H], R).
mklist(0, []) :- !.
mklist(N, [N|T]) :- N > 0, M is N - 1, mklist(M, T).
main(N, R) :- mklist(N, L), nrev(L, R).
)";

}  // namespace

TEST_CASE("differential: tiny heap forces collections but never changes answers") {
  RunOut big = run(kNrev, "main(60, R)", 1u << 20, false);
  REQUIRE(!big.out.resource_error);
  CHECK(big.stats.reclamations == 0);

  for (size_t cells : {256u, 512u, 1024u}) {
    RunOut small = run(kNrev, "main(60, R)", cells, false);
    REQUIRE(!small.out.resource_error);
    CHECK(small.stats.reclamations > 0);
    REQUIRE(small.out.solutions.size() == big.out.solutions.size());
    for (size_t i = 0; i < big.out.solutions.size(); ++i)
      CHECK(small.out.solutions[i] == big.out.solutions[i]);
  }
}

TEST_CASE("collection preserves live data reachable only through registers") {
  // regression: a register holding a list pointer must keep both cells of
  // the cons pair alive; with a heap this small the collector runs in the
  // middle of nrev's open recursion
  RunOut small = run(kNrev, "main(2, R)", 16, false);
  REQUIRE(!small.out.resource_error);
  REQUIRE(small.out.solutions.size() == 1);
  CHECK(small.out.solutions[0] == "R = [1,2]");
}

TEST_CASE("collection under backtracking keeps choice-point snapshots valid") {
  std::string src = R"(
app([], L, L).
app([H|T], L, [H|R]) :- app(T, L, R).
mklist(0, []) :- !.
mklist(N, [N|T]) :- N > 0, M is N - 1, mklist(M, T).
main(N, X) :- mklist(N, L), app(X, _, L).
)";
  RunOut big = run(src, "main(60, X)", 1u << 20, false);
  RunOut small = run(src, "main(60, X)", 128, false);
  REQUIRE(!small.out.resource_error);
  CHECK(small.stats.reclamations > 0);
  REQUIRE(small.out.solutions.size() == big.out.solutions.size());
  for (size_t i = 0; i < big.out.solutions.size(); ++i)
    CHECK(small.out.solutions[i] == big.out.solutions[i]);
}

TEST_CASE("specialized runs collect identically") {
  RunOut big = run(kNrev, "main(80, R)", 1u << 20, true);
  RunOut small = run(kNrev, "main(80, R)", 512, true);
  REQUIRE(!small.out.resource_error);
  CHECK(small.stats.reclamations > 0);
  REQUIRE(small.out.solutions.size() == 1);
  CHECK(small.out.solutions[0] == big.out.solutions[0]);
}

TEST_CASE("exhausting the capacity bound reports a resource error") {
  MachineOptions o;
  o.jit = false;
  o.heap_cells = 64;
  o.max_heap_cells = 128;
  QueryOutcome out = run_program_text(kNrev, "main(200, R)", o);
  CHECK(out.resource_error);
}
