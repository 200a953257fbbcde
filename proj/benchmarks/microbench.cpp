// Microbenchmarks for the pieces whose cost the runtime breakdown
// attributes: the structural unifier, the default emulator, the trace
// compiler, and default-vs-specialized execution of a hot workload.

#include <benchmark/benchmark.h>

#include <string>

#include "tracewam/bench.hpp"
#include "tracewam/machine.hpp"

using namespace tracewam;
namespace ast = tracewam::ast;

namespace {

const char* kNrevSrc = R"(
app([], L, L).
app([H|T], L, [H|R]) :- app(T, L, R).
nrev([], []).
nrev([H|T], R) :- nrev(T, RT), app(RT, [H], R).
mklist(0, []) :- !.
mklist(N, [N|T]) :- N > 0, M is N - 1, mklist(M, T).
main(N, First) :- mklist(N, L), nrev(L, [First|_]).
)";

MachineOptions make_opts(bool jit) {
  MachineOptions o;
  o.jit = jit;
  o.critical_threshold = 3;
  o.hot_threshold = 6;
  return o;
}

void bm_unify_lists(benchmark::State& state) {
  Heap heap(1 << 16);
  Trail trail;
  SymbolTable syms;
  // two equal 64-element lists, one ending in a variable
  Addr a = kNoAddr, b = kNoAddr;
  auto build = [&](bool open_tail) {
    Addr tail_cell = heap.new_unbound();
    Cell tail = open_tail ? Cell::ref(tail_cell) : Cell::nil();
    for (int i = 63; i >= 0; --i) {
      Addr h = heap.push(Cell::integer(i));
      heap.push(tail);
      tail = Cell::list(h);
    }
    return heap.push(tail);
  };
  a = build(false);
  b = build(true);
  for (auto _ : state) {
    Trail::Mark m = trail.mark();
    bool ok = unify(heap, trail, heap.at(a), heap.at(b));
    benchmark::DoNotOptimize(ok);
    trail.undo_to_mark(heap, m);
  }
}
BENCHMARK(bm_unify_lists);

void bm_default_emulator_nrev(benchmark::State& state) {
  auto n = state.range(0);
  std::string goal = "main(" + std::to_string(n) + ", F)";
  for (auto _ : state) {
    QueryOutcome out = run_program_text(kNrevSrc, goal, make_opts(false));
    benchmark::DoNotOptimize(out.solutions.size());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(bm_default_emulator_nrev)->Arg(30)->Arg(100);

void bm_specialized_nrev(benchmark::State& state) {
  auto n = state.range(0);
  std::string goal = "main(" + std::to_string(n) + ", F)";
  for (auto _ : state) {
    QueryOutcome out = run_program_text(kNrevSrc, goal, make_opts(true));
    benchmark::DoNotOptimize(out.solutions.size());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(bm_specialized_nrev)->Arg(30)->Arg(100);

// Cost of monitoring plus trace compilation alone: thresholds force a
// fresh record-and-compile cycle on every iteration.
void bm_trace_compile_cycle(benchmark::State& state) {
  ast::ParsedProgram parsed = ast::parse_program(kNrevSrc);
  for (auto _ : state) {
    Program prog = link_program(parsed);
    CodeAddr entry = compile_query(prog, ast::parse_goal("main(40, F)"));
    Machine m(prog, make_opts(true));
    m.run_query(entry);
    benchmark::DoNotOptimize(m.stats().installs);
  }
}
BENCHMARK(bm_trace_compile_cycle);

}  // namespace

BENCHMARK_MAIN();
