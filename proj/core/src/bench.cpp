#include "tracewam/bench.hpp"

#include <cstdio>
#include <map>
#include <sstream>

namespace tracewam {

const char* bench_mode_name(BenchMode m) {
  switch (m) {
    case BenchMode::DefaultOnly: return "DEFAULT_ONLY";
    case BenchMode::SpecNoMutability: return "SPEC_NO_MUTABILITY";
    case BenchMode::SpecWithMutability: return "SPEC_WITH_MUTABILITY";
  }
  return "?";
}

namespace {

std::string num(int64_t n) { return std::to_string(n); }

const char* kListLib = R"(
app([], L, L).
app([H|T], L, [H|R]) :- app(T, L, R).
mklist(0, []) :- !.
mklist(N, [N|T]) :- N > 0, M is N - 1, mklist(M, T).
)";

std::vector<BenchmarkSpec> build_suite() {
  std::vector<BenchmarkSpec> v;

  {
    int64_t n = 20000;
    BenchmarkSpec s;
    s.name = "append";
    s.scale = n;
    s.source = std::string(kListLib) + R"(
last_el([X], X) :- !.
last_el([_|T], X) :- last_el(T, X).
main(N, Last) :- mklist(N, L), app(L, [0], R), last_el(R, Last).
)";
    s.goal = "main(" + num(n) + ", Last)";
    v.push_back(std::move(s));
  }

  {
    int64_t n = 500;
    BenchmarkSpec s;
    s.name = "nreverse";
    s.scale = n;
    s.source = std::string(kListLib) + R"(
nrev([], []).
nrev([H|T], R) :- nrev(T, RT), app(RT, [H], R).
main(N, First) :- mklist(N, L), nrev(L, [First|_]).
)";
    s.goal = "main(" + num(n) + ", First)";
    v.push_back(std::move(s));
  }

  {
    BenchmarkSpec s;
    s.name = "tak";
    s.scale = 18;
    s.source = R"(
tak(X, Y, Z, A) :- X =< Y, !, A = Z.
tak(X, Y, Z, A) :-
  X1 is X - 1, Y1 is Y - 1, Z1 is Z - 1,
  tak(X1, Y, Z, A1), tak(Y1, Z, X, A2), tak(Z1, X, Y, A3),
  tak(A1, A2, A3, A).
main(A) :- tak(18, 12, 6, A).
)";
    s.goal = "main(A)";
    v.push_back(std::move(s));
  }

  {
    int64_t n = 14;
    BenchmarkSpec s;
    s.name = "hanoi";
    s.scale = n;
    s.source = R"(
hanoi(0, _, _, _, 0) :- !.
hanoi(N, A, B, C, M) :-
  N > 0, N1 is N - 1,
  hanoi(N1, A, C, B, M1), hanoi(N1, C, B, A, M2),
  M is M1 + M2 + 1.
main(N, M) :- hanoi(N, a, b, c, M).
)";
    s.goal = "main(" + num(n) + ", Moves)";
    v.push_back(std::move(s));
  }

  {
    int64_t n = 2000;
    BenchmarkSpec s;
    s.name = "quicksort";
    s.scale = n;
    s.source = std::string(kListLib) + R"(
part(_, [], [], []).
part(P, [H|T], [H|L], R) :- H =< P, !, part(P, T, L, R).
part(P, [H|T], L, [H|R]) :- part(P, T, L, R).
qsort([], []).
qsort([P|T], S) :- part(P, T, L, R), qsort(L, SL), qsort(R, SR), app(SL, [P|SR], S).
rnd(0, _, []) :- !.
rnd(N, S, [V|T]) :-
  N > 0, V is S mod 1000, S1 is (S * 75 + 74) mod 65537,
  N1 is N - 1, rnd(N1, S1, T).
sumlist([], 0).
sumlist([H|T], S) :- sumlist(T, S1), S is S1 + H.
main(N, First, Sum) :- rnd(N, 12345, L), qsort(L, SL), sumlist(SL, Sum), SL = [First|_].
)";
    s.goal = "main(" + num(n) + ", First, Sum)";
    v.push_back(std::move(s));
  }

  {
    BenchmarkSpec s;
    s.name = "binary_trees";
    s.scale = 10;
    s.source = R"(
make(0, leaf) :- !.
make(D, node(L, R)) :- D > 0, D1 is D - 1, make(D1, L), make(D1, R).
check(leaf, 1).
check(node(L, R), N) :- check(L, NL), check(R, NR), N is NL + NR + 1.
iter(0, _, 0) :- !.
iter(N, D, C) :- N > 0, make(D, T), check(T, C1), N1 is N - 1, iter(N1, D, C2), C is C1 + C2.
main(N, D, C) :- iter(N, D, C).
)";
    s.goal = "main(6, 10, Count)";
    v.push_back(std::move(s));
  }

  {
    int64_t n = 2000;
    BenchmarkSpec s;
    s.name = "nsieve";
    s.scale = n;
    s.source = R"(
range(I, N, []) :- I > N, !.
range(I, N, [I|T]) :- I1 is I + 1, range(I1, N, T).
strike([], _, []).
strike([H|T], P, R) :- H mod P =:= 0, !, strike(T, P, R).
strike([H|T], P, [H|R]) :- strike(T, P, R).
sieve([], []).
sieve([P|T], [P|R]) :- strike(T, P, S), sieve(S, R).
len([], 0).
len([_|T], N) :- len(T, M), N is M + 1.
main(N, C) :- range(2, N, L), sieve(L, P), len(P, C).
)";
    s.goal = "main(" + num(n) + ", Count)";
    v.push_back(std::move(s));
  }

  {
    int64_t n = 30000;
    BenchmarkSpec s;
    s.name = "partial_sums";
    s.scale = n;
    s.source = R"(
psum(I, N, A1, A2, A3, R1, R2, R3) :- I > N, !, R1 = A1, R2 = A2, R3 = A3.
psum(I, N, A1, A2, A3, R1, R2, R3) :-
  B1 is A1 + I, B2 is A2 + I * I, B3 is A3 + (I mod 7),
  I1 is I + 1,
  psum(I1, N, B1, B2, B3, R1, R2, R3).
main(N, S1, S2, S3) :- psum(1, N, 0, 0, 0, S1, S2, S3).
)";
    s.goal = "main(" + num(n) + ", S1, S2, S3)";
    v.push_back(std::move(s));
  }

  {
    BenchmarkSpec s;
    s.name = "recursive";
    s.scale = 20;
    s.source = R"(
fib(0, 0) :- !.
fib(1, 1) :- !.
fib(N, F) :- N > 1, N1 is N - 1, N2 is N - 2, fib(N1, F1), fib(N2, F2), F is F1 + F2.
ack(0, N, R) :- !, R is N + 1.
ack(M, 0, R) :- !, M1 is M - 1, ack(M1, 1, R).
ack(M, N, R) :- M1 is M - 1, N1 is N - 1, ack(M, N1, R1), ack(M1, R1, R).
main(F, A) :- fib(20, F), ack(2, 7, A).
)";
    s.goal = "main(Fib, Ack)";
    v.push_back(std::move(s));
  }

  return v;
}

std::string join_solutions(const QueryOutcome& out) {
  std::string s;
  for (const auto& sol : out.solutions) {
    s += sol;
    s += "\n";
  }
  return s;
}

MachineOptions apply_mode(MachineOptions base, BenchMode mode) {
  switch (mode) {
    case BenchMode::DefaultOnly:
      base.jit = false;
      break;
    case BenchMode::SpecNoMutability:
      base.jit = true;
      base.mutability = false;
      break;
    case BenchMode::SpecWithMutability:
      base.jit = true;
      base.mutability = true;
      break;
  }
  return base;
}

// Answers for a spec are produced once by a DEFAULT_ONLY run and used as
// the oracle for every other mode and repetition.
std::string expected_answers(const BenchmarkSpec& spec, const MachineOptions& base) {
  static std::map<std::string, std::string> cache;
  std::string key = spec.name + "#" + spec.goal;
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  MachineOptions opts = apply_mode(base, BenchMode::DefaultOnly);
  QueryOutcome out = run_program_text(spec.source, spec.goal, opts);
  if (out.resource_error) throw BenchError{"oracle run exhausted resources for " + spec.name, ""};
  std::string ans = join_solutions(out);
  cache[key] = ans;
  return ans;
}

std::string fmt4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

const std::vector<BenchmarkSpec>& benchmark_suite() {
  static const std::vector<BenchmarkSpec> suite = build_suite();
  return suite;
}

const BenchmarkSpec* find_benchmark(const std::string& name) {
  for (const auto& s : benchmark_suite())
    if (s.name == name) return &s;
  return nullptr;
}

std::pair<TimingBreakdown, RunStats> run_benchmark(const BenchmarkSpec& spec, BenchMode mode,
                                                   MachineOptions base) {
  std::string expected = expected_answers(spec, base);
  MachineOptions opts = apply_mode(base, mode);
  TimingBreakdown sum{};
  RunStats agg{};
  int reps = spec.reps > 0 ? spec.reps : 1;
  for (int r = 0; r < reps; ++r) {
    RunStats stats;
    TimingBreakdown times;
    QueryOutcome out = run_program_text(spec.source, spec.goal, opts, &stats, &times);
    if (out.resource_error) throw BenchError{"resource exhaustion in " + spec.name, ""};
    std::string got = join_solutions(out);
    if (got != expected) {
      throw BenchError{"wrong answer in " + spec.name + " (" + bench_mode_name(mode) + ")",
                       "expected:\n" + expected + "got:\n" + got};
    }
    sum.add(times);
    agg.add_counts(stats);
    if (r == 0) agg.solutions = got;
  }
  sum.scale(1.0 / reps);
  return {sum, agg};
}

double compute_speedup(double old_time, double new_time) {
  if (old_time <= 0.0 || new_time <= 0.0)
    throw BenchError{"compute_speedup requires positive runtimes", ""};
  return old_time / new_time;
}

double compute_improvement(double speedup) { return (speedup - 1.0) * 100.0; }

std::vector<BenchResult> run_suite(const std::vector<std::string>& names,
                                   const std::vector<BenchMode>& modes, MachineOptions base,
                                   int reps_override) {
  std::vector<const BenchmarkSpec*> specs;
  if (names.empty()) {
    for (const auto& s : benchmark_suite()) specs.push_back(&s);
  } else {
    for (const auto& n : names) {
      const BenchmarkSpec* s = find_benchmark(n);
      if (!s) throw BenchError{"unknown benchmark: " + n, ""};
      specs.push_back(s);
    }
  }

  std::vector<BenchResult> results;
  for (const BenchmarkSpec* sp : specs) {
    BenchmarkSpec spec = *sp;
    if (reps_override > 0) spec.reps = reps_override;
    double base_total = 0.0;
    for (BenchMode mode : modes) {
      auto [mean, stats] = run_benchmark(spec, mode, base);
      BenchResult r;
      r.name = spec.name;
      r.mode = mode;
      r.mean = mean;
      r.stats = std::move(stats);
      r.mean_total = mean.total();
      if (mode == BenchMode::DefaultOnly) {
        base_total = r.mean_total;
        r.speedup = 1.0;
        r.improvement = 0.0;
      } else if (base_total > 0.0 && r.mean_total > 0.0) {
        r.speedup = compute_speedup(base_total, r.mean_total);
        r.improvement = compute_improvement(r.speedup);
      }
      results.push_back(std::move(r));
    }
  }
  return results;
}

const char* const kCsvHeader =
    "name,mode,mean_total,t_default,t_overflow,t_gc,t_monitor,t_compiler,t_semulator,"
    "speedup,improvement,dispatches,type_test_evals,guard_evals,"
    "side_exits_elementary,side_exits_gc,rebuilds";

std::string emit_stats_csv(const std::vector<BenchResult>& results) {
  std::ostringstream out;
  out << kCsvHeader << "\n";
  for (const auto& r : results) {
    out << r.name << "," << bench_mode_name(r.mode) << "," << fmt4(r.mean_total) << ","
        << fmt4(r.mean[Component::DefaultEmulator]) << "," << fmt4(r.mean[Component::Overflow])
        << "," << fmt4(r.mean[Component::GarbageCollector]) << ","
        << fmt4(r.mean[Component::MonitorTraceBuilder]) << ","
        << fmt4(r.mean[Component::TraceCompiler]) << "," << fmt4(r.mean[Component::SEmulator])
        << "," << fmt4(r.speedup) << "," << fmt4(r.improvement) << "," << r.stats.dispatches
        << "," << r.stats.type_test_evals << "," << r.stats.guard_evals << ","
        << r.stats.side_exits_elementary << "," << r.stats.side_exits_gc << ","
        << r.stats.rebuilds << "\n";
  }
  return out.str();
}

}  // namespace tracewam
