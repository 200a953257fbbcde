// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion function returns an empty string on success or
// a short diagnostic.

#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "support/gen.hpp"
#include "support/reference.hpp"
#include "tracewam/bench.hpp"
#include "tracewam/machine.hpp"
#include "tracewam/semulator.hpp"

using namespace tracewam;
namespace ast = tracewam::ast;

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) {
    s += x;
    s += "\n";
  }
  return s;
}

MachineOptions spec_opts(bool mutability, int64_t critical = 3, int64_t hot = 6) {
  MachineOptions o;
  o.jit = true;
  o.mutability = mutability;
  o.critical_threshold = critical;
  o.hot_threshold = hot;
  return o;
}

MachineOptions default_opts() {
  MachineOptions o;
  o.jit = false;
  return o;
}

// ---------------------------------------------------------------- 1
// Differential correctness: identical solution streams across modes on
// every suite program, at desk scale, with aggressive thresholds so the
// specializer actually engages.
std::string criterion1() {
  for (const auto& spec : benchmark_suite()) {
    QueryOutcome ref = run_program_text(spec.source, spec.goal, default_opts());
    if (ref.resource_error) return spec.name + ": oracle run exhausted resources";
    for (bool mut : {false, true}) {
      QueryOutcome got = run_program_text(spec.source, spec.goal, spec_opts(mut));
      if (got.resource_error) return spec.name + ": resource error in specialized mode";
      if (join(got.solutions) != join(ref.solutions))
        return spec.name + (mut ? " (with" : " (no") + " mutability): answers diverge";
    }
  }
  return "";
}

// ---------------------------------------------------------------- 2
// Oracle equivalence on >= 1,000 randomized queries over randomized
// terminating programs (term depth <= 4).
std::string criterion2() {
  testgen::Gen gen(testgen::seed_from_env());
  int compared = 0;
  int attempts = 0;
  while (compared < 1000 && attempts < 3000) {
    ++attempts;
    testgen::Gen::Prog p = gen.program();
    auto goals = gen.query(p);
    refint::Result ref = refint::solve(p.parsed, goals, 0, 2'000'000);
    // rational-tree cases (occurs-check violations) are skipped: the
    // engine deliberately has no occurs-check, so there is no finite
    // printable answer to compare
    if (ref.limit_hit || ref.cyclic) continue;

    Program prog = link_program(p.parsed);
    CodeAddr entry = compile_query(prog, goals);
    Machine m(prog, default_opts());
    QueryOutcome out = m.run_query(entry);
    if (out.resource_error) return "random case hit a resource error";
    if (out.solutions.size() != ref.solutions.size())
      return "solution count mismatch on random case " + std::to_string(attempts) + " (engine " +
             std::to_string(out.solutions.size()) + ", reference " +
             std::to_string(ref.solutions.size()) + ")";
    for (size_t i = 0; i < out.solutions.size(); ++i)
      if (out.solutions[i] != ref.solutions[i])
        return "solution text/order mismatch on random case " + std::to_string(attempts);
    ++compared;
  }
  if (compared < 1000) return "generator produced too few comparable cases";
  return "";
}

// ---------------------------------------------------------------- 3
// Lifecycle: COLD -> CRITICAL -> HOT, one installed s.emulator
// (generation 1), markup disabled once hot.
std::string criterion3() {
  const char* src = "walk([]).\nwalk([_|T]) :- walk(T).\n";
  auto list_goal = [](int n) {
    std::string g = "walk([";
    for (int i = 0; i < n; ++i) g += (i ? ",1" : "1");
    return g + "])";
  };

  // Stage 1: COLD and CRITICAL observations. Entry counters live in the
  // predicate table, so they accumulate across machines.
  {
    ast::ParsedProgram parsed = ast::parse_program(src);
    Program prog = link_program(parsed);
    const PredicateEntry& pe =
        prog.preds[static_cast<size_t>(prog.find_pred(prog.syms.intern("walk"), 1))];
    CodeAddr q2 = compile_query(prog, ast::parse_goal(list_goal(1)));
    CodeAddr q2b = compile_query(prog, ast::parse_goal(list_goal(1)));
    if (pe.state != PredState::Cold) return "predicate not COLD before any call";
    {
      Machine m(prog, spec_opts(true));
      m.run_query(q2);
      if (pe.state != PredState::Cold) return "premature transition before the critical threshold";
    }
    Machine m(prog, spec_opts(true));
    m.run_query(q2b);  // crosses 3 entries total -> CRITICAL during this run
    if (pe.state != PredState::Critical) return "no COLD->CRITICAL transition at threshold 3";
    if (m.stats().mark_calls == 0) return "markup inactive in the CRITICAL window";
    if (pe.semulator) return "s.emulator installed before HOT";
  }

  // Stage 2: fresh program, the whole critical->hot window inside one
  // query so the recorded trace already covers the loop, nil exit, and
  // return edge; exactly one install, generation 1.
  ast::ParsedProgram parsed = ast::parse_program(src);
  Program prog = link_program(parsed);
  const PredicateEntry& pe =
      prog.preds[static_cast<size_t>(prog.find_pred(prog.syms.intern("walk"), 1))];
  CodeAddr q_hot =
      compile_query(prog, ast::parse_goal("walk([1]), walk([1]), walk([1,1,1,1,1,1])"));
  CodeAddr q_after = compile_query(prog, ast::parse_goal(list_goal(9)));
  {
    Machine m(prog, spec_opts(true));
    m.run_query(q_hot);
    if (pe.state != PredState::Hot) return "no CRITICAL->HOT transition at threshold 6";
    if (!pe.semulator) return "no s.emulator installed at HOT";
    if (pe.semulator->generation != 1) return "installed generation is not 1";
    if (m.stats().installs != 1) return "install count != 1";
  }
  {
    Machine m(prog, spec_opts(true));
    m.run_query(q_after);
    if (m.stats().mark_calls != 0) return "mark_block still called after HOT";
    if (m.stats().semulator_entries == 0) return "hot predicate not entering its s.emulator";
    if (pe.semulator->generation != 1) return "generation changed on a type-stable load";
  }
  return "";
}

// ---------------------------------------------------------------- 4
// Mutability convergence on the int-then-atom type flip.
std::string criterion4() {
  const char* src = "step(1).\nstep(a).\ndrive([]).\ndrive([X|T]) :- step(X), drive(T).\n";
  ast::ParsedProgram parsed = ast::parse_program(src);
  Program prog = link_program(parsed);
  // integer-only warm-up whose critical->hot window fits in one query, so
  // generation 1 covers the loop, the nil exit, and the return edge; the
  // only event it cannot answer later is an atom element
  CodeAddr warm =
      compile_query(prog, ast::parse_goal("drive([1]), drive([1]), drive([1,1,1,1,1,1,1])"));
  // the first atom sits mid-list so the rebuild recording closes when the
  // trace head is re-entered on the next element
  CodeAddr flip = compile_query(prog, ast::parse_goal("drive([1,1,1,1,a,1,1])"));
  // goal literals are register-bounded, so the 1,000+ subsequent calls
  // are spread over several queries of 81 elements each
  std::string mixed = "drive([";
  for (int i = 0; i < 40; ++i) mixed += i ? ",1,a" : "1,a";
  mixed += "])";
  std::vector<CodeAddr> afters;
  for (int i = 0; i < 13; ++i) afters.push_back(compile_query(prog, ast::parse_goal(mixed)));

  SymId s = prog.syms.intern("drive");
  const PredicateEntry& pe = prog.preds[static_cast<size_t>(prog.find_pred(s, 1))];
  {
    Machine m(prog, spec_opts(true));
    m.run_query(warm);
    if (m.stats().installs != 1 || m.stats().side_exits_elementary != 0)
      return "warm-up did not install a clean generation 1";
  }
  if (!pe.semulator || pe.semulator->generation != 1) return "no generation-1 s.emulator installed";
  {
    Machine m(prog, spec_opts(true));
    m.run_query(flip);
    if (m.stats().side_exits_elementary != 1)
      return "expected exactly 1 ELEMENTARY_BLOCK side exit, got " +
             std::to_string(m.stats().side_exits_elementary);
    if (m.stats().rebuilds != 1)
      return "expected exactly 1 rebuild, got " + std::to_string(m.stats().rebuilds);
  }
  if (!pe.semulator || pe.semulator->generation != 2) return "rebuild did not install generation 2";

  int64_t sx = 0;
  for (CodeAddr q : afters) {
    Machine m(prog, spec_opts(true));
    m.run_query(q);  // 1,053 drive calls in total across the batch
    sx += m.stats().side_exits_elementary;
  }
  if (sx != 0) return "side exits after convergence: " + std::to_string(sx);
  if (pe.semulator->generation != 2) return "generation changed after convergence";
  return "";
}

// ---------------------------------------------------------------- 5
// GC exit protocol: reclamation raised inside an s.emulator, resumed via
// entry_map, generation unchanged, answers identical to the big heap.
std::string criterion5() {
  const BenchmarkSpec* nrev = find_benchmark("nreverse");
  if (!nrev) return "nreverse benchmark missing";

  MachineOptions big = spec_opts(true);
  QueryOutcome ref = run_program_text(nrev->source, nrev->goal, big);

  MachineOptions small = spec_opts(true);
  small.heap_cells = big.heap_cells / 10;
  RunStats st;
  QueryOutcome out = run_program_text(nrev->source, nrev->goal, small, &st);
  if (out.resource_error) return "small-heap run exhausted resources";
  if (st.reclamations_in_semulator < 1) return "no reclamation initiated inside an s.emulator";
  if (st.side_exits_gc < 1) return "no GC_EXCEPTION side exit observed";
  if (st.semulator_gc_resumes < 1) return "no entry_map resume after a GC exit";
  if (st.rebuilds != 0) return "GC exit must not trigger a rebuild";
  if (join(out.solutions) != join(ref.solutions)) return "answers differ from the large-heap run";
  return "";
}

// ---------------------------------------------------------------- 6
// Specialization effect, measured by deterministic instruction counts:
// TYPE_TEST + GUARD evaluations per head entry in specialized mode must
// be at most half the TYPE_TEST evaluations per head entry of the
// default emulator, on the type-stable hot benchmarks.
std::string criterion6() {
  for (const char* name : {"nreverse", "quicksort", "tak"}) {
    const BenchmarkSpec* spec = find_benchmark(name);
    if (!spec) return std::string(name) + " benchmark missing";
    RunStats def, sp;
    run_program_text(spec->source, spec->goal, default_opts(), &def);
    run_program_text(spec->source, spec->goal, spec_opts(true, 500, 1000), &sp);
    if (def.head_entries == 0 || sp.head_entries == 0) return std::string(name) + ": no entries";
    double def_rate = static_cast<double>(def.type_test_evals) / def.head_entries;
    double spec_rate =
        static_cast<double>(sp.type_test_evals + sp.guard_evals) / sp.head_entries;
    if (spec_rate > 0.5 * def_rate) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s: %.3f type-test+guard evals/entry vs %.3f default (>50%%)",
                    name, spec_rate, def_rate);
      return buf;
    }
  }
  return "";
}

// ---------------------------------------------------------------- 7
std::string criterion7() {
  auto r2 = [](double v) { return std::round(v * 100.0) / 100.0; };
  if (r2(compute_improvement(1.2357)) != 23.57) return "improvement(1.2357) != 23.57";
  if (r2(compute_improvement(1.1099)) != 10.99) return "improvement(1.1099) != 10.99";
  if (compute_speedup(3.0, 1.5) != 2.0) return "speedup formula broken";
  return "";
}

// ---------------------------------------------------------------- 8
// Six-component conservation and the 17-column schema on real rows.
std::string criterion8() {
  MachineOptions base;
  base.critical_threshold = 50;
  base.hot_threshold = 100;
  std::vector<BenchMode> modes = {BenchMode::DefaultOnly, BenchMode::SpecNoMutability,
                                  BenchMode::SpecWithMutability};
  std::vector<BenchResult> rows;
  try {
    rows = run_suite({"nreverse", "hanoi", "recursive"}, modes, base, 3);
  } catch (const BenchError& e) {
    return "bench error: " + e.message;
  }
  for (const auto& r : rows) {
    double sum = 0;
    for (int c = 0; c < kComponentCount; ++c) sum += r.mean.seconds[static_cast<size_t>(c)];
    if (std::abs(sum - r.mean_total) > 0.01 * std::max(r.mean_total, 1e-9))
      return r.name + ": components do not sum to total within 1%";
    if (r.mode == BenchMode::DefaultOnly &&
        (r.mean[Component::MonitorTraceBuilder] != 0.0 ||
         r.mean[Component::TraceCompiler] != 0.0 || r.mean[Component::SEmulator] != 0.0))
      return r.name + ": DEFAULT_ONLY row has nonzero specializer time";
  }
  std::string csv = emit_stats_csv(rows);
  std::istringstream lines(csv);
  std::string line;
  while (std::getline(lines, line)) {
    int cols = 1;
    for (char c : line)
      if (c == ',') ++cols;
    if (cols != 17) return "CSV row with " + std::to_string(cols) + " columns";
  }
  return "";
}

// ---------------------------------------------------------------- 9
// Structural trace properties, checked over every s.emulator installed
// while running the whole suite with aggressive thresholds.
std::string validate_structure(const SEmulator& se) {
  std::string basic = validate_semulator(se);
  if (!basic.empty()) return basic;
  if (!se.trace) return "installed s.emulator lost its trace record";
  const TraceRecord& tr = *se.trace;

  // group micro indexes by originating instruction
  std::map<CodeAddr, std::vector<int>> by_addr;
  for (size_t i = 0; i < se.prog.size(); ++i)
    if (se.prog[i].addr != kNoCode) by_addr[se.prog[i].addr].push_back(static_cast<int>(i));

  for (const auto& [addr, st] : tr.steps) {
    const InstructionCFG& cfg = instruction_metadata(st.op);
    auto it = by_addr.find(addr);
    const std::vector<int> none;
    const std::vector<int>& micros = it == by_addr.end() ? none : it->second;

    // (a) every executed TYPE_TEST block is either retained as an action,
    // covered by a guard (possibly dominance-elided but still derefing),
    // or absorbed into the instruction's switch; trace-determined mode
    // checks are exempt by design
    for (int bi = 0; bi < static_cast<int>(cfg.blocks.size()); ++bi) {
      if (!(st.executed_blocks & (1u << bi))) continue;
      if (cfg.blocks[static_cast<size_t>(bi)].kind != BlockKind::TypeTest) continue;
      if (cfg.blocks[static_cast<size_t>(bi)].trace_determined) continue;
      bool covered = false;
      for (int mi : micros) {
        const MicroOp& u = se.prog[static_cast<size_t>(mi)];
        if ((u.kind == MicroKind::Guard || u.kind == MicroKind::Action) && u.block == bi)
          covered = true;
        if (u.kind == MicroKind::Switch) covered = true;
      }
      if (!covered)
        return "unguarded pruned TYPE_TEST at instruction " + std::to_string(addr) + " block " +
               std::to_string(bi);
    }

    // (b) recorded switches keep every bucket and their recorded tags;
    // the Switch micro side-exits on anything unrecorded by construction
    if (st.op == Opcode::SwitchOnTerm) {
      const MicroOp* sw = nullptr;
      for (int mi : micros)
        if (se.prog[static_cast<size_t>(mi)].kind == MicroKind::Switch)
          sw = &se.prog[static_cast<size_t>(mi)];
      if (!sw) return "recorded switch_on_term without a Switch micro at " + std::to_string(addr);
      for (const auto& [target, tags] : st.switch_targets) {
        auto t = sw->switch_targets.find(target);
        if (t == sw->switch_targets.end())
          return "switch at " + std::to_string(addr) + " dropped bucket " + std::to_string(target);
        auto al = sw->switch_allowed.find(target);
        if (al == sw->switch_allowed.end() || (al->second & tags) != tags)
          return "switch at " + std::to_string(addr) + " narrowed recorded tags for bucket " +
                 std::to_string(target);
      }
    }

    // (c) within one instruction's retained micros, the GC_CHECK (if any)
    // comes before every type-test-derived micro
    bool seen_type_test = false;
    for (int mi : micros) {
      const MicroOp& u = se.prog[static_cast<size_t>(mi)];
      if (u.kind == MicroKind::Guard ||
          (u.kind == MicroKind::Action && u.block >= 0 &&
           u.block < static_cast<int>(cfg.blocks.size()) &&
           cfg.blocks[static_cast<size_t>(u.block)].kind == BlockKind::TypeTest))
        seen_type_test = true;
      if (u.kind == MicroKind::GcGuard && seen_type_test)
        return "TYPE_TEST precedes GC_CHECK at instruction " + std::to_string(addr);
    }
  }
  return "";
}

std::string criterion9() {
  int checked = 0;
  for (const auto& spec : benchmark_suite()) {
    ast::ParsedProgram parsed = ast::parse_program(spec.source);
    Program prog = link_program(parsed);
    CodeAddr entry = compile_query(prog, ast::parse_goal(spec.goal));
    Machine m(prog, spec_opts(true));
    QueryOutcome out = m.run_query(entry);
    if (out.resource_error) return spec.name + ": resource error";
    for (const auto& pe : prog.preds) {
      if (!pe.semulator) continue;
      ++checked;
      std::string err = validate_structure(*pe.semulator);
      if (!err.empty())
        return spec.name + " / " + pe.spec_name(prog.syms) + ": " + err;
    }
  }
  if (checked == 0) return "no s.emulators were installed across the suite";
  return "";
}

struct Criterion {
  int id;
  const char* title;
  std::function<std::string()> fn;
};

}  // namespace

int main() {
  const Criterion criteria[] = {
      {1, "differential correctness across execution modes", criterion1},
      {2, "oracle equivalence on 1000 randomized queries", criterion2},
      {3, "specialization lifecycle and markup shutdown", criterion3},
      {4, "mutability convergence on a type flip", criterion4},
      {5, "GC exception exit and resume protocol", criterion5},
      {6, "type-test/guard reduction on hot benchmarks", criterion6},
      {7, "speedup and improvement formula fidelity", criterion7},
      {8, "six-component breakdown conservation and CSV schema", criterion8},
      {9, "structural trace properties", criterion9},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    std::string err;
    try {
      err = c.fn();
    } catch (const ast::ParseError& e) {
      err = "parse error: " + e.message;
    } catch (const CompileError& e) {
      err = "compile error: " + e.message;
    } catch (const BenchError& e) {
      err = "bench error: " + e.message;
    }
    if (err.empty()) {
      std::printf("criterion %d: PASS - %s\n", c.id, c.title);
    } else {
      std::printf("criterion %d: FAIL - %s: %s\n", c.id, c.title, err.c_str());
      ++failures;
    }
  }
  return failures == 0 ? 0 : 1;
}
