#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tracewam/bench.hpp"
#include "tracewam/machine.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitWrongAnswer = 2;
constexpr int kExitCompile = 3;
constexpr int kExitResource = 4;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw tracewam::CompileError{"cannot open file: " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void dump_listing(const tracewam::Program& prog, std::ostream& out) {
  using namespace tracewam;
  for (CodeAddr a = 0; a < prog.code.size(); ++a)
    out << a << "\t" << instr_to_string(prog.code.at(a), prog.syms) << "\n";
  std::set<Opcode> seen;
  for (CodeAddr a = 0; a < prog.code.size(); ++a)
    if (seen.insert(prog.code.at(a).op).second) out << "\n" << cfg_to_string(prog.code.at(a).op);
}

void write_run_stats(const tracewam::RunStats& st, const tracewam::TimingBreakdown& tb,
                     std::ostream& out) {
  using tracewam::Component;
  out << "total_seconds=" << tb.total() << "\n"
      << "t_default=" << tb[Component::DefaultEmulator] << "\n"
      << "t_overflow=" << tb[Component::Overflow] << "\n"
      << "t_gc=" << tb[Component::GarbageCollector] << "\n"
      << "t_monitor=" << tb[Component::MonitorTraceBuilder] << "\n"
      << "t_compiler=" << tb[Component::TraceCompiler] << "\n"
      << "t_semulator=" << tb[Component::SEmulator] << "\n"
      << "dispatches=" << st.dispatches << "\n"
      << "head_entries=" << st.head_entries << "\n"
      << "type_test_evals=" << st.type_test_evals << "\n"
      << "guard_evals=" << st.guard_evals << "\n"
      << "gc_check_evals=" << st.gc_check_evals << "\n"
      << "side_exits_elementary=" << st.side_exits_elementary << "\n"
      << "side_exits_gc=" << st.side_exits_gc << "\n"
      << "rebuilds=" << st.rebuilds << "\n"
      << "installs=" << st.installs << "\n"
      << "reclamations=" << st.reclamations << "\n"
      << "semulator_entries=" << st.semulator_entries << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  using namespace tracewam;

  CLI::App app{"tracewam: tracing-specializer abstract machine"};
  app.require_subcommand(1);

  MachineOptions opts;
  std::string stats_out;
  bool no_jit = false, no_mutability = false, trace_dump = false, disasm = false;
  int64_t heap_cells = static_cast<int64_t>(opts.heap_cells);
  int reps = 0;

  app.add_option("--critical", opts.critical_threshold, "calls before CRITICAL");
  app.add_option("--hot", opts.hot_threshold, "calls before HOT");
  app.add_flag("--no-jit", no_jit, "disable the specializer entirely");
  app.add_flag("--no-mutability", no_mutability, "disable trace rebuilds");
  app.add_option("--heap-cells", heap_cells, "initial heap size in cells");
  app.add_flag("--trace-dump", trace_dump, "dump compiled traces to stderr");
  app.add_flag("--disasm", disasm, "print bytecode and per-opcode block graphs");
  app.add_option("--stats-out", stats_out, "write statistics to this file");
  app.add_option("--reps", reps, "repetitions per benchmark");

  std::string file, goal;
  auto* run = app.add_subcommand("run", "run a program file");
  run->fallthrough();
  run->add_option("file", file, "program source file")->required();
  run->add_option("-g,--goal", goal, "entry goal");

  std::vector<std::string> bench_names;
  auto* bench = app.add_subcommand("bench", "run the benchmark suite");
  bench->fallthrough();
  bench->add_option("names", bench_names, "benchmark names (default: all)");

  CLI11_PARSE(app, argc, argv);

  opts.jit = !no_jit;
  opts.mutability = !no_mutability;
  opts.heap_cells = static_cast<size_t>(heap_cells);
  opts.trace_dump = trace_dump;
  if (trace_dump) opts.log = &std::cerr;

  try {
    if (run->parsed()) {
      std::string text = read_file(file);
      ast::ParsedProgram parsed = ast::parse_program(text);
      Program prog = link_program(parsed);

      std::string goal_text = goal;
      if (goal_text.empty()) {
        if (!parsed.initialization) {
          std::cerr << "error: no goal given and no :- initialization(...) directive\n";
          return kExitCompile;
        }
        goal_text = ast::to_string(parsed.initialization);
      }
      std::vector<ast::TermPtr> goals = ast::parse_goal(goal_text);
      CodeAddr entry = compile_query(prog, goals);

      if (disasm) dump_listing(prog, std::cout);

      Machine m(prog, opts);
      QueryOutcome out = m.run_query(entry);
      if (out.resource_error) {
        std::cerr << "error: heap resource limit exhausted\n";
        return kExitResource;
      }
      if (out.solutions.empty()) {
        std::cout << "no.\n";
      } else {
        for (const auto& s : out.solutions) std::cout << s << ".\n";
      }
      if (!stats_out.empty()) {
        std::ofstream f(stats_out);
        write_run_stats(m.stats(), m.times(), f);
      }
      return kExitOk;
    }

    // bench
    std::vector<BenchMode> modes{BenchMode::DefaultOnly};
    if (!no_jit) {
      modes.push_back(BenchMode::SpecNoMutability);
      if (!no_mutability) modes.push_back(BenchMode::SpecWithMutability);
    }
    std::vector<BenchResult> results = run_suite(bench_names, modes, opts, reps);
    std::string csv = emit_stats_csv(results);
    std::cout << csv;
    if (!stats_out.empty()) {
      std::ofstream f(stats_out);
      f << csv;
    }
    return kExitOk;
  } catch (const ast::ParseError& e) {
    std::cerr << "parse error at " << e.line << ":" << e.column << ": " << e.message << "\n";
    return kExitCompile;
  } catch (const CompileError& e) {
    std::cerr << "compile error: " << e.message << "\n";
    return kExitCompile;
  } catch (const BenchError& e) {
    std::cerr << "benchmark failure: " << e.message << "\n";
    if (!e.diff.empty()) std::cerr << e.diff;
    return kExitWrongAnswer;
  }
}
