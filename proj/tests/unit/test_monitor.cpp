#include <string>

#include "doctest.h"
#include "tracewam/machine.hpp"

using namespace tracewam;
namespace ast = tracewam::ast;

namespace {

const char* kWalk = R"(
walk([]).
walk([_|T]) :- walk(T).
)";

std::string list_goal(int n) {
  std::string g = "walk([";
  for (int i = 0; i < n; ++i) {
    if (i) g += ",";
    g += std::to_string(i);
  }
  return g + "])";
}

MachineOptions low_thresholds() {
  MachineOptions o;
  o.critical_threshold = 3;
  o.hot_threshold = 6;
  return o;
}

}  // namespace

TEST_CASE("predicate walks COLD -> CRITICAL -> HOT and installs one s.emulator") {
  // Stage 1: cold/critical observations on their own program instance.
  // Counters live in the predicate table, so they accumulate across
  // queries and machines.
  {
    ast::ParsedProgram parsed = ast::parse_program(kWalk);
    Program prog = link_program(parsed);
    const PredicateEntry& pe = prog.preds[static_cast<size_t>(prog.find_pred(prog.syms.intern("walk"), 1))];
    CodeAddr q2 = compile_query(prog, ast::parse_goal(list_goal(1)));  // 2 entries
    CodeAddr q4 = compile_query(prog, ast::parse_goal(list_goal(1)));  // 4 entries
    CHECK(pe.state == PredState::Cold);
    CHECK(pe.call_counter == 0);
    {
      Machine m(prog, low_thresholds());
      m.run_query(q2);
      CHECK(pe.state == PredState::Cold);
      CHECK(pe.call_counter == 2);
    }
    Machine m(prog, low_thresholds());
    m.run_query(q4);
    CHECK(pe.state == PredState::Critical);  // crossed the threshold of 3
    CHECK(pe.call_counter == 4);
    CHECK(m.stats().mark_calls > 0);  // markup active between critical and hot
    CHECK(pe.semulator == nullptr);
  }

  // Stage 2: fresh program; the whole critical->hot window sits inside a
  // single query so the recorded trace covers the loop, the nil exit, and
  // the return edge, and generation 1 is already complete.
  ast::ParsedProgram parsed = ast::parse_program(kWalk);
  Program prog = link_program(parsed);
  const PredicateEntry& pe = prog.preds[static_cast<size_t>(prog.find_pred(prog.syms.intern("walk"), 1))];
  CodeAddr hot = compile_query(prog, ast::parse_goal("walk([1]), walk([1]), walk([1,1,1,1,1,1])"));
  CodeAddr q_after = compile_query(prog, ast::parse_goal(list_goal(9)));
  {
    Machine m(prog, low_thresholds());
    m.run_query(hot);
    CHECK(pe.state == PredState::Hot);
    REQUIRE(pe.semulator != nullptr);
    CHECK(pe.semulator->generation == 1);
    CHECK(pe.generation == 1);
    CHECK(m.stats().installs == 1);
    CHECK(m.stats().rebuilds == 0);
    CHECK(m.stats().side_exits_elementary == 0);
  }
  {
    // hot predicate: markup is off, the s.emulator runs instead
    Machine m(prog, low_thresholds());
    m.run_query(q_after);
    CHECK(m.stats().mark_calls == 0);
    CHECK(m.stats().semulator_entries > 0);
    CHECK(pe.semulator->generation == 1);  // no rebuild on a type-stable load
  }
}

TEST_CASE("disabling the jit keeps every predicate cold") {
  ast::ParsedProgram parsed = ast::parse_program(kWalk);
  Program prog = link_program(parsed);
  CodeAddr q = compile_query(prog, ast::parse_goal(list_goal(30)));
  MachineOptions o = low_thresholds();
  o.jit = false;
  Machine m(prog, o);
  m.run_query(q);
  SymId s = prog.syms.intern("walk");
  const PredicateEntry& pe = prog.preds[static_cast<size_t>(prog.find_pred(s, 1))];
  CHECK(pe.state == PredState::Cold);
  CHECK(pe.semulator == nullptr);
  CHECK(m.stats().mark_calls == 0);
  CHECK(m.stats().semulator_entries == 0);
}

TEST_CASE("default thresholds are 500 and 1000") {
  MachineOptions o;
  CHECK(o.critical_threshold == 500);
  CHECK(o.hot_threshold == 1000);
}
