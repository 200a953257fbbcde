#ifndef TRACEWAM_MACHINE_HPP
#define TRACEWAM_MACHINE_HPP

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tracewam/cfg.hpp"
#include "tracewam/monitor.hpp"
#include "tracewam/program.hpp"
#include "tracewam/semulator.hpp"
#include "tracewam/stats.hpp"
#include "tracewam/term.hpp"

namespace tracewam {

constexpr int kXRegs = 256;

struct MachineOptions {
  int64_t critical_threshold = 500;
  int64_t hot_threshold = 1000;
  size_t heap_cells = 1u << 20;
  size_t max_heap_cells = 1u << 28;
  bool jit = true;
  bool mutability = true;
  bool trace_dump = false;
  bool validate = false;          // run structural checks on every trace
  int64_t max_solutions = 0;      // 0 = enumerate all
  std::ostream* log = nullptr;    // trace-dump destination
};

struct EnvFrame {
  int32_t prev = -1;
  CodeAddr cp = kNoCode;
  int32_t cut_b = 0;
  std::vector<Cell> y;
};

struct ChoicePoint {
  std::vector<Cell> args;  // saved argument registers
  int32_t e = -1;
  CodeAddr cp = kNoCode;
  Addr h = 0;
  size_t tr = 0;
  CodeAddr alt = kNoCode;
  int32_t b0 = 0;
  int32_t mon_depth = 0;
  bool mon_active = false;
  uint64_t spec_epoch = 0;  // s.emulator activation that pushed this CP (0 = default)
};

struct QueryOutcome {
  std::vector<std::string> solutions;
  bool resource_error = false;
};

class Machine {
 public:
  Machine(Program& prog, MachineOptions opts);

  // Runs query code starting at `entry` to exhaustion (or until
  // max_solutions), enumerating every solution in standard order.
  QueryOutcome run_query(CodeAddr entry);

  RunStats& stats() { return stats_; }
  const TimingBreakdown& times() const { return clock_.breakdown(); }
  ComponentClock& clock() { return clock_; }
  Monitor& monitor() { return monitor_; }
  Program& program() { return prog_; }
  const MachineOptions& options() const { return opts_; }

  // ---- state, open to block bodies and the s.emulator ----
  Program& prog_;
  MachineOptions opts_;
  Heap heap_;
  Trail trail_;
  std::array<Cell, kXRegs> x_{};
  std::vector<EnvFrame> envs_;
  int32_t e_ = -1;
  std::vector<ChoicePoint> cps_;
  CodeAddr p_ = 0;       // current instruction
  CodeAddr p_next_ = 0;  // successor chosen by the current instruction
  CodeAddr cp_reg_ = 0;  // continuation pointer
  int32_t b0_ = 0;       // cut barrier at clause entry

  // structure cursor
  Addr s_ = 0;
  bool write_mode_ = false;

  // intra-instruction dataflow
  DerefResult scratch_{};
  int scratch_owner_ = -1;  // block index that loaded scratch_, -1 = stale
  Tag last_test_tag_ = Tag::Ref;
  int64_t num_lhs_ = 0;
  int64_t num_rhs_ = 0;
  CodeAddr last_switch_target_ = kNoCode;

  // dispatcher signals
  int32_t pending_pred_ = -1;   // predicate entered by Call/Execute
  int32_t pending_tick_ = -1;   // predicate re-entered by Retry/Trust
  int64_t gc_need_ = 0;
  bool halted_ = false;
  bool solution_found_ = false;
  bool resource_error_ = false;
  int32_t pending_meta_ = -1;   // query meta of a found solution

  ExitStatus exit_status_{};
  CodeAddr exit_step_ = kNoCode;     // instruction whose micro-op exited
  bool exit_from_switch_ = false;
  bool exit_entry_guard_ = false;    // exit came from a trace entry check
  uint64_t spec_epoch_counter_ = 0;  // distinct id per s.emulator activation
  uint64_t cur_spec_epoch_ = 0;      // nonzero while an s.emulator runs

  // ---- helpers used by block bodies ----
  Cell& slot(Slot s) {
    if (is_yslot(s)) return envs_[static_cast<size_t>(e_)].y[static_cast<size_t>(yindex(s))];
    return x_[static_cast<size_t>(s)];
  }

  // Loads the operand examined by a TYPE_TEST block.
  Cell subject_value(const Instr& i, GuardSubject subj);

  // Restores state from the youngest choice point and jumps to its
  // alternative. Returns false when no choice point remains.
  bool backtrack();

  // Order-preserving heap reclamation; grows capacity under pressure.
  // Returns false on resource exhaustion.
  bool reclaim(int64_t need);

  // Executes one instruction of the default emulator by walking its
  // basic-block graph. Sets p_next_ / signal fields.
  BlockResult::K step_default(const Instr& instr, bool markup);

  void record_solution(int32_t meta, QueryOutcome& out);

  // Counter tick + state transitions for a predicate entry/re-entry.
  void tick(int32_t pred);

  // Handles a side exit from an s.emulator per the K/BADDR protocol.
  // Returns true when execution should continue inside a (re)compiled
  // s.emulator, false to resume the default emulator at p_.
  bool handle_side_exit(PredicateEntry& pe);

 private:
  void process_transitions(int32_t pred);
  void finalize_and_install(int32_t pred, FinalizeReason why);

  RunStats stats_;
  ComponentClock clock_;
  Monitor monitor_;
};

// Convenience: parse + link + compile the goal + run. Throws CompileError
// and ast::ParseError like its parts.
QueryOutcome run_program_text(const std::string& program_text, const std::string& goal_text,
                              const MachineOptions& opts, RunStats* stats_out = nullptr,
                              TimingBreakdown* times_out = nullptr);

}  // namespace tracewam

#endif
