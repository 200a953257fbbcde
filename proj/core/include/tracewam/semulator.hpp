#ifndef TRACEWAM_SEMULATOR_HPP
#define TRACEWAM_SEMULATOR_HPP

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tracewam/cfg.hpp"
#include "tracewam/monitor.hpp"
#include "tracewam/stats.hpp"

namespace tracewam {

class Machine;

enum class MicroKind : uint8_t {
  Action,    // run one retained basic block; dispatch on its result edge
  Guard,     // deref a subject and require its final tag in a set
  GcGuard,   // heap-room requirement; fails with K = GC_EXCEPTION
  Switch,    // first-argument dispatch restricted to traced targets
  Jump,      // unconditional transfer to another micro index
  LoopBack,  // like Jump, but a recorded back edge
  DynJump,   // transfer to entry_map[m.p]; hand off to default on miss
  Exit,      // unconditional side exit (unrecorded static successor)
};

const char* micro_kind_name(MicroKind k);

// A branch of an Action micro-op: maps a block-result edge index to a
// continuation. target >= 0 is a micro index; the sentinels mirror the
// block-level ones.
constexpr int kMicroNext = -1;       // fall through to the next micro-op
constexpr int kMicroSideExit = -2;   // untraced edge: elementary-block exit
constexpr int kMicroBacktrack = -3;  // failure edge: backtrack in-trace

struct MicroOp {
  MicroKind kind = MicroKind::Action;
  CodeAddr addr = kNoCode;  // instruction this micro-op derives from
  int block = -1;           // source block index (Action/Guard)
  bool step_start = false;  // first micro-op of its instruction step
  bool check = true;        // Guard: false = dominance-elided (deref+store only)
  // Guard
  GuardSubject subject = GuardSubject::None;
  GuardStore store = GuardStore::Scratch;
  TagSet allowed = 0;
  Slot subject_slot = 0;  // register examined by a DirectSlot guard
  // GcGuard
  int64_t need = 0;
  // Action: continuation per block-result edge; index -> target
  std::vector<int> branch;
  int backtrack_target = kMicroBacktrack;  // for Backtrack block results
  // Switch: traced bucket targets by code address, with the dispatch tags
  // recorded for each bucket; unrecorded tags side-exit at the bucket.
  // DynJump reuses switch_targets for its recorded return sites.
  std::map<CodeAddr, int> switch_targets;
  std::map<CodeAddr, TagSet> switch_allowed;
  // Jump / LoopBack / Exit
  int target = kMicroNext;
  CodeAddr exit_addr = kNoCode;  // BADDR for Exit micros
};

// How an s.emulator activation ended.
enum class SpecOutcome : uint8_t {
  Completed,  // left the traced region through a recorded hand-off point
  Exited,     // side exit: consult the ExitStatus registers
  Failed,     // backtracked out of every choice point in the query
};

struct ExitStatus {
  ExitReason k = ExitReason::ElementaryBlock;
  CodeAddr baddr = kNoCode;
};

struct SEmulator {
  int32_t pred = -1;
  int32_t generation = 0;
  std::vector<MicroOp> prog;
  std::map<CodeAddr, int> entry_map;  // instruction addr -> step-start micro
  std::unique_ptr<TraceRecord> trace;  // retained for mutability rebuilds
  int guard_count = 0;
  int loop_back_count = 0;
};

// Lowers a finalized trace to a guarded linear micro-op program. Performs
// guard merging (var test + post-deref dispatch fold into one
// deref-and-check guard) and dominance elision (guards implied by an
// earlier guard or switch on an untouched slot are dropped).
std::shared_ptr<SEmulator> compile_trace(Machine& m, std::unique_ptr<TraceRecord> trace,
                                         int32_t generation);

// Runs the s.emulator from its entry (or from a mapped resume address).
// On SpecOutcome::Exited the machine's exit status holds K and BADDR and
// the machine state is exactly as the default emulator expects at BADDR.
SpecOutcome run_semulator(Machine& m, SEmulator& se, CodeAddr resume_at);

std::string semulator_to_string(const SEmulator& se, const SymbolTable& syms);

// Structural well-formedness check: every branch target in range, guards
// carry non-empty tag sets, entry_map points at step starts. Returns an
// empty string when valid, else a description of the violation.
std::string validate_semulator(const SEmulator& se);

}  // namespace tracewam

#endif
