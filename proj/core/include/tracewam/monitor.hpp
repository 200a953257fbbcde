#ifndef TRACEWAM_MONITOR_HPP
#define TRACEWAM_MONITOR_HPP

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <set>
#include <vector>

#include "tracewam/cfg.hpp"

namespace tracewam {

class Machine;

constexpr int kMaxBlocksPerOp = 12;
constexpr int kTraceStepCap = 4096;
constexpr int kMaxRebuilds = 8;
constexpr int kBlacklistHotMultiplier = 10;

// One instruction occurrence in a trace, keyed by code address so that
// re-execution of the same address collapses into loop/back edges.
struct StepRecord {
  CodeAddr addr = kNoCode;
  Opcode op = Opcode::Halt;
  uint32_t executed_blocks = 0;  // bitmask over block indices
  TagSet observed[kMaxBlocksPerOp] = {};  // final tags seen per TYPE_TEST block
  std::set<CodeAddr> successors;          // observed next instruction addresses
  std::map<CodeAddr, TagSet> switch_targets;  // MULTIWAY target -> dispatch tags seen
  int order = 0;                          // position of first execution
};

struct TraceRecord {
  int32_t pred = -1;
  CodeAddr head = kNoCode;
  std::vector<CodeAddr> order;                // first-execution order
  std::map<CodeAddr, StepRecord> steps;
  bool finalized = false;
  bool rebuild = false;  // reopened after a side exit
  int32_t generation = 0;

  StepRecord* find(CodeAddr a) {
    auto it = steps.find(a);
    return it == steps.end() ? nullptr : &it->second;
  }
};

// Why the trace builder finalized a recording.
enum class FinalizeReason : uint8_t {
  HotLoop,        // the traced predicate reached its hot threshold
  Rebuild,        // a rebuild recording closed back at the trace head
};

// The monitor marks executed basic blocks while a predicate is between
// its critical and hot thresholds, and assembles the trace record that
// the trace compiler consumes.
class Monitor {
 public:
  bool recording() const { return current_ != nullptr && active_; }
  bool has_trace() const { return current_ != nullptr; }
  int32_t traced_pred() const { return current_ ? current_->pred : -1; }
  TraceRecord& trace() { return *current_; }

  // Begin watching for the head address of a critical predicate.
  void begin(int32_t pred, CodeAddr head);
  // Reopen a finalized trace for a mutability rebuild at the side exit.
  void reopen(std::unique_ptr<TraceRecord> trace, CodeAddr exit_step,
              bool switch_exit, CodeAddr resume_addr, Tag dispatch_tag);
  // Abandon the in-flight recording (trace too long, or query ended).
  void abandon();
  // Detach the finalized record for compilation.
  std::unique_ptr<TraceRecord> take();

  // Called by the dispatcher for every basic block executed while markup
  // is enabled. `instr_start` is true for the first block of an
  // instruction. Returns false when the recording was abandoned for
  // exceeding the step cap.
  bool mark_block(Machine& m, CodeAddr addr, const Instr& instr, int block,
                  const BasicBlock& meta, bool instr_start);
  // Record the observed final tag for a type-test block of the current
  // instruction (called when a non-deref edge is taken).
  void observe_tag(CodeAddr addr, int block, Tag t);
  void observe_switch_target(CodeAddr addr, CodeAddr target, Tag dispatch_tag);

  // Activation-depth bookkeeping; saved and restored across choice points.
  int depth() const { return depth_; }
  bool active() const { return active_; }
  void restore_activation(int depth, bool active) {
    depth_ = depth;
    active_ = active;
    // backtracking out of a reopened activation also completes the rebuild
    if (!active && current_ && current_->rebuild && !current_->finalized) completed_ = true;
  }

  // Pending critical predicates waiting for the single recording slot.
  void enqueue(int32_t pred);
  int32_t dequeue();
  bool queue_empty() const { return queue_.empty(); }

  int step_count() const { return current_ ? static_cast<int>(current_->order.size()) : 0; }

  // A rebuild recording is complete once the reopened activation returns;
  // the dispatcher finalizes it at the next instruction boundary.
  bool completion_ready() const { return completed_; }

 private:
  StepRecord& step_at(CodeAddr addr, Opcode op);

  std::unique_ptr<TraceRecord> current_;
  bool completed_ = false;
  bool active_ = false;   // inside the traced predicate's activation
  int depth_ = 0;         // open activations of the traced predicate region
  CodeAddr last_addr_ = kNoCode;  // previous instruction, for successor edges
  std::deque<int32_t> queue_;
};

}  // namespace tracewam

#endif
