#include "tracewam/monitor.hpp"

#include <algorithm>

#include "tracewam/machine.hpp"

namespace tracewam {

void Monitor::begin(int32_t pred, CodeAddr head) {
  current_ = std::make_unique<TraceRecord>();
  current_->pred = pred;
  current_->head = head;
  completed_ = false;
  active_ = false;
  depth_ = 0;
  last_addr_ = kNoCode;
}

void Monitor::reopen(std::unique_ptr<TraceRecord> trace, CodeAddr exit_step, bool switch_exit,
                     CodeAddr resume_addr, Tag dispatch_tag) {
  current_ = std::move(trace);
  current_->finalized = false;
  current_->rebuild = true;
  completed_ = false;
  // we reopen in the middle of the hot predicate's activation
  active_ = true;
  depth_ = 1;
  last_addr_ = exit_step;  // records the edge exit-step -> resume point
  if (switch_exit) {
    if (StepRecord* s = current_->find(exit_step))
      s->switch_targets[resume_addr] |= tag_bit(dispatch_tag);
  }
}

void Monitor::abandon() {
  current_.reset();
  completed_ = false;
  active_ = false;
  depth_ = 0;
  last_addr_ = kNoCode;
}

std::unique_ptr<TraceRecord> Monitor::take() {
  current_->finalized = true;
  completed_ = false;
  active_ = false;
  depth_ = 0;
  last_addr_ = kNoCode;
  return std::move(current_);
}

StepRecord& Monitor::step_at(CodeAddr addr, Opcode op) {
  auto [it, fresh] = current_->steps.try_emplace(addr);
  if (fresh) {
    it->second.addr = addr;
    it->second.op = op;
    it->second.order = static_cast<int>(current_->order.size());
    current_->order.push_back(addr);
  }
  return it->second;
}

bool Monitor::mark_block(Machine& m, CodeAddr addr, const Instr& instr, int block,
                         const BasicBlock& meta, bool instr_start) {
  (void)meta;
  if (!current_ || current_->finalized) return true;
  m.stats().mark_calls++;

  bool deactivate_after = false;
  if (instr_start) {
    if (!active_) {
      if (addr != current_->head) return true;
      active_ = true;
      depth_ = 1;
      last_addr_ = kNoCode;
    }
    if (!current_->steps.count(addr) &&
        static_cast<int>(current_->order.size()) >= kTraceStepCap) {
      // trace too long: abandon and blacklist the predicate
      PredicateEntry& pe = m.program().preds[static_cast<size_t>(current_->pred)];
      pe.state = PredState::Cold;
      pe.rebuild_pending = false;
      pe.blacklist_until =
          pe.call_counter + kBlacklistHotMultiplier * m.options().hot_threshold;
      abandon();
      return false;
    }
    step_at(addr, instr.op);
    if (last_addr_ != kNoCode && last_addr_ != addr) {
      if (StepRecord* prev = current_->find(last_addr_)) prev->successors.insert(addr);
    }
    last_addr_ = addr;
    if (instr.op == Opcode::Call) {
      depth_++;
    } else if (instr.op == Opcode::Proceed) {
      depth_--;
      if (depth_ <= 0) deactivate_after = true;
    }
  }
  if (!active_) return true;
  StepRecord& s = step_at(addr, instr.op);
  if (block < 32) s.executed_blocks |= 1u << block;
  if (deactivate_after) {
    active_ = false;
    last_addr_ = kNoCode;
    if (current_->rebuild) completed_ = true;
  }
  return true;
}

void Monitor::observe_tag(CodeAddr addr, int block, Tag t) {
  if (!current_ || !active_) return;
  StepRecord* s = current_->find(addr);
  if (s && block >= 0 && block < kMaxBlocksPerOp) s->observed[block] |= tag_bit(t);
}

void Monitor::observe_switch_target(CodeAddr addr, CodeAddr target, Tag dispatch_tag) {
  if (!current_ || !active_) return;
  if (StepRecord* s = current_->find(addr)) s->switch_targets[target] |= tag_bit(dispatch_tag);
}

void Monitor::enqueue(int32_t pred) {
  if (std::find(queue_.begin(), queue_.end(), pred) == queue_.end()) queue_.push_back(pred);
}

int32_t Monitor::dequeue() {
  if (queue_.empty()) return -1;
  int32_t p = queue_.front();
  queue_.pop_front();
  return p;
}

}  // namespace tracewam
