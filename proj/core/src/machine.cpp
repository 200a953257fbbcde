#include "tracewam/machine.hpp"

#include <stdexcept>

namespace tracewam {

Machine::Machine(Program& prog, MachineOptions opts)
    : prog_(prog), opts_(opts), heap_(opts.heap_cells) {
  envs_.reserve(64);
  cps_.reserve(64);
}

BlockResult::K Machine::step_default(const Instr& instr, bool markup) {
  const InstructionCFG& cfg = instruction_metadata(instr.op);
  scratch_owner_ = -1;
  p_next_ = p_ + 1;
  int bi = cfg.entry;
  bool first = true;
  for (;;) {
    const BasicBlock& blk = cfg.blocks[static_cast<size_t>(bi)];
    if (markup) {
      ComponentScope cs(clock_, Component::MonitorTraceBuilder);
      monitor_.mark_block(*this, p_, instr, bi, blk, first);
    }
    first = false;
    if (blk.kind == BlockKind::TypeTest) stats_.type_test_evals++;
    else if (blk.kind == BlockKind::GcCheck) stats_.gc_check_evals++;

    BlockResult r = blk.fn(*this, instr);

    if (opts_.validate && r.kind == BlockResult::K::Edge &&
        static_cast<size_t>(r.edge) >= blk.edges.size())
      throw std::logic_error("block took an edge outside its successor list");

    if (markup && monitor_.recording()) {
      ComponentScope cs(clock_, Component::MonitorTraceBuilder);
      if (blk.kind == BlockKind::TypeTest) {
        bool into_deref = false;
        if (r.kind == BlockResult::K::Edge) {
          int t = blk.edges[static_cast<size_t>(r.edge)].target;
          into_deref = t >= 0 && cfg.blocks[static_cast<size_t>(t)].kind == BlockKind::DerefLoop;
        }
        if (!into_deref) monitor_.observe_tag(p_, bi, last_test_tag_);
      } else if (blk.kind == BlockKind::DerefLoop && r.kind == BlockResult::K::Edge) {
        if (blk.edges[static_cast<size_t>(r.edge)].tags & kRefBit)
          monitor_.observe_tag(p_, blk.paired_test, Tag::Ref);
      } else if (blk.kind == BlockKind::Multiway && r.kind == BlockResult::K::Next) {
        monitor_.observe_switch_target(p_, last_switch_target_, scratch_.cell.tag);
      }
    }

    switch (r.kind) {
      case BlockResult::K::Next:
        return BlockResult::K::Next;
      case BlockResult::K::Backtrack:
        return BlockResult::K::Backtrack;
      case BlockResult::K::GcNeeded:
        return BlockResult::K::GcNeeded;
      case BlockResult::K::Edge: {
        int t = blk.edges[static_cast<size_t>(r.edge)].target;
        if (t == kEdgeNext) return BlockResult::K::Next;
        if (t == kEdgeBacktrack) return BlockResult::K::Backtrack;
        bi = t;
        break;
      }
    }
  }
}

bool Machine::backtrack() {
  if (cps_.empty()) return false;
  ChoicePoint& cp = cps_.back();
  for (size_t i = 0; i < cp.args.size(); ++i) x_[i] = cp.args[i];
  e_ = cp.e;
  cp_reg_ = cp.cp;
  b0_ = cp.b0;
  trail_.undo_to_size(heap_, cp.tr);
  heap_.truncate(cp.h);
  monitor_.restore_activation(cp.mon_depth, cp.mon_active);
  p_ = cp.alt;
  return true;
}

void Machine::tick(int32_t pred) {
  PredicateEntry& pe = prog_.preds[static_cast<size_t>(pred)];
  pe.call_counter++;
  stats_.head_entries++;
  if (!opts_.jit || pe.pinned_default) return;
  switch (pe.state) {
    case PredState::Cold:
      if (pe.call_counter >= opts_.critical_threshold && pe.call_counter >= pe.blacklist_until) {
        pe.state = PredState::Critical;
        ComponentScope cs(clock_, Component::MonitorTraceBuilder);
        if (!monitor_.has_trace())
          monitor_.begin(pred, pe.entry);
        else
          monitor_.enqueue(pred);
      }
      break;
    case PredState::Critical:
      if (monitor_.traced_pred() == pred) {
        bool rebuild = pe.rebuild_pending;
        if (rebuild || pe.call_counter >= opts_.hot_threshold)
          finalize_and_install(pred, rebuild ? FinalizeReason::Rebuild : FinalizeReason::HotLoop);
      } else if (!monitor_.has_trace()) {
        ComponentScope cs(clock_, Component::MonitorTraceBuilder);
        monitor_.begin(pred, pe.entry);
      } else if (pe.call_counter >= opts_.hot_threshold && !monitor_.recording()) {
        // the slot holder stopped ticking (e.g. a setup predicate that ran
        // out of calls) while this one went hot: commit what it recorded,
        // or drop an empty recording, and let the queue reassign the slot
        int32_t tp = monitor_.traced_pred();
        if (monitor_.step_count() > 0) {
          bool rb = tp >= 0 && prog_.preds[static_cast<size_t>(tp)].rebuild_pending;
          finalize_and_install(tp, rb ? FinalizeReason::Rebuild : FinalizeReason::HotLoop);
        } else {
          ComponentScope cs(clock_, Component::MonitorTraceBuilder);
          monitor_.abandon();
        }
        if (!monitor_.has_trace()) {
          ComponentScope cs(clock_, Component::MonitorTraceBuilder);
          monitor_.begin(pred, pe.entry);
        }
      }
      break;
    case PredState::Hot:
      break;
  }
}

void Machine::finalize_and_install(int32_t pred, FinalizeReason why) {
  PredicateEntry& pe = prog_.preds[static_cast<size_t>(pred)];
  if (monitor_.step_count() == 0) return;  // head never reached yet; keep recording
  std::unique_ptr<TraceRecord> tr;
  {
    ComponentScope cs(clock_, Component::MonitorTraceBuilder);
    tr = monitor_.take();
  }
  std::shared_ptr<SEmulator> se;
  {
    ComponentScope cs(clock_, Component::TraceCompiler);
    se = compile_trace(*this, std::move(tr), pe.generation + 1);
  }
  pe.generation++;
  pe.semulator = se;
  pe.state = PredState::Hot;
  pe.rebuild_pending = false;
  stats_.installs++;
  if (why == FinalizeReason::Rebuild) stats_.rebuilds++;
  if (opts_.validate) {
    std::string err = validate_semulator(*se);
    if (!err.empty()) throw std::logic_error("invalid s.emulator for " + pe.spec_name(prog_.syms) + ": " + err);
  }
  if (opts_.trace_dump && opts_.log)
    *opts_.log << semulator_to_string(*se, prog_.syms);

  // hand the recording slot to the next queued critical predicate
  while (!monitor_.queue_empty()) {
    int32_t nxt = monitor_.dequeue();
    if (nxt >= 0 && prog_.preds[static_cast<size_t>(nxt)].state == PredState::Critical) {
      ComponentScope cs(clock_, Component::MonitorTraceBuilder);
      monitor_.begin(nxt, prog_.preds[static_cast<size_t>(nxt)].entry);
      break;
    }
  }
}

bool Machine::handle_side_exit(PredicateEntry& pe) {
  p_ = exit_status_.baddr;
  if (!opts_.mutability || pe.rebuild_count >= kMaxRebuilds || !pe.semulator->trace) {
    pe.semulator.reset();
    pe.pinned_default = true;
    pe.state = PredState::Cold;
    return false;
  }
  if (monitor_.has_trace()) return false;  // recording slot busy; retry on a later exit
  pe.rebuild_count++;
  pe.state = PredState::Critical;
  pe.rebuild_pending = true;
  ComponentScope cs(clock_, Component::MonitorTraceBuilder);
  monitor_.reopen(std::move(pe.semulator->trace), exit_step_, exit_from_switch_,
                  exit_status_.baddr, scratch_.cell.tag);
  return false;
}

void Machine::record_solution(int32_t meta, QueryOutcome& out) {
  const QueryMeta& qm = prog_.queries[static_cast<size_t>(meta)];
  const EnvFrame& f = envs_[static_cast<size_t>(e_)];
  std::unordered_map<Addr, std::string> names;
  std::string s;
  bool first = true;
  for (const auto& [name, yi] : qm.vars) {
    if (!name.empty() && name[0] == '_') continue;
    if (!first) s += ", ";
    first = false;
    s += name + " = " + format_term(heap_, prog_.syms, f.y[static_cast<size_t>(yi)], &names);
  }
  if (s.empty()) s = "true";
  out.solutions.push_back(std::move(s));
}

namespace {

enum class SpecRun { Resume, Exhausted, Resource };

SpecRun run_spec(Machine& m, int32_t pred) {
  Program& prog = m.program();
  for (;;) {
    PredicateEntry& pe = prog.preds[static_cast<size_t>(pred)];
    if (pe.state != PredState::Hot || !pe.semulator) return SpecRun::Resume;
    m.stats().semulator_entries++;
    SpecOutcome so;
    {
      ComponentScope cs(m.clock(), Component::SEmulator);
      so = run_semulator(m, *pe.semulator, m.p_);
    }
    m.pending_pred_ = -1;
    m.pending_tick_ = -1;
    if (so == SpecOutcome::Completed) return SpecRun::Resume;
    if (so == SpecOutcome::Failed) return SpecRun::Exhausted;
    if (m.exit_status_.k == ExitReason::GcException) {
      m.stats().side_exits_gc++;
      if (!m.reclaim(m.gc_need_)) return SpecRun::Resource;
      m.stats().reclamations_in_semulator++;
      m.stats().semulator_gc_resumes++;
      continue;  // resume at BADDR within the same generation
    }
    m.stats().side_exits_elementary++;
    // an entry-check failure means this call's arguments don't fit the
    // compiled loop invariants; run it through the default emulator and
    // keep the s.emulator for better-typed calls
    if (!m.exit_entry_guard_) m.handle_side_exit(pe);
    return SpecRun::Resume;
  }
}

}  // namespace

QueryOutcome Machine::run_query(CodeAddr entry) {
  QueryOutcome out;
  bool started_clock = !clock_.running();
  if (started_clock) clock_.start(Component::DefaultEmulator);
  p_ = entry;
  cp_reg_ = 0;  // address 0 holds the halt continuation
  halted_ = false;
  solution_found_ = false;

  for (;;) {
    const Instr& instr = prog_.code.at(p_);
    stats_.dispatches++;
    bool markup = monitor_.has_trace() && !monitor_.trace().finalized;
    if (markup && monitor_.completion_ready()) {
      finalize_and_install(monitor_.traced_pred(), FinalizeReason::Rebuild);
      markup = monitor_.has_trace() && !monitor_.trace().finalized;
    }
    BlockResult::K k = step_default(instr, markup);
    if (halted_) break;
    if (k == BlockResult::K::GcNeeded) {
      if (!reclaim(gc_need_)) {
        out.resource_error = true;
        break;
      }
      continue;  // re-execute the allocating instruction
    }
    if (k == BlockResult::K::Backtrack) {
      if (solution_found_) {
        record_solution(pending_meta_, out);
        solution_found_ = false;
        if (opts_.max_solutions > 0 &&
            static_cast<int64_t>(out.solutions.size()) >= opts_.max_solutions)
          break;
      }
      if (!backtrack()) break;
      continue;
    }
    p_ = p_next_;
    if (pending_tick_ >= 0) {
      int32_t t = pending_tick_;
      pending_tick_ = -1;
      tick(t);
    }
    if (pending_pred_ >= 0) {
      int32_t pred = pending_pred_;
      pending_pred_ = -1;
      tick(pred);
      PredicateEntry& pe = prog_.preds[static_cast<size_t>(pred)];
      // while a recording is active, hot callees run through the default
      // emulator so their code is inlined into the trace being built
      if (opts_.jit && pe.state == PredState::Hot && pe.semulator && !monitor_.recording()) {
        SpecRun r = run_spec(*this, pred);
        if (r == SpecRun::Exhausted) break;
        if (r == SpecRun::Resource) {
          out.resource_error = true;
          break;
        }
      }
    }
  }

  // a recording left open dies with the query; a rebuild recording is a
  // superset of the installed trace and is committed instead
  if (monitor_.has_trace() && !monitor_.trace().finalized) {
    int32_t tp = monitor_.traced_pred();
    if (tp >= 0 && prog_.preds[static_cast<size_t>(tp)].rebuild_pending)
      finalize_and_install(tp, FinalizeReason::Rebuild);
    else
      monitor_.abandon();
  }

  if (started_clock) clock_.stop();
  if (resource_error_) out.resource_error = true;
  return out;
}

QueryOutcome run_program_text(const std::string& program_text, const std::string& goal_text,
                              const MachineOptions& opts, RunStats* stats_out,
                              TimingBreakdown* times_out) {
  ast::ParsedProgram parsed = ast::parse_program(program_text);
  Program prog = link_program(parsed);
  std::vector<ast::TermPtr> goals = ast::parse_goal(goal_text);
  CodeAddr entry = compile_query(prog, goals);
  Machine m(prog, opts);
  QueryOutcome out = m.run_query(entry);
  if (stats_out) *stats_out = m.stats();
  if (times_out) *times_out = m.times();
  return out;
}

}  // namespace tracewam
