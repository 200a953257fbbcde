#include "tracewam/semulator.hpp"

#include <cassert>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "tracewam/machine.hpp"

namespace tracewam {

const char* micro_kind_name(MicroKind k) {
  switch (k) {
    case MicroKind::Action: return "ACTION";
    case MicroKind::Guard: return "GUARD";
    case MicroKind::GcGuard: return "GC_GUARD";
    case MicroKind::Switch: return "SWITCH";
    case MicroKind::Jump: return "JUMP";
    case MicroKind::LoopBack: return "LOOP_BACK";
    case MicroKind::DynJump: return "DYN_JUMP";
    case MicroKind::Exit: return "EXIT";
  }
  return "?";
}

namespace {

int64_t gc_need_of(const Instr& i) {
  switch (i.op) {
    case Opcode::GetStructure:
    case Opcode::PutStructure:
      return static_cast<int64_t>(i.c) + 1;
    case Opcode::GetList:
    case Opcode::PutList:
      return 2;
    case Opcode::PutVariable:
      return 1;
    default:
      return 0;
  }
}

CodeAddr static_successor(const Instr& i, CodeAddr addr, const Program& prog) {
  switch (i.op) {
    case Opcode::Call:
    case Opcode::Execute:
      return prog.preds[static_cast<size_t>(i.a)].entry;
    case Opcode::Try:
    case Opcode::Retry:
    case Opcode::Trust:
      return i.a;
    default:
      return addr + 1;
  }
}

Slot subject_slot(const Instr& i, GuardSubject s, bool& has_slot) {
  has_slot = true;
  switch (s) {
    case GuardSubject::SlotB: return i.b;
    case GuardSubject::OperandB:
      if (i.flags & kImmB) { has_slot = false; return 0; }
      return i.b;
    case GuardSubject::OperandC:
      if (i.flags & kImmC) { has_slot = false; return 0; }
      return i.c;
    default:
      has_slot = false;
      return 0;
  }
}

struct TraceCompiler {
  Machine& m;
  const Program& prog;
  TraceRecord& tr;
  SEmulator& se;

  // inter-step transfers resolved once all steps are placed
  struct Pending {
    int micro;
    CodeAddr succ;
  };
  std::vector<Pending> pending;

  // Dominance-elision dataflow. Slots map to value representatives
  // (copies share a representative); proven final-tag sets attach to the
  // representative, so a fact about a register survives pure moves.
  std::map<Slot, int> origin;
  std::map<int, TagSet> know;
  // reps holding a cell allocated inside the trace that never escaped
  // into a unification or the heap: provably distinct from every other
  // cell, so a bind aimed elsewhere cannot touch it
  std::set<int> fresh_reps;
  int next_rep = 0;
  std::map<CodeAddr, int> pred_count;         // how many steps feed each step
  std::map<CodeAddr, CodeAddr> unique_feeder; // succ -> its only feeding step

  // Backtracking to a retry/trust restores exactly the machine state the
  // matching try saved (registers from the choice point, bindings undone
  // to the trail mark), so the dataflow valid at the try is valid again
  // at every later chain slot — snapshot it there, restore it here.
  struct Snap {
    std::map<Slot, int> origin;
    std::map<int, TagSet> know;
    long clock = -1;  // facts proven while the clock is unchanged still apply
  };
  std::map<CodeAddr, Snap> chain_snap;
  long bind_clock = 0;  // bumped on any binding effect or flow break

  // Exit dataflow of every emitted step. When the linear order jumps to a
  // step whose only recorded in-edge leaves an already-emitted feeder
  // (the trace recorded the head of a clause first and its tail on a
  // later iteration), the feeder's exit flow is the state every runtime
  // entry arrives with, so it is restored instead of clearing.
  struct Flow {
    std::map<Slot, int> origin;
    std::map<int, TagSet> know;
  };
  std::map<CodeAddr, Flow> exit_flow;

  // Join-point invariants. A join is a step fed by several recorded
  // edges (typically a loop header). The compiler runs twice: the first
  // pass captures the dataflow arriving over each in-edge, a fixpoint
  // turns those into per-slot tag invariants, and the second pass seeds
  // the join with them. External entries to the trace head verify the
  // invariants through synthetic entry guards; all other paths into a
  // join are recorded edges (unrecorded transfers side-exit).
  static constexpr Slot kJoinSlots = 32;
  struct Contribution {
    std::map<Slot, TagSet> facts;  // proven tags per register
    std::map<Slot, int> reps;      // value representative per register
  };
  bool final_pass = true;
  std::set<CodeAddr> joins;
  std::map<CodeAddr, std::vector<Contribution>> join_in;
  std::map<CodeAddr, std::map<Slot, int>> join_reps;   // entry reps (pass 1)
  std::map<CodeAddr, std::map<Slot, TagSet>> join_facts;  // solved invariants
  int head_guard_entry = -1;

  TraceCompiler(Machine& mm, TraceRecord& t, SEmulator& s)
      : m(mm), prog(mm.program()), tr(t), se(s) {}

  int rep(Slot s) {
    auto it = origin.find(s);
    if (it != origin.end()) return it->second;
    int r = next_rep++;
    origin[s] = r;
    // the slot is untouched since any snapshot of the current clock, so
    // those snapshots may also refer to its value through this rep
    for (auto& [a, sn] : chain_snap) {
      (void)a;
      if (sn.clock == bind_clock && !sn.origin.count(s)) sn.origin[s] = r;
    }
    return r;
  }
  void kill(Slot s) { origin[s] = next_rep++; }
  void set_known(Slot s, TagSet t) {
    int r = next_rep++;
    origin[s] = r;
    know[r] = t;
  }
  // records a runtime-verified fact; snapshots taken since the last
  // binding effect share the machine state the fact was proven on
  void note_fact(int r, TagSet t) {
    know[r] = t;
    for (auto& [a, sn] : chain_snap) {
      (void)a;
      if (sn.clock == bind_clock) sn.know[r] = t;
    }
  }
  void clear_flow() {
    origin.clear();
    know.clear();
    ++bind_clock;
  }

  Contribution snapshot_contribution() const {
    Contribution c;
    for (const auto& [s, r] : origin) {
      if (s < 0 || s >= kJoinSlots) continue;
      c.reps[s] = r;
      auto kit = know.find(r);
      if (kit != know.end() && kit->second && kit->second != kAnyTag) c.facts[s] = kit->second;
    }
    return c;
  }

  // Records the dataflow this step sends over its recorded out-edges
  // into join points (analysis pass only).
  void capture_out(const StepRecord& st, const Instr& instr) {
    if (instr.op == Opcode::SwitchOnTerm) {
      for (const auto& [t, tags] : st.switch_targets) {
        if (!joins.count(t) || tags == 0) continue;
        Contribution c = snapshot_contribution();
        auto fit = c.facts.find(instr.b);
        TagSet cur = fit != c.facts.end() ? fit->second : kAnyTag;
        TagSet nar = cur & tags;
        c.facts[instr.b] = nar ? nar : tags;
        join_in[t].push_back(std::move(c));
      }
      return;
    }
    if (instr.op == Opcode::Proceed) return;
    CodeAddr succ = static_successor(instr, st.addr, prog);
    if (joins.count(succ) && st.successors.count(succ))
      join_in[succ].push_back(snapshot_contribution());
  }

  // Classifies joins: a step is a mergeable join when every recorded
  // in-edge is a plain fall-through or a switch bucket edge. Retry/Trust
  // are chain-restore points and stay on the snapshot path.
  void find_joins() {
    for (const auto& [addr, st] : tr.steps) {
      (void)st;
      int preds_needed = addr == tr.head ? 1 : 2;
      if (pred_count[addr] < preds_needed) continue;
      const Instr& i = prog.code.at(addr);
      if (i.op == Opcode::Retry || i.op == Opcode::Trust) continue;
      joins.insert(addr);
    }
    for (const auto& [p, st] : tr.steps) {
      const Instr& i = prog.code.at(p);
      for (CodeAddr succ : st.successors) {
        if (!joins.count(succ)) continue;
        bool ok = i.op == Opcode::SwitchOnTerm
                      ? st.switch_targets.count(succ) > 0
                      : i.op != Opcode::Proceed && succ == static_successor(i, p, prog);
        if (!ok) joins.erase(succ);  // an in-edge we cannot reason about
      }
    }
  }

  // Ascending fixpoint over the contributions: a slot's invariant is the
  // union of what each in-edge delivers, where an edge handing through an
  // untouched join-entry register refers back to the invariant itself.
  void solve_joins() {
    for (CodeAddr j : joins) {
      auto cit = join_in.find(j);
      if (cit == join_in.end() || cit->second.empty()) continue;
      std::map<int, Slot> rev;
      for (const auto& [s, r] : join_reps[j]) rev[r] = s;
      std::map<Slot, TagSet> F;
      bool changed = true;
      for (int iter = 0; changed && iter < 64; ++iter) {
        changed = false;
        for (Slot s = 0; s < kJoinSlots; ++s) {
          TagSet u = 0;
          for (const Contribution& c : cit->second) {
            TagSet t = kAnyTag;
            auto fit = c.facts.find(s);
            if (fit != c.facts.end()) t &= fit->second;
            auto rit = c.reps.find(s);
            if (rit != c.reps.end()) {
              auto vit = rev.find(rit->second);
              if (vit != rev.end()) {
                auto Fit = F.find(vit->second);
                t &= Fit != F.end() ? Fit->second : 0;
              }
            }
            u |= t;
            if (u == kAnyTag) break;
          }
          auto Fit = F.find(s);
          TagSet prev = Fit != F.end() ? Fit->second : 0;
          if (u != prev) {
            F[s] = u;
            changed = true;
          }
        }
      }
      std::map<Slot, TagSet> out;
      // only argument registers hold defined values on an external entry,
      // so the head invariants (checked by the entry guards) stop there
      Slot limit = j == tr.head ? prog.preds[static_cast<size_t>(tr.pred)].arity : kJoinSlots;
      for (const auto& [s, t] : F)
        if (t != 0 && t != kAnyTag && s < limit) out[s] = t;
      if (!out.empty()) join_facts[j] = std::move(out);
    }
  }

  void run() {
    for (const auto& [addr, st] : tr.steps)
      for (CodeAddr succ : st.successors) {
        if (++pred_count[succ] == 1)
          unique_feeder[succ] = addr;
        else
          unique_feeder.erase(succ);
      }
    if (!final_pass) find_joins();

    CodeAddr prev_addr = kNoCode;
    for (size_t oi = 0; oi < tr.order.size(); ++oi) {
      CodeAddr addr = tr.order[oi];
      const StepRecord& st = tr.steps.at(addr);
      const Instr& in0 = prog.code.at(addr);

      if (in0.op == Opcode::Retry || in0.op == Opcode::Trust) {
        auto sit = chain_snap.find(addr);
        if (sit != chain_snap.end()) {
          // only argument registers are restored from the choice point;
          // everything else may hold values the try never saw
          int32_t arity = prog.preds[static_cast<size_t>(in0.b)].arity;
          ++bind_clock;
          know = sit->second.know;
          origin.clear();
          for (const auto& [s, r] : sit->second.origin)
            if (s >= 0 && s < arity) origin[s] = r;
          if (in0.op == Opcode::Retry) {
            Snap carried = sit->second;
            carried.know = know;  // facts proven since the try still apply
            carried.clock = bind_clock;
            chain_snap[addr + 1] = std::move(carried);
          }
        } else {
          clear_flow();
        }
      } else {
        // keep flow facts only along a provably unique fall-through
        bool unique_chain = prev_addr != kNoCode && pred_count[addr] == 1 &&
                            tr.steps.at(prev_addr).successors.count(addr) > 0 &&
                            addr != tr.head;
        bool restored = false;
        if (!unique_chain && addr != tr.head) {
          auto uf = unique_feeder.find(addr);
          if (uf != unique_feeder.end()) {
            auto ef = exit_flow.find(uf->second);
            const Instr& fi = prog.code.at(uf->second);
            bool plain = fi.op == Opcode::SwitchOnTerm
                             ? tr.steps.at(uf->second).switch_targets.count(addr) > 0
                             : fi.op != Opcode::Proceed &&
                                   static_successor(fi, uf->second, prog) == addr;
            if (plain && ef != exit_flow.end()) {
              origin = ef->second.origin;
              know = ef->second.know;
              ++bind_clock;  // stale snapshots must not pick up new facts
              restored = true;
            }
          }
        }
        if (!unique_chain && !restored) {
          clear_flow();
          if (!final_pass && joins.count(addr)) {
            // name the join's entry registers so later passthrough of an
            // untouched register is recognizable in the contributions
            auto& jr = join_reps[addr];
            for (Slot s = 0; s < kJoinSlots; ++s) {
              int r = next_rep++;
              origin[s] = r;
              jr[s] = r;
            }
          }
          if (final_pass) {
            auto jf = join_facts.find(addr);
            if (jf != join_facts.end())
              for (const auto& [s, t] : jf->second) set_known(s, t);
          }
        }
        // a bucket target fed only by a switch inherits the dispatch tags
        // recorded for that bucket (the switch micro enforces them)
        auto fit = unique_feeder.find(addr);
        if (fit != unique_feeder.end() && addr != tr.head) {
          const Instr& fi = prog.code.at(fit->second);
          if (fi.op == Opcode::SwitchOnTerm) {
            const StepRecord& fs = tr.steps.at(fit->second);
            auto tit = fs.switch_targets.find(addr);
            if (tit != fs.switch_targets.end() && tit->second != 0) {
              int r = rep(fi.b);
              auto kit = know.find(r);
              TagSet cur = kit != know.end() && kit->second ? kit->second : kAnyTag;
              TagSet narrowed = cur & tit->second;
              note_fact(r, narrowed ? narrowed : tit->second);
            }
          }
        }
      }

      if (in0.op == Opcode::Try) chain_snap[addr + 1] = Snap{origin, know, ++bind_clock};

      if (final_pass && addr == tr.head) {
        auto jf = join_facts.find(addr);
        if (jf != join_facts.end()) {
          // external entries must establish the loop invariants the body
          // was compiled against; recorded in-edges satisfy them already
          // and jump past these checks
          head_guard_entry = static_cast<int>(se.prog.size());
          bool first_guard = true;
          for (const auto& [s, t] : jf->second) {
            MicroOp g;
            g.kind = MicroKind::Guard;
            g.addr = addr;
            g.block = -1;
            g.step_start = first_guard;
            first_guard = false;
            g.subject = GuardSubject::DirectSlot;
            g.subject_slot = s;
            g.allowed = t;
            se.prog.push_back(std::move(g));
            se.guard_count++;
          }
        }
      }

      emit_step(st);
      exit_flow[addr] = Flow{origin, know};
      prev_addr = addr;
    }
    resolve_pending();
    // dynamic entries (predicate calls, GC resumes) run the entry checks;
    // the in-trace transfers resolved above already skip them
    if (head_guard_entry >= 0) se.entry_map[tr.head] = head_guard_entry;
  }

  void emit_step(const StepRecord& st) {
    const Instr& instr = prog.code.at(st.addr);
    const InstructionCFG& cfg = instruction_metadata(instr.op);
    int nblocks = static_cast<int>(cfg.blocks.size());
    int start = static_cast<int>(se.prog.size());
    se.entry_map[st.addr] = start;

    auto executed = [&](int bi) {
      return bi >= 0 && bi < nblocks && (st.executed_blocks >> bi) & 1u;
    };

    if (instr.op == Opcode::SwitchOnTerm) {
      MicroOp sw;
      sw.kind = MicroKind::Switch;
      sw.addr = st.addr;
      sw.block = 2;
      sw.step_start = true;
      // pass B fills switch_targets from recorded buckets
      se.prog.push_back(std::move(sw));
      pending.push_back({start, kNoCode});  // sentinel: switch bucket fill
      if (!final_pass) capture_out(st, instr);
      return;
    }

    // classify type tests: pruned (single continuation) or retained
    struct TestInfo {
      bool pruned = false;
      int cont = kEdgeNext;  // single continuation when pruned
      TagSet obs = 0;
    };
    std::map<int, TestInfo> tests;
    std::map<int, int> deref_of_test;  // test block -> its deref block
    for (int bi = 0; bi < nblocks; ++bi)
      if (cfg.blocks[static_cast<size_t>(bi)].kind == BlockKind::DerefLoop)
        deref_of_test[cfg.blocks[static_cast<size_t>(bi)].paired_test] = bi;

    for (int bi = 0; bi < nblocks; ++bi) {
      const BasicBlock& blk = cfg.blocks[static_cast<size_t>(bi)];
      if (blk.kind != BlockKind::TypeTest || !executed(bi)) continue;
      TestInfo info;
      info.obs = (bi < kMaxBlocksPerOp) ? st.observed[bi] : kAnyTag;
      std::set<int> conts;
      for (const auto& e : blk.edges) {
        bool into_deref = e.target >= 0 &&
                          cfg.blocks[static_cast<size_t>(e.target)].kind == BlockKind::DerefLoop;
        if (into_deref) continue;
        if (e.tags & info.obs & ~kRefBit) conts.insert(e.target);
      }
      if (info.obs & kRefBit) {
        auto dit = deref_of_test.find(bi);
        if (dit != deref_of_test.end()) {
          const BasicBlock& d = cfg.blocks[static_cast<size_t>(dit->second)];
          for (const auto& e : d.edges)
            if (e.tags & kRefBit) conts.insert(e.target);
        }
      }
      if (conts.size() <= 1) {
        info.pruned = true;
        info.cont = conts.empty() ? kEdgeBacktrack : *conts.begin();
      }
      tests[bi] = info;
    }

    // decide the emission list in block-index order
    enum class EK { Guard, FailJump, GcGuard, Action };
    struct Emit {
      EK kind;
      int bi;
    };
    std::vector<Emit> list;
    std::vector<int> micro_of(static_cast<size_t>(nblocks), -1);
    auto mode_skipped = [&](int bi) {
      const BasicBlock& blk = cfg.blocks[static_cast<size_t>(bi)];
      if (!blk.trace_determined || !executed(bi)) return false;
      int taken = 0;
      for (const auto& e : blk.edges)
        if (e.target >= 0 && executed(e.target)) taken++;
      return taken <= 1;
    };

    for (int bi = 0; bi < nblocks; ++bi) {
      const BasicBlock& blk = cfg.blocks[static_cast<size_t>(bi)];
      if (!executed(bi)) continue;
      switch (blk.kind) {
        case BlockKind::GcCheck:
          list.push_back({EK::GcGuard, bi});
          break;
        case BlockKind::TypeTest:
          if (tests[bi].pruned) {
            list.push_back({EK::Guard, bi});
            if (tests[bi].cont == kEdgeBacktrack) list.push_back({EK::FailJump, bi});
          } else {
            list.push_back({EK::Action, bi});
          }
          break;
        case BlockKind::DerefLoop: {
          int t = blk.paired_test;
          if (t >= 0 && tests.count(t) && !tests[t].pruned) list.push_back({EK::Action, bi});
          break;
        }
        case BlockKind::Plain:
          if (mode_skipped(bi)) break;
          list.push_back({EK::Action, bi});
          break;
        case BlockKind::Choice:
        case BlockKind::Multiway:
          list.push_back({EK::Action, bi});
          break;
      }
    }

    for (size_t pos = 0; pos < list.size(); ++pos)
      if (list[pos].kind != EK::FailJump) micro_of[static_cast<size_t>(list[pos].bi)] = start + static_cast<int>(pos);
    int step_end = start + static_cast<int>(list.size());

    // resolve a block-level edge target to a micro target
    auto resolve = [&](int t) -> int {
      for (;;) {
        if (t == kEdgeNext) return step_end;
        if (t == kEdgeBacktrack) return kMicroBacktrack;
        if (micro_of[static_cast<size_t>(t)] >= 0) return micro_of[static_cast<size_t>(t)];
        const BasicBlock& blk = cfg.blocks[static_cast<size_t>(t)];
        if (mode_skipped(t)) {
          int nxt = -1;
          for (const auto& e : blk.edges)
            if (e.target >= 0 && executed(e.target)) nxt = e.target;
          if (nxt < 0) return kMicroSideExit;
          t = nxt;
          continue;
        }
        if (blk.kind == BlockKind::DerefLoop) {
          // pruned along with its test: jump to the test's guard
          int pt = blk.paired_test;
          if (pt >= 0 && micro_of[static_cast<size_t>(pt)] >= 0)
            return micro_of[static_cast<size_t>(pt)];
        }
        return kMicroSideExit;
      }
    };

    // materialize micros
    for (size_t pos = 0; pos < list.size(); ++pos) {
      const Emit& em = list[pos];
      const BasicBlock& blk = cfg.blocks[static_cast<size_t>(em.bi)];
      MicroOp u;
      u.addr = st.addr;
      u.block = em.bi;
      u.step_start = pos == 0;
      switch (em.kind) {
        case EK::GcGuard:
          u.kind = MicroKind::GcGuard;
          u.need = gc_need_of(instr);
          break;
        case EK::Guard: {
          const TestInfo& info = tests[em.bi];
          u.kind = MicroKind::Guard;
          u.subject = blk.subject;
          u.store = blk.store;
          u.allowed = info.obs;
          bool has_slot = false;
          Slot s = subject_slot(instr, blk.subject, has_slot);
          if (has_slot) {
            int r = rep(s);
            auto kit = know.find(r);
            if (kit != know.end() && kit->second != 0 &&
                (kit->second & ~info.obs) == 0) {
              u.check = false;  // dominated: deref + store only
            } else {
              TagSet cur = kit != know.end() ? kit->second : 0;
              TagSet t = cur & info.obs;  // a passing guard narrows both ways
              note_fact(r, t ? t : info.obs);
            }
          } else if (blk.subject == GuardSubject::OperandB || blk.subject == GuardSubject::OperandC) {
            u.check = false;  // immediate operand: plain load
          }
          if (u.check) se.guard_count++;
          break;
        }
        case EK::FailJump:
          u.kind = MicroKind::Jump;
          u.target = kMicroBacktrack;
          break;
        case EK::Action: {
          u.kind = MicroKind::Action;
          u.target = step_end;
          for (const auto& e : blk.edges) u.branch.push_back(resolve(e.target));
          if (blk.kind == BlockKind::TypeTest) {
            // only recorded tags may continue; unobserved edges side-exit
            TagSet obs = tests[em.bi].obs;
            for (size_t ei = 0; ei < blk.edges.size(); ++ei) {
              const auto& e = blk.edges[ei];
              bool into_deref = e.target >= 0 &&
                                cfg.blocks[static_cast<size_t>(e.target)].kind == BlockKind::DerefLoop;
              if (!into_deref && !(e.tags & obs)) u.branch[ei] = kMicroSideExit;
            }
          }
          break;
        }
      }
      se.prog.push_back(std::move(u));
    }

    // Binding invalidation. A bind turns an unbound cell into a bound
    // one, killing ref facts about every cell it could reach. Only
    // retained blocks can run, so a step whose executed blocks never
    // bind leaves ref facts intact. When the bound cell itself is known
    // (the subject of a structural get, or the one unbound side of a
    // unification), only facts about that cell die; a unification of two
    // unbound cells binds one to the other and leaves both unbound.
    bool step_binds = false;
    for (int bi = 0; bi < nblocks; ++bi)
      if (executed(bi) && cfg.blocks[static_cast<size_t>(bi)].may_bind) step_binds = true;
    if (step_binds) {
      auto kof = [&](Slot s) {
        int r = rep(s);
        auto k = know.find(r);
        return std::pair<int, TagSet>(r, k != know.end() ? k->second : 0);
      };
      std::set<int> bound;   // reps whose cells this step binds directly
      bool blanket = true;   // the bind may reach cells we cannot name
      switch (instr.op) {
        case Opcode::GetConstant:
        case Opcode::GetStructure:
        case Opcode::GetList: {
          int r = rep(instr.b);
          bound.insert(r);
          blanket = fresh_reps.count(r) == 0;
          break;
        }
        case Opcode::GetValue:
        case Opcode::UnifySlots: {
          auto [ra, ka] = kof(instr.a);
          auto [rb, kb] = kof(instr.b);
          if (ka == kRefBit && kb == kRefBit) {
            blanket = false;  // ref-ref union: everything stays unbound
          } else if (ka == kRefBit) {
            bound.insert(ra);
            blanket = fresh_reps.count(ra) == 0;
          } else if (kb == kRefBit) {
            bound.insert(rb);
            blanket = fresh_reps.count(rb) == 0;
          }
          break;
        }
        case Opcode::UnifyValue: {
          auto [ra, ka] = kof(instr.a);
          if (ka == kRefBit) {
            bound.insert(ra);
            blanket = fresh_reps.count(ra) == 0;
          }
          break;
        }
        default:
          break;  // unify_constant binds through the structure cursor
      }
      ++bind_clock;
      for (auto it = know.begin(); it != know.end();) {
        bool dies = false;
        if (it->second & kRefBit)
          dies = blanket ? !(fresh_reps.count(it->first) && !bound.count(it->first))
                         : bound.count(it->first) > 0;
        if (dies)
          it = know.erase(it);
        else
          ++it;
      }
    }
    // a value handed to a unification or written into the heap may become
    // reachable from other terms: no longer provably distinct
    switch (instr.op) {
      case Opcode::GetValue:
      case Opcode::UnifySlots:
        fresh_reps.erase(rep(instr.a));
        fresh_reps.erase(rep(instr.b));
        break;
      case Opcode::UnifyValue:  // read mode unifies it, write mode stores it
        fresh_reps.erase(rep(instr.a));
        break;
      case Opcode::GetConstant:
      case Opcode::GetStructure:
      case Opcode::GetList:
        fresh_reps.erase(rep(instr.b));
        break;
      default:
        break;
    }

    // apply this instruction's effects to the dataflow
    switch (instr.op) {
      case Opcode::GetVariable:
        origin[instr.a] = rep(instr.b);  // pure copy: share the representative
        break;
      case Opcode::UnifyVariable:
        // pure write mode loads a freshly allocated unbound cell
        if ((st.executed_blocks >> 2) & 1u && !((st.executed_blocks >> 1) & 1u)) {
          set_known(instr.a, kRefBit);
          fresh_reps.insert(origin[instr.a]);
        } else {
          kill(instr.a);
        }
        break;
      case Opcode::PutValue:
        origin[instr.b] = rep(instr.a);
        break;
      case Opcode::PutVariable: {
        int r = next_rep++;
        origin[instr.a] = r;
        origin[instr.b] = r;
        know[r] = kRefBit;  // freshly allocated unbound variable
        fresh_reps.insert(r);
        break;
      }
      case Opcode::PutConstant:
        set_known(instr.b, tag_bit(instr.k.tag));
        break;
      case Opcode::PutStructure:
        set_known(instr.b, kStructBit);
        break;
      case Opcode::PutList:
        set_known(instr.b, kListBit);
        break;
      case Opcode::ArithAdd:
      case Opcode::ArithSub:
      case Opcode::ArithMul:
      case Opcode::ArithDiv:
      case Opcode::ArithMod:
      case Opcode::EvalIs:
        set_known(instr.a, kIntBit);  // arithmetic only succeeds with an integer
        break;
      default:
        for (Slot w : slots_written(instr)) kill(w);
        break;
    }
    if (!final_pass) capture_out(st, instr);  // register state at the transfer
    // returns clear too: return sites must tolerate entry from any caller,
    // so no fact may flow across a Proceed into its continuation
    if (instr.op == Opcode::Call || instr.op == Opcode::Execute ||
        instr.op == Opcode::Proceed)
      clear_flow();

    // the inter-step transfer
    MicroOp xfer;
    xfer.addr = st.addr;
    xfer.step_start = list.empty();
    if (instr.op == Opcode::Proceed) {
      xfer.kind = MicroKind::DynJump;
      se.prog.push_back(std::move(xfer));
    } else {
      xfer.kind = MicroKind::Jump;  // pass B decides Jump/LoopBack/Exit
      se.prog.push_back(std::move(xfer));
      pending.push_back({step_end, static_successor(instr, st.addr, prog)});
    }
  }

  void resolve_pending() {
    for (const Pending& p : pending) {
      MicroOp& u = se.prog[static_cast<size_t>(p.micro)];
      if (u.kind == MicroKind::Switch) {
        const StepRecord& st = tr.steps.at(u.addr);
        for (const auto& [t, tags] : st.switch_targets) {
          auto it = se.entry_map.find(t);
          if (it != se.entry_map.end()) {
            u.switch_targets[t] = it->second;
            u.switch_allowed[t] = tags;
          }
        }
        continue;
      }
      auto it = se.entry_map.find(p.succ);
      // a completion edge never observed during recording must side-exit:
      // facts seeded at the target only cover the recorded in-edges
      bool recorded = tr.steps.at(u.addr).successors.count(p.succ) > 0;
      if (it == se.entry_map.end() || !recorded) {
        u.kind = MicroKind::Exit;
        u.exit_addr = p.succ;
      } else {
        u.target = it->second;
        if (u.target <= p.micro) {
          u.kind = MicroKind::LoopBack;
          se.loop_back_count++;
        }
      }
    }
  }
};

}  // namespace

std::shared_ptr<SEmulator> compile_trace(Machine& m, std::unique_ptr<TraceRecord> trace,
                                         int32_t generation) {
  auto se = std::make_shared<SEmulator>();
  se->pred = trace->pred;
  se->generation = generation;
  trace->generation = generation;
  // pass 1 analyzes the dataflow into join points; its program is discarded
  SEmulator analysis;
  TraceCompiler pass1(m, *trace, analysis);
  pass1.final_pass = false;
  pass1.run();
  pass1.solve_joins();
  TraceCompiler pass2(m, *trace, *se);
  pass2.join_facts = std::move(pass1.join_facts);
  pass2.run();
  se->trace = std::move(trace);
  return se;
}

SpecOutcome run_semulator(Machine& m, SEmulator& se, CodeAddr resume_at) {
  auto eit = se.entry_map.find(resume_at);
  if (eit == se.entry_map.end()) return SpecOutcome::Completed;
  int pc = eit->second;
  const CodeArea& code = m.program().code;

  // scope the activation epoch: choice points pushed by this run are
  // trusted backtrack targets, older ones hand off to the default emulator
  struct EpochScope {
    Machine& m;
    explicit EpochScope(Machine& mm) : m(mm) { m.cur_spec_epoch_ = ++m.spec_epoch_counter_; }
    ~EpochScope() { m.cur_spec_epoch_ = 0; }
  } epoch_scope(m);
  uint64_t epoch = m.cur_spec_epoch_;

  auto elem_exit = [&](CodeAddr step, CodeAddr baddr, bool from_switch) {
    m.p_ = baddr;
    m.exit_status_ = {ExitReason::ElementaryBlock, baddr};
    m.exit_step_ = step;
    m.exit_from_switch_ = from_switch;
    m.exit_entry_guard_ = false;
  };

  for (;;) {
    const MicroOp& u = se.prog[static_cast<size_t>(pc)];
    if (u.step_start) {
      m.p_ = u.addr;
      m.p_next_ = u.addr + 1;
      m.scratch_owner_ = -1;
    }
    bool do_backtrack = false;
    switch (u.kind) {
      case MicroKind::Guard: {
        if (u.subject == GuardSubject::DirectSlot) {
          // trace entry check: the register must satisfy the loop invariant
          DerefResult d = deref_cell(m.heap_, m.slot(u.subject_slot));
          m.stats().guard_evals++;
          if (!(tag_bit(d.cell.tag) & u.allowed)) {
            elem_exit(u.addr, u.addr, false);
            m.exit_entry_guard_ = true;
            return SpecOutcome::Exited;
          }
          ++pc;
          break;
        }
        const Instr& instr = code.at(u.addr);
        if ((u.subject == GuardSubject::OperandB && (instr.flags & kImmB)) ||
            (u.subject == GuardSubject::OperandC && (instr.flags & kImmC))) {
          int64_t v = u.subject == GuardSubject::OperandB ? instr.b : instr.c;
          if (u.store == GuardStore::NumLhs) m.num_lhs_ = v;
          else if (u.store == GuardStore::NumRhs) m.num_rhs_ = v;
          ++pc;
          break;
        }
        Cell start = m.subject_value(instr, u.subject);
        DerefResult d = deref_cell(m.heap_, start);
        if (u.subject == GuardSubject::SReg && d.addr == kNoAddr) d.addr = m.s_;
        m.scratch_ = d;
        m.scratch_owner_ = u.block;
        if (d.cell.tag == Tag::Int) {
          if (u.store == GuardStore::NumLhs) m.num_lhs_ = d.cell.val;
          else if (u.store == GuardStore::NumRhs) m.num_rhs_ = d.cell.val;
        }
        if (u.check) {
          m.stats().guard_evals++;
          if (!(tag_bit(d.cell.tag) & u.allowed)) {
            elem_exit(u.addr, u.addr, false);
            return SpecOutcome::Exited;
          }
        }
        ++pc;
        break;
      }
      case MicroKind::GcGuard: {
        m.stats().gc_check_evals++;
        if (!m.heap_.has_room(static_cast<size_t>(u.need))) {
          m.gc_need_ = u.need;
          m.p_ = u.addr;
          m.exit_status_ = {ExitReason::GcException, u.addr};
          m.exit_step_ = u.addr;
          m.exit_from_switch_ = false;
          return SpecOutcome::Exited;
        }
        ++pc;
        break;
      }
      case MicroKind::Action: {
        const Instr& instr = code.at(u.addr);
        const BasicBlock& blk =
            instruction_metadata(instr.op).blocks[static_cast<size_t>(u.block)];
        if (blk.kind == BlockKind::TypeTest) m.stats().type_test_evals++;
        BlockResult r = blk.fn(m, instr);
        switch (r.kind) {
          case BlockResult::K::Edge: {
            int t = u.branch[static_cast<size_t>(r.edge)];
            if (t >= 0) {
              pc = t;
            } else if (t == kMicroNext) {
              ++pc;
            } else if (t == kMicroSideExit) {
              elem_exit(u.addr, u.addr, false);
              return SpecOutcome::Exited;
            } else {
              do_backtrack = true;
            }
            break;
          }
          case BlockResult::K::Next:
            if (u.target == kMicroNext) ++pc;
            else pc = u.target;
            break;
          case BlockResult::K::Backtrack:
            do_backtrack = true;
            break;
          case BlockResult::K::GcNeeded:
            // allocating blocks are always preceded by a GcGuard
            m.p_ = u.addr;
            m.exit_status_ = {ExitReason::GcException, u.addr};
            m.exit_step_ = u.addr;
            m.exit_from_switch_ = false;
            return SpecOutcome::Exited;
        }
        break;
      }
      case MicroKind::Switch: {
        const Instr& instr = code.at(u.addr);
        DerefResult d = deref_cell(m.heap_, m.slot(instr.b));
        m.scratch_ = d;
        m.scratch_owner_ = u.block;
        const BasicBlock& blk =
            instruction_metadata(instr.op).blocks[static_cast<size_t>(u.block)];
        BlockResult r = blk.fn(m, instr);
        if (r.kind == BlockResult::K::Backtrack) {
          do_backtrack = true;
          break;
        }
        CodeAddr t = m.last_switch_target_;
        auto it = u.switch_targets.find(t);
        auto at = u.switch_allowed.find(t);
        if (it != u.switch_targets.end() && at != u.switch_allowed.end() &&
            (tag_bit(d.cell.tag) & at->second)) {
          pc = it->second;
        } else {
          // untraced bucket or unrecorded dispatch tag: the dispatch is
          // complete, the default emulator resumes at the bucket target
          elem_exit(u.addr, t, true);
          return SpecOutcome::Exited;
        }
        break;
      }
      case MicroKind::Jump:
      case MicroKind::LoopBack:
        if (u.target == kMicroBacktrack) do_backtrack = true;
        else pc = u.target;
        break;
      case MicroKind::DynJump: {
        // return sites carry no compiled-in facts, so any in-trace return
        // address may be entered directly
        m.p_ = m.p_next_;
        auto it = se.entry_map.find(m.p_);
        if (it == se.entry_map.end()) return SpecOutcome::Completed;
        pc = it->second;
        break;
      }
      case MicroKind::Exit:
        elem_exit(u.addr, u.exit_addr, false);
        return SpecOutcome::Exited;
    }
    if (do_backtrack) {
      bool own_cp = !m.cps_.empty() && m.cps_.back().spec_epoch == epoch;
      if (!m.backtrack()) return SpecOutcome::Failed;
      if (!own_cp) return SpecOutcome::Completed;  // foreign CP: default resumes at its alt
      auto it = se.entry_map.find(m.p_);
      if (it == se.entry_map.end()) return SpecOutcome::Completed;
      pc = it->second;
    }
  }
}

std::string semulator_to_string(const SEmulator& se, const SymbolTable& syms) {
  std::ostringstream out;
  out << "s.emulator pred#" << se.pred << " gen " << se.generation << " ("
      << se.prog.size() << " micro-ops, " << se.guard_count << " guards, "
      << se.loop_back_count << " loop backs)\n";
  for (size_t i = 0; i < se.prog.size(); ++i) {
    const MicroOp& u = se.prog[i];
    out << "  [" << i << "] " << micro_kind_name(u.kind);
    if (u.addr != kNoCode) out << " @" << u.addr;
    if (u.step_start) out << " *";
    switch (u.kind) {
      case MicroKind::Guard:
        out << " allow=" << tagset_name(u.allowed);
        if (u.subject == GuardSubject::DirectSlot) out << " x" << u.subject_slot << " (entry)";
        if (!u.check) out << " (elided)";
        break;
      case MicroKind::GcGuard:
        out << " need=" << u.need;
        break;
      case MicroKind::Action: {
        out << " block=" << u.block;
        out << " branch=[";
        for (size_t bi = 0; bi < u.branch.size(); ++bi) {
          if (bi) out << ",";
          out << u.branch[bi];
        }
        out << "] next=" << u.target;
        break;
      }
      case MicroKind::Switch: {
        out << " targets={";
        bool first = true;
        for (const auto& [a, idx] : u.switch_targets) {
          if (!first) out << ",";
          first = false;
          out << a << "->" << idx;
        }
        out << "}";
        break;
      }
      case MicroKind::Jump:
      case MicroKind::LoopBack:
        out << " -> " << u.target;
        break;
      case MicroKind::DynJump:
        break;
      case MicroKind::Exit:
        out << " baddr=" << u.exit_addr;
        break;
    }
    out << "\n";
  }
  (void)syms;
  return out.str();
}

std::string validate_semulator(const SEmulator& se) {
  int n = static_cast<int>(se.prog.size());
  if (n == 0) return "empty program";
  auto ok_target = [&](int t) {
    return (t >= 0 && t < n) || t == kMicroNext || t == kMicroSideExit || t == kMicroBacktrack;
  };
  for (int i = 0; i < n; ++i) {
    const MicroOp& u = se.prog[static_cast<size_t>(i)];
    switch (u.kind) {
      case MicroKind::Guard:
        if (u.check && u.allowed == 0) return "guard with empty tag set";
        if (i + 1 >= n) return "guard at end of program";
        break;
      case MicroKind::GcGuard:
        if (u.need <= 0) return "gc guard without a heap requirement";
        if (i + 1 >= n) return "gc guard at end of program";
        break;
      case MicroKind::Action:
        for (int t : u.branch)
          if (!ok_target(t)) return "action branch out of range";
        if (!ok_target(u.target) || u.target == kMicroSideExit) return "action next-target invalid";
        break;
      case MicroKind::Switch:
      case MicroKind::DynJump:
        for (const auto& [a, t] : u.switch_targets) {
          (void)a;
          if (t < 0 || t >= n) return "switch target out of range";
        }
        break;
      case MicroKind::Jump:
      case MicroKind::LoopBack:
        if (!(u.target == kMicroBacktrack || (u.target >= 0 && u.target < n)))
          return "jump target out of range";
        break;
      case MicroKind::Exit:
        break;
    }
  }
  for (const auto& [addr, idx] : se.entry_map) {
    (void)addr;
    if (idx < 0 || idx >= n) return "entry map index out of range";
    if (!se.prog[static_cast<size_t>(idx)].step_start) return "entry map not at a step start";
  }
  return "";
}

}  // namespace tracewam
