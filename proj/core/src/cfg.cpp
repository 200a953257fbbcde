#include "tracewam/cfg.hpp"

#include <algorithm>
#include <sstream>

#include "tracewam/machine.hpp"

namespace tracewam {

const char* block_kind_name(BlockKind k) {
  switch (k) {
    case BlockKind::Plain: return "PLAIN";
    case BlockKind::TypeTest: return "TYPE_TEST";
    case BlockKind::DerefLoop: return "DEREF_LOOP";
    case BlockKind::GcCheck: return "GC_CHECK";
    case BlockKind::Choice: return "CHOICE";
    case BlockKind::Multiway: return "MULTIWAY";
  }
  return "?";
}

Cell Machine::subject_value(const Instr& i, GuardSubject subj) {
  switch (subj) {
    case GuardSubject::SlotB:
    case GuardSubject::OperandB:
      return slot(i.b);
    case GuardSubject::OperandC:
      return slot(i.c);
    case GuardSubject::SReg:
      return heap_.at(s_);
    case GuardSubject::None:
      break;
  }
  return Cell::nil();
}

namespace {

constexpr TagSet kNonRef = kAnyTag & ~kRefBit;

inline void load_subject(Machine& m, const Instr& i, GuardSubject subj, int my_index) {
  if (m.scratch_owner_ == my_index) return;
  Cell c = m.subject_value(i, subj);
  Addr a = (subj == GuardSubject::SReg) ? m.s_ : kNoAddr;
  m.scratch_ = DerefResult{c, a, 0};
  m.scratch_owner_ = my_index;
}

// One dereference step; scratch_.cell must currently hold a Ref.
inline BlockResult deref_step(Machine& m, int unbound_edge, int back_edge) {
  Addr a = m.scratch_.cell.addr();
  Cell c = m.heap_.at(a);
  m.scratch_.addr = a;
  if (c.tag == Tag::Ref && c.addr() == a) {
    m.scratch_.cell = c;
    return BlockResult::take(unbound_edge);
  }
  m.scratch_.cell = c;
  m.scratch_.steps++;
  return BlockResult::take(back_edge);
}

inline bool const_match(const Cell& v, const Cell& k) {
  if (v.tag != k.tag) return false;
  switch (k.tag) {
    case Tag::Nil: return true;
    case Tag::Atom:
    case Tag::Int: return v.val == k.val;
    default: return false;
  }
}

// Arithmetic with Prolog semantics: // truncates toward zero, mod is
// floored (takes the sign of the divisor).
inline bool apply_arith(Opcode op, int64_t l, int64_t r, int64_t& out) {
  switch (op) {
    case Opcode::ArithAdd: out = l + r; return true;
    case Opcode::ArithSub: out = l - r; return true;
    case Opcode::ArithMul: out = l * r; return true;
    case Opcode::ArithDiv:
      if (r == 0) return false;
      out = l / r;
      return true;
    case Opcode::ArithMod: {
      if (r == 0) return false;
      int64_t m = l % r;
      if (m != 0 && ((m < 0) != (r < 0))) m += r;
      out = m;
      return true;
    }
    default: return false;
  }
}

inline bool apply_cmp(Opcode op, int64_t l, int64_t r) {
  switch (op) {
    case Opcode::CmpLt: return l < r;
    case Opcode::CmpLe: return l <= r;
    case Opcode::CmpGt: return l > r;
    case Opcode::CmpGe: return l >= r;
    case Opcode::CmpEq: return l == r;
    case Opcode::CmpNe: return l != r;
    default: return false;
  }
}

bool eval_arith_cell(Machine& m, Cell c, int64_t& out) {
  DerefResult d = deref_cell(m.heap_, c);
  switch (d.cell.tag) {
    case Tag::Int:
      out = d.cell.val;
      return true;
    case Tag::Struct: {
      Cell fc = m.heap_.at(d.cell.addr());
      const std::string& fname = m.prog_.syms.name(fc.sym());
      Addr args = d.cell.addr() + 1;
      if (fc.arity == 1 && fname == "-") {
        int64_t v;
        if (!eval_arith_cell(m, m.heap_.at(args), v)) return false;
        out = -v;
        return true;
      }
      if (fc.arity != 2) return false;
      int64_t l, r;
      if (!eval_arith_cell(m, m.heap_.at(args), l)) return false;
      if (!eval_arith_cell(m, m.heap_.at(args + 1), r)) return false;
      if (fname == "+") return apply_arith(Opcode::ArithAdd, l, r, out);
      if (fname == "-") return apply_arith(Opcode::ArithSub, l, r, out);
      if (fname == "*") return apply_arith(Opcode::ArithMul, l, r, out);
      if (fname == "//") return apply_arith(Opcode::ArithDiv, l, r, out);
      if (fname == "mod") return apply_arith(Opcode::ArithMod, l, r, out);
      return false;
    }
    default:
      return false;
  }
}

struct CFGBuilder {
  InstructionCFG cfg;
  explicit CFGBuilder(Opcode op) { cfg.op = op; }
  int add(BasicBlock b) {
    cfg.blocks.push_back(std::move(b));
    return static_cast<int>(cfg.blocks.size()) - 1;
  }
};

// ---- per-opcode graph definitions --------------------------------------

InstructionCFG make_plain(Opcode op, const char* name, BlockFn fn) {
  CFGBuilder b(op);
  b.add({BlockKind::Plain, name, fn, {{"done", 0, kEdgeNext}}});
  return std::move(b.cfg);
}

InstructionCFG make_get_constant() {
  CFGBuilder b(Opcode::GetConstant);
  // 0: dispatch, 1: deref, 2: match, 3: bind
  b.add({BlockKind::TypeTest, "dispatch",
         [](Machine& m, const Instr& i) {
           load_subject(m, i, GuardSubject::SlotB, 0);
           Tag t = m.scratch_.cell.tag;
           m.last_test_tag_ = t;
           if (t == Tag::Ref) return BlockResult::take(0);
           if (t == i.k.tag) return BlockResult::take(1);
           return BlockResult::take(2);
         },
         {{"var", kRefBit, 1},
          {"match", kAtomBit | kIntBit | kNilBit, 2},
          {"mismatch", kStructBit | kListBit, kEdgeBacktrack}},
         GuardSubject::SlotB});
  b.add({BlockKind::DerefLoop, "deref",
         [](Machine& m, const Instr&) { return deref_step(m, 0, 1); },
         {{"unbound", kRefBit, 3}, {"bound", kNonRef, 0}},
         GuardSubject::None, GuardStore::Scratch, 0});
  b.add({BlockKind::Plain, "match",
         [](Machine& m, const Instr& i) {
           return const_match(m.scratch_.cell, i.k) ? BlockResult::next() : BlockResult::fail();
         },
         {{"eq", 0, kEdgeNext}, {"ne", 0, kEdgeBacktrack}}});
  b.add({BlockKind::Plain, "bind",
         [](Machine& m, const Instr& i) {
           bind_value(m.heap_, m.trail_, m.scratch_.addr, i.k);
           return BlockResult::next();
         },
         {{"done", 0, kEdgeNext}}});
  b.cfg.blocks[3].may_bind = true;
  return std::move(b.cfg);
}

InstructionCFG make_get_structure() {
  CFGBuilder b(Opcode::GetStructure);
  // 0: room, 1: dispatch, 2: deref, 3: read, 4: write
  b.add({BlockKind::GcCheck, "room",
         [](Machine& m, const Instr& i) {
           size_t need = static_cast<size_t>(i.c) + 1;
           if (m.heap_.has_room(need)) return BlockResult::take(0);
           m.gc_need_ = static_cast<int64_t>(need);
           return BlockResult::gc();
         },
         {{"ok", 0, 1}}});
  b.add({BlockKind::TypeTest, "dispatch",
         [](Machine& m, const Instr& i) {
           load_subject(m, i, GuardSubject::SlotB, 1);
           Tag t = m.scratch_.cell.tag;
           m.last_test_tag_ = t;
           if (t == Tag::Ref) return BlockResult::take(0);
           if (t == Tag::Struct) return BlockResult::take(1);
           return BlockResult::take(2);
         },
         {{"var", kRefBit, 2},
          {"struct", kStructBit, 3},
          {"mismatch", kNonRef & ~kStructBit, kEdgeBacktrack}},
         GuardSubject::SlotB});
  b.add({BlockKind::DerefLoop, "deref",
         [](Machine& m, const Instr&) { return deref_step(m, 0, 1); },
         {{"unbound", kRefBit, 4}, {"bound", kNonRef, 1}},
         GuardSubject::None, GuardStore::Scratch, 1});
  b.add({BlockKind::Plain, "read_functor",
         [](Machine& m, const Instr& i) {
           Addr fa = m.scratch_.cell.addr();
           const Cell& fc = m.heap_.at(fa);
           if (fc.tag == Tag::Fun && fc.sym() == i.a && fc.arity == i.c) {
             m.s_ = fa + 1;
             m.write_mode_ = false;
             return BlockResult::next();
           }
           return BlockResult::fail();
         },
         {{"eq", 0, kEdgeNext}, {"ne", 0, kEdgeBacktrack}}});
  b.add({BlockKind::Plain, "write_struct",
         [](Machine& m, const Instr& i) {
           Addr h0 = m.heap_.push(Cell::fun(i.a, i.c));
           for (int32_t n = 0; n < i.c; ++n) m.heap_.new_unbound();
           bind_value(m.heap_, m.trail_, m.scratch_.addr, Cell::strct(h0));
           m.s_ = h0 + 1;
           m.write_mode_ = true;
           return BlockResult::next();
         },
         {{"done", 0, kEdgeNext}}});
  b.cfg.blocks[4].may_bind = true;
  return std::move(b.cfg);
}

InstructionCFG make_get_list() {
  CFGBuilder b(Opcode::GetList);
  // 0: room, 1: dispatch, 2: deref, 3: read, 4: write
  b.add({BlockKind::GcCheck, "room",
         [](Machine& m, const Instr&) {
           if (m.heap_.has_room(2)) return BlockResult::take(0);
           m.gc_need_ = 2;
           return BlockResult::gc();
         },
         {{"ok", 0, 1}}});
  b.add({BlockKind::TypeTest, "dispatch",
         [](Machine& m, const Instr& i) {
           load_subject(m, i, GuardSubject::SlotB, 1);
           Tag t = m.scratch_.cell.tag;
           m.last_test_tag_ = t;
           if (t == Tag::Ref) return BlockResult::take(0);
           if (t == Tag::List) return BlockResult::take(1);
           return BlockResult::take(2);
         },
         {{"var", kRefBit, 2},
          {"list", kListBit, 3},
          {"mismatch", kNonRef & ~kListBit, kEdgeBacktrack}},
         GuardSubject::SlotB});
  b.add({BlockKind::DerefLoop, "deref",
         [](Machine& m, const Instr&) { return deref_step(m, 0, 1); },
         {{"unbound", kRefBit, 4}, {"bound", kNonRef, 1}},
         GuardSubject::None, GuardStore::Scratch, 1});
  b.add({BlockKind::Plain, "read_args",
         [](Machine& m, const Instr&) {
           m.s_ = m.scratch_.cell.addr();
           m.write_mode_ = false;
           return BlockResult::next();
         },
         {{"done", 0, kEdgeNext}}});
  b.add({BlockKind::Plain, "write_list",
         [](Machine& m, const Instr&) {
           Addr h0 = m.heap_.new_unbound();
           m.heap_.new_unbound();
           bind_value(m.heap_, m.trail_, m.scratch_.addr, Cell::list(h0));
           m.s_ = h0;
           m.write_mode_ = true;
           return BlockResult::next();
         },
         {{"done", 0, kEdgeNext}}});
  b.cfg.blocks[4].may_bind = true;
  return std::move(b.cfg);
}

InstructionCFG make_unify_variable() {
  CFGBuilder b(Opcode::UnifyVariable);
  b.add({BlockKind::Plain, "mode",
         [](Machine& m, const Instr&) {
           return BlockResult::take(m.write_mode_ ? 1 : 0);
         },
         {{"read", 0, 1}, {"write", 0, 2}},
         GuardSubject::None, GuardStore::Scratch, -1, true});
  b.add({BlockKind::Plain, "read_arg",
         [](Machine& m, const Instr& i) {
           m.slot(i.a) = m.heap_.at(m.s_);
           m.s_++;
           return BlockResult::next();
         },
         {{"done", 0, kEdgeNext}}});
  b.add({BlockKind::Plain, "write_var",
         [](Machine& m, const Instr& i) {
           // the cell under S was pre-filled unbound by get/put_structure
           m.slot(i.a) = Cell::ref(m.s_);
           m.s_++;
           return BlockResult::next();
         },
         {{"done", 0, kEdgeNext}}});
  return std::move(b.cfg);
}

InstructionCFG make_unify_value() {
  CFGBuilder b(Opcode::UnifyValue);
  b.add({BlockKind::Plain, "mode",
         [](Machine& m, const Instr&) {
           return BlockResult::take(m.write_mode_ ? 1 : 0);
         },
         {{"read", 0, 1}, {"write", 0, 2}},
         GuardSubject::None, GuardStore::Scratch, -1, true});
  b.add({BlockKind::Plain, "read_unify",
         [](Machine& m, const Instr& i) {
           Addr sa = m.s_++;
           bool ok = unify(m.heap_, m.trail_, m.slot(i.a), Cell::ref(sa));
           return ok ? BlockResult::next() : BlockResult::fail();
         },
         {{"ok", 0, kEdgeNext}, {"fail", 0, kEdgeBacktrack}}});
  b.add({BlockKind::Plain, "write_value",
         [](Machine& m, const Instr& i) {
           m.heap_.at(m.s_) = m.slot(i.a);
           m.s_++;
           return BlockResult::next();
         },
         {{"done", 0, kEdgeNext}}});
  b.cfg.blocks[1].may_bind = true;
  return std::move(b.cfg);
}

InstructionCFG make_unify_constant() {
  CFGBuilder b(Opcode::UnifyConstant);
  // 0: mode, 1: dispatch, 2: deref, 3: match, 4: bind, 5: write
  b.add({BlockKind::Plain, "mode",
         [](Machine& m, const Instr&) {
           return BlockResult::take(m.write_mode_ ? 1 : 0);
         },
         {{"read", 0, 1}, {"write", 0, 5}},
         GuardSubject::None, GuardStore::Scratch, -1, true});
  b.add({BlockKind::TypeTest, "dispatch",
         [](Machine& m, const Instr& i) {
           load_subject(m, i, GuardSubject::SReg, 1);
           Tag t = m.scratch_.cell.tag;
           m.last_test_tag_ = t;
           if (t == Tag::Ref) return BlockResult::take(0);
           if (t == i.k.tag) return BlockResult::take(1);
           return BlockResult::take(2);
         },
         {{"var", kRefBit, 2},
          {"match", kAtomBit | kIntBit | kNilBit, 3},
          {"mismatch", kStructBit | kListBit, kEdgeBacktrack}},
         GuardSubject::SReg});
  b.add({BlockKind::DerefLoop, "deref",
         [](Machine& m, const Instr&) { return deref_step(m, 0, 1); },
         {{"unbound", kRefBit, 4}, {"bound", kNonRef, 1}},
         GuardSubject::None, GuardStore::Scratch, 1});
  b.add({BlockKind::Plain, "match",
         [](Machine& m, const Instr& i) {
           if (const_match(m.scratch_.cell, i.k)) {
             m.s_++;
             return BlockResult::next();
           }
           return BlockResult::fail();
         },
         {{"eq", 0, kEdgeNext}, {"ne", 0, kEdgeBacktrack}}});
  b.add({BlockKind::Plain, "bind",
         [](Machine& m, const Instr& i) {
           bind_value(m.heap_, m.trail_, m.scratch_.addr, i.k);
           m.s_++;
           return BlockResult::next();
         },
         {{"done", 0, kEdgeNext}}});
  b.add({BlockKind::Plain, "write_const",
         [](Machine& m, const Instr& i) {
           m.heap_.at(m.s_) = i.k;
           m.s_++;
           return BlockResult::next();
         },
         {{"done", 0, kEdgeNext}}});
  b.cfg.blocks[4].may_bind = true;
  return std::move(b.cfg);
}

InstructionCFG make_put_variable() {
  CFGBuilder b(Opcode::PutVariable);
  b.add({BlockKind::GcCheck, "room",
         [](Machine& m, const Instr&) {
           if (m.heap_.has_room(1)) return BlockResult::take(0);
           m.gc_need_ = 1;
           return BlockResult::gc();
         },
         {{"ok", 0, 1}}});
  b.add({BlockKind::Plain, "fresh",
         [](Machine& m, const Instr& i) {
           Addr a = m.heap_.new_unbound();
           m.slot(i.a) = Cell::ref(a);
           m.slot(i.b) = Cell::ref(a);
           return BlockResult::next();
         },
         {{"done", 0, kEdgeNext}}});
  return std::move(b.cfg);
}

InstructionCFG make_put_structure() {
  CFGBuilder b(Opcode::PutStructure);
  b.add({BlockKind::GcCheck, "room",
         [](Machine& m, const Instr& i) {
           size_t need = static_cast<size_t>(i.c) + 1;
           if (m.heap_.has_room(need)) return BlockResult::take(0);
           m.gc_need_ = static_cast<int64_t>(need);
           return BlockResult::gc();
         },
         {{"ok", 0, 1}}});
  b.add({BlockKind::Plain, "build",
         [](Machine& m, const Instr& i) {
           Addr h0 = m.heap_.push(Cell::fun(i.a, i.c));
           for (int32_t n = 0; n < i.c; ++n) m.heap_.new_unbound();
           m.slot(i.b) = Cell::strct(h0);
           m.s_ = h0 + 1;
           m.write_mode_ = true;
           return BlockResult::next();
         },
         {{"done", 0, kEdgeNext}}});
  return std::move(b.cfg);
}

InstructionCFG make_put_list() {
  CFGBuilder b(Opcode::PutList);
  b.add({BlockKind::GcCheck, "room",
         [](Machine& m, const Instr&) {
           if (m.heap_.has_room(2)) return BlockResult::take(0);
           m.gc_need_ = 2;
           return BlockResult::gc();
         },
         {{"ok", 0, 1}}});
  b.add({BlockKind::Plain, "build",
         [](Machine& m, const Instr& i) {
           Addr h0 = m.heap_.new_unbound();
           m.heap_.new_unbound();
           m.slot(i.b) = Cell::list(h0);
           m.s_ = h0;
           m.write_mode_ = true;
           return BlockResult::next();
         },
         {{"done", 0, kEdgeNext}}});
  return std::move(b.cfg);
}

InstructionCFG make_switch_on_term() {
  CFGBuilder b(Opcode::SwitchOnTerm);
  // 0: var check, 1: deref, 2: dispatch
  b.add({BlockKind::TypeTest, "var_check",
         [](Machine& m, const Instr& i) {
           load_subject(m, i, GuardSubject::SlotB, 0);
           Tag t = m.scratch_.cell.tag;
           m.last_test_tag_ = t;
           return BlockResult::take(t == Tag::Ref ? 0 : 1);
         },
         {{"var", kRefBit, 1}, {"nonvar", kNonRef, 2}},
         GuardSubject::SlotB});
  b.add({BlockKind::DerefLoop, "deref",
         [](Machine& m, const Instr&) { return deref_step(m, 0, 1); },
         {{"unbound", kRefBit, 2}, {"bound", kNonRef, 0}},
         GuardSubject::None, GuardStore::Scratch, 0});
  b.add({BlockKind::Multiway, "dispatch",
         [](Machine& m, const Instr& i) {
           const SwitchTable& t = m.prog_.code.switches[static_cast<size_t>(i.a)];
           CodeAddr target = kNoCode;
           switch (m.scratch_.cell.tag) {
             case Tag::Ref: target = t.on_var; break;
             case Tag::Nil: target = t.on_nil; break;
             case Tag::List: target = t.on_list; break;
             case Tag::Int: {
               auto it = t.on_int.find(m.scratch_.cell.val);
               target = it == t.on_int.end() ? t.miss : it->second;
               break;
             }
             case Tag::Atom: {
               auto it = t.on_atom.find(m.scratch_.cell.sym());
               target = it == t.on_atom.end() ? t.miss : it->second;
               break;
             }
             case Tag::Struct: {
               const Cell& fc = m.heap_.at(m.scratch_.cell.addr());
               auto it = t.on_struct.find({fc.sym(), fc.arity});
               target = it == t.on_struct.end() ? t.miss : it->second;
               break;
             }
             case Tag::Fun: break;
           }
           if (target == kNoCode) return BlockResult::fail();
           m.last_switch_target_ = target;
           m.p_next_ = target;
           return BlockResult::next();
         },
         {{"var", kRefBit, kEdgeNext},
          {"nil", kNilBit, kEdgeNext},
          {"list", kListBit, kEdgeNext},
          {"const", kAtomBit | kIntBit, kEdgeNext},
          {"struct", kStructBit, kEdgeNext}}});
  return std::move(b.cfg);
}

// Shared shape for the six comparison and five arithmetic opcodes.
// 0: op1 test, 1: op1 deref, 2: op2 test, 3: op2 deref, 4: work
InstructionCFG make_binary_numeric(Opcode op, BlockFn work, const char* work_name) {
  CFGBuilder b(op);
  b.add({BlockKind::TypeTest, "op1",
         [](Machine& m, const Instr& i) {
           if (i.flags & kImmB) {
             m.num_lhs_ = i.b;
             m.last_test_tag_ = Tag::Int;
             return BlockResult::take(1);
           }
           load_subject(m, i, GuardSubject::OperandB, 0);
           Tag t = m.scratch_.cell.tag;
           m.last_test_tag_ = t;
           if (t == Tag::Ref) return BlockResult::take(0);
           if (t == Tag::Int) {
             m.num_lhs_ = m.scratch_.cell.val;
             return BlockResult::take(1);
           }
           return BlockResult::take(2);
         },
         {{"var", kRefBit, 1},
          {"int", kIntBit, 2},
          {"other", kNonRef & ~kIntBit, kEdgeBacktrack}},
         GuardSubject::OperandB, GuardStore::NumLhs});
  b.add({BlockKind::DerefLoop, "op1_deref",
         [](Machine& m, const Instr&) { return deref_step(m, 0, 1); },
         {{"unbound", kRefBit, kEdgeBacktrack}, {"bound", kNonRef, 0}},
         GuardSubject::None, GuardStore::Scratch, 0});
  b.add({BlockKind::TypeTest, "op2",
         [](Machine& m, const Instr& i) {
           if (i.flags & kImmC) {
             m.num_rhs_ = i.c;
             m.last_test_tag_ = Tag::Int;
             return BlockResult::take(1);
           }
           load_subject(m, i, GuardSubject::OperandC, 2);
           Tag t = m.scratch_.cell.tag;
           m.last_test_tag_ = t;
           if (t == Tag::Ref) return BlockResult::take(0);
           if (t == Tag::Int) {
             m.num_rhs_ = m.scratch_.cell.val;
             return BlockResult::take(1);
           }
           return BlockResult::take(2);
         },
         {{"var", kRefBit, 3},
          {"int", kIntBit, 4},
          {"other", kNonRef & ~kIntBit, kEdgeBacktrack}},
         GuardSubject::OperandC, GuardStore::NumRhs});
  b.add({BlockKind::DerefLoop, "op2_deref",
         [](Machine& m, const Instr&) { return deref_step(m, 0, 1); },
         {{"unbound", kRefBit, kEdgeBacktrack}, {"bound", kNonRef, 2}},
         GuardSubject::None, GuardStore::Scratch, 2});
  b.add({BlockKind::Plain, work_name, work,
         {{"ok", 0, kEdgeNext}, {"fail", 0, kEdgeBacktrack}}});
  return std::move(b.cfg);
}

InstructionCFG make_eval_is() {
  CFGBuilder b(Opcode::EvalIs);
  // 0: test, 1: deref, 2: store int, 3: eval tree
  b.add({BlockKind::TypeTest, "src",
         [](Machine& m, const Instr& i) {
           if (i.flags & kImmB) {
             m.num_lhs_ = i.b;
             m.last_test_tag_ = Tag::Int;
             return BlockResult::take(1);
           }
           load_subject(m, i, GuardSubject::OperandB, 0);
           Tag t = m.scratch_.cell.tag;
           m.last_test_tag_ = t;
           if (t == Tag::Ref) return BlockResult::take(0);
           if (t == Tag::Int) {
             m.num_lhs_ = m.scratch_.cell.val;
             return BlockResult::take(1);
           }
           if (t == Tag::Struct) return BlockResult::take(2);
           return BlockResult::take(3);
         },
         {{"var", kRefBit, 1},
          {"int", kIntBit, 2},
          {"expr", kStructBit, 3},
          {"other", kAtomBit | kListBit | kNilBit, kEdgeBacktrack}},
         GuardSubject::OperandB, GuardStore::NumLhs});
  b.add({BlockKind::DerefLoop, "deref",
         [](Machine& m, const Instr&) { return deref_step(m, 0, 1); },
         {{"unbound", kRefBit, kEdgeBacktrack}, {"bound", kNonRef, 0}},
         GuardSubject::None, GuardStore::Scratch, 0});
  b.add({BlockKind::Plain, "store",
         [](Machine& m, const Instr& i) {
           m.slot(i.a) = Cell::integer(m.num_lhs_);
           return BlockResult::next();
         },
         {{"done", 0, kEdgeNext}}});
  b.add({BlockKind::Plain, "eval_tree",
         [](Machine& m, const Instr& i) {
           int64_t v;
           if (!eval_arith_cell(m, m.scratch_.cell, v)) return BlockResult::fail();
           m.slot(i.a) = Cell::integer(v);
           return BlockResult::next();
         },
         {{"ok", 0, kEdgeNext}, {"fail", 0, kEdgeBacktrack}}});
  return std::move(b.cfg);
}

InstructionCFG make_try() {
  CFGBuilder b(Opcode::Try);
  b.add({BlockKind::Choice, "push",
         [](Machine& m, const Instr& i) {
           ChoicePoint cp;
           cp.args.assign(m.x_.begin(), m.x_.begin() + i.c);
           cp.e = m.e_;
           cp.cp = m.cp_reg_;
           cp.h = m.heap_.top();
           cp.tr = m.trail_.size();
           cp.alt = m.p_ + 1;
           cp.b0 = m.b0_;
           cp.mon_depth = m.monitor().depth();
           cp.mon_active = m.monitor().active();
           cp.spec_epoch = m.cur_spec_epoch_;
           m.cps_.push_back(std::move(cp));
           m.p_next_ = i.a;
           return BlockResult::next();
         },
         {{"first", 0, kEdgeNext}}});
  return std::move(b.cfg);
}

InstructionCFG make_retry() {
  CFGBuilder b(Opcode::Retry);
  b.add({BlockKind::Choice, "update",
         [](Machine& m, const Instr& i) {
           m.cps_.back().alt = m.p_ + 1;
           m.p_next_ = i.a;
           m.pending_tick_ = i.b;
           return BlockResult::next();
         },
         {{"next_clause", 0, kEdgeNext}}});
  return std::move(b.cfg);
}

InstructionCFG make_trust() {
  CFGBuilder b(Opcode::Trust);
  b.add({BlockKind::Choice, "pop",
         [](Machine& m, const Instr& i) {
           m.cps_.pop_back();
           m.p_next_ = i.a;
           m.pending_tick_ = i.b;
           return BlockResult::next();
         },
         {{"last_clause", 0, kEdgeNext}}});
  return std::move(b.cfg);
}

InstructionCFG build_cfg(Opcode op) {
  switch (op) {
    case Opcode::Halt:
      return make_plain(op, "halt", [](Machine& m, const Instr&) {
        m.halted_ = true;
        m.p_next_ = m.p_;
        return BlockResult::next();
      });
    case Opcode::GetVariable:
      return make_plain(op, "move", [](Machine& m, const Instr& i) {
        m.slot(i.a) = m.slot(i.b);
        return BlockResult::next();
      });
    case Opcode::GetValue: {
      CFGBuilder b(op);
      b.add({BlockKind::Plain, "unify",
             [](Machine& m, const Instr& i) {
               bool ok = unify(m.heap_, m.trail_, m.slot(i.a), m.slot(i.b));
               return ok ? BlockResult::next() : BlockResult::fail();
             },
             {{"ok", 0, kEdgeNext}, {"fail", 0, kEdgeBacktrack}}});
      b.cfg.blocks[0].may_bind = true;
      return std::move(b.cfg);
    }
    case Opcode::GetConstant: return make_get_constant();
    case Opcode::GetStructure: return make_get_structure();
    case Opcode::GetList: return make_get_list();
    case Opcode::UnifyVariable: return make_unify_variable();
    case Opcode::UnifyValue: return make_unify_value();
    case Opcode::UnifyConstant: return make_unify_constant();
    case Opcode::PutVariable: return make_put_variable();
    case Opcode::PutValue:
      return make_plain(op, "move", [](Machine& m, const Instr& i) {
        m.slot(i.b) = m.slot(i.a);
        return BlockResult::next();
      });
    case Opcode::PutConstant:
      return make_plain(op, "load", [](Machine& m, const Instr& i) {
        m.slot(i.b) = i.k;
        return BlockResult::next();
      });
    case Opcode::PutStructure: return make_put_structure();
    case Opcode::PutList: return make_put_list();
    case Opcode::Call:
      return make_plain(op, "call", [](Machine& m, const Instr& i) {
        m.cp_reg_ = m.p_ + 1;
        m.b0_ = static_cast<int32_t>(m.cps_.size());
        m.pending_pred_ = i.a;
        m.p_next_ = m.prog_.preds[static_cast<size_t>(i.a)].entry;
        return BlockResult::next();
      });
    case Opcode::Execute:
      return make_plain(op, "execute", [](Machine& m, const Instr& i) {
        m.b0_ = static_cast<int32_t>(m.cps_.size());
        m.pending_pred_ = i.a;
        m.p_next_ = m.prog_.preds[static_cast<size_t>(i.a)].entry;
        return BlockResult::next();
      });
    case Opcode::Proceed:
      return make_plain(op, "proceed", [](Machine& m, const Instr&) {
        m.p_next_ = m.cp_reg_;
        return BlockResult::next();
      });
    case Opcode::Allocate:
      return make_plain(op, "allocate", [](Machine& m, const Instr& i) {
        int32_t protect = m.cps_.empty() ? -1 : m.cps_.back().e;
        int32_t idx = std::max(m.e_, protect) + 1;
        if (static_cast<size_t>(idx) >= m.envs_.size()) m.envs_.resize(static_cast<size_t>(idx) + 1);
        EnvFrame& f = m.envs_[static_cast<size_t>(idx)];
        f.prev = m.e_;
        f.cp = m.cp_reg_;
        f.cut_b = m.b0_;
        f.y.assign(static_cast<size_t>(i.a), Cell::nil());
        m.e_ = idx;
        return BlockResult::next();
      });
    case Opcode::Deallocate:
      return make_plain(op, "deallocate", [](Machine& m, const Instr&) {
        const EnvFrame& f = m.envs_[static_cast<size_t>(m.e_)];
        m.cp_reg_ = f.cp;
        m.e_ = f.prev;
        return BlockResult::next();
      });
    case Opcode::Cut:
      return make_plain(op, "cut", [](Machine& m, const Instr&) {
        int32_t target = m.envs_[static_cast<size_t>(m.e_)].cut_b;
        if (static_cast<int32_t>(m.cps_.size()) > target)
          m.cps_.resize(static_cast<size_t>(target));
        return BlockResult::next();
      });
    case Opcode::NeckCut:
      return make_plain(op, "neck_cut", [](Machine& m, const Instr&) {
        if (static_cast<int32_t>(m.cps_.size()) > m.b0_)
          m.cps_.resize(static_cast<size_t>(m.b0_));
        return BlockResult::next();
      });
    case Opcode::Try: return make_try();
    case Opcode::Retry: return make_retry();
    case Opcode::Trust: return make_trust();
    case Opcode::SwitchOnTerm: return make_switch_on_term();
    case Opcode::CmpLt:
    case Opcode::CmpLe:
    case Opcode::CmpGt:
    case Opcode::CmpGe:
    case Opcode::CmpEq:
    case Opcode::CmpNe:
      return make_binary_numeric(op,
                                 [](Machine& m, const Instr& i) {
                                   return apply_cmp(i.op, m.num_lhs_, m.num_rhs_)
                                              ? BlockResult::next()
                                              : BlockResult::fail();
                                 },
                                 "compare");
    case Opcode::ArithAdd:
    case Opcode::ArithSub:
    case Opcode::ArithMul:
    case Opcode::ArithDiv:
    case Opcode::ArithMod:
      return make_binary_numeric(op,
                                 [](Machine& m, const Instr& i) {
                                   int64_t out;
                                   if (!apply_arith(i.op, m.num_lhs_, m.num_rhs_, out))
                                     return BlockResult::fail();
                                   m.slot(i.a) = Cell::integer(out);
                                   return BlockResult::next();
                                 },
                                 "compute");
    case Opcode::EvalIs: return make_eval_is();
    case Opcode::UnifySlots: {
      CFGBuilder b(op);
      b.add({BlockKind::Plain, "unify",
             [](Machine& m, const Instr& i) {
               bool ok = unify(m.heap_, m.trail_, m.slot(i.a), m.slot(i.b));
               return ok ? BlockResult::next() : BlockResult::fail();
             },
             {{"ok", 0, kEdgeNext}, {"fail", 0, kEdgeBacktrack}}});
      b.cfg.blocks[0].may_bind = true;
      return std::move(b.cfg);
    }
    case Opcode::FailOp:
      return make_plain(op, "fail", [](Machine&, const Instr&) { return BlockResult::fail(); });
    case Opcode::SucceedQuery:
      return make_plain(op, "succeed", [](Machine& m, const Instr& i) {
        m.solution_found_ = true;
        m.pending_meta_ = i.a;
        return BlockResult::fail();
      });
  }
  return make_plain(Opcode::Halt, "halt", [](Machine& m, const Instr&) {
    m.halted_ = true;
    return BlockResult::next();
  });
}

constexpr int kOpcodeCount = static_cast<int>(Opcode::SucceedQuery) + 1;

}  // namespace

const InstructionCFG& instruction_metadata(Opcode op) {
  static const std::vector<InstructionCFG> table = [] {
    std::vector<InstructionCFG> t;
    t.reserve(kOpcodeCount);
    for (int i = 0; i < kOpcodeCount; ++i) t.push_back(build_cfg(static_cast<Opcode>(i)));
    return t;
  }();
  return table[static_cast<size_t>(op)];
}

bool opcode_may_bind(Opcode op) {
  switch (op) {
    case Opcode::GetValue:
    case Opcode::GetConstant:
    case Opcode::GetStructure:
    case Opcode::GetList:
    case Opcode::UnifyValue:
    case Opcode::UnifyConstant:
    case Opcode::UnifySlots:
      return true;
    default:
      return false;
  }
}

std::vector<Slot> slots_written(const Instr& i) {
  switch (i.op) {
    case Opcode::GetVariable:
    case Opcode::UnifyVariable:
    case Opcode::ArithAdd:
    case Opcode::ArithSub:
    case Opcode::ArithMul:
    case Opcode::ArithDiv:
    case Opcode::ArithMod:
    case Opcode::EvalIs:
      return {i.a};
    case Opcode::PutVariable:
      return {i.a, i.b};
    case Opcode::PutValue:
    case Opcode::PutConstant:
    case Opcode::PutStructure:
    case Opcode::PutList:
      return {i.b};
    default:
      return {};
  }
}

std::string cfg_to_string(Opcode op) {
  const InstructionCFG& cfg = instruction_metadata(op);
  std::ostringstream out;
  out << opcode_name(op) << " (entry " << cfg.entry << ")\n";
  for (size_t i = 0; i < cfg.blocks.size(); ++i) {
    const BasicBlock& b = cfg.blocks[i];
    out << "  [" << i << "] " << block_kind_name(b.kind) << " " << b.name;
    if (b.paired_test >= 0) out << " (test " << b.paired_test << ")";
    if (b.trace_determined) out << " (trace-determined)";
    out << "\n";
    for (const auto& e : b.edges) {
      out << "      " << e.label;
      if (e.tags) out << " " << tagset_name(e.tags);
      out << " -> ";
      if (e.target == kEdgeNext)
        out << "next";
      else if (e.target == kEdgeBacktrack)
        out << "backtrack";
      else
        out << "[" << e.target << "]";
      out << "\n";
    }
  }
  return out.str();
}

}  // namespace tracewam
