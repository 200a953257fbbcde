#include <algorithm>
#include <deque>
#include <map>
#include <set>

#include "tracewam/program.hpp"

namespace tracewam {

namespace {

using ast::Kind;
using ast::SourceClause;
using ast::TermPtr;

constexpr int kMaxSlots = 220;

bool is_builtin_goal(const TermPtr& g) {
  if (g->kind == Kind::Atom)
    return g->name == "!" || g->name == "true" || g->name == "fail";
  if (g->kind != Kind::Struct || g->args.size() != 2) return false;
  static const std::set<std::string> ops = {"<", ">", "=<", ">=", "=:=", "=\\=", "is", "="};
  return ops.count(g->name) > 0;
}

bool is_user_call(const TermPtr& g) {
  return (g->kind == Kind::Atom || g->kind == Kind::Struct) && !is_builtin_goal(g);
}

struct CallFixup {
  CodeAddr at;
  SymId name;
  int32_t arity;
};

struct Emitter {
  Program& prog;
  std::vector<CallFixup> fixups;

  CodeAddr emit(Instr i) { return prog.code.emit(i); }
};

// Compiles one clause (or a query body) to bytecode.
class ClauseCompiler {
 public:
  ClauseCompiler(Emitter& em, const SourceClause& clause, bool query_mode)
      : em_(em), clause_(clause), query_(query_mode) {}

  CodeAddr compile() {
    classify_variables();
    CodeAddr start = em_.prog.code.size();
    if (needs_env_) em_.emit({Opcode::Allocate, 0, static_cast<int32_t>(perm_count_)});
    if (!query_ && clause_.head->kind == Kind::Struct) compile_head();
    compile_body();
    return start;
  }

  const std::vector<std::pair<std::string, int>>& query_vars() const { return query_var_slots_; }

 private:
  [[noreturn]] void fail(const std::string& msg) { throw CompileError{msg}; }

  struct VarInfo {
    std::set<int> chunks;
    bool permanent = false;
    Slot slot = 0;
    bool assigned = false;
    bool seen = false;  // had its first occurrence compiled
  };

  void collect_vars(const TermPtr& t, int chunk) {
    if (t->kind == Kind::Var) {
      vars_[t->name].chunks.insert(chunk);
      return;
    }
    for (const auto& a : t->args) collect_vars(a, chunk);
  }

  void classify_variables() {
    int chunk = 0;
    int call_count = 0;
    int goal_index = 0;
    int last_call_index = -1;
    bool has_cut = false;
    if (!query_) collect_vars(clause_.head, 0);
    for (const auto& g : clause_.body) {
      collect_vars(g, chunk);
      if (is_user_call(g)) {
        ++chunk;
        ++call_count;
        last_call_index = goal_index;
      }
      if (g->kind == Kind::Atom && g->name == "!") has_cut = true;
      ++goal_index;
    }
    int n_goals = static_cast<int>(clause_.body.size());
    for (auto& [name, info] : vars_) {
      info.permanent = query_ || info.chunks.size() > 1;
      if (info.permanent) {
        info.slot = yslot(static_cast<int>(perm_count_++));
        info.assigned = true;
        if (query_) query_var_slots_.push_back({name, yindex(info.slot)});
      }
    }
    bool call_not_last = call_count > 0 && last_call_index != n_goals - 1;
    needs_env_ = query_ || perm_count_ > 0 || call_count >= 2 || call_not_last ||
                 (has_cut && call_count >= 1);
    use_neck_cut_ = has_cut && !needs_env_;

    x_base_ = 0;
    if (!query_ && clause_.head->kind == Kind::Struct)
      x_base_ = static_cast<int>(clause_.head->args.size());
    for (const auto& g : clause_.body)
      if (is_user_call(g) && g->kind == Kind::Struct)
        x_base_ = std::max(x_base_, static_cast<int>(g->args.size()));
    next_x_ = x_base_;
  }

  Slot alloc_temp() {
    if (next_x_ >= kMaxSlots) fail("clause too complex: register budget exceeded");
    return next_x_++;
  }

  VarInfo& var(const TermPtr& t) { return vars_[t->name]; }

  Slot var_slot(const TermPtr& t) {
    VarInfo& v = var(t);
    if (!v.assigned) {
      v.slot = alloc_temp();
      v.assigned = true;
    }
    return v.slot;
  }

  static Cell const_cell(Emitter& em, const TermPtr& t) {
    switch (t->kind) {
      case Kind::Atom: return Cell::atom(em.prog.syms.intern(t->name));
      case Kind::Int: return Cell::integer(t->value);
      case Kind::Nil: return Cell::nil();
      default: break;
    }
    return Cell::nil();
  }

  static bool is_const(const TermPtr& t) {
    return t->kind == Kind::Atom || t->kind == Kind::Int || t->kind == Kind::Nil;
  }

  // --- head ---

  void compile_head() {
    std::deque<std::pair<TermPtr, Slot>> pending;
    const auto& args = clause_.head->args;
    for (size_t i = 0; i < args.size(); ++i) head_arg(args[i], static_cast<Slot>(i), pending);
    while (!pending.empty()) {
      auto [t, s] = pending.front();
      pending.pop_front();
      head_arg(t, s, pending);
    }
  }

  void head_arg(const TermPtr& t, Slot src, std::deque<std::pair<TermPtr, Slot>>& pending) {
    switch (t->kind) {
      case Kind::Var: {
        VarInfo& v = var(t);
        Slot s = var_slot(t);
        if (!v.seen) {
          v.seen = true;
          em_.emit({Opcode::GetVariable, 0, s, src});
        } else {
          em_.emit({Opcode::GetValue, 0, s, src});
        }
        break;
      }
      case Kind::Atom:
      case Kind::Int:
      case Kind::Nil:
        em_.emit({Opcode::GetConstant, 0, 0, src, 0, const_cell(em_, t)});
        break;
      case Kind::Struct: {
        SymId f = em_.prog.syms.intern(t->name);
        em_.emit({Opcode::GetStructure, 0, f, src, static_cast<int32_t>(t->args.size())});
        unify_args(t->args, pending);
        break;
      }
      case Kind::List: {
        em_.emit({Opcode::GetList, 0, 0, src});
        unify_args(t->args, pending);
        break;
      }
    }
  }

  void unify_args(const std::vector<TermPtr>& args,
                  std::deque<std::pair<TermPtr, Slot>>& pending) {
    for (const auto& a : args) {
      switch (a->kind) {
        case Kind::Var: {
          VarInfo& v = var(a);
          Slot s = var_slot(a);
          if (!v.seen) {
            v.seen = true;
            em_.emit({Opcode::UnifyVariable, 0, s});
          } else {
            em_.emit({Opcode::UnifyValue, 0, s});
          }
          break;
        }
        case Kind::Atom:
        case Kind::Int:
        case Kind::Nil:
          em_.emit({Opcode::UnifyConstant, 0, 0, 0, 0, const_cell(em_, a)});
          break;
        default: {
          Slot t = alloc_temp();
          em_.emit({Opcode::UnifyVariable, 0, t});
          pending.push_back({a, t});
          break;
        }
      }
    }
  }

  // --- body term building (bottom-up) ---

  Slot build_term(const TermPtr& t) {
    switch (t->kind) {
      case Kind::Var: {
        VarInfo& v = var(t);
        Slot s = var_slot(t);
        if (!v.seen) {
          v.seen = true;
          em_.emit({Opcode::PutVariable, 0, s, s});
        }
        return s;
      }
      case Kind::Atom:
      case Kind::Int:
      case Kind::Nil: {
        Slot s = alloc_temp();
        em_.emit({Opcode::PutConstant, 0, 0, s, 0, const_cell(em_, t)});
        return s;
      }
      case Kind::Struct:
      case Kind::List: {
        // complex children first, so their temps are ready
        std::vector<Slot> child_slots(t->args.size(), 0);
        std::vector<bool> complex(t->args.size(), false);
        for (size_t i = 0; i < t->args.size(); ++i) {
          const auto& a = t->args[i];
          if (a->kind == Kind::Struct || a->kind == Kind::List) {
            child_slots[i] = build_term(a);
            complex[i] = true;
          }
        }
        Slot s = alloc_temp();
        if (t->kind == Kind::Struct) {
          SymId f = em_.prog.syms.intern(t->name);
          em_.emit({Opcode::PutStructure, 0, f, s, static_cast<int32_t>(t->args.size())});
        } else {
          em_.emit({Opcode::PutList, 0, 0, s});
        }
        for (size_t i = 0; i < t->args.size(); ++i) {
          const auto& a = t->args[i];
          if (complex[i]) {
            em_.emit({Opcode::UnifyValue, 0, child_slots[i]});
          } else if (a->kind == Kind::Var) {
            VarInfo& v = var(a);
            Slot vs = var_slot(a);
            if (!v.seen) {
              v.seen = true;
              em_.emit({Opcode::UnifyVariable, 0, vs});
            } else {
              em_.emit({Opcode::UnifyValue, 0, vs});
            }
          } else {
            em_.emit({Opcode::UnifyConstant, 0, 0, 0, 0, const_cell(em_, a)});
          }
        }
        return s;
      }
    }
    fail("unreachable term kind");
  }

  // --- arithmetic ---

  struct Operand {
    bool imm;
    int32_t slot_or_value;
  };

  Operand arith_operand(const TermPtr& t) {
    switch (t->kind) {
      case Kind::Int: {
        if (t->value < INT32_MIN || t->value > INT32_MAX) {
          // wide literal: go through a constant slot
          Slot s = alloc_temp();
          em_.emit({Opcode::PutConstant, 0, 0, s, 0, Cell::integer(t->value)});
          return {false, s};
        }
        return {true, static_cast<int32_t>(t->value)};
      }
      case Kind::Var: {
        VarInfo& v = var(t);
        if (!v.seen) fail("arithmetic on unbound variable " + t->name);
        return {false, v.slot};
      }
      case Kind::Struct: {
        Opcode op;
        if (t->name == "+") op = Opcode::ArithAdd;
        else if (t->name == "-") op = Opcode::ArithSub;
        else if (t->name == "*") op = Opcode::ArithMul;
        else if (t->name == "//") op = Opcode::ArithDiv;
        else if (t->name == "mod") op = Opcode::ArithMod;
        else {
          fail("unsupported arithmetic functor " + t->name + "/" +
               std::to_string(t->args.size()));
        }
        if (t->args.size() != 2) fail("arithmetic functor must be binary: " + t->name);
        Operand l = arith_operand(t->args[0]);
        Operand r = arith_operand(t->args[1]);
        Slot dst = alloc_temp();
        uint8_t flags = (l.imm ? kImmB : 0) | (r.imm ? kImmC : 0);
        em_.emit({op, flags, dst, l.slot_or_value, r.slot_or_value});
        return {false, dst};
      }
      default:
        fail("unsupported arithmetic term " + ast::to_string(t));
    }
  }

  // --- body goals ---

  void compile_body() {
    const auto& body = clause_.body;
    int last_call = -1;
    for (size_t i = 0; i < body.size(); ++i)
      if (is_user_call(body[i])) last_call = static_cast<int>(i);
    bool tail_call = !query_ && last_call == static_cast<int>(body.size()) - 1 && last_call >= 0;

    for (size_t i = 0; i < body.size(); ++i) {
      const TermPtr& g = body[i];
      bool is_last_goal = i + 1 == body.size();
      if (is_user_call(g)) {
        compile_call(g, is_last_goal && tail_call);
        next_x_ = x_base_;  // chunk boundary, temporaries are dead
      } else {
        compile_builtin(g);
      }
    }
    if (query_) {
      em_.emit({Opcode::SucceedQuery, 0, query_meta_index_});
      return;
    }
    if (!tail_call) {
      if (needs_env_) em_.emit({Opcode::Deallocate});
      em_.emit({Opcode::Proceed});
    }
  }

  void compile_call(const TermPtr& g, bool tail) {
    int32_t arity = g->kind == Kind::Struct ? static_cast<int32_t>(g->args.size()) : 0;
    for (int32_t j = 0; j < arity; ++j) {
      const TermPtr& a = g->args[static_cast<size_t>(j)];
      switch (a->kind) {
        case Kind::Var: {
          VarInfo& v = var(a);
          Slot s = var_slot(a);
          if (!v.seen) {
            v.seen = true;
            em_.emit({Opcode::PutVariable, 0, s, j});
          } else {
            em_.emit({Opcode::PutValue, 0, s, j});
          }
          break;
        }
        case Kind::Atom:
        case Kind::Int:
        case Kind::Nil:
          em_.emit({Opcode::PutConstant, 0, 0, j, 0, const_cell(em_, a)});
          break;
        default: {
          Slot s = build_term(a);
          em_.emit({Opcode::PutValue, 0, s, j});
          break;
        }
      }
    }
    SymId name = em_.prog.syms.intern(g->name);
    if (tail) {
      if (needs_env_) em_.emit({Opcode::Deallocate});
      CodeAddr at = em_.emit({Opcode::Execute, 0, -1, arity});
      em_.fixups.push_back({at, name, arity});
    } else {
      CodeAddr at = em_.emit({Opcode::Call, 0, -1, arity});
      em_.fixups.push_back({at, name, arity});
    }
  }

  void compile_builtin(const TermPtr& g) {
    if (g->kind == Kind::Atom) {
      if (g->name == "true") return;
      if (g->name == "fail") {
        em_.emit({Opcode::FailOp});
        return;
      }
      if (g->name == "!") {
        em_.emit({use_neck_cut_ ? Opcode::NeckCut : Opcode::Cut});
        return;
      }
    }
    const std::string& op = g->name;
    if (op == "is") {
      compile_is(g->args[0], g->args[1]);
      return;
    }
    if (op == "=") {
      Slot l = term_operand(g->args[0]);
      Slot r = term_operand(g->args[1]);
      em_.emit({Opcode::UnifySlots, 0, l, r});
      return;
    }
    Opcode cmp;
    if (op == "<") cmp = Opcode::CmpLt;
    else if (op == "=<") cmp = Opcode::CmpLe;
    else if (op == ">") cmp = Opcode::CmpGt;
    else if (op == ">=") cmp = Opcode::CmpGe;
    else if (op == "=:=") cmp = Opcode::CmpEq;
    else if (op == "=\\=") cmp = Opcode::CmpNe;
    else fail("unsupported builtin " + ast::to_string(g));
    Operand l = arith_operand(g->args[0]);
    Operand r = arith_operand(g->args[1]);
    uint8_t flags = (l.imm ? kImmB : 0) | (r.imm ? kImmC : 0);
    em_.emit({cmp, flags, 0, l.slot_or_value, r.slot_or_value});
  }

  void compile_is(const TermPtr& lhs, const TermPtr& rhs) {
    Slot result;
    if (rhs->kind == Kind::Struct) {
      result = arith_operand(rhs).slot_or_value;
    } else {
      Operand src = arith_operand(rhs);
      result = alloc_temp();
      em_.emit({Opcode::EvalIs, static_cast<uint8_t>(src.imm ? kImmB : 0), result,
                src.slot_or_value});
    }
    if (lhs->kind == Kind::Var) {
      VarInfo& v = var(lhs);
      Slot s = var_slot(lhs);
      if (!v.seen) {
        v.seen = true;
        em_.emit({Opcode::GetVariable, 0, s, result});
      } else {
        em_.emit({Opcode::UnifySlots, 0, s, result});
      }
      return;
    }
    Slot l = term_operand(lhs);
    em_.emit({Opcode::UnifySlots, 0, l, result});
  }

  Slot term_operand(const TermPtr& t) {
    if (t->kind == Kind::Var) return build_term(t);
    if (is_const(t)) {
      Slot s = alloc_temp();
      em_.emit({Opcode::PutConstant, 0, 0, s, 0, const_cell(em_, t)});
      return s;
    }
    return build_term(t);
  }

 public:
  void set_query_meta(int32_t idx) { query_meta_index_ = idx; }

 private:
  Emitter& em_;
  const SourceClause& clause_;
  bool query_;
  std::map<std::string, VarInfo> vars_;
  std::vector<std::pair<std::string, int>> query_var_slots_;
  size_t perm_count_ = 0;
  bool needs_env_ = false;
  bool use_neck_cut_ = false;
  int x_base_ = 0;
  int next_x_ = 0;
  int32_t query_meta_index_ = 0;
};

struct HeadKey {
  enum class K { Var, Atom, Int, Nil, List, Struct } kind;
  SymId sym = 0;
  int64_t value = 0;
  int32_t arity = 0;
};

HeadKey first_arg_key(Program& prog, const TermPtr& head) {
  const TermPtr& a = head->args[0];
  switch (a->kind) {
    case Kind::Var: return {HeadKey::K::Var};
    case Kind::Atom: return {HeadKey::K::Atom, prog.syms.intern(a->name)};
    case Kind::Int: return {HeadKey::K::Int, 0, a->value};
    case Kind::Nil: return {HeadKey::K::Nil};
    case Kind::List: return {HeadKey::K::List};
    case Kind::Struct:
      return {HeadKey::K::Struct, prog.syms.intern(a->name), 0,
              static_cast<int32_t>(a->args.size())};
  }
  return {HeadKey::K::Var};
}

// Emits a try/retry/trust chain for the given clause addresses (or a
// direct entry when only one clause matches). Chains are shared between
// buckets that select the same clause sequence.
class ChainBuilder {
 public:
  ChainBuilder(Emitter& em, int32_t pred_index) : em_(em), pred_(pred_index) {}

  CodeAddr chain(const std::vector<CodeAddr>& clauses) {
    if (clauses.empty()) return kNoCode;
    if (clauses.size() == 1) return clauses[0];
    auto it = cache_.find(clauses);
    if (it != cache_.end()) return it->second;
    CodeAddr start = em_.prog.code.size();
    em_.emit({Opcode::Try, 0, clauses[0], 0, em_.prog.preds[static_cast<size_t>(pred_)].arity});
    for (size_t i = 1; i + 1 < clauses.size(); ++i)
      em_.emit({Opcode::Retry, 0, clauses[i], pred_});
    em_.emit({Opcode::Trust, 0, clauses.back(), pred_});
    cache_.emplace(clauses, start);
    return start;
  }

 private:
  Emitter& em_;
  int32_t pred_;
  std::map<std::vector<CodeAddr>, CodeAddr> cache_;
};

}  // namespace

Program link_program(const ast::ParsedProgram& parsed) {
  Program prog;
  prog.initialization = parsed.initialization ? std::optional(parsed.initialization) : std::nullopt;
  Emitter em{prog};

  // address 0 is the halt continuation for queries
  prog.code.emit({Opcode::Halt});

  // group clauses by predicate in source order of first appearance
  std::vector<std::pair<int64_t, std::vector<const SourceClause*>>> groups;
  std::unordered_map<int64_t, size_t> group_index;
  for (const auto& c : parsed.clauses) {
    SymId name = prog.syms.intern(c.head->name.empty() ? "[]" : c.head->name);
    int32_t arity =
        c.head->kind == ast::Kind::Struct ? static_cast<int32_t>(c.head->args.size()) : 0;
    int64_t key = Program::key(name, arity);
    auto it = group_index.find(key);
    if (it == group_index.end()) {
      group_index.emplace(key, groups.size());
      groups.push_back({key, {&c}});
    } else {
      groups[it->second].second.push_back(&c);
    }
  }

  // pass 1: compile clause bodies
  for (auto& [key, clauses] : groups) {
    PredicateEntry pred;
    pred.name = static_cast<SymId>(key >> 16);
    pred.arity = static_cast<int32_t>(key & 0xffff);
    for (const auto* c : clauses) {
      ClauseCompiler cc(em, *c, false);
      pred.clause_addrs.push_back(cc.compile());
    }
    prog.pred_index.emplace(key, static_cast<int32_t>(prog.preds.size()));
    prog.preds.push_back(std::move(pred));
  }

  // pass 2: first-argument indexing and entry points
  for (size_t pi = 0; pi < prog.preds.size(); ++pi) {
    PredicateEntry& pred = prog.preds[pi];
    const auto& clauses = groups[pi].second;
    if (pred.clause_addrs.size() == 1) {
      pred.entry = pred.clause_addrs[0];
      continue;
    }
    ChainBuilder chains(em, static_cast<int32_t>(pi));
    if (pred.arity == 0) {
      pred.entry = chains.chain(pred.clause_addrs);
      continue;
    }
    std::vector<HeadKey> keys;
    for (const auto* c : clauses) keys.push_back(first_arg_key(prog, c->head));

    auto bucket = [&](auto&& match) {
      std::vector<CodeAddr> out;
      for (size_t i = 0; i < keys.size(); ++i)
        if (keys[i].kind == HeadKey::K::Var || match(keys[i]))
          out.push_back(pred.clause_addrs[i]);
      return out;
    };
    std::vector<CodeAddr> var_chain_clauses = pred.clause_addrs;
    std::vector<CodeAddr> var_only = bucket([](const HeadKey&) { return false; });

    // the switch comes first so the entry address is the switch itself
    CodeAddr switch_at = em.emit({Opcode::SwitchOnTerm, 0, -1, 0});
    SwitchTable table;
    table.on_var = chains.chain(var_chain_clauses);
    table.on_nil = chains.chain(bucket([](const HeadKey& k) { return k.kind == HeadKey::K::Nil; }));
    table.on_list =
        chains.chain(bucket([](const HeadKey& k) { return k.kind == HeadKey::K::List; }));
    std::set<int64_t> int_keys;
    std::set<SymId> atom_keys;
    std::set<std::pair<SymId, int32_t>> struct_keys;
    for (const auto& k : keys) {
      if (k.kind == HeadKey::K::Int) int_keys.insert(k.value);
      if (k.kind == HeadKey::K::Atom) atom_keys.insert(k.sym);
      if (k.kind == HeadKey::K::Struct) struct_keys.insert({k.sym, k.arity});
    }
    for (int64_t v : int_keys)
      table.on_int[v] = chains.chain(
          bucket([&](const HeadKey& k) { return k.kind == HeadKey::K::Int && k.value == v; }));
    for (SymId s : atom_keys)
      table.on_atom[s] = chains.chain(
          bucket([&](const HeadKey& k) { return k.kind == HeadKey::K::Atom && k.sym == s; }));
    for (auto [s, n] : struct_keys)
      table.on_struct[{s, n}] = chains.chain(bucket([&](const HeadKey& k) {
        return k.kind == HeadKey::K::Struct && k.sym == s && k.arity == n;
      }));
    // keys absent from the tables fall back to the var-headed clauses
    table.miss = chains.chain(var_only);
    pred.switch_table = static_cast<int32_t>(prog.code.switches.size());
    prog.code.switches.push_back(std::move(table));
    prog.code.code[static_cast<size_t>(switch_at)].a = pred.switch_table;
    pred.entry = switch_at;
  }

  // pass 3: resolve calls
  for (const auto& f : em.fixups) {
    int32_t idx = prog.find_pred(f.name, f.arity);
    if (idx < 0)
      throw CompileError{prog.syms.name(f.name) + "/" + std::to_string(f.arity) + " undefined"};
    prog.code.code[static_cast<size_t>(f.at)].a = idx;
  }
  return prog;
}

CodeAddr compile_query(Program& prog, const std::vector<ast::TermPtr>& goals) {
  Emitter em{prog};
  ast::SourceClause q{nullptr, goals};
  ClauseCompiler cc(em, q, true);
  cc.set_query_meta(static_cast<int32_t>(prog.queries.size()));
  CodeAddr entry = cc.compile();
  prog.queries.push_back({cc.query_vars()});
  for (const auto& f : em.fixups) {
    int32_t idx = prog.find_pred(f.name, f.arity);
    if (idx < 0)
      throw CompileError{prog.syms.name(f.name) + "/" + std::to_string(f.arity) + " undefined"};
    prog.code.code[static_cast<size_t>(f.at)].a = idx;
  }
  return entry;
}

}  // namespace tracewam
