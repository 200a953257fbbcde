#ifndef TRACEWAM_BYTECODE_HPP
#define TRACEWAM_BYTECODE_HPP

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "tracewam/term.hpp"

namespace tracewam {

using CodeAddr = int32_t;
constexpr CodeAddr kNoCode = -1;

enum class Opcode : uint8_t {
  Halt = 0,
  // head matching
  GetVariable,   // a=dst slot, b=src slot
  GetValue,      // a=slot, b=arg slot
  GetConstant,   // k=constant, b=arg slot
  GetStructure,  // a=functor sym, b=arg slot, c=arity
  GetList,       // b=arg slot
  UnifyVariable, // a=slot
  UnifyValue,    // a=slot
  UnifyConstant, // k=constant
  // goal argument loading
  PutVariable,   // a=slot, b=arg slot
  PutValue,      // a=slot, b=arg slot
  PutConstant,   // k=constant, b=arg slot
  PutStructure,  // a=functor sym, b=arg slot, c=arity
  PutList,       // b=arg slot
  // control
  Call,          // a=predicate index, b=arity
  Execute,       // a=predicate index, b=arity
  Proceed,
  Allocate,      // a=slot count
  Deallocate,
  Cut,           // env barrier
  NeckCut,       // env-less barrier (B0)
  // clause selection
  Try,           // a=clause addr
  Retry,         // a=clause addr, b=predicate index
  Trust,         // a=clause addr, b=predicate index
  SwitchOnTerm,  // a=switch table index, b=first-arg slot
  // builtins
  CmpLt,         // operand slots/immediates in a/b + flags
  CmpLe,
  CmpGt,
  CmpGe,
  CmpEq,
  CmpNe,
  ArithAdd,      // a=dst slot, b=src1, c=src2
  ArithSub,
  ArithMul,
  ArithDiv,
  ArithMod,
  EvalIs,        // a=dst slot, b=src operand
  UnifySlots,    // a=slot, b=slot
  FailOp,
  SucceedQuery,  // a=query meta index
};

const char* opcode_name(Opcode op);

// Operand immediacy flags: bit0 -> b is an immediate integer,
// bit1 -> c is an immediate integer.
constexpr uint8_t kImmB = 1;
constexpr uint8_t kImmC = 2;

// Register slot encoding: non-negative values are X registers (argument
// registers are X1..Xn, slot i holds Xi+1), negative values are
// environment slots (Y{-1-v}).
using Slot = int32_t;
constexpr Slot yslot(int i) { return -1 - i; }
constexpr bool is_yslot(Slot s) { return s < 0; }
constexpr int yindex(Slot s) { return -1 - s; }

struct Instr {
  Opcode op = Opcode::Halt;
  uint8_t flags = 0;
  int32_t a = 0;
  int32_t b = 0;
  int32_t c = 0;
  Cell k = Cell::nil();
};

struct SwitchTable {
  CodeAddr on_var = kNoCode;
  CodeAddr on_nil = kNoCode;
  CodeAddr on_list = kNoCode;
  std::unordered_map<int64_t, CodeAddr> on_int;
  std::unordered_map<SymId, CodeAddr> on_atom;
  std::map<std::pair<SymId, int32_t>, CodeAddr> on_struct;
  CodeAddr miss = kNoCode;  // constant/functor keys absent from the tables
};

struct CodeArea {
  std::vector<Instr> code;
  std::vector<SwitchTable> switches;
  std::unordered_map<int32_t, CodeAddr> clause_labels;  // clause id -> addr

  CodeAddr size() const { return static_cast<CodeAddr>(code.size()); }
  CodeAddr emit(Instr i) {
    code.push_back(i);
    return size() - 1;
  }
  const Instr& at(CodeAddr a) const { return code[static_cast<size_t>(a)]; }
};

std::string instr_to_string(const Instr& i, const SymbolTable& syms);

}  // namespace tracewam

#endif
