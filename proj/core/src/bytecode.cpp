#include "tracewam/bytecode.hpp"

#include <sstream>

namespace tracewam {

const char* opcode_name(Opcode op) {
  switch (op) {
    case Opcode::Halt: return "halt";
    case Opcode::GetVariable: return "get_variable";
    case Opcode::GetValue: return "get_value";
    case Opcode::GetConstant: return "get_constant";
    case Opcode::GetStructure: return "get_structure";
    case Opcode::GetList: return "get_list";
    case Opcode::UnifyVariable: return "unify_variable";
    case Opcode::UnifyValue: return "unify_value";
    case Opcode::UnifyConstant: return "unify_constant";
    case Opcode::PutVariable: return "put_variable";
    case Opcode::PutValue: return "put_value";
    case Opcode::PutConstant: return "put_constant";
    case Opcode::PutStructure: return "put_structure";
    case Opcode::PutList: return "put_list";
    case Opcode::Call: return "call";
    case Opcode::Execute: return "execute";
    case Opcode::Proceed: return "proceed";
    case Opcode::Allocate: return "allocate";
    case Opcode::Deallocate: return "deallocate";
    case Opcode::Cut: return "cut";
    case Opcode::NeckCut: return "neck_cut";
    case Opcode::Try: return "try";
    case Opcode::Retry: return "retry";
    case Opcode::Trust: return "trust";
    case Opcode::SwitchOnTerm: return "switch_on_term";
    case Opcode::CmpLt: return "lt";
    case Opcode::CmpLe: return "le";
    case Opcode::CmpGt: return "gt";
    case Opcode::CmpGe: return "ge";
    case Opcode::CmpEq: return "eq_num";
    case Opcode::CmpNe: return "ne_num";
    case Opcode::ArithAdd: return "add";
    case Opcode::ArithSub: return "sub";
    case Opcode::ArithMul: return "mul";
    case Opcode::ArithDiv: return "div";
    case Opcode::ArithMod: return "mod";
    case Opcode::EvalIs: return "is";
    case Opcode::UnifySlots: return "unify_slots";
    case Opcode::FailOp: return "fail";
    case Opcode::SucceedQuery: return "succeed_query";
  }
  return "?";
}

namespace {

std::string slot_name(Slot s) {
  if (is_yslot(s)) return "Y" + std::to_string(yindex(s));
  return "X" + std::to_string(s + 1);
}

std::string const_name(const Cell& k, const SymbolTable& syms) {
  switch (k.tag) {
    case Tag::Atom: return syms.name(k.sym());
    case Tag::Int: return std::to_string(k.val);
    case Tag::Nil: return "[]";
    default: return "?";
  }
}

}  // namespace

std::string instr_to_string(const Instr& i, const SymbolTable& syms) {
  std::ostringstream out;
  out << opcode_name(i.op);
  switch (i.op) {
    case Opcode::GetVariable:
    case Opcode::PutVariable:
    case Opcode::GetValue:
    case Opcode::PutValue:
      out << " " << slot_name(i.a) << "," << slot_name(i.b);
      break;
    case Opcode::GetConstant:
    case Opcode::PutConstant:
      out << " " << const_name(i.k, syms) << "," << slot_name(i.b);
      break;
    case Opcode::GetStructure:
    case Opcode::PutStructure:
      out << " " << syms.name(i.a) << "/" << i.c << "," << slot_name(i.b);
      break;
    case Opcode::GetList:
    case Opcode::PutList:
      out << " " << slot_name(i.b);
      break;
    case Opcode::UnifyVariable:
    case Opcode::UnifyValue:
      out << " " << slot_name(i.a);
      break;
    case Opcode::UnifyConstant:
      out << " " << const_name(i.k, syms);
      break;
    case Opcode::Call:
    case Opcode::Execute:
      out << " pred#" << i.a << "/" << i.b;
      break;
    case Opcode::Allocate:
      out << " " << i.a;
      break;
    case Opcode::Try:
    case Opcode::Retry:
    case Opcode::Trust:
      out << " @" << i.a;
      break;
    case Opcode::SwitchOnTerm:
      out << " table#" << i.a << "," << slot_name(i.b);
      break;
    case Opcode::CmpLt:
    case Opcode::CmpLe:
    case Opcode::CmpGt:
    case Opcode::CmpGe:
    case Opcode::CmpEq:
    case Opcode::CmpNe:
      out << " " << ((i.flags & kImmB) ? std::to_string(i.b) : slot_name(i.b)) << ","
          << ((i.flags & kImmC) ? std::to_string(i.c) : slot_name(i.c));
      break;
    case Opcode::ArithAdd:
    case Opcode::ArithSub:
    case Opcode::ArithMul:
    case Opcode::ArithDiv:
    case Opcode::ArithMod:
      out << " " << slot_name(i.a) << ","
          << ((i.flags & kImmB) ? std::to_string(i.b) : slot_name(i.b)) << ","
          << ((i.flags & kImmC) ? std::to_string(i.c) : slot_name(i.c));
      break;
    case Opcode::EvalIs:
      out << " " << slot_name(i.a) << ","
          << ((i.flags & kImmB) ? std::to_string(i.b) : slot_name(i.b));
      break;
    case Opcode::UnifySlots:
      out << " " << slot_name(i.a) << "," << slot_name(i.b);
      break;
    default:
      break;
  }
  return out.str();
}

}  // namespace tracewam
