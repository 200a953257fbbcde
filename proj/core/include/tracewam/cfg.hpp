#ifndef TRACEWAM_CFG_HPP
#define TRACEWAM_CFG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "tracewam/bytecode.hpp"
#include "tracewam/term.hpp"

namespace tracewam {

class Machine;

// Every emulator instruction is implemented as a small control-flow graph
// of basic blocks. The graphs are static per opcode and introspectable:
// the monitor marks executed blocks and edge labels, and the trace
// compiler prunes or retains blocks by kind.
enum class BlockKind : uint8_t {
  Plain,      // straight-line work or a value test
  TypeTest,   // tag dispatch on a dereferenced-so-far value
  DerefLoop,  // follows one reference link, loops back to its type test
  GcCheck,    // heap-room check at the entry of allocating instructions
  Choice,     // creates or updates a choice point
  Multiway,   // first-argument switch dispatch
};

const char* block_kind_name(BlockKind k);

// What a TYPE_TEST (or operand guard) examines.
enum class GuardSubject : uint8_t {
  None = 0,
  SlotB,      // register/environment slot named by instr.b
  OperandB,   // instr.b, honoring the kImmB immediate flag
  OperandC,   // instr.c, honoring the kImmC immediate flag
  SReg,       // the heap cell under the structure cursor S
  DirectSlot, // synthetic guard on an explicit register (trace entry checks)
};

// Side dataflow a synthesized guard must reproduce when the original
// TYPE_TEST block is pruned from a trace.
enum class GuardStore : uint8_t {
  Scratch = 0,  // dereferenced value left in the machine scratch slot
  NumLhs,       // integer value stored for the left comparison operand
  NumRhs,       // integer value stored for the right operand
};

struct BlockResult {
  enum class K : uint8_t { Edge, Next, Backtrack, GcNeeded } kind;
  int edge = 0;  // successor index within the block's edge list

  static BlockResult take(int e) { return {K::Edge, e}; }
  static BlockResult next() { return {K::Next, 0}; }
  static BlockResult fail() { return {K::Backtrack, 0}; }
  static BlockResult gc() { return {K::GcNeeded, 0}; }
};

using BlockFn = BlockResult (*)(Machine&, const Instr&);

// Edge targets are block indices within the same instruction CFG, or one
// of the sentinels below.
constexpr int kEdgeNext = -1;       // proceed to the next instruction
constexpr int kEdgeBacktrack = -2;  // unconditional failure edge

struct BlockEdge {
  const char* label;
  TagSet tags;  // tag labelling for type-test edges, 0 otherwise
  int target;   // block index, kEdgeNext, or kEdgeBacktrack
};

struct BasicBlock {
  BlockKind kind = BlockKind::Plain;
  const char* name = "";
  BlockFn fn = nullptr;
  std::vector<BlockEdge> edges;
  GuardSubject subject = GuardSubject::None;  // TYPE_TEST blocks only
  GuardStore store = GuardStore::Scratch;     // TYPE_TEST blocks only
  int paired_test = -1;       // DEREF_LOOP: index of the TYPE_TEST it serves
  bool trace_determined = false;  // outcome fixed by the recorded trace
                                  // (mode checks); prunable without a guard
  bool may_bind = false;  // executing this block can bind existing heap cells
};

struct InstructionCFG {
  Opcode op = Opcode::Halt;
  int entry = 0;
  std::vector<BasicBlock> blocks;

  int count(BlockKind k) const {
    int n = 0;
    for (const auto& b : blocks)
      if (b.kind == k) ++n;
    return n;
  }
};

// Static, shared metadata for an opcode's basic-block graph.
const InstructionCFG& instruction_metadata(Opcode op);

// True when executing the instruction can bind heap cells.
bool opcode_may_bind(Opcode op);

// Register slots overwritten by the instruction (used for guard-elision
// dataflow in the trace compiler).
std::vector<Slot> slots_written(const Instr& i);

// Human-readable CFG dump for one opcode.
std::string cfg_to_string(Opcode op);

}  // namespace tracewam

#endif
