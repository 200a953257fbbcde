#ifndef TRACEWAM_PROGRAM_HPP
#define TRACEWAM_PROGRAM_HPP

#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tracewam/ast.hpp"
#include "tracewam/bytecode.hpp"
#include "tracewam/term.hpp"

namespace tracewam {

struct SEmulator;

enum class PredState : uint8_t { Cold, Critical, Hot };

struct PredicateEntry {
  SymId name = 0;
  int32_t arity = 0;
  std::vector<CodeAddr> clause_addrs;
  CodeAddr entry = kNoCode;
  int32_t switch_table = -1;  // -1 when unindexed

  // specialization lifecycle
  int64_t call_counter = 0;
  PredState state = PredState::Cold;
  std::shared_ptr<SEmulator> semulator;
  int32_t generation = 0;
  int32_t rebuild_count = 0;
  bool rebuild_pending = false;
  bool pinned_default = false;     // permanent demotion
  int64_t blacklist_until = 0;     // counter value before retrying specialization

  std::string spec_name(const SymbolTable& syms) const {
    return syms.name(name) + "/" + std::to_string(arity);
  }
};

struct QueryMeta {
  std::vector<std::pair<std::string, int>> vars;  // name -> Y slot
};

struct Program {
  SymbolTable syms;
  CodeArea code;
  std::vector<PredicateEntry> preds;
  std::unordered_map<int64_t, int32_t> pred_index;  // key(sym, arity) -> index
  std::vector<QueryMeta> queries;
  std::optional<ast::TermPtr> initialization;

  static int64_t key(SymId s, int32_t arity) { return (static_cast<int64_t>(s) << 16) | arity; }

  int32_t find_pred(SymId s, int32_t arity) const {
    auto it = pred_index.find(key(s, arity));
    return it == pred_index.end() ? -1 : it->second;
  }
};

struct CompileError {
  std::string message;
};

// Compiles and links a parsed program: clause code, first-argument
// indexes, predicate table with all entries Cold and counters zeroed.
Program link_program(const ast::ParsedProgram& parsed);

// Appends query code for the given goal conjunction; returns its entry
// address. Query variables are listed in the program's QueryMeta.
CodeAddr compile_query(Program& prog, const std::vector<ast::TermPtr>& goals);

}  // namespace tracewam

#endif
