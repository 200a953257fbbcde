#ifndef TRACEWAM_TERM_HPP
#define TRACEWAM_TERM_HPP

#include <cassert>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tracewam {

// Heap cell tags. Fun is the functor cell of a Struct and never appears
// as a term by itself.
enum class Tag : uint8_t { Ref = 0, Atom, Int, Struct, List, Nil, Fun };

using Addr = int64_t;
using SymId = int32_t;

constexpr Addr kNoAddr = -1;

// Bitmask over term tags, used by type-test edges and trace guards.
using TagSet = uint8_t;

constexpr TagSet tag_bit(Tag t) { return static_cast<TagSet>(1u << static_cast<unsigned>(t)); }
constexpr TagSet kRefBit = tag_bit(Tag::Ref);
constexpr TagSet kAtomBit = tag_bit(Tag::Atom);
constexpr TagSet kIntBit = tag_bit(Tag::Int);
constexpr TagSet kStructBit = tag_bit(Tag::Struct);
constexpr TagSet kListBit = tag_bit(Tag::List);
constexpr TagSet kNilBit = tag_bit(Tag::Nil);
constexpr TagSet kAnyTag = kRefBit | kAtomBit | kIntBit | kStructBit | kListBit | kNilBit;

std::string tagset_name(TagSet s);

struct Cell {
  Tag tag = Tag::Nil;
  int32_t arity = 0;  // Fun cells only
  int64_t val = 0;    // Ref/Struct/List: heap address; Atom/Fun: symbol; Int: value

  static Cell ref(Addr a) { return {Tag::Ref, 0, a}; }
  static Cell atom(SymId s) { return {Tag::Atom, 0, s}; }
  static Cell integer(int64_t v) { return {Tag::Int, 0, v}; }
  static Cell strct(Addr a) { return {Tag::Struct, 0, a}; }
  static Cell list(Addr a) { return {Tag::List, 0, a}; }
  static Cell nil() { return {Tag::Nil, 0, 0}; }
  static Cell fun(SymId s, int32_t n) { return {Tag::Fun, n, s}; }

  Addr addr() const { return val; }
  SymId sym() const { return static_cast<SymId>(val); }
};

class SymbolTable {
 public:
  SymId intern(std::string_view name);
  const std::string& name(SymId id) const { return names_.at(static_cast<size_t>(id)); }
  size_t size() const { return names_.size(); }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, SymId> ids_;
};

class Heap {
 public:
  explicit Heap(size_t capacity_cells) : cells_(capacity_cells) {}

  size_t capacity() const { return cells_.size(); }
  Addr top() const { return h_; }
  bool has_room(size_t n) const { return static_cast<size_t>(h_) + n <= cells_.size(); }

  Cell& at(Addr a) {
    assert(a >= 0 && a < h_);
    return cells_[static_cast<size_t>(a)];
  }
  const Cell& at(Addr a) const {
    assert(a >= 0 && a < h_);
    return cells_[static_cast<size_t>(a)];
  }

  // Caller must have checked has_room (GC_CHECK blocks do).
  Addr push(Cell c) {
    assert(has_room(1));
    cells_[static_cast<size_t>(h_)] = c;
    return h_++;
  }
  Addr new_unbound() {
    assert(has_room(1));
    cells_[static_cast<size_t>(h_)] = Cell::ref(h_);
    return h_++;
  }

  void truncate(Addr h) {
    assert(h >= 0 && h <= h_);
    h_ = h;
  }

  // Collector interface: replaces the cell store wholesale.
  std::vector<Cell>& raw() { return cells_; }
  void set_top(Addr h) { h_ = h; }

 private:
  std::vector<Cell> cells_;
  Addr h_ = 0;
};

class Trail {
 public:
  using Mark = size_t;

  void push(Addr a) { entries_.push_back(a); }
  size_t size() const { return entries_.size(); }
  Addr entry(size_t i) const { return entries_[i]; }

  // Checkpoint stack, nested strictly.
  Mark mark() {
    marks_.push_back(entries_.size());
    return entries_.size();
  }
  void undo_to_mark(Heap& heap, Mark m);

  // Machine-level undo: choice points carry raw sizes, nesting enforced
  // by the choice-point stack itself.
  void undo_to_size(Heap& heap, size_t n);

  // Collector interface: entries are rewritten when cells move.
  std::vector<Addr>& raw_entries() { return entries_; }

 private:
  std::vector<Addr> entries_;
  std::vector<size_t> marks_;
};

struct DerefResult {
  Cell cell;       // the end of the chain
  Addr addr;       // heap address of that cell, kNoAddr for immediates
  int steps;       // chain links walked
  bool unbound() const { return cell.tag == Tag::Ref; }
};

DerefResult deref_cell(const Heap& heap, Cell c);
Addr deref_addr(const Heap& heap, Addr a);

// var_addr must hold an unbound Ref. Records the binding on the trail.
void bind_value(Heap& heap, Trail& trail, Addr var_addr, Cell value);
void bind_addr(Heap& heap, Trail& trail, Addr var_addr, Addr target);

// Structural unification without occurs-check. On failure every binding
// made during the attempt is undone.
bool unify(Heap& heap, Trail& trail, Cell a, Cell b);
bool unify_addrs(Heap& heap, Trail& trail, Addr a, Addr b);

// Canonical text of the term rooted at c; unbound variables print as
// _A, _B, ... in order of first appearance (the map persists across
// calls so one solution shares names between bindings).
std::string format_term(const Heap& heap, const SymbolTable& syms, Cell c,
                        std::unordered_map<Addr, std::string>* var_names = nullptr);

}  // namespace tracewam

#endif
