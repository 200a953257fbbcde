#include "tracewam/term.hpp"

#include <sstream>

namespace tracewam {

std::string tagset_name(TagSet s) {
  static const char* names[] = {"ref", "atom", "int", "struct", "list", "nil"};
  std::string out;
  for (int i = 0; i < 6; ++i) {
    if (s & (1u << i)) {
      if (!out.empty()) out += "|";
      out += names[i];
    }
  }
  return out.empty() ? "none" : out;
}

SymId SymbolTable::intern(std::string_view name) {
  auto it = ids_.find(std::string(name));
  if (it != ids_.end()) return it->second;
  SymId id = static_cast<SymId>(names_.size());
  names_.emplace_back(name);
  ids_.emplace(names_.back(), id);
  return id;
}

void Trail::undo_to_mark(Heap& heap, Mark m) {
  assert(!marks_.empty() && marks_.back() == m && "stale trail mark");
  marks_.pop_back();
  undo_to_size(heap, m);
}

void Trail::undo_to_size(Heap& heap, size_t n) {
  assert(n <= entries_.size());
  while (entries_.size() > n) {
    Addr a = entries_.back();
    entries_.pop_back();
    heap.at(a) = Cell::ref(a);
  }
}

DerefResult deref_cell(const Heap& heap, Cell c) {
  Addr at = kNoAddr;
  int steps = 0;
  while (c.tag == Tag::Ref) {
    Addr a = c.addr();
    const Cell& target = heap.at(a);
    if (target.tag == Tag::Ref && target.addr() == a) return {target, a, steps};
    c = target;
    at = a;
    ++steps;
  }
  return {c, at, steps};
}

Addr deref_addr(const Heap& heap, Addr a) {
  for (;;) {
    const Cell& c = heap.at(a);
    if (c.tag != Tag::Ref) return a;
    if (c.addr() == a) return a;
    a = c.addr();
  }
}

void bind_value(Heap& heap, Trail& trail, Addr var_addr, Cell value) {
  Cell& slot = heap.at(var_addr);
  assert(slot.tag == Tag::Ref && slot.addr() == var_addr && "binding a non-variable");
  slot = value;
  trail.push(var_addr);
}

void bind_addr(Heap& heap, Trail& trail, Addr var_addr, Addr target) {
  bind_value(heap, trail, var_addr, Cell::ref(target));
}

namespace {

// One unification step over dereferenced cells; pushes subterm pairs.
bool unify_step(Heap& heap, Trail& trail, std::vector<std::pair<Cell, Cell>>& work, Cell a,
                Cell b) {
  DerefResult da = deref_cell(heap, a);
  DerefResult db = deref_cell(heap, b);
  if (da.unbound() && db.unbound()) {
    if (da.addr == db.addr) return true;
    // bind the younger variable to the older one
    if (da.addr > db.addr)
      bind_addr(heap, trail, da.addr, db.addr);
    else
      bind_addr(heap, trail, db.addr, da.addr);
    return true;
  }
  if (da.unbound()) {
    bind_value(heap, trail, da.addr, db.cell);
    return true;
  }
  if (db.unbound()) {
    bind_value(heap, trail, db.addr, da.cell);
    return true;
  }
  if (da.cell.tag != db.cell.tag) return false;
  switch (da.cell.tag) {
    case Tag::Atom:
      return da.cell.sym() == db.cell.sym();
    case Tag::Int:
      return da.cell.val == db.cell.val;
    case Tag::Nil:
      return true;
    case Tag::List:
      // compare through Ref wrappers so unbound subterms bind in place
      work.push_back({Cell::ref(da.cell.addr()), Cell::ref(db.cell.addr())});
      work.push_back({Cell::ref(da.cell.addr() + 1), Cell::ref(db.cell.addr() + 1)});
      return true;
    case Tag::Struct: {
      const Cell& fa = heap.at(da.cell.addr());
      const Cell& fb = heap.at(db.cell.addr());
      if (fa.sym() != fb.sym() || fa.arity != fb.arity) return false;
      for (int32_t i = 1; i <= fa.arity; ++i)
        work.push_back({Cell::ref(da.cell.addr() + i), Cell::ref(db.cell.addr() + i)});
      return true;
    }
    default:
      return false;
  }
}

}  // namespace

bool unify(Heap& heap, Trail& trail, Cell a, Cell b) {
  size_t undo = trail.size();
  std::vector<std::pair<Cell, Cell>> work;
  work.push_back({a, b});
  while (!work.empty()) {
    auto [x, y] = work.back();
    work.pop_back();
    if (!unify_step(heap, trail, work, x, y)) {
      trail.undo_to_size(heap, undo);
      return false;
    }
  }
  return true;
}

bool unify_addrs(Heap& heap, Trail& trail, Addr a, Addr b) {
  return unify(heap, trail, Cell::ref(a), Cell::ref(b));
}

namespace {

void format_rec(const Heap& heap, const SymbolTable& syms, Cell c, std::ostringstream& out,
                std::unordered_map<Addr, std::string>& vars) {
  DerefResult d = deref_cell(heap, c);
  if (d.unbound()) {
    auto it = vars.find(d.addr);
    if (it == vars.end()) {
      std::string name = "_";
      size_t n = vars.size();
      do {
        name += static_cast<char>('A' + n % 26);
        n /= 26;
      } while (n > 0);
      it = vars.emplace(d.addr, name).first;
    }
    out << it->second;
    return;
  }
  switch (d.cell.tag) {
    case Tag::Atom:
      out << syms.name(d.cell.sym());
      break;
    case Tag::Int:
      out << d.cell.val;
      break;
    case Tag::Nil:
      out << "[]";
      break;
    case Tag::List: {
      out << "[";
      Cell cur = d.cell;
      bool first = true;
      for (;;) {
        if (!first) out << ",";
        first = false;
        format_rec(heap, syms, Cell::ref(cur.addr()), out, vars);
        DerefResult tail = deref_cell(heap, heap.at(cur.addr() + 1));
        if (tail.cell.tag == Tag::List) {
          cur = tail.cell;
          continue;
        }
        if (tail.cell.tag == Tag::Nil) break;
        out << "|";
        format_rec(heap, syms, tail.cell, out, vars);
        break;
      }
      out << "]";
      break;
    }
    case Tag::Struct: {
      const Cell& f = heap.at(d.cell.addr());
      out << syms.name(f.sym()) << "(";
      for (int32_t i = 1; i <= f.arity; ++i) {
        if (i > 1) out << ",";
        format_rec(heap, syms, Cell::ref(d.cell.addr() + i), out, vars);
      }
      out << ")";
      break;
    }
    default:
      out << "?";
      break;
  }
}

}  // namespace

std::string format_term(const Heap& heap, const SymbolTable& syms, Cell c,
                        std::unordered_map<Addr, std::string>* var_names) {
  std::ostringstream out;
  std::unordered_map<Addr, std::string> local;
  format_rec(heap, syms, c, out, var_names ? *var_names : local);
  return out.str();
}

}  // namespace tracewam
