#include <cstdint>
#include <unordered_set>
#include <vector>

#include "tracewam/machine.hpp"

namespace tracewam {

namespace {

bool is_pointer_tag(Tag t) { return t == Tag::Ref || t == Tag::Struct || t == Tag::List; }

struct Collector {
  Machine& m;
  Addr h;
  std::vector<uint8_t> marked;
  std::vector<Addr> work;

  explicit Collector(Machine& mm) : m(mm), h(mm.heap_.top()), marked(static_cast<size_t>(h), 0) {}

  // Queues everything a pointer cell keeps alive: the referenced cell,
  // and for structures/lists the argument cells as well. The expansion
  // depends on the pointer's own tag, so it applies equally to heap
  // cells and to roots held outside the heap.
  void expand(const Cell& c) {
    switch (c.tag) {
      case Tag::Ref:
        work.push_back(c.addr());
        break;
      case Tag::Struct: {
        Addr fa = c.addr();
        work.push_back(fa);
        if (fa >= 0 && fa < h) {
          int32_t n = m.heap_.at(fa).arity;
          for (int32_t k = 1; k <= n; ++k) work.push_back(fa + k);
        }
        break;
      }
      case Tag::List:
        work.push_back(c.addr());
        work.push_back(c.addr() + 1);
        break;
      default:
        break;
    }
  }

  void drain() {
    while (!work.empty()) {
      Addr x = work.back();
      work.pop_back();
      if (x < 0 || x >= h || marked[static_cast<size_t>(x)]) continue;
      marked[static_cast<size_t>(x)] = 1;
      expand(m.heap_.at(x));
    }
  }

  void mark(Addr a) {
    work.push_back(a);
    drain();
  }

  // A root cell outside the heap. Cells pointing above the current top
  // are stale register/slot leftovers from a backtrack; they are dead by
  // construction and are neutralized rather than traced.
  void root(Cell& c) {
    if (!is_pointer_tag(c.tag)) return;
    if (c.addr() < 0 || c.addr() >= h) {
      c = Cell::nil();
      return;
    }
    expand(c);
    drain();
  }
};

}  // namespace

bool Machine::reclaim(int64_t need) {
  ComponentScope gcscope(clock_, Component::GarbageCollector);
  stats_.reclamations++;

  Collector col(*this);
  Addr h = col.h;


  // roots: argument/temporary registers
  for (auto& c : x_) col.root(c);

  // roots: live environment frames (current chain plus every choice
  // point's chain)
  std::unordered_set<int32_t> live_frames;
  auto walk_chain = [&](int32_t e) {
    while (e >= 0 && !live_frames.count(e)) {
      live_frames.insert(e);
      e = envs_[static_cast<size_t>(e)].prev;
    }
  };
  walk_chain(e_);
  for (auto& cp : cps_) walk_chain(cp.e);
  for (int32_t fi : live_frames)
    for (auto& c : envs_[static_cast<size_t>(fi)].y) col.root(c);

  // roots: choice point argument snapshots
  for (auto& cp : cps_)
    for (auto& c : cp.args) col.root(c);

  // roots: trailed bindings (their cells must survive so undo stays valid)
  for (Addr a : trail_.raw_entries()) col.mark(a);

  // exclusive prefix counts: fwd[a] = new address of cell a if marked
  std::vector<Addr> fwd(static_cast<size_t>(h) + 1);
  Addr live = 0;
  for (Addr a = 0; a < h; ++a) {
    fwd[static_cast<size_t>(a)] = live;
    if (col.marked[static_cast<size_t>(a)]) ++live;
  }
  fwd[static_cast<size_t>(h)] = live;

  // capacity policy: double while post-collection pressure exceeds 3/4
  // or the pending allocation still does not fit
  size_t cap = heap_.capacity();
  bool grew = false;
  while (static_cast<size_t>(live) * 4 > cap * 3 ||
         static_cast<size_t>(live) + static_cast<size_t>(need) > cap) {
    cap *= 2;
    grew = true;
    if (cap > opts_.max_heap_cells) {
      resource_error_ = true;
      return false;
    }
  }

  std::vector<Cell> fresh;
  {
    // growing the cell store is the overflow component; copying live
    // data in address order is the collector proper
    if (grew) {
      ComponentScope ov(clock_, Component::Overflow);
      fresh.resize(cap);
    } else {
      fresh.resize(cap);
    }
  }

  auto rewrite = [&](Cell& c) {
    if (is_pointer_tag(c.tag)) c.val = fwd[static_cast<size_t>(c.val)];
  };

  for (Addr a = 0; a < h; ++a) {
    if (!col.marked[static_cast<size_t>(a)]) continue;
    Cell c = heap_.at(a);
    rewrite(c);
    fresh[static_cast<size_t>(fwd[static_cast<size_t>(a)])] = c;
  }

  // rewrite every root to the new addresses
  for (auto& c : x_)
    if (is_pointer_tag(c.tag)) rewrite(c);
  for (int32_t fi : live_frames)
    for (auto& c : envs_[static_cast<size_t>(fi)].y)
      if (is_pointer_tag(c.tag)) rewrite(c);
  for (auto& cp : cps_) {
    for (auto& c : cp.args)
      if (is_pointer_tag(c.tag)) rewrite(c);
    cp.h = fwd[static_cast<size_t>(cp.h)];
  }
  for (Addr& a : trail_.raw_entries()) a = fwd[static_cast<size_t>(a)];

  heap_.raw().swap(fresh);
  heap_.set_top(live);
  return true;
}

}  // namespace tracewam
