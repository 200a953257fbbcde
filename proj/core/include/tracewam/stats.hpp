#ifndef TRACEWAM_STATS_HPP
#define TRACEWAM_STATS_HPP

#include <array>
#include <chrono>
#include <cstdint>
#include <string>

namespace tracewam {

// Exit reasons carried in the K register.
enum class ExitReason : uint8_t { ElementaryBlock = 0, GcException = 1 };

struct RunStats {
  int64_t dispatches = 0;
  int64_t head_entries = 0;
  int64_t type_test_evals = 0;   // TYPE_TEST block bodies executed (either emulator)
  int64_t guard_evals = 0;       // tag-guard micro-ops executed (GC checks excluded)
  int64_t gc_check_evals = 0;
  int64_t mark_calls = 0;
  int64_t side_exits_elementary = 0;
  int64_t side_exits_gc = 0;
  int64_t rebuilds = 0;
  int64_t installs = 0;
  int64_t reclamations = 0;
  int64_t reclamations_in_semulator = 0;
  int64_t semulator_entries = 0;
  int64_t semulator_gc_resumes = 0;
  std::string solutions;  // canonical answer text, newline separated

  void add_counts(const RunStats& o) {
    dispatches += o.dispatches;
    head_entries += o.head_entries;
    type_test_evals += o.type_test_evals;
    guard_evals += o.guard_evals;
    gc_check_evals += o.gc_check_evals;
    mark_calls += o.mark_calls;
    side_exits_elementary += o.side_exits_elementary;
    side_exits_gc += o.side_exits_gc;
    rebuilds += o.rebuilds;
    installs += o.installs;
    reclamations += o.reclamations;
    reclamations_in_semulator += o.reclamations_in_semulator;
    semulator_entries += o.semulator_entries;
    semulator_gc_resumes += o.semulator_gc_resumes;
  }
};

enum class Component : uint8_t {
  DefaultEmulator = 0,
  Overflow,
  GarbageCollector,
  MonitorTraceBuilder,
  TraceCompiler,
  SEmulator,
};

constexpr int kComponentCount = 6;

struct TimingBreakdown {
  std::array<double, kComponentCount> seconds{};  // indexed by Component

  double& operator[](Component c) { return seconds[static_cast<size_t>(c)]; }
  double operator[](Component c) const { return seconds[static_cast<size_t>(c)]; }
  double total() const {
    double t = 0;
    for (double s : seconds) t += s;
    return t;
  }
  void add(const TimingBreakdown& o) {
    for (int i = 0; i < kComponentCount; ++i) seconds[static_cast<size_t>(i)] += o.seconds[static_cast<size_t>(i)];
  }
  void scale(double f) {
    for (double& s : seconds) s *= f;
  }
};

// Attributes wall time to the currently active component. Time telescopes:
// the component sums equal the stop-start interval exactly.
class ComponentClock {
 public:
  void start(Component initial) {
    cur_ = initial;
    last_ = Clock::now();
    running_ = true;
  }
  Component switch_to(Component c) {
    if (!running_) return cur_;
    flush();
    Component prev = cur_;
    cur_ = c;
    return prev;
  }
  void stop() {
    if (!running_) return;
    flush();
    running_ = false;
  }
  const TimingBreakdown& breakdown() const { return acc_; }
  bool running() const { return running_; }

 private:
  using Clock = std::chrono::steady_clock;
  void flush() {
    auto now = Clock::now();
    acc_[cur_] += std::chrono::duration<double>(now - last_).count();
    last_ = now;
  }
  Clock::time_point last_{};
  Component cur_ = Component::DefaultEmulator;
  TimingBreakdown acc_{};
  bool running_ = false;
};

class ComponentScope {
 public:
  ComponentScope(ComponentClock& clock, Component c) : clock_(clock) {
    prev_ = clock_.switch_to(c);
  }
  ~ComponentScope() { clock_.switch_to(prev_); }
  ComponentScope(const ComponentScope&) = delete;
  ComponentScope& operator=(const ComponentScope&) = delete;

 private:
  ComponentClock& clock_;
  Component prev_;
};

}  // namespace tracewam

#endif
