#ifndef TRACEWAM_BENCH_HPP
#define TRACEWAM_BENCH_HPP

#include <string>
#include <utility>
#include <vector>

#include "tracewam/machine.hpp"
#include "tracewam/stats.hpp"

namespace tracewam {

enum class BenchMode { DefaultOnly = 0, SpecNoMutability, SpecWithMutability };

const char* bench_mode_name(BenchMode m);

struct BenchmarkSpec {
  std::string name;
  std::string source;   // program text, scale already applied
  std::string goal;     // entry goal handed to the query compiler
  int64_t scale = 1;    // documented workload parameter
  int reps = 10;
};

struct BenchResult {
  std::string name;
  BenchMode mode = BenchMode::DefaultOnly;
  TimingBreakdown mean;  // mean per repetition
  RunStats stats;        // counts aggregated over repetitions
  double mean_total = 0.0;
  double speedup = 1.0;
  double improvement = 0.0;
};

struct BenchError {
  std::string message;
  std::string diff;  // expected-vs-actual answer diff, when applicable
};

// The Table-1 programs expressible in the language subset, at desk scale.
const std::vector<BenchmarkSpec>& benchmark_suite();
const BenchmarkSpec* find_benchmark(const std::string& name);

// Executes spec.reps repetitions sequentially and returns the mean
// breakdown with aggregate counts. Answers are checked against the
// DEFAULT_ONLY oracle for the same spec; a mismatch throws BenchError.
std::pair<TimingBreakdown, RunStats> run_benchmark(const BenchmarkSpec& spec, BenchMode mode,
                                                   MachineOptions base);

// Speedup = old_runtime / new_runtime. Throws BenchError on non-positive
// input.
double compute_speedup(double old_time, double new_time);

// Improvement = (Speedup - 1) * 100.
double compute_improvement(double speedup);

// Runs the named benchmarks (all when names is empty) under the given
// modes, computing speedup/improvement against each program's
// DEFAULT_ONLY row.
std::vector<BenchResult> run_suite(const std::vector<std::string>& names,
                                   const std::vector<BenchMode>& modes, MachineOptions base,
                                   int reps_override = 0);

// Fixed 17-column schema; one row per (benchmark, mode); floats printed
// with 4 decimal places.
extern const char* const kCsvHeader;
std::string emit_stats_csv(const std::vector<BenchResult>& results);

}  // namespace tracewam

#endif
