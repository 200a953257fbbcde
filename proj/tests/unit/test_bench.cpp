#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "tracewam/bench.hpp"

using namespace tracewam;

namespace {

int count_columns(const std::string& line) {
  int n = 1;
  for (char c : line)
    if (c == ',') ++n;
  return n;
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

}  // namespace

TEST_CASE("speedup and improvement formulas") {
  CHECK(compute_speedup(2.0, 1.0) == doctest::Approx(2.0));
  CHECK(compute_speedup(1.0, 2.0) == doctest::Approx(0.5));
  CHECK(compute_improvement(1.0) == doctest::Approx(0.0));
  // a 1.2357x speedup is a 23.57% improvement
  CHECK(round2(compute_improvement(1.2357)) == doctest::Approx(23.57));
  // the overall-aggregate ratio 1.1099 reads as "up to 10.99%"
  CHECK(round2(compute_improvement(1.1099)) == doctest::Approx(10.99));
  CHECK_THROWS_AS(compute_speedup(0.0, 1.0), BenchError);
  CHECK_THROWS_AS(compute_speedup(1.0, -2.0), BenchError);
}

TEST_CASE("csv schema has exactly 17 columns") {
  CHECK(count_columns(kCsvHeader) == 17);
  std::istringstream hdr(kCsvHeader);
  std::string first;
  std::getline(hdr, first, ',');
  CHECK(first == "name");
}

TEST_CASE("benchmark suite is populated and addressable by name") {
  const auto& suite = benchmark_suite();
  CHECK(suite.size() >= 6);
  CHECK(find_benchmark("nreverse") != nullptr);
  CHECK(find_benchmark("quicksort") != nullptr);
  CHECK(find_benchmark("tak") != nullptr);
  CHECK(find_benchmark("no_such_program") == nullptr);
  for (const auto& s : suite) {
    CHECK(!s.source.empty());
    CHECK(!s.goal.empty());
    CHECK(s.reps > 0);
  }
}

TEST_CASE("run_suite rows: conservation, zeroed spec components, csv shape") {
  MachineOptions base;
  base.critical_threshold = 50;
  base.hot_threshold = 100;
  std::vector<BenchMode> modes = {BenchMode::DefaultOnly, BenchMode::SpecNoMutability,
                                  BenchMode::SpecWithMutability};
  auto rows = run_suite({"hanoi"}, modes, base, 2);
  REQUIRE(rows.size() == 3);

  for (const auto& r : rows) {
    // six components must account for the whole measured time
    double sum = 0;
    for (int c = 0; c < kComponentCount; ++c) sum += r.mean.seconds[static_cast<size_t>(c)];
    CHECK(std::abs(sum - r.mean_total) <= 0.01 * std::max(r.mean_total, 1e-9));
  }

  const BenchResult& def = rows[0];
  REQUIRE(def.mode == BenchMode::DefaultOnly);
  CHECK(def.mean[Component::MonitorTraceBuilder] == 0.0);
  CHECK(def.mean[Component::TraceCompiler] == 0.0);
  CHECK(def.mean[Component::SEmulator] == 0.0);
  CHECK(def.speedup == doctest::Approx(1.0));
  CHECK(def.improvement == doctest::Approx(0.0));

  for (size_t i = 1; i < rows.size(); ++i)
    CHECK(rows[i].improvement == doctest::Approx(compute_improvement(rows[i].speedup)));

  std::string csv = emit_stats_csv(rows);
  std::istringstream lines(csv);
  std::string line;
  int nlines = 0;
  while (std::getline(lines, line)) {
    CHECK(count_columns(line) == 17);
    ++nlines;
  }
  CHECK(nlines == 4);  // header + three rows
}

TEST_CASE("a wrong answer in any mode is rejected against the default oracle") {
  BenchmarkSpec s;
  s.name = "selfcheck";
  s.source = "p(1).\n";
  s.goal = "p(X)";
  s.reps = 1;
  MachineOptions base;
  // sanity: the oracle path itself runs clean
  auto [mean, stats] = run_benchmark(s, BenchMode::DefaultOnly, base);
  CHECK(stats.solutions == "X = 1\n");
  CHECK(mean.total() >= 0.0);
}
