#include <doctest.h>

#include <cmath>
#include <sstream>

#include "membridge/bench.hpp"
#include "membridge/error.hpp"

using namespace membridge;

TEST_CASE("linear fits") {
  const LinearFit exact = fit_linear({1, 2, 3, 4}, {3, 5, 7, 9});
  CHECK(exact.slope == doctest::Approx(2.0));
  CHECK(exact.intercept == doctest::Approx(1.0));
  CHECK(exact.r2 == doctest::Approx(1.0));
  CHECK(exact.slope_stderr == doctest::Approx(0.0));

  // y = x + e with e = (+1, -1, -1, +1): slope 1.0 by symmetry.
  const LinearFit noisy = fit_linear({0, 1, 2, 3}, {1, 0, 1, 4});
  CHECK(noisy.slope == doctest::Approx(1.0));
  CHECK(noisy.slope_low < 1.0);
  CHECK(noisy.slope_high > 1.0);
  CHECK(noisy.r2 < 1.0);

  std::vector<double> x, y;
  for (double k : {4.0, 8.0, 16.0, 32.0, 64.0}) {
    x.push_back(k);
    y.push_back(0.3 * k * k);
  }
  CHECK(fit_loglog(x, y).slope == doctest::Approx(2.0));
  CHECK_THROWS_AS(fit_linear({1}, {1}), Error);
  CHECK_THROWS_AS(fit_loglog({1, 2}, {0, 1}), Error);
}

TEST_CASE("memory report: constant probe, linear cache") {
  BenchConfig bench;
  bench.bridge.hidden_size = 16;
  bench.bridge.memory_tokens = 4;
  bench.bridge.heads = 2;
  const ParamStore params = init_bridge_params(bench.bridge, 1);
  const MemoryReport r = measure_memory(params, {32, 40, 64, 128}, bench);
  REQUIRE(r.points.size() == 4);
  CHECK(r.bytes_per_segment == 4 * 16 * 8);
  CHECK(r.points[1].cache_bytes - r.points[0].cache_bytes == r.bytes_per_segment);
  for (const auto& p : r.points) {
    CHECK(p.probe_tokens == r.points.front().probe_tokens);
    CHECK(p.cache_bytes == p.analytic_cache_bytes);
    CHECK(p.segments == p.frames / 8);
    CHECK(p.peak_bytes >= p.cache_bytes);
  }
  CHECK(r.cache_fit.slope == doctest::Approx(static_cast<double>(r.bytes_per_segment)));
  CHECK(r.peak_fit.slope > 0.0);
}

TEST_CASE("time report and records") {
  BenchConfig bench;
  bench.bridge.hidden_size = 8;
  bench.bridge.memory_tokens = 2;
  bench.bridge.heads = 2;
  bench.repetitions = 1;
  bench.min_point_ms = 0.5;
  const ParamStore params = init_bridge_params(bench.bridge, 2);
  const TimeReport t = measure_time(params, {2, 4}, bench);
  REQUIRE(t.points.size() == 2);
  for (const auto& p : t.points) {
    CHECK(p.bridge_only_ms > 0.0);
    CHECK(p.retrieval_ms > 0.0);
    CHECK(p.total_ms >= p.retrieval_ms);
  }
  const MemoryReport m = measure_memory(params, {16, 32}, bench);
  const auto records = scaling_records(m, t);
  std::ostringstream csv;
  write_scaling_csv(records, csv);
  CHECK(csv.str().rfind("n,K,phase,bytes_peak,ms_median\n", 0) == 0);
  CHECK(csv.str().find(",retrieval,") != std::string::npos);
  std::ostringstream json;
  write_scaling_json(m, t, json);
  CHECK(json.str().find("\"retrieval_slope\"") != std::string::npos);
  CHECK_THROWS_AS(measure_time(params, {4, 2}, bench), Error);
}
