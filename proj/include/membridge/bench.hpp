#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "membridge/memory_bridge.hpp"

namespace membridge {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double slope_stderr = 0.0;
  double slope_low = 0.0;   // 95% interval
  double slope_high = 0.0;
};

// Ordinary least squares y = intercept + slope * x over at least two points.
LinearFit fit_linear(const std::vector<double>& x, const std::vector<double>& y);
// Fit of log(y) against log(x); all values must be positive.
LinearFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y);

struct ScalingRecord {
  std::size_t frames = 0;
  std::size_t segments = 0;
  std::string phase;
  std::size_t bytes_peak = 0;
  double ms_median = 0.0;
};

struct BenchConfig {
  BridgeConfig bridge;
  std::size_t segment_length = 8;
  std::size_t repetitions = 5;
  double min_point_ms = 10.0;
  std::uint64_t seed = 0;
};

struct MemoryPoint {
  std::size_t frames = 0;
  std::size_t segments = 0;
  std::size_t peak_bytes = 0;      // live tensor bytes at peak, frames excluded
  std::size_t cache_bytes = 0;     // measured block storage
  std::size_t analytic_cache_bytes = 0;
  std::size_t probe_tokens = 0;
};

struct MemoryReport {
  std::vector<MemoryPoint> points;
  LinearFit peak_fit;   // peak bytes against K
  LinearFit cache_fit;  // cache bytes against K
  std::size_t bytes_per_segment = 0;  // M * d * sizeof(double)
};

struct TimePoint {
  std::size_t frames = 0;
  std::size_t segments = 0;
  double segmentation_ms = 0.0;
  double bridge_only_ms = 0.0;   // whole recurrence with retrieval disabled
  double retrieval_ms = 0.0;     // cumulative retrieval phase, retrieval enabled
  double bridge_ms = 0.0;        // bridge phase, retrieval enabled
  double total_ms = 0.0;         // whole recurrence with retrieval enabled
};

struct TimeReport {
  std::vector<TimePoint> points;
  LinearFit bridge_only_slope;
  LinearFit retrieval_slope;
  LinearFit total_slope;
};

// Streams of `lengths[i]` frames cut into segments of bench.segment_length.
MemoryReport measure_memory(const ParamStore& params, const std::vector<std::size_t>& lengths,
                            const BenchConfig& bench);
TimeReport measure_time(const ParamStore& params, const std::vector<std::size_t>& segment_counts,
                        const BenchConfig& bench);

std::vector<ScalingRecord> scaling_records(const MemoryReport& memory, const TimeReport& time);
void write_scaling_csv(const std::vector<ScalingRecord>& records, std::ostream& out);
void write_scaling_json(const MemoryReport& memory, const TimeReport& time, std::ostream& out);

}  // namespace membridge
