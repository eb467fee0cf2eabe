#include "membridge/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>

#include <json.hpp>

#include "membridge/error.hpp"
#include "membridge/probe_train.hpp"
#include "membridge/tracking.hpp"

namespace membridge {

namespace {

using Clock = std::chrono::steady_clock;

// Two-sided 97.5% Student t quantiles for 1..30 degrees of freedom.
double t_quantile(std::size_t dof) {
  static const double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306,
                                 2.262,  2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
                                 2.110,  2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
                                 2.060,  2.056, 2.052, 2.048, 2.045, 2.042};
  if (dof == 0) return 0.0;
  return dof <= 30 ? table[dof - 1] : 1.96;
}

EmbeddingStream random_stream(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  EmbeddingStream s;
  s.dim = dim;
  s.values.reserve(n * dim);
  for (std::size_t i = 0; i < n; ++i) s.push_frame(random_unit_vector(dim, rng));
  return s;
}

struct PhaseMs {
  double segmentation = 0.0;
  double bridge = 0.0;
  double retrieval = 0.0;
  double total = 0.0;
};

// Median per-run phase times over `repetitions` batches; each batch repeats
// the run until it spans at least min_ms of wall time.
PhaseMs timed(const std::function<PhaseTimes()>& run, const BenchConfig& bench) {
  std::size_t iterations = 1;
  for (;;) {
    const auto start = Clock::now();
    for (std::size_t i = 0; i < iterations; ++i) run();
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    if (ms >= bench.min_point_ms) break;
    const double scale = ms > 0.0 ? bench.min_point_ms / ms : 10.0;
    iterations = std::max(iterations + 1,
                          static_cast<std::size_t>(std::ceil(iterations * scale * 1.1)));
  }
  std::vector<double> seg, bridge, retrieval, total;
  for (std::size_t r = 0; r < std::max<std::size_t>(bench.repetitions, 1); ++r) {
    PhaseTimes sum;
    const auto start = Clock::now();
    for (std::size_t i = 0; i < iterations; ++i) {
      const PhaseTimes t = run();
      sum.segmentation += t.segmentation;
      sum.bridge += t.bridge;
      sum.retrieval += t.retrieval;
    }
    const double wall = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    const double k = 1000.0 / static_cast<double>(iterations);
    seg.push_back(sum.segmentation * k);
    bridge.push_back(sum.bridge * k);
    retrieval.push_back(sum.retrieval * k);
    total.push_back(wall / static_cast<double>(iterations));
  }
  return {median(seg), median(bridge), median(retrieval), median(total)};
}

}  // namespace

LinearFit fit_linear(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorKind::Config,
          "linear fit needs at least two paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0.0, ErrorKind::Domain, "linear fit needs distinct x values");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    sse += r * r;
  }
  f.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  if (x.size() > 2) f.slope_stderr = std::sqrt(sse / (n - 2.0) / sxx);
  const double half = t_quantile(x.size() - 2) * f.slope_stderr;
  f.slope_low = f.slope - half;
  f.slope_high = f.slope + half;
  return f;
}

LinearFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (double v : x) {
    require(v > 0.0, ErrorKind::Domain, "log-log fit needs positive values");
    lx.push_back(std::log(v));
  }
  for (double v : y) {
    require(v > 0.0, ErrorKind::Domain, "log-log fit needs positive values");
    ly.push_back(std::log(v));
  }
  return fit_linear(lx, ly);
}

MemoryReport measure_memory(const ParamStore& params, const std::vector<std::size_t>& lengths,
                            const BenchConfig& bench) {
  require(std::is_sorted(lengths.begin(), lengths.end()), ErrorKind::Config,
          "lengths must be sorted ascending");
  const BridgeConfig& config = bench.bridge;
  const Binding w = Binding::constants(params);
  const bool with_probe = params.contains("probe.query");
  MemoryReport report;
  report.bytes_per_segment = config.memory_tokens * config.hidden_size * sizeof(double);
  std::vector<double> ks, peaks, caches;
  for (std::size_t n : lengths) {
    const EmbeddingStream stream = random_stream(n, config.hidden_size, bench.seed + n);
    const ad::Var frames = ad::constant(stream.frames_tensor());
    const Segmentation seg = uniform_segmentation(n, bench.segment_length);

    const std::size_t baseline = allocation_stats().current;
    reset_peak();
    MemoryPoint p;
    {
      PipelineResult r = run_pipeline(frames, seg, w, config);
      const ad::Var parts[] = {r.memory.tokens, r.output};
      const ad::Var tokens = ad::concat_rows(parts);
      if (with_probe) probe_logits(tokens, w);
      p.cache_bytes = r.cache.bytes();
      p.probe_tokens = tokens.rows();
    }
    p.peak_bytes = allocation_stats().peak - baseline;
    p.frames = n;
    p.segments = seg.count();
    p.analytic_cache_bytes = analytic_cache_bytes(config, p.segments);
    ks.push_back(static_cast<double>(p.segments));
    peaks.push_back(static_cast<double>(p.peak_bytes));
    caches.push_back(static_cast<double>(p.cache_bytes));
    report.points.push_back(p);
  }
  if (report.points.size() >= 2) {
    report.peak_fit = fit_linear(ks, peaks);
    report.cache_fit = fit_linear(ks, caches);
  }
  return report;
}

TimeReport measure_time(const ParamStore& params, const std::vector<std::size_t>& segment_counts,
                        const BenchConfig& bench) {
  require(std::is_sorted(segment_counts.begin(), segment_counts.end()), ErrorKind::Config,
          "segment counts must be sorted ascending");
  BridgeConfig with_retrieval = bench.bridge;
  with_retrieval.retrieval_enabled = true;
  BridgeConfig bridge_only = bench.bridge;
  bridge_only.retrieval_enabled = false;
  const Binding w = Binding::constants(params);

  TimeReport report;
  std::vector<double> ks, bridge_ms, retrieval_ms, total_ms;
  for (std::size_t k : segment_counts) {
    const std::size_t n = k * bench.segment_length;
    const EmbeddingStream stream = random_stream(n, bench.bridge.hidden_size, bench.seed + k);
    const ad::Var frames = ad::constant(stream.frames_tensor());
    const Segmentation seg = uniform_segmentation(n, bench.segment_length);

    const PhaseMs only = timed(
        [&] {
          PhaseTimes t;
          run_pipeline(frames, seg, w, bridge_only, &t);
          return t;
        },
        bench);
    const PhaseMs full = timed(
        [&] {
          PhaseTimes t;
          const auto start = Clock::now();
          segment(stream, SegmentationConfig::threshold(0.5));
          t.segmentation = std::chrono::duration<double>(Clock::now() - start).count();
          run_pipeline(frames, seg, w, with_retrieval, &t);
          return t;
        },
        bench);

    TimePoint p;
    p.frames = n;
    p.segments = seg.count();
    p.segmentation_ms = full.segmentation;
    p.bridge_only_ms = only.total;
    p.retrieval_ms = full.retrieval;
    p.bridge_ms = full.bridge;
    p.total_ms = full.total - full.segmentation;
    ks.push_back(static_cast<double>(p.segments));
    bridge_ms.push_back(p.bridge_only_ms);
    retrieval_ms.push_back(p.retrieval_ms);
    total_ms.push_back(p.total_ms);
    report.points.push_back(p);
  }
  if (report.points.size() >= 2) {
    report.bridge_only_slope = fit_loglog(ks, bridge_ms);
    report.retrieval_slope = fit_loglog(ks, retrieval_ms);
    report.total_slope = fit_loglog(ks, total_ms);
  }
  return report;
}

std::vector<ScalingRecord> scaling_records(const MemoryReport& memory, const TimeReport& time) {
  std::vector<ScalingRecord> out;
  for (const auto& p : memory.points) {
    out.push_back({p.frames, p.segments, "peak", p.peak_bytes, 0.0});
    out.push_back({p.frames, p.segments, "cache", p.cache_bytes, 0.0});
  }
  for (const auto& p : time.points) {
    out.push_back({p.frames, p.segments, "segmentation", 0, p.segmentation_ms});
    out.push_back({p.frames, p.segments, "bridge_only", 0, p.bridge_only_ms});
    out.push_back({p.frames, p.segments, "bridge", 0, p.bridge_ms});
    out.push_back({p.frames, p.segments, "retrieval", 0, p.retrieval_ms});
    out.push_back({p.frames, p.segments, "total", 0, p.total_ms});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ScalingRecord& a, const ScalingRecord& b) { return a.frames < b.frames; });
  return out;
}

void write_scaling_csv(const std::vector<ScalingRecord>& records, std::ostream& out) {
  out << "n,K,phase,bytes_peak,ms_median\n";
  for (const auto& r : records)
    out << r.frames << ',' << r.segments << ',' << r.phase << ',' << r.bytes_peak << ','
        << r.ms_median << '\n';
}

namespace {

nlohmann::json fit_json(const LinearFit& f) {
  return {{"slope", f.slope},         {"intercept", f.intercept}, {"r2", f.r2},
          {"slope_stderr", f.slope_stderr}, {"slope_low", f.slope_low},
          {"slope_high", f.slope_high}};
}

}  // namespace

void write_scaling_json(const MemoryReport& memory, const TimeReport& time, std::ostream& out) {
  nlohmann::json j;
  j["memory"]["bytes_per_segment"] = memory.bytes_per_segment;
  j["memory"]["peak_fit"] = fit_json(memory.peak_fit);
  j["memory"]["cache_fit"] = fit_json(memory.cache_fit);
  auto& mp = j["memory"]["points"] = nlohmann::json::array();
  for (const auto& p : memory.points)
    mp.push_back({{"n", p.frames}, {"K", p.segments}, {"peak_bytes", p.peak_bytes},
                  {"cache_bytes", p.cache_bytes}, {"analytic_cache_bytes", p.analytic_cache_bytes},
                  {"probe_tokens", p.probe_tokens}});
  j["time"]["bridge_only_slope"] = fit_json(time.bridge_only_slope);
  j["time"]["retrieval_slope"] = fit_json(time.retrieval_slope);
  j["time"]["total_slope"] = fit_json(time.total_slope);
  auto& tp = j["time"]["points"] = nlohmann::json::array();
  for (const auto& p : time.points)
    tp.push_back({{"n", p.frames}, {"K", p.segments}, {"segmentation_ms", p.segmentation_ms},
                  {"bridge_only_ms", p.bridge_only_ms}, {"bridge_ms", p.bridge_ms},
                  {"retrieval_ms", p.retrieval_ms}, {"total_ms", p.total_ms}});
  out << j.dump(2) << '\n';
}

}  // namespace membridge
