#include "membridge/scenetiling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "membridge/error.hpp"

namespace membridge {

SimilarityProfile cosine_profile(const EmbeddingStream& stream) {
  const std::size_t n = stream.size();
  require(n >= 2, ErrorKind::Domain, "too short");
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = norm(stream.frame(i));
    require(norms[i] > 0.0, ErrorKind::Domain, "degenerate frame");
  }
  SimilarityProfile p;
  p.scores.reserve(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double c = dot(stream.frame(i), stream.frame(i + 1)) / (norms[i] * norms[i + 1]);
    p.scores.push_back(std::clamp(c, -1.0, 1.0));
  }
  return p;
}

DepthProfile depth_scores(const SimilarityProfile& profile) {
  const auto& c = profile.scores;
  const std::size_t m = c.size();
  require(m >= 1, ErrorKind::Domain, "too short");
  DepthProfile out;
  out.left_peaks.resize(m);
  out.right_peaks.resize(m);
  out.depths.resize(m);

  out.left_peaks[0] = c[0];
  double running = c[0];
  for (std::size_t i = 1; i < m; ++i) {
    out.left_peaks[i] = running;
    running = std::max(running, c[i]);
  }
  out.right_peaks[m - 1] = c[m - 1];
  running = c[m - 1];
  for (std::size_t i = m - 1; i-- > 0;) {
    out.right_peaks[i] = running;
    running = std::max(running, c[i]);
  }
  for (std::size_t i = 0; i < m; ++i)
    out.depths[i] = (out.left_peaks[i] + out.right_peaks[i] - 2.0 * c[i]) / 2.0;

  const double total = std::accumulate(out.depths.begin(), out.depths.end(), 0.0);
  out.mean = total / static_cast<double>(m);
  double sq = 0.0;
  for (double d : out.depths) sq += (d - out.mean) * (d - out.mean);
  out.stddev = std::sqrt(sq / static_cast<double>(m));
  return out;
}

std::vector<FrameRange> ranges_from_cuts(std::span<const std::size_t> cuts, std::size_t n) {
  std::vector<FrameRange> out;
  std::size_t begin = 0;
  for (std::size_t cut : cuts) {
    out.push_back({begin, cut});
    begin = cut;
  }
  out.push_back({begin, n});
  return out;
}

namespace {

// Accepts candidate cuts deepest-first (ties: smaller index first), skipping
// any cut that would leave a segment shorter than min_len, up to `limit`.
std::vector<std::size_t> select_cuts(const std::vector<double>& depths,
                                     std::vector<std::size_t> candidates, std::size_t n,
                                     std::size_t min_len, std::size_t limit) {
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) {
                     return depths[a - 1] > depths[b - 1];
                   });
  std::vector<std::size_t> accepted;
  for (std::size_t cut : candidates) {
    if (accepted.size() >= limit) break;
    auto pos = std::lower_bound(accepted.begin(), accepted.end(), cut);
    const std::size_t left = pos == accepted.begin() ? 0 : *(pos - 1);
    const std::size_t right = pos == accepted.end() ? n : *pos;
    if (cut - left < min_len || right - cut < min_len) continue;
    accepted.insert(pos, cut);
  }
  return accepted;
}

}  // namespace

Segmentation segment_profile(const SimilarityProfile& profile,
                             const SegmentationConfig& config) {
  require(config.min_segment_len >= 1, ErrorKind::Config, "min_segment_len must be at least 1");
  const std::size_t n = profile.scores.size() + 1;
  Segmentation out;
  out.evidence = depth_scores(profile);
  out.threshold = out.evidence.mean + config.alpha * out.evidence.stddev;

  std::vector<std::size_t> candidates;
  std::size_t limit = n - 1;
  if (config.mode == SegmentationMode::Threshold) {
    for (std::size_t i = 0; i < out.evidence.depths.size(); ++i)
      if (out.evidence.depths[i] > out.threshold) candidates.push_back(i + 1);
  } else {
    require(config.segment_count >= 1, ErrorKind::Config, "segment count must be at least 1");
    if (config.segment_count > n) fail(ErrorKind::Domain, "too many segments");
    candidates.resize(n - 1);
    std::iota(candidates.begin(), candidates.end(), std::size_t{1});
    limit = config.segment_count - 1;
  }
  if (config.max_segments) {
    require(*config.max_segments >= 1, ErrorKind::Config, "max_segments must be at least 1");
    limit = std::min(limit, *config.max_segments - 1);
  }
  out.cuts = select_cuts(out.evidence.depths, std::move(candidates), n,
                         config.min_segment_len, limit);
  out.segments = ranges_from_cuts(out.cuts, n);
  return out;
}

Segmentation segment(const EmbeddingStream& stream, const SegmentationConfig& config) {
  const std::size_t n = stream.size();
  require(n >= 1, ErrorKind::Domain, "too short");
  if (n == 1) {
    if (config.mode == SegmentationMode::FixedCount && config.segment_count > 1)
      fail(ErrorKind::Domain, "too many segments");
    Segmentation out;
    out.segments = {{0, 1}};
    return out;
  }
  return segment_profile(cosine_profile(stream), config);
}

Segmentation uniform_segmentation(std::size_t n, std::size_t length) {
  require(n >= 1, ErrorKind::Domain, "too short");
  require(length >= 1, ErrorKind::Config, "segment length must be at least 1");
  Segmentation out;
  for (std::size_t cut = length; cut < n; cut += length) out.cuts.push_back(cut);
  out.segments = ranges_from_cuts(out.cuts, n);
  return out;
}

std::optional<BoundaryEvent> StreamingBoundaryDetector::push(std::span<const double> frame) {
  require(norm(frame) > 0.0, ErrorKind::Domain, "degenerate frame");
  if (frames_ == 0) {
    previous_.assign(frame.begin(), frame.end());
    frames_ = 1;
    return std::nullopt;
  }
  require(frame.size() == previous_.size(), ErrorKind::Format, "frame width mismatch");
  const double c = cosine_similarity(previous_, frame);
  const std::size_t index = frames_;  // cut between frame `index` and `index + 1`
  ++frames_;
  previous_.assign(frame.begin(), frame.end());

  double left;
  if (index == 1) {
    left = c;
    left_peak_ = c;
  } else {
    left = left_peak_;
    left_peak_ = std::max(left_peak_, c);
  }
  const double depth = (left - c) / 2.0;

  ++depth_count_;
  const double delta = depth - depth_mean_;
  depth_mean_ += delta / static_cast<double>(depth_count_);
  depth_m2_ += delta * (depth - depth_mean_);
  const double sigma = std::sqrt(depth_m2_ / static_cast<double>(depth_count_));

  if (index < config_.warmup) return std::nullopt;
  if (!(depth > depth_mean_ + config_.alpha * sigma)) return std::nullopt;
  if (!(depth > config_.min_depth)) return std::nullopt;
  if (index - last_boundary_ < config_.min_segment_len) return std::nullopt;
  last_boundary_ = index;
  return BoundaryEvent{index, depth};
}

std::vector<BoundaryEvent> detect_stream(const EmbeddingStream& stream,
                                         const StreamingConfig& config) {
  StreamingBoundaryDetector detector(config);
  std::vector<BoundaryEvent> events;
  for (std::size_t i = 0; i < stream.size(); ++i)
    if (auto e = detector.push(stream.frame(i))) events.push_back(*e);
  return events;
}

}  // namespace membridge
