#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "membridge/stream_io.hpp"

namespace membridge {

// c_i = cos(v_i, v_{i+1}) for i = 1..n-1, stored zero-based.
struct SimilarityProfile {
  std::vector<double> scores;
};

struct DepthProfile {
  std::vector<double> depths;
  std::vector<double> left_peaks;
  std::vector<double> right_peaks;
  double mean = 0.0;
  double stddev = 0.0;  // population
};

enum class SegmentationMode { Threshold, FixedCount };

struct SegmentationConfig {
  SegmentationMode mode = SegmentationMode::Threshold;
  double alpha = 0.5;
  std::size_t segment_count = 4;  // FixedCount only
  std::size_t min_segment_len = 1;
  std::optional<std::size_t> max_segments;

  static SegmentationConfig threshold(double alpha) {
    SegmentationConfig c;
    c.alpha = alpha;
    return c;
  }
  static SegmentationConfig fixed_count(std::size_t k) {
    SegmentationConfig c;
    c.mode = SegmentationMode::FixedCount;
    c.segment_count = k;
    return c;
  }
};

// Half-open frame range [begin, end), zero-based.
struct FrameRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const FrameRange&, const FrameRange&) = default;
};

struct Segmentation {
  // Cut index i splits after frame i (1-based), i.e. c_i sits on the cut.
  std::vector<std::size_t> cuts;
  std::vector<FrameRange> segments;
  DepthProfile evidence;
  double threshold = 0.0;

  std::size_t count() const noexcept { return segments.size(); }
};

SimilarityProfile cosine_profile(const EmbeddingStream& stream);
DepthProfile depth_scores(const SimilarityProfile& profile);

Segmentation segment(const EmbeddingStream& stream, const SegmentationConfig& config);
// Same as segment() on a precomputed profile of a stream with n = size + 1.
Segmentation segment_profile(const SimilarityProfile& profile,
                             const SegmentationConfig& config);

// Segments from cut indices over n frames.
std::vector<FrameRange> ranges_from_cuts(std::span<const std::size_t> cuts, std::size_t n);
// Equal-length segments of `length` frames (the last may be shorter).
Segmentation uniform_segmentation(std::size_t n, std::size_t length);

// ---- streaming ------------------------------------------------------------

struct StreamingConfig {
  double alpha = 0.5;
  std::size_t min_segment_len = 1;
  std::size_t warmup = 4;
  // Absolute depth floor an emission must also clear.
  double min_depth = 0.05;
};

struct BoundaryEvent {
  std::size_t boundary_at = 0;  // cut index, same convention as Segmentation
  double depth = 0.0;
  friend bool operator==(const BoundaryEvent&, const BoundaryEvent&) = default;
};

// Online boundary detection with left-only depth d_i = (cl_i - c_i) / 2,
// where cl_i is the running maximum of c_1..c_{i-1} (cl_1 = c_1). Running
// mean and population deviation cover every depth seen so far, including
// the current one. State is O(dim) regardless of stream length.
class StreamingBoundaryDetector {
 public:
  explicit StreamingBoundaryDetector(StreamingConfig config = {}) : config_(config) {}

  std::optional<BoundaryEvent> push(std::span<const double> frame);

  std::size_t frames_seen() const noexcept { return frames_; }
  const StreamingConfig& config() const noexcept { return config_; }

 private:
  StreamingConfig config_;
  std::vector<double> previous_;
  std::size_t frames_ = 0;
  double left_peak_ = 0.0;
  std::size_t depth_count_ = 0;
  double depth_mean_ = 0.0;
  double depth_m2_ = 0.0;
  std::size_t last_boundary_ = 0;
};

std::vector<BoundaryEvent> detect_stream(const EmbeddingStream& stream,
                                         const StreamingConfig& config = {});

}  // namespace membridge
