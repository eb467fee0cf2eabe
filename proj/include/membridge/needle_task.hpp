#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "membridge/nn.hpp"
#include "membridge/stream_io.hpp"

namespace membridge {

// Haystack frames are labelled kHaystackLabelBase + scene index so no
// haystack label can collide with a needle class id.
inline constexpr std::uint32_t kHaystackLabelBase = 1u << 16;

struct NeedleSpec {
  std::uint32_t class_id = 0;
  std::vector<double> signature;
  std::size_t duration = 1;  // frames; one second at 1 fps
  double depth = 0.0;        // fraction of the stream in [0, 1]
  double noise_sigma = 0.05;
};

struct PlantedStream {
  EmbeddingStream stream;
  std::size_t start = 0;  // zero-based first needle frame
};

// First needle frame: round(depth * (n - duration)).
std::size_t needle_start(std::size_t n, std::size_t duration, double depth);

// Replaces `duration` haystack frames with noisy copies of the signature.
// Labels are rewritten (needle frames carry class_id, haystack frames are
// offset by kHaystackLabelBase) and boundaries are recomputed from label
// changes.
PlantedStream plant_needle(const EmbeddingStream& haystack, const NeedleSpec& needle,
                           std::uint64_t seed);

struct HaystackSpec {
  std::size_t dim = 64;
  std::size_t min_scene_frames = 4;
  std::size_t max_scene_frames = 12;
  double noise_sigma = 0.05;
  // Max cosine between consecutive scene centers and between any scene
  // center and any needle signature.
  double center_separation = 0.2;
  double frame_rate = 1.0;
};

// Exactly `length` frames of consecutive scenes; the last scene is cut short.
EmbeddingStream make_haystack(std::size_t length, const HaystackSpec& spec,
                              std::span<const std::vector<double>> avoid, Rng& rng);

struct LabeledStream {
  EmbeddingStream stream;
  std::uint32_t label = 0;
  std::size_t needle_start = 0;
};

// The synthetic needle-in-a-haystack classification task: a haystack of
// random scenes with one planted needle whose signature identifies the class.
class NeedleTask {
 public:
  struct Options {
    HaystackSpec haystack;
    std::size_t classes = 4;
    std::size_t needle_duration = 1;
    double needle_noise = 0.05;
    double signature_separation = 0.2;
    std::uint64_t signature_seed = 7;
  };

  NeedleTask() : NeedleTask(Options{}) {}
  explicit NeedleTask(Options options);

  const Options& options() const noexcept { return options_; }
  std::size_t classes() const noexcept { return options_.classes; }
  std::size_t dim() const noexcept { return options_.haystack.dim; }
  const std::vector<std::vector<double>>& signatures() const noexcept { return signatures_; }

  LabeledStream sample(std::size_t length, Rng& rng) const;
  LabeledStream sample_at(std::size_t length, double depth, std::uint32_t class_id,
                          Rng& rng) const;

  std::vector<LabeledStream> dataset(std::size_t count, std::size_t length,
                                     std::uint64_t seed) const;

 private:
  Options options_;
  std::vector<std::vector<double>> signatures_;
};

}  // namespace membridge
