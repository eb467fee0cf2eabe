#include "membridge/needle_task.hpp"

#include <cmath>

#include "membridge/error.hpp"

namespace membridge {

std::size_t needle_start(std::size_t n, std::size_t duration, double depth) {
  require(duration >= 1, ErrorKind::Config, "needle duration must be at least 1");
  require(depth >= 0.0 && depth <= 1.0, ErrorKind::Config, "needle depth must lie in [0, 1]");
  if (n < duration) fail(ErrorKind::Domain, "haystack shorter than needle");
  return static_cast<std::size_t>(std::lround(depth * static_cast<double>(n - duration)));
}

PlantedStream plant_needle(const EmbeddingStream& haystack, const NeedleSpec& needle,
                           std::uint64_t seed) {
  const std::size_t n = haystack.size();
  const std::size_t start = needle_start(n, needle.duration, needle.depth);
  require(needle.signature.size() == haystack.dim, ErrorKind::Config,
          "needle signature width mismatch");
  require(needle.class_id < kHaystackLabelBase, ErrorKind::Config, "needle class id too large");

  PlantedStream out{haystack, start};
  EmbeddingStream& s = out.stream;
  Rng rng(seed);
  for (std::size_t i = start; i < start + needle.duration; ++i) {
    const auto frame = perturbed_frame(needle.signature, needle.noise_sigma, rng);
    std::copy(frame.begin(), frame.end(), s.frame(i).begin());
  }

  std::vector<std::uint32_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= start && i < start + needle.duration) {
      labels[i] = needle.class_id;
    } else {
      const std::uint32_t scene = haystack.labels ? (*haystack.labels)[i] : 0;
      labels[i] = scene >= kHaystackLabelBase ? scene : kHaystackLabelBase + scene;
    }
  }
  std::vector<std::size_t> boundaries;
  for (std::size_t i = 1; i < n; ++i)
    if (labels[i] != labels[i - 1]) boundaries.push_back(i);
  s.labels = std::move(labels);
  s.boundaries = std::move(boundaries);
  return out;
}

EmbeddingStream make_haystack(std::size_t length, const HaystackSpec& spec,
                              std::span<const std::vector<double>> avoid, Rng& rng) {
  require(length >= 1, ErrorKind::Config, "haystack length must be at least 1");
  require(spec.min_scene_frames >= 1 && spec.min_scene_frames <= spec.max_scene_frames,
          ErrorKind::Config, "invalid scene length bounds");
  std::uniform_int_distribution<std::size_t> scene_len(spec.min_scene_frames,
                                                       spec.max_scene_frames);
  EmbeddingStream out;
  out.dim = spec.dim;
  out.frame_rate = spec.frame_rate;
  out.values.reserve(length * spec.dim);
  std::vector<std::uint32_t> labels;
  std::vector<std::size_t> boundaries;
  std::vector<std::vector<double>> reference(avoid.begin(), avoid.end());
  reference.emplace_back();  // slot for the previous scene center
  std::uint32_t scene = 0;
  while (out.size() < length) {
    const std::span<const std::vector<double>> against(
        reference.data(), scene == 0 ? reference.size() - 1 : reference.size());
    auto center = sample_separated_center(spec.dim, spec.center_separation, against, rng);
    if (scene > 0) boundaries.push_back(out.size());
    const std::size_t count = std::min(scene_len(rng), length - out.size());
    for (std::size_t f = 0; f < count; ++f) {
      out.push_frame(perturbed_frame(center, spec.noise_sigma, rng));
      labels.push_back(scene);
    }
    reference.back() = std::move(center);
    ++scene;
  }
  out.labels = std::move(labels);
  out.boundaries = std::move(boundaries);
  return out;
}

NeedleTask::NeedleTask(Options options) : options_(std::move(options)) {
  require(options_.classes >= 2, ErrorKind::Config, "needle task needs at least 2 classes");
  Rng rng(options_.signature_seed);
  for (std::size_t k = 0; k < options_.classes; ++k)
    signatures_.push_back(sample_separated_center(options_.haystack.dim,
                                                  options_.signature_separation,
                                                  signatures_, rng));
}

LabeledStream NeedleTask::sample_at(std::size_t length, double depth,
                                    std::uint32_t class_id, Rng& rng) const {
  require(class_id < options_.classes, ErrorKind::Config, "class id out of range");
  EmbeddingStream haystack = make_haystack(length, options_.haystack, signatures_, rng);
  NeedleSpec needle;
  needle.class_id = class_id;
  needle.signature = signatures_[class_id];
  needle.duration = options_.needle_duration;
  needle.depth = depth;
  needle.noise_sigma = options_.needle_noise;
  PlantedStream planted = plant_needle(haystack, needle, rng());
  return {std::move(planted.stream), class_id, planted.start};
}

LabeledStream NeedleTask::sample(std::size_t length, Rng& rng) const {
  std::uniform_int_distribution<std::uint32_t> cls(
      0, static_cast<std::uint32_t>(options_.classes - 1));
  std::uniform_real_distribution<double> depth(0.0, 1.0);
  const std::uint32_t class_id = cls(rng);
  const double d = depth(rng);
  return sample_at(length, d, class_id, rng);
}

std::vector<LabeledStream> NeedleTask::dataset(std::size_t count, std::size_t length,
                                               std::uint64_t seed) const {
  Rng rng(seed);
  std::vector<LabeledStream> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample(length, rng));
  return out;
}

}  // namespace membridge
