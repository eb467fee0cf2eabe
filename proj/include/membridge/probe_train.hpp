#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "membridge/memory_bridge.hpp"
#include "membridge/needle_task.hpp"
#include "membridge/scenetiling.hpp"

namespace membridge {

enum class Variant {
  Full,
  NoRetrieval,
  MeanPool,
  AdaptivePool,
  UniformSegment,
  MemoryTokensOnly,
  SegmentsK8,
};

inline constexpr std::array kAllVariants = {
    Variant::Full,           Variant::NoRetrieval,      Variant::MeanPool,
    Variant::AdaptivePool,   Variant::UniformSegment,   Variant::MemoryTokensOnly,
    Variant::SegmentsK8,
};

const char* to_string(Variant v) noexcept;
Variant parse_variant(const std::string& name);

// How recurrent variants split an evaluation stream. Training always uses
// the variant's training segmentation.
enum class SegmentPolicy {
  Dynamic,  // SceneTiling threshold, no segment cap
  Static,   // fixed_count(train_segments)
};

struct ModelConfig {
  BridgeConfig bridge;
  std::size_t classes = 4;
  std::size_t pool_target = 4;
  std::size_t train_frames = 16;
  std::size_t train_segments = 4;
  double alpha = 0.5;
};

// A variant's forward computation: segmentation, memory recurrence or
// pooling, and the probe head.
class Pipeline {
 public:
  Pipeline(Variant variant, ModelConfig config);

  Variant variant() const noexcept { return variant_; }
  const ModelConfig& config() const noexcept { return config_; }
  const BridgeConfig& bridge_config() const noexcept { return bridge_; }
  bool recurrent() const noexcept;

  ParamStore init_params(std::uint64_t seed) const;

  Segmentation segment(const EmbeddingStream& stream, bool training,
                       SegmentPolicy policy = SegmentPolicy::Dynamic) const;

  // Tokens handed to the probe head.
  ad::Var probe_input(const ad::Var& frames, const Segmentation& segmentation,
                      const Binding& w, PhaseTimes* times = nullptr) const;
  ad::Var logits(const ad::Var& frames, const Segmentation& segmentation,
                 const Binding& w, PhaseTimes* times = nullptr) const;

  std::vector<double> predict(const EmbeddingStream& stream, const Binding& w,
                              SegmentPolicy policy = SegmentPolicy::Dynamic) const;

 private:
  Variant variant_;
  ModelConfig config_;
  BridgeConfig bridge_;
};

Pipeline build_variant(Variant variant, const ModelConfig& config);

// Probe head: layer norm, one learned query attending over the tokens,
// then a linear map to class logits. Parameters live under "probe.".
void init_probe(ParamStore& params, std::size_t dim, std::size_t classes, Rng& rng);
ad::Var probe_logits(const ad::Var& tokens, const Binding& w);

// Equal-size temporal bins averaged down to `target` rows. Requires at
// least `target` frames.
ad::Var adaptive_pool(const ad::Var& frames, std::size_t target);
// One global average row repeated `target` times.
ad::Var mean_pool(const ad::Var& frames, std::size_t target);

struct TrainConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 8;
  std::size_t epochs = 1;
  std::size_t dataset_size = 200;
  std::uint64_t seed = 0;
  std::size_t train_frames = 16;
  std::size_t train_segments = 4;
};

struct TrainResult {
  ParamStore params;
  std::vector<double> loss_curve;  // mean batch loss per optimizer step
  double train_accuracy = 0.0;     // on the training set after the last step
};

TrainResult train_probe(const Pipeline& pipeline, const NeedleTask& task,
                        const TrainConfig& config);
TrainResult train_probe(const Pipeline& pipeline, std::span<const LabeledStream> data,
                        const TrainConfig& config);

// Mean loss over a batch, recorded on `tape`; used by training and by the
// gradient checks.
ad::Var batch_loss(const Pipeline& pipeline, std::span<const LabeledStream> batch,
                   std::span<const Segmentation> segmentations, const Binding& w);

struct EvalResult {
  double accuracy = 0.0;
  double mean_score = 0.0;  // 0..10 scale
  std::size_t count = 0;
};

using Predictor = std::function<std::vector<double>(const EmbeddingStream&)>;

std::size_t argmax(std::span<const double> v);
EvalResult evaluate(const Predictor& predictor, std::span<const LabeledStream> data);
EvalResult evaluate(const Pipeline& pipeline, const ParamStore& params,
                    std::span<const LabeledStream> data,
                    SegmentPolicy policy = SegmentPolicy::Dynamic);

struct AblationConfig {
  ModelConfig model;
  TrainConfig train;
  std::vector<Variant> variants{kAllVariants.begin(), kAllVariants.end()};
  std::vector<std::size_t> eval_lengths{8, 12, 16, 32, 64, 128};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::size_t eval_size = 200;
};

struct AblationRow {
  std::string variant;  // variant name; "full_static" for static segmentation
  std::size_t length = 0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
};

struct AblationTable {
  std::vector<AblationRow> rows;

  std::vector<double> accuracies(const std::string& variant, std::size_t length) const;
  double median(const std::string& variant, std::size_t length) const;
  void write_csv(std::ostream& out) const;
};

// Trains every variant on the same per-seed data and evaluates on the same
// per-(seed, length) sets.
AblationTable ablation_suite(const NeedleTask& task, const AblationConfig& config,
                             const std::function<void(const std::string&)>& progress = {});

double median(std::vector<double> values);

}  // namespace membridge
