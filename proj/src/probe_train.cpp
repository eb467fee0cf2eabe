#include "membridge/probe_train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

#include "membridge/error.hpp"

namespace membridge {

const char* to_string(Variant v) noexcept {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoRetrieval: return "no_retrieval";
    case Variant::MeanPool: return "mean_pool";
    case Variant::AdaptivePool: return "adaptive_pool";
    case Variant::UniformSegment: return "uniform_segment";
    case Variant::MemoryTokensOnly: return "memory_tokens_only";
    case Variant::SegmentsK8: return "segments_k8";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : kAllVariants)
    if (name == to_string(v)) return v;
  fail(ErrorKind::Config, "unknown variant: " + name);
}

// ---- pooling and probe --------------------------------------------------------

ad::Var adaptive_pool(const ad::Var& frames, std::size_t target) {
  require(target >= 1 && frames.rows() >= 1, ErrorKind::Config, "invalid pooling target");
  const std::size_t n = frames.rows();
  std::vector<ad::Var> bins;
  bins.reserve(target);
  for (std::size_t b = 0; b < target; ++b) {
    const std::size_t begin = b * n / target;
    const std::size_t end = ((b + 1) * n + target - 1) / target;
    bins.push_back(ad::mean_rows(ad::slice_rows(frames, begin, end - begin)));
  }
  return ad::concat_rows(bins);
}

ad::Var mean_pool(const ad::Var& frames, std::size_t target) {
  require(target >= 1 && frames.rows() >= 1, ErrorKind::Config, "invalid pooling target");
  const ad::Var global = ad::mean_rows(frames);
  std::vector<ad::Var> rows(target, global);
  return ad::concat_rows(rows);
}

void init_probe(ParamStore& params, std::size_t dim, std::size_t classes, Rng& rng) {
  params.add("probe.ln.gain", Tensor({dim}, 1.0));
  params.add("probe.ln.bias", Tensor({dim}, 0.0));
  params.add("probe.query", random_normal({dim, 1}, 1.0 / std::sqrt(static_cast<double>(dim)), rng));
  params.add("probe.out.w",
             random_normal({dim, classes}, 1.0 / std::sqrt(static_cast<double>(dim)), rng));
  params.add("probe.out.b", Tensor({classes}, 0.0));
}

ad::Var probe_logits(const ad::Var& tokens, const Binding& w) {
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(tokens.cols()));
  const ad::Var x = ad::layer_norm(tokens, w["probe.ln.gain"], w["probe.ln.bias"]);
  const ad::Var scores = ad::transpose(ad::scale(ad::matmul(x, w["probe.query"]), inv_sqrt));
  const ad::Var pooled = ad::matmul(ad::softmax_rows(scores), x);
  return ad::add_bias(ad::matmul(pooled, w["probe.out.w"]), w["probe.out.b"]);
}

// ---- pipeline ---------------------------------------------------------------

Pipeline::Pipeline(Variant variant, ModelConfig config)
    : variant_(variant), config_(std::move(config)), bridge_(config_.bridge) {
  require(config_.classes >= 2, ErrorKind::Config, "class count must be at least 2");
  require(config_.train_segments >= 1 && config_.train_frames >= config_.train_segments,
          ErrorKind::Config, "invalid training segmentation");
  if (variant_ == Variant::NoRetrieval || !recurrent()) bridge_.retrieval_enabled = false;
  bridge_.validate();
}

bool Pipeline::recurrent() const noexcept {
  return variant_ != Variant::MeanPool && variant_ != Variant::AdaptivePool;
}

Pipeline build_variant(Variant variant, const ModelConfig& config) {
  return Pipeline(variant, config);
}

ParamStore Pipeline::init_params(std::uint64_t seed) const {
  ParamStore params;
  Rng rng(seed);
  if (recurrent()) {
    init_bridge_params(params, bridge_, rng);
  } else {
    for (std::size_t l = 0; l < bridge_.bridge_layers; ++l)
      init_transformer_block(params, "bridge." + std::to_string(l) + ".", bridge_.hidden_size,
                             bridge_.ffn_multiplier * bridge_.hidden_size, rng);
  }
  init_probe(params, bridge_.hidden_size, config_.classes, rng);
  return params;
}

Segmentation Pipeline::segment(const EmbeddingStream& stream, bool training,
                               SegmentPolicy policy) const {
  const std::size_t n = stream.size();
  switch (variant_) {
    case Variant::MeanPool:
    case Variant::AdaptivePool: {
      Segmentation s;
      s.segments = {{0, n}};
      return s;
    }
    case Variant::UniformSegment:
      return uniform_segmentation(n, config_.train_frames / config_.train_segments);
    case Variant::SegmentsK8:
      return membridge::segment(stream, SegmentationConfig::fixed_count(std::min<std::size_t>(8, n)));
    case Variant::Full:
    case Variant::NoRetrieval:
    case Variant::MemoryTokensOnly:
      break;
  }
  SegmentationConfig cfg = SegmentationConfig::threshold(config_.alpha);
  if (training) {
    cfg.max_segments = config_.train_segments;
  } else if (policy == SegmentPolicy::Static) {
    cfg = SegmentationConfig::fixed_count(std::min(config_.train_segments, n));
  }
  return membridge::segment(stream, cfg);
}

ad::Var Pipeline::probe_input(const ad::Var& frames, const Segmentation& segmentation,
                              const Binding& w, PhaseTimes* times) const {
  if (!recurrent()) {
    ad::Var tokens = variant_ == Variant::MeanPool ? mean_pool(frames, config_.pool_target)
                                                   : adaptive_pool(frames, config_.pool_target);
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t l = 0; l < bridge_.bridge_layers; ++l)
      tokens = transformer_block(tokens, w, "bridge." + std::to_string(l) + ".", bridge_.heads);
    if (times)
      times->bridge += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return tokens;
  }
  PipelineResult r = run_pipeline(frames, segmentation, w, bridge_, times);
  if (variant_ == Variant::MemoryTokensOnly) return r.memory.tokens;
  const ad::Var parts[] = {r.memory.tokens, r.output};
  return ad::concat_rows(parts);
}

ad::Var Pipeline::logits(const ad::Var& frames, const Segmentation& segmentation,
                         const Binding& w, PhaseTimes* times) const {
  const ad::Var tokens = probe_input(frames, segmentation, w, times);
  const auto start = std::chrono::steady_clock::now();
  ad::Var out = probe_logits(tokens, w);
  if (times)
    times->probe += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<double> Pipeline::predict(const EmbeddingStream& stream, const Binding& w,
                                      SegmentPolicy policy) const {
  const Segmentation seg = segment(stream, false, policy);
  const ad::Var out = logits(ad::constant(stream.frames_tensor()), seg, w);
  const auto v = out.value().values();
  return {v.begin(), v.end()};
}

// ---- training ---------------------------------------------------------------

ad::Var batch_loss(const Pipeline& pipeline, std::span<const LabeledStream> batch,
                   std::span<const Segmentation> segmentations, const Binding& w) {
  require(!batch.empty() && batch.size() == segmentations.size(), ErrorKind::Config,
          "batch and segmentation counts differ");
  std::vector<ad::Var> losses;
  losses.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ad::Var frames = ad::constant(batch[i].stream.frames_tensor());
    losses.push_back(ad::cross_entropy(pipeline.logits(frames, segmentations[i], w),
                                       batch[i].label));
  }
  ad::Var total = ad::sum(ad::concat_rows(losses));
  return ad::scale(total, 1.0 / static_cast<double>(batch.size()));
}

namespace {

struct AdamState {
  Tensor m;
  Tensor v;
};

}  // namespace

TrainResult train_probe(const Pipeline& pipeline, const NeedleTask& task,
                        const TrainConfig& config) {
  require(task.classes() == pipeline.config().classes, ErrorKind::Config,
          "task and model class counts differ");
  const auto data = task.dataset(config.dataset_size, config.train_frames,
                                 derive_seed(config.seed, 2));
  return train_probe(pipeline, data, config);
}

TrainResult train_probe(const Pipeline& pipeline, std::span<const LabeledStream> data,
                        const TrainConfig& config) {
  require(config.learning_rate >= 0.0, ErrorKind::Config, "learning rate must be nonnegative");
  require(config.batch_size >= 1, ErrorKind::Config, "batch size must be at least 1");
  require(!data.empty(), ErrorKind::Domain, "empty dataset");

  TrainResult result;
  result.params = pipeline.init_params(derive_seed(config.seed, 1));

  std::vector<Segmentation> segs;
  segs.reserve(data.size());
  for (const auto& s : data) segs.push_back(pipeline.segment(s.stream, true));

  std::map<std::string, AdamState> state;
  for (const auto& [name, t] : result.params)
    state.emplace(name, AdamState{Tensor(t.shape(), 0.0), Tensor(t.shape(), 0.0)});

  Rng shuffle_rng(derive_seed(config.seed, 3));
  std::vector<std::size_t> order(data.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - first);
      std::vector<LabeledStream> batch;
      std::vector<Segmentation> batch_segs;
      for (std::size_t i = first; i < first + count; ++i) {
        batch.push_back(data[order[i]]);
        batch_segs.push_back(segs[order[i]]);
      }
      ad::Tape tape;
      const Binding w = Binding::leaves(result.params, tape);
      const ad::Var loss = batch_loss(pipeline, batch, batch_segs, w);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) fail(ErrorKind::Domain, "diverged");
      result.loss_curve.push_back(value);
      tape.backward(loss);

      ++step;
      const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      for (auto& [name, param] : result.params) {
        const Tensor grad = w[name].grad();
        AdamState& s = state.at(name);
        for (std::size_t i = 0; i < param.size(); ++i) {
          s.m[i] = config.beta1 * s.m[i] + (1.0 - config.beta1) * grad[i];
          s.v[i] = config.beta2 * s.v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
          const double mhat = s.m[i] / bc1;
          const double vhat = s.v[i] / bc2;
          param[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.adam_eps);
        }
      }
    }
  }
  result.train_accuracy = evaluate(pipeline, result.params, data).accuracy;
  return result;
}

// ---- evaluation -------------------------------------------------------------

std::size_t argmax(std::span<const double> v) {
  require(!v.empty(), ErrorKind::Domain, "argmax of nothing");
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

EvalResult evaluate(const Predictor& predictor, std::span<const LabeledStream> data) {
  require(!data.empty(), ErrorKind::Domain, "empty dataset");
  EvalResult r;
  std::size_t correct = 0;
  for (const auto& s : data)
    if (argmax(predictor(s.stream)) == s.label) ++correct;
  r.count = data.size();
  r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  r.mean_score = 10.0 * r.accuracy;
  return r;
}

EvalResult evaluate(const Pipeline& pipeline, const ParamStore& params,
                    std::span<const LabeledStream> data, SegmentPolicy policy) {
  const Binding w = Binding::constants(params);
  return evaluate([&](const EmbeddingStream& s) { return pipeline.predict(s, w, policy); },
                  data);
}

// ---- ablation ---------------------------------------------------------------

double median(std::vector<double> values) {
  require(!values.empty(), ErrorKind::Domain, "median of nothing");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<double> AblationTable::accuracies(const std::string& variant,
                                              std::size_t length) const {
  std::vector<double> out;
  for (const auto& r : rows)
    if (r.variant == variant && r.length == length) out.push_back(r.accuracy);
  return out;
}

double AblationTable::median(const std::string& variant, std::size_t length) const {
  return membridge::median(accuracies(variant, length));
}

void AblationTable::write_csv(std::ostream& out) const {
  out << "variant,length,seed,accuracy\n";
  for (const auto& r : rows)
    out << r.variant << ',' << r.length << ',' << r.seed << ',' << r.accuracy << '\n';
}

AblationTable ablation_suite(const NeedleTask& task, const AblationConfig& config,
                             const std::function<void(const std::string&)>& progress) {
  AblationTable table;
  for (std::uint64_t seed : config.seeds) {
    std::map<std::size_t, std::vector<LabeledStream>> eval_sets;
    for (std::size_t len : config.eval_lengths)
      eval_sets.emplace(len, task.dataset(config.eval_size, len, derive_seed(seed, 1000 + len)));
    TrainConfig tc = config.train;
    tc.seed = seed;
    for (Variant v : config.variants) {
      const Pipeline pipeline = build_variant(v, config.model);
      const TrainResult trained = train_probe(pipeline, task, tc);
      for (std::size_t len : config.eval_lengths) {
        const auto& set = eval_sets.at(len);
        table.rows.push_back(
            {to_string(v), len, seed, evaluate(pipeline, trained.params, set).accuracy});
        if (v == Variant::Full)
          table.rows.push_back({"full_static", len, seed,
                                evaluate(pipeline, trained.params, set, SegmentPolicy::Static)
                                    .accuracy});
      }
      if (progress)
        progress(std::string("seed ") + std::to_string(seed) + " " + to_string(v) +
                 " train_acc=" + std::to_string(trained.train_accuracy));
    }
  }
  return table;
}

}  // namespace membridge
