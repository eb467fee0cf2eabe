#include "membridge/memory_bridge.hpp"

#include <chrono>
#include <cmath>

#include "membridge/error.hpp"

namespace membridge {

BridgeConfig BridgeConfig::reference_scale() {
  BridgeConfig c;
  c.memory_tokens = 32;
  c.bridge_layers = 1;
  c.heads = 8;
  c.hidden_size = 1024;
  c.retrieval_layers = 1;
  return c;
}

void BridgeConfig::validate() const {
  require(memory_tokens >= 1, ErrorKind::Config, "memory_tokens must be at least 1");
  require(bridge_layers >= 1, ErrorKind::Config, "bridge_layers must be at least 1");
  require(heads >= 1 && hidden_size % heads == 0, ErrorKind::Config,
          "hidden_size must be divisible by heads");
  require(ffn_multiplier >= 1, ErrorKind::Config, "ffn_multiplier must be at least 1");
  require(!retrieval_enabled || retrieval_layers >= 1, ErrorKind::Config,
          "retrieval needs at least one layer");
  require(retrieval_output_projection || heads == 1, ErrorKind::Config,
          "single-projection retrieval requires one head");
}

void MemoryCache::append(const ad::Var& block) {
  if (!blocks_.empty())
    require(block.rows() == blocks_.front().rows() && block.cols() == blocks_.front().cols(),
            ErrorKind::Config, "memory block shape changed");
  blocks_.push_back(block);
}

std::size_t MemoryCache::token_rows() const {
  std::size_t rows = 0;
  for (const auto& b : blocks_) rows += b.rows();
  return rows;
}

ad::Var MemoryCache::concatenated() const {
  require(!blocks_.empty(), ErrorKind::Domain, "retrieval before initialization");
  if (blocks_.size() == 1) return blocks_.front();
  return ad::concat_rows(blocks_);
}

std::size_t MemoryCache::bytes() const {
  std::size_t total = 0;
  for (const auto& b : blocks_) total += b.value().storage_bytes();
  return total;
}

std::size_t analytic_cache_bytes(const BridgeConfig& config, std::size_t steps) {
  return (steps + 1) * config.memory_tokens * config.hidden_size * sizeof(double);
}

void init_bridge_params(ParamStore& params, const BridgeConfig& config, Rng& rng) {
  config.validate();
  const std::size_t d = config.hidden_size;
  if (config.learnable_initial_memory)
    params.add("memory.init",
               random_normal({config.memory_tokens, d},
                             1.0 / std::sqrt(static_cast<double>(d)), rng));
  for (std::size_t l = 0; l < config.bridge_layers; ++l)
    init_transformer_block(params, "bridge." + std::to_string(l) + ".", d,
                           config.ffn_multiplier * d, rng);
  if (config.retrieval_enabled)
    for (std::size_t l = 0; l < config.retrieval_layers; ++l)
      init_attention(params, "retrieval." + std::to_string(l) + ".", d, rng,
                     config.retrieval_output_projection);
}

ParamStore init_bridge_params(const BridgeConfig& config, std::uint64_t seed) {
  ParamStore params;
  Rng rng(seed);
  init_bridge_params(params, config, rng);
  return params;
}

MemoryState initial_memory(const Binding& w, const BridgeConfig& config) {
  if (config.learnable_initial_memory) return {w["memory.init"], 1};
  return {ad::constant(Tensor::matrix(config.memory_tokens, config.hidden_size)), 1};
}

BridgeStepResult bridge_step(const MemoryState& memory, const ad::Var& segment,
                             const Binding& w, const BridgeConfig& config) {
  const std::size_t m = config.memory_tokens;
  require(segment.rows() >= 1 && segment.value().size() > 0, ErrorKind::Domain,
          "empty segment");
  require(segment.cols() == config.hidden_size && memory.tokens.cols() == config.hidden_size &&
              memory.tokens.rows() == m,
          ErrorKind::Config, "bridge input dimension mismatch");
  const ad::Var parts[] = {memory.tokens, segment};
  ad::Var x = ad::concat_rows(parts);
  for (std::size_t l = 0; l < config.bridge_layers; ++l)
    x = transformer_block(x, w, "bridge." + std::to_string(l) + ".", config.heads);
  return {{ad::slice_rows(x, 0, m), memory.step + 1}, ad::slice_rows(x, m, segment.rows())};
}

MemoryState retrieve(const MemoryState& memory, const MemoryCache& cache,
                     const Binding& w, const BridgeConfig& config, AttentionTrace* trace) {
  require(cache.block_count() > 0, ErrorKind::Domain, "retrieval before initialization");
  const ad::Var keys = cache.concatenated();
  ad::Var m = memory.tokens;
  for (std::size_t l = 0; l < config.retrieval_layers; ++l)
    m = multi_head_attention(
        m, keys, keys,
        attention_projections(w, "retrieval." + std::to_string(l) + ".",
                              config.retrieval_output_projection),
        config.heads, trace);
  return {m, memory.step};
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

PipelineResult run_pipeline(const ad::Var& frames, const Segmentation& segmentation,
                            const Binding& w, const BridgeConfig& config, PhaseTimes* times) {
  config.validate();
  require(!segmentation.segments.empty(), ErrorKind::Domain, "empty segmentation");
  require(frames.cols() == config.hidden_size, ErrorKind::Config,
          "stream width does not match hidden_size");
  require(segmentation.segments.back().end == frames.rows(), ErrorKind::Config,
          "segmentation does not cover the stream");

  PipelineResult result;
  result.memory = initial_memory(w, config);
  result.cache.append(result.memory.tokens);
  const bool before = config.retrieve_order == RetrieveOrder::BeforeBridge;

  for (const FrameRange& range : segmentation.segments) {
    if (config.retrieval_enabled && before) {
      const auto start = Clock::now();
      result.memory = retrieve(result.memory, result.cache, w, config);
      if (times) times->retrieval += seconds_since(start);
    }
    auto start = Clock::now();
    const ad::Var segment = ad::slice_rows(frames, range.begin, range.size());
    BridgeStepResult step = bridge_step(result.memory, segment, w, config);
    result.cache.append(step.memory.tokens);
    result.memory = step.memory;
    result.output = step.output;
    if (times) times->bridge += seconds_since(start);
    if (config.retrieval_enabled && !before) {
      start = Clock::now();
      result.memory = retrieve(result.memory, result.cache, w, config);
      if (times) times->retrieval += seconds_since(start);
    }
  }
  return result;
}

PipelineResult run_pipeline(const EmbeddingStream& stream, const Segmentation& segmentation,
                            const Binding& w, const BridgeConfig& config, PhaseTimes* times) {
  return run_pipeline(ad::constant(stream.frames_tensor()), segmentation, w, config, times);
}

}  // namespace membridge
