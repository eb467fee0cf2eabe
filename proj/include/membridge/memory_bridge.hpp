#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "membridge/autograd.hpp"
#include "membridge/nn.hpp"
#include "membridge/scenetiling.hpp"
#include "membridge/stream_io.hpp"

namespace membridge {

enum class RetrieveOrder { BeforeBridge, AfterBridge };

struct BridgeConfig {
  std::size_t memory_tokens = 8;
  std::size_t bridge_layers = 1;
  std::size_t heads = 8;
  std::size_t hidden_size = 64;
  std::size_t retrieval_layers = 1;
  std::size_t ffn_multiplier = 4;
  bool retrieval_enabled = true;
  RetrieveOrder retrieve_order = RetrieveOrder::BeforeBridge;
  // false: the single-projection form softmax(QKᵀ/√d_k)V without a head
  // combiner, only valid with one head.
  bool retrieval_output_projection = true;
  // false: initial memory is fixed at zero instead of learned.
  bool learnable_initial_memory = true;

  // 32 memory tokens, one bridge and one retrieval layer, 8 heads, width 1024.
  static BridgeConfig reference_scale();

  std::size_t head_dim() const { return hidden_size / heads; }
  void validate() const;
};

struct MemoryState {
  ad::Var tokens;  // [M, d]
  std::size_t step = 1;
};

// Append-only history [m_1, ..., m_i] of memory blocks.
class MemoryCache {
 public:
  void append(const ad::Var& block);
  std::size_t block_count() const noexcept { return blocks_.size(); }
  std::size_t token_rows() const;
  const std::vector<ad::Var>& blocks() const noexcept { return blocks_; }
  // All blocks stacked along the token axis.
  ad::Var concatenated() const;
  // Bytes held by the block buffers.
  std::size_t bytes() const;

 private:
  std::vector<ad::Var> blocks_;
};

// Bytes the cache holds after `steps` bridge steps: (steps + 1) blocks.
std::size_t analytic_cache_bytes(const BridgeConfig& config, std::size_t steps);

struct PhaseTimes {
  double segmentation = 0.0;
  double bridge = 0.0;
  double retrieval = 0.0;
  double probe = 0.0;
  double total() const { return segmentation + bridge + retrieval + probe; }
};

// Parameter names:
//   memory.init                  [M, d]
//   bridge.<l>.{ln1,attn,ln2,ffn}.*
//   retrieval.<l>.{wq,wk,wv,wo}
void init_bridge_params(ParamStore& params, const BridgeConfig& config, Rng& rng);
ParamStore init_bridge_params(const BridgeConfig& config, std::uint64_t seed);

MemoryState initial_memory(const Binding& w, const BridgeConfig& config);

struct BridgeStepResult {
  MemoryState memory;
  ad::Var output;  // [C, d]
};

// BridgeLayer([m; s]) with full self-attention over the concatenation; the
// first M rows become the next memory block, the rest the segment output.
BridgeStepResult bridge_step(const MemoryState& memory, const ad::Var& segment,
                             const Binding& w, const BridgeConfig& config);

// Cross-attention with the current memory as query over the stacked cache.
MemoryState retrieve(const MemoryState& memory, const MemoryCache& cache,
                     const Binding& w, const BridgeConfig& config,
                     AttentionTrace* trace = nullptr);

struct PipelineResult {
  MemoryState memory;
  ad::Var output;  // last segment's representation
  MemoryCache cache;
};

PipelineResult run_pipeline(const ad::Var& frames, const Segmentation& segmentation,
                            const Binding& w, const BridgeConfig& config,
                            PhaseTimes* times = nullptr);
PipelineResult run_pipeline(const EmbeddingStream& stream, const Segmentation& segmentation,
                            const Binding& w, const BridgeConfig& config,
                            PhaseTimes* times = nullptr);

// ---- checkpoints ------------------------------------------------------------
//
//   "MBCK" | u16 version=1 | u32 tensor count
//   per tensor, in name order:
//     u32 name bytes | name (UTF-8) | u32 rank | rank x u64 extents
//     | element count x f64
//
// Little-endian throughout.

inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<std::uint8_t> write_checkpoint(const ParamStore& params);
ParamStore read_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::string& path, const ParamStore& params);
ParamStore load_checkpoint(const std::string& path);

}  // namespace membridge
