#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "membridge/autograd.hpp"
#include "membridge/tensor.hpp"

namespace membridge {

using Rng = std::mt19937_64;

// Independent sub-seed for `stream` under a root seed (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Named learnable tensors. Iteration order is the lexicographic name order,
// which fixes the order of optimizer updates and checkpoint records.
class ParamStore {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  std::size_t size() const noexcept { return tensors_.size(); }
  std::size_t parameter_count() const;

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  std::map<std::string, Tensor> tensors_;
};

// A ParamStore viewed as graph inputs: constants for inference, tape leaves
// for training.
class Binding {
 public:
  static Binding constants(const ParamStore& params);
  static Binding leaves(const ParamStore& params, ad::Tape& tape);
  static Binding of(std::map<std::string, ad::Var> vars);

  const ad::Var& operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return vars_.count(name) != 0; }
  const std::map<std::string, ad::Var>& vars() const noexcept { return vars_; }

 private:
  std::map<std::string, ad::Var> vars_;
};

Tensor random_normal(Shape shape, double stddev, Rng& rng);

struct AttentionProjections {
  ad::Var query;   // [d, d]
  ad::Var key;     // [d, d]
  ad::Var value;   // [d, d]
  std::optional<ad::Var> output;  // head combiner; absent = plain concatenation
};

struct AttentionTrace {
  std::vector<Tensor> weights;  // one [q, k] matrix per head
};

// Scaled dot-product attention with `heads` heads of width d / heads.
ad::Var multi_head_attention(const ad::Var& query, const ad::Var& key,
                             const ad::Var& value, const AttentionProjections& proj,
                             std::size_t heads, AttentionTrace* trace = nullptr);

AttentionProjections attention_projections(const Binding& w, const std::string& prefix,
                                           bool with_output = true);
void init_attention(ParamStore& params, const std::string& prefix, std::size_t dim,
                    Rng& rng, bool with_output = true);

// Pre-norm transformer block: h = x + attn(ln1(x)); y = h + ffn(ln2(h)).
void init_transformer_block(ParamStore& params, const std::string& prefix,
                            std::size_t dim, std::size_t ffn_hidden, Rng& rng);
ad::Var transformer_block(const ad::Var& x, const Binding& w, const std::string& prefix,
                          std::size_t heads, AttentionTrace* trace = nullptr);

}  // namespace membridge
