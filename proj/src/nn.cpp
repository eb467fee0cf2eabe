#include "membridge/nn.hpp"

#include <cmath>

#include "membridge/error.hpp"

namespace membridge {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

void ParamStore::add(const std::string& name, Tensor value) {
  require(!contains(name), ErrorKind::Config, "duplicate parameter name");
  tensors_.emplace(name, std::move(value));
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) fail(ErrorKind::Config, "unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) fail(ErrorKind::Config, "unknown parameter: " + name);
  return it->second;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.size();
  return n;
}

Binding Binding::constants(const ParamStore& params) {
  Binding b;
  for (const auto& [name, t] : params) b.vars_.emplace(name, ad::constant(t));
  return b;
}

Binding Binding::leaves(const ParamStore& params, ad::Tape& tape) {
  Binding b;
  for (const auto& [name, t] : params) b.vars_.emplace(name, tape.leaf(t));
  return b;
}

Binding Binding::of(std::map<std::string, ad::Var> vars) {
  Binding b;
  b.vars_ = std::move(vars);
  return b;
}

const ad::Var& Binding::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) fail(ErrorKind::Config, "unbound parameter: " + name);
  return it->second;
}

Tensor random_normal(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape), 0.0);
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

ad::Var multi_head_attention(const ad::Var& query, const ad::Var& key,
                             const ad::Var& value, const AttentionProjections& proj,
                             std::size_t heads, AttentionTrace* trace) {
  const std::size_t d = query.cols();
  require(heads >= 1 && d % heads == 0, ErrorKind::Config,
          "model width not divisible by head count");
  require(key.rows() >= 1 && key.value().size() > 0, ErrorKind::Domain, "empty key set");
  require(key.rows() == value.rows(), ErrorKind::Config, "key/value length mismatch");
  require(key.cols() == d && value.cols() == d, ErrorKind::Config,
          "attention width mismatch");

  const std::size_t dk = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  const ad::Var q = ad::matmul(query, proj.query);
  const ad::Var k = ad::matmul(key, proj.key);
  const ad::Var v = ad::matmul(value, proj.value);

  if (trace) trace->weights.clear();
  std::vector<ad::Var> head_outputs;
  head_outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    ad::Var qh = heads == 1 ? q : ad::slice_cols(q, h * dk, dk);
    ad::Var kh = heads == 1 ? k : ad::slice_cols(k, h * dk, dk);
    ad::Var vh = heads == 1 ? v : ad::slice_cols(v, h * dk, dk);
    ad::Var weights = ad::softmax_rows(ad::scale(ad::matmul_bt(qh, kh), inv_sqrt));
    if (trace) trace->weights.push_back(weights.value());
    head_outputs.push_back(ad::matmul(weights, vh));
  }
  ad::Var combined = heads == 1 ? head_outputs.front() : ad::concat_cols(head_outputs);
  if (proj.output) combined = ad::matmul(combined, *proj.output);
  return combined;
}

AttentionProjections attention_projections(const Binding& w, const std::string& prefix,
                                           bool with_output) {
  AttentionProjections p{w[prefix + "wq"], w[prefix + "wk"], w[prefix + "wv"], std::nullopt};
  if (with_output) p.output = w[prefix + "wo"];
  return p;
}

void init_attention(ParamStore& params, const std::string& prefix, std::size_t dim,
                    Rng& rng, bool with_output) {
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  params.add(prefix + "wq", random_normal({dim, dim}, s, rng));
  params.add(prefix + "wk", random_normal({dim, dim}, s, rng));
  params.add(prefix + "wv", random_normal({dim, dim}, s, rng));
  if (with_output) params.add(prefix + "wo", random_normal({dim, dim}, s, rng));
}

void init_transformer_block(ParamStore& params, const std::string& prefix,
                            std::size_t dim, std::size_t ffn_hidden, Rng& rng) {
  params.add(prefix + "ln1.gain", Tensor({dim}, 1.0));
  params.add(prefix + "ln1.bias", Tensor({dim}, 0.0));
  init_attention(params, prefix + "attn.", dim, rng);
  params.add(prefix + "ln2.gain", Tensor({dim}, 1.0));
  params.add(prefix + "ln2.bias", Tensor({dim}, 0.0));
  params.add(prefix + "ffn.w1",
             random_normal({dim, ffn_hidden}, 1.0 / std::sqrt(static_cast<double>(dim)), rng));
  params.add(prefix + "ffn.b1", Tensor({ffn_hidden}, 0.0));
  params.add(prefix + "ffn.w2",
             random_normal({ffn_hidden, dim},
                           1.0 / std::sqrt(static_cast<double>(ffn_hidden)), rng));
  params.add(prefix + "ffn.b2", Tensor({dim}, 0.0));
}

ad::Var transformer_block(const ad::Var& x, const Binding& w, const std::string& prefix,
                          std::size_t heads, AttentionTrace* trace) {
  const ad::Var n1 = ad::layer_norm(x, w[prefix + "ln1.gain"], w[prefix + "ln1.bias"]);
  const ad::Var attn = multi_head_attention(
      n1, n1, n1, attention_projections(w, prefix + "attn."), heads, trace);
  const ad::Var h = x + attn;
  const ad::Var n2 = ad::layer_norm(h, w[prefix + "ln2.gain"], w[prefix + "ln2.bias"]);
  ad::Var ff = ad::gelu(ad::add_bias(ad::matmul(n2, w[prefix + "ffn.w1"]), w[prefix + "ffn.b1"]));
  ff = ad::add_bias(ad::matmul(ff, w[prefix + "ffn.w2"]), w[prefix + "ffn.b2"]);
  return h + ff;
}

}  // namespace membridge
