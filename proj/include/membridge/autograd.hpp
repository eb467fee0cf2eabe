#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "membridge/tensor.hpp"

namespace membridge::ad {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
};

class Tape;

// Handle to a value in a computation. A Var without a tape is a constant:
// ops on constants run eagerly and record nothing, which is the inference
// path. Ops touching at least one recorded Var append to that Var's tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }

  // Gradient after Tape::backward; zeros if the loss did not depend on it.
  Tensor grad() const;

  Tape* tape() const noexcept { return tape_; }
  bool recorded() const noexcept { return tape_ != nullptr; }
  bool valid() const noexcept { return static_cast<bool>(node_); }
  const std::shared_ptr<Node>& node() const noexcept { return node_; }

 private:
  friend class Tape;
  friend Var constant(Tensor value);
  friend Var make_result(Tensor value, std::initializer_list<const Var*> inputs,
                         std::function<void(Node&)> backward);

  Var(std::shared_ptr<Node> node, Tape* tape)
      : node_(std::move(node)), tape_(tape) {}

  std::shared_ptr<Node> node_;
  Tape* tape_ = nullptr;
};

// The computation record: nodes in creation order, which is a topological
// order. backward() replays adjoints in reverse creation order, so gradient
// accumulation order is fixed and results are bitwise reproducible.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // A differentiable input.
  Var leaf(Tensor value);

  void backward(const Var& loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  friend Var make_result(Tensor value, std::initializer_list<const Var*> inputs,
                         std::function<void(Node&)> backward);

  std::vector<std::shared_ptr<Node>> nodes_;
};

Var constant(Tensor value);

// Builds an op result. The backward closure receives the output node (with
// its accumulated gradient) and adds into its inputs' gradient buffers.
Var make_result(Tensor value, std::initializer_list<const Var*> inputs,
                std::function<void(Node&)> backward);

// Gradient of a scalar loss with respect to each of `targets`.
std::vector<Tensor> gradients(Tape& tape, const Var& loss,
                              std::span<const Var> targets);

// Central differences, one coordinate at a time.
Tensor finite_difference(const std::function<double(const Tensor&)>& f,
                         const Tensor& x, double eps);

// ---- differentiable primitives -------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// a[r,c] + bias[c] on every row.
Var add_bias(const Var& a, const Var& bias);
Var matmul(const Var& a, const Var& b);
// a · bᵀ
Var matmul_bt(const Var& a, const Var& b);
Var transpose(const Var& a);
Var softmax_rows(const Var& a);
Var layer_norm(const Var& x, const Var& gain, const Var& bias,
               double eps = kLayerNormEps);
Var gelu(const Var& a);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(const Var& a, std::size_t begin, std::size_t count);
Var slice_cols(const Var& a, std::size_t begin, std::size_t count);
Var sum(const Var& a);
// [r,c] -> [1,c]
Var mean_rows(const Var& a);
// Softmax cross-entropy of a single logit row against a class index.
Var cross_entropy(const Var& logits, std::size_t label);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }

}  // namespace membridge::ad
