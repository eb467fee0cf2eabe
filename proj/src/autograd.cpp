#include "membridge/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "membridge/error.hpp"

namespace membridge::ad {

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Tensor Var::grad() const {
  if (!node_->grad.empty()) return node_->grad;
  return Tensor(node_->value.shape(), 0.0);
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node), nullptr);
}

Var Tape::leaf(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  nodes_.push_back(node);
  return Var(std::move(node), this);
}

Var make_result(Tensor value, std::initializer_list<const Var*> inputs,
                std::function<void(Node&)> backward) {
  Tape* tape = nullptr;
  for (const Var* v : inputs) {
    if (v->tape_) {
      require(tape == nullptr || tape == v->tape_, ErrorKind::Config,
              "op mixes vars from different tapes");
      tape = v->tape_;
    }
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (tape) {
    node->requires_grad = true;
    node->backward = std::move(backward);
    tape->nodes_.push_back(node);
  }
  return Var(std::move(node), tape);
}

void Tape::backward(const Var& loss) {
  require(loss.valid() && loss.value().size() == 1, ErrorKind::Config,
          "loss must be a scalar");
  require(loss.tape() == this, ErrorKind::Config, "loss not recorded on this tape");
  for (auto& n : nodes_) n->grad = Tensor();
  loss.node()->grad_buffer()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.backward && !n.grad.empty()) n.backward(n);
  }
}

std::vector<Tensor> gradients(Tape& tape, const Var& loss,
                              std::span<const Var> targets) {
  tape.backward(loss);
  std::vector<Tensor> out;
  out.reserve(targets.size());
  for (const Var& t : targets) out.push_back(t.grad());
  return out;
}

Tensor finite_difference(const std::function<double(const Tensor&)>& f,
                         const Tensor& x, double eps) {
  require(eps > 0.0, ErrorKind::Config, "finite difference step must be positive");
  Tensor grad(x.shape(), 0.0);
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = f(probe);
    probe[i] = orig - eps;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

namespace {

using NodePtr = std::shared_ptr<Node>;

void check_same_shape(const Var& a, const Var& b, const char* what) {
  if (a.value().size() != b.value().size() || a.rows() != b.rows())
    fail(ErrorKind::Config, std::string(what) + ": shape mismatch " +
                                shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
}

}  // namespace

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  NodePtr na = a.node(), nb = b.node();
  return make_result(std::move(out), {&a, &b}, [na, nb](Node& self) {
    for (Node* n : {na.get(), nb.get()}) {
      if (!n->requires_grad) continue;
      Tensor& g = n->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  NodePtr na = a.node(), nb = b.node();
  return make_result(std::move(out), {&a, &b}, [na, nb](Node& self) {
    if (na->requires_grad) {
      Tensor& g = na->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (nb->requires_grad) {
      Tensor& g = nb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  NodePtr na = a.node(), nb = b.node();
  return make_result(std::move(out), {&a, &b}, [na, nb](Node& self) {
    if (na->requires_grad) {
      Tensor& g = na->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * nb->value[i];
    }
    if (nb->requires_grad) {
      Tensor& g = nb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * na->value[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (double& x : out.values()) x *= s;
  NodePtr na = a.node();
  return make_result(std::move(out), {&a}, [na, s](Node& self) {
    if (!na->requires_grad) return;
    Tensor& g = na->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Var add_bias(const Var& a, const Var& bias) {
  const std::size_t r = a.rows(), c = a.cols();
  require(bias.value().size() == c, ErrorKind::Config, "bias width mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) += bias.value()[j];
  NodePtr na = a.node(), nb = bias.node();
  return make_result(std::move(out), {&a, &bias}, [na, nb, r, c](Node& self) {
    if (na->requires_grad) {
      Tensor& g = na->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (nb->requires_grad) {
      Tensor& g = nb->grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += self.grad(i, j);
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  Tensor out = membridge::matmul(a.value(), b.value());
  NodePtr na = a.node(), nb = b.node();
  return make_result(std::move(out), {&a, &b}, [na, nb](Node& self) {
    const Tensor& A = na->value;
    const Tensor& B = nb->value;
    const Tensor& G = self.grad;
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    if (na->requires_grad) {
      Tensor& gA = na->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double* grow = &G(i, 0);
          const double* brow = &B(p, 0);
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          gA(i, p) += s;
        }
    }
    if (nb->requires_grad) {
      Tensor& gB = nb->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A(i, p);
          const double* grow = &G(i, 0);
          double* gbrow = &gB(p, 0);
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
    }
  });
}

Var matmul_bt(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const std::size_t m = A.rows(), k = A.cols(), n = B.rows();
  require(B.cols() == k, ErrorKind::Config, "matmul_bt inner dimension mismatch");
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = dot(A.row(i), B.row(j));
  NodePtr na = a.node(), nb = b.node();
  return make_result(std::move(out), {&a, &b}, [na, nb, m, k, n](Node& self) {
    const Tensor& A = na->value;
    const Tensor& B = nb->value;
    const Tensor& G = self.grad;
    if (na->requires_grad) {
      Tensor& gA = na->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double g = G(i, j);
          const double* brow = &B(j, 0);
          double* garow = &gA(i, 0);
          for (std::size_t p = 0; p < k; ++p) garow[p] += g * brow[p];
        }
    }
    if (nb->requires_grad) {
      Tensor& gB = nb->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double g = G(i, j);
          const double* arow = &A(i, 0);
          double* gbrow = &gB(j, 0);
          for (std::size_t p = 0; p < k; ++p) gbrow[p] += g * arow[p];
        }
    }
  });
}

Var transpose(const Var& a) {
  Tensor out = membridge::transpose(a.value());
  NodePtr na = a.node();
  return make_result(std::move(out), {&a}, [na](Node& self) {
    if (!na->requires_grad) return;
    Tensor& g = na->grad_buffer();
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) g(i, j) += self.grad(j, i);
  });
}

Var softmax_rows(const Var& a) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i) softmax_inplace(out.row(i));
  NodePtr na = a.node();
  return make_result(std::move(out), {&a}, [na](Node& self) {
    if (!na->requires_grad) return;
    Tensor& g = na->grad_buffer();
    const Tensor& y = self.value;
    for (std::size_t i = 0; i < y.rows(); ++i) {
      const double inner = dot(self.grad.row(i), y.row(i));
      for (std::size_t j = 0; j < y.cols(); ++j)
        g(i, j) += y(i, j) * (self.grad(i, j) - inner);
    }
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Tensor& X = x.value();
  const std::size_t r = X.rows(), c = X.cols();
  require(gain.value().size() == c && bias.value().size() == c,
          ErrorKind::Config, "layer norm parameter width mismatch");
  Tensor xhat = Tensor::matrix(r, c);
  std::vector<double> inv_std(r);
  Tensor out = Tensor::matrix(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += X(i, j);
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double dlt = X(i, j) - mean;
      var += dlt * dlt;
    }
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat(i, j) = (X(i, j) - mean) * inv_std[i];
      out(i, j) = xhat(i, j) * gain.value()[j] + bias.value()[j];
    }
  }
  if (x.rows() == 1 && x.shape().size() == 1) out = out.reshaped(x.shape());
  NodePtr nx = x.node(), ng = gain.node(), nb = bias.node();
  return make_result(
      std::move(out), {&x, &gain, &bias},
      [nx, ng, nb, xhat = std::move(xhat), inv_std = std::move(inv_std), r, c](Node& self) {
        const Tensor& G = self.grad;
        if (ng->requires_grad) {
          Tensor& gg = ng->grad_buffer();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gg[j] += G[i * c + j] * xhat(i, j);
        }
        if (nb->requires_grad) {
          Tensor& gb = nb->grad_buffer();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gb[j] += G[i * c + j];
        }
        if (nx->requires_grad) {
          Tensor& gx = nx->grad_buffer();
          const double n = static_cast<double>(c);
          std::vector<double> dxhat(c);
          for (std::size_t i = 0; i < r; ++i) {
            double sum_d = 0.0, sum_dx = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              dxhat[j] = G[i * c + j] * ng->value[j];
              sum_d += dxhat[j];
              sum_dx += dxhat[j] * xhat(i, j);
            }
            for (std::size_t j = 0; j < c; ++j)
              gx[i * c + j] +=
                  inv_std[i] / n * (n * dxhat[j] - sum_d - xhat(i, j) * sum_dx);
          }
        }
      });
}

Var gelu(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = membridge::gelu(v);
  NodePtr na = a.node();
  return make_result(std::move(out), {&a}, [na](Node& self) {
    if (!na->requires_grad) return;
    Tensor& g = na->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] += self.grad[i] * gelu_derivative(na->value[i]);
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), ErrorKind::Config, "concat of nothing");
  const std::size_t c = parts.front().cols();
  std::size_t total = 0;
  for (const Var& p : parts) {
    require(p.cols() == c, ErrorKind::Config, "concat_rows width mismatch");
    total += p.rows();
  }
  Tensor out = Tensor::matrix(total, c);
  std::size_t offset = 0;
  std::vector<NodePtr> nodes;
  nodes.reserve(parts.size());
  Tape* tape = nullptr;
  for (const Var& p : parts) {
    std::copy(p.value().values().begin(), p.value().values().end(),
              out.values().begin() + static_cast<std::ptrdiff_t>(offset * c));
    offset += p.rows();
    nodes.push_back(p.node());
    if (p.tape()) tape = p.tape();
  }
  auto backward = [nodes = std::move(nodes), c](Node& self) {
    std::size_t offset = 0;
    for (const NodePtr& n : nodes) {
      const std::size_t count = n->value.size();
      if (n->requires_grad) {
        Tensor& g = n->grad_buffer();
        for (std::size_t i = 0; i < count; ++i) g[i] += self.grad[offset * c + i];
      }
      offset += count / c;
    }
  };
  // make_result takes a fixed list; pick any recorded part as the carrier so
  // the result lands on the right tape.
  const Var* carrier = &parts.front();
  for (const Var& p : parts)
    if (p.tape() == tape) { carrier = &p; break; }
  for (const Var& p : parts)
    require(!p.tape() || p.tape() == tape, ErrorKind::Config,
            "op mixes vars from different tapes");
  return make_result(std::move(out), {carrier}, std::move(backward));
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), ErrorKind::Config, "concat of nothing");
  const std::size_t r = parts.front().rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    require(p.rows() == r, ErrorKind::Config, "concat_cols height mismatch");
    total += p.cols();
  }
  Tensor out = Tensor::matrix(r, total);
  std::vector<NodePtr> nodes;
  Tape* tape = nullptr;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) out(i, offset + j) = p.value()(i, j);
    offset += p.cols();
    nodes.push_back(p.node());
    if (p.tape()) tape = p.tape();
  }
  auto backward = [nodes = std::move(nodes), r, total](Node& self) {
    std::size_t offset = 0;
    for (const NodePtr& n : nodes) {
      const std::size_t w = n->value.cols();
      if (n->requires_grad) {
        Tensor& g = n->grad_buffer();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < w; ++j) g(i, j) += self.grad[i * total + offset + j];
      }
      offset += w;
    }
  };
  const Var* carrier = &parts.front();
  for (const Var& p : parts)
    if (p.tape() == tape) { carrier = &p; break; }
  for (const Var& p : parts)
    require(!p.tape() || p.tape() == tape, ErrorKind::Config,
            "op mixes vars from different tapes");
  return make_result(std::move(out), {carrier}, std::move(backward));
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t count) {
  const std::size_t c = a.cols();
  require(begin + count <= a.rows() && count > 0, ErrorKind::Config,
          "row slice out of range");
  const auto first = a.value().values().begin() + static_cast<std::ptrdiff_t>(begin * c);
  Tensor out({count, c}, std::span<const double>(&*first, count * c));
  NodePtr na = a.node();
  return make_result(std::move(out), {&a}, [na, begin, c](Node& self) {
    if (!na->requires_grad) return;
    Tensor& g = na->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * c + i] += self.grad[i];
  });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t count) {
  const std::size_t r = a.rows();
  require(begin + count <= a.cols() && count > 0, ErrorKind::Config,
          "column slice out of range");
  Tensor out = Tensor::matrix(r, count);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = a.value()(i, begin + j);
  NodePtr na = a.node();
  return make_result(std::move(out), {&a}, [na, begin, r, count](Node& self) {
    if (!na->requires_grad) return;
    Tensor& g = na->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < count; ++j) g(i, begin + j) += self.grad(i, j);
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  NodePtr na = a.node();
  return make_result(Tensor({1}, {s}), {&a}, [na](Node& self) {
    if (!na->requires_grad) return;
    Tensor& g = na->grad_buffer();
    for (double& v : g.values()) v += self.grad[0];
  });
}

Var mean_rows(const Var& a) {
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out = Tensor::matrix(1, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += a.value()(i, j);
  for (double& v : out.values()) v /= static_cast<double>(r);
  NodePtr na = a.node();
  return make_result(std::move(out), {&a}, [na, r, c](Node& self) {
    if (!na->requires_grad) return;
    Tensor& g = na->grad_buffer();
    const double w = 1.0 / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g(i, j) += w * self.grad[j];
  });
}

Var cross_entropy(const Var& logits, std::size_t label) {
  require(logits.rows() == 1, ErrorKind::Config, "cross entropy expects one logit row");
  require(label < logits.value().size(), ErrorKind::Config, "label out of range");
  Tensor probs = softmax(logits.value());
  const auto z = logits.value().values();
  const double peak = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double v : z) total += std::exp(v - peak);
  const double loss = std::log(total) + peak - z[label];
  NodePtr nl = logits.node();
  return make_result(Tensor({1}, {loss}), {&logits},
                     [nl, probs = std::move(probs), label](Node& self) {
                       if (!nl->requires_grad) return;
                       Tensor& g = nl->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i)
                         g[i] += self.grad[0] * (probs[i] - (i == label ? 1.0 : 0.0));
                     });
}

}  // namespace membridge::ad
