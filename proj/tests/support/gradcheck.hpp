#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "membridge/autograd.hpp"
#include "membridge/nn.hpp"

namespace membridge::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  return random_normal(std::move(shape), scale, rng);
}

// Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over all
// coordinates of all inputs.
struct GradCheck {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  // Per input tensor ||analytic - numeric|| / max(||analytic||, ||numeric||, floor),
  // maximised over inputs.
  double max_tensor_relative_error = 0.0;
};

inline double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// `f` maps recorded inputs to a scalar loss. Gradients from one backward
// pass are compared against central differences of the same function
// evaluated on constants.
inline GradCheck check_gradients(
    const std::function<ad::Var(const std::vector<ad::Var>&)>& f,
    const std::vector<Tensor>& inputs, double eps = 1e-5, double floor = 1e-8) {
  ad::Tape tape;
  std::vector<ad::Var> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
  const ad::Var loss = f(leaves);
  tape.backward(loss);

  GradCheck out;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = leaves[k].grad();
    const Tensor numeric = ad::finite_difference(
        [&](const Tensor& x) {
          std::vector<ad::Var> args;
          for (std::size_t j = 0; j < inputs.size(); ++j)
            args.push_back(ad::constant(j == k ? x : inputs[j]));
          return f(args).value()[0];
        },
        inputs[k], eps);
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      diff2 += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      a2 += analytic[i] * analytic[i];
      n2 += numeric[i] * numeric[i];
      out.max_relative_error =
          std::max(out.max_relative_error, relative_error(analytic[i], numeric[i], floor));
      out.max_absolute_error =
          std::max(out.max_absolute_error, std::abs(analytic[i] - numeric[i]));
    }
    out.max_tensor_relative_error =
        std::max(out.max_tensor_relative_error,
                 std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), floor}));
  }
  return out;
}

// Collapses any output to a scalar through a fixed random projection, so
// every output coordinate contributes a distinct weight.
inline ad::Var project(const ad::Var& out, const Tensor& weights) {
  return ad::sum(ad::mul(out, ad::constant(weights)));
}

}  // namespace membridge::testing
