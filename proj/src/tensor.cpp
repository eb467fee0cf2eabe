#include "membridge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "membridge/error.hpp"

namespace membridge {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::span<const double> values)
    : shape_(std::move(shape)), data_(values.begin(), values.end()) {
  require(data_.size() == element_count(shape_), ErrorKind::Config,
          "value count does not match shape");
}

Tensor::Tensor(Shape shape, std::initializer_list<double> values)
    : Tensor(std::move(shape), std::span<const double>(values.begin(), values.size())) {}

Tensor Tensor::reshaped(Shape shape) const {
  require(element_count(shape) == size(), ErrorKind::Config,
          "reshape changes element count");
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](double x) { return std::isfinite(x); });
}

void softmax_inplace(std::span<double> v) {
  require(!v.empty(), ErrorKind::Domain, "empty softmax");
  const double peak = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double& x : v) {
    x = std::exp(x - peak);
    total += x;
  }
  for (double& x : v) x /= total;
}

Tensor softmax(const Tensor& v) {
  Tensor out = v;
  softmax_inplace(out.values());
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  require(b.rows() == k, ErrorKind::Config, "matmul inner dimension mismatch");
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = &out(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a(i, p);
      const double* brow = b.values().data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out = Tensor::matrix(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double c = dot(a, b) / (norm(a) * norm(b));
  return std::clamp(c, -1.0, 1.0);
}

namespace {
constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;
}  // namespace

// tanh approximation
double gelu(double x) {
  const double inner = kGeluScale * (x + kGeluCubic * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(inner));
}

double gelu_derivative(double x) {
  const double inner = kGeluScale * (x + kGeluCubic * x * x * x);
  const double t = std::tanh(inner);
  const double dinner = kGeluScale * (1.0 + 3.0 * kGeluCubic * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner;
}

}  // namespace membridge
