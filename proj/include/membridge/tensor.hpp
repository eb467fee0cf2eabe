#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "membridge/tracking.hpp"

namespace membridge {

using Shape = std::vector<std::size_t>;
using Storage = std::vector<double, TrackingAllocator<double>>;

std::size_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles. Rank 1 and rank 2 cover the whole
// pipeline; rank-2 accessors treat a rank-1 tensor as a single row.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::span<const double> values);
  Tensor(Shape shape, std::initializer_list<double> values);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor vector(std::span<const double> values) {
    return Tensor({values.size()}, values);
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const noexcept {
    if (shape_.empty()) return data_.empty() ? 0 : 1;
    return shape_.size() == 1 ? 1 : shape_[0];
  }
  std::size_t cols() const noexcept {
    if (shape_.empty()) return data_.size();
    return shape_.size() == 1 ? shape_[0] : shape_[1];
  }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) noexcept {
    return data_[r * cols() + c];
  }
  const double& operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols() + c];
  }

  std::span<double> values() noexcept { return {data_.data(), data_.size()}; }
  std::span<const double> values() const noexcept {
    return {data_.data(), data_.size()};
  }
  std::span<double> row(std::size_t r) noexcept {
    return {data_.data() + r * cols(), cols()};
  }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols(), cols()};
  }

  // Bytes held by the backing buffer.
  std::size_t storage_bytes() const noexcept {
    return data_.capacity() * sizeof(double);
  }

  Tensor reshaped(Shape shape) const;
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  Storage data_;
};

// Value-level kernels shared by the differentiable ops.
void softmax_inplace(std::span<double> v);
Tensor softmax(const Tensor& v);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
double cosine_similarity(std::span<const double> a, std::span<const double> b);
double gelu(double x);
double gelu_derivative(double x);

inline constexpr double kLayerNormEps = 1e-5;

}  // namespace membridge
