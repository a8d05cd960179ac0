#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace gcum {

using Shape = std::vector<std::size_t>;

// Dense row-major array of doubles. Rank 1 tensors behave as a single row
// wherever a matrix is expected.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::vector<double> values);
  static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }
  static Tensor identity(std::size_t n);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t rows() const noexcept { return shape_.size() == 1 ? 1 : shape_.front(); }
  std::size_t cols() const noexcept { return shape_.empty() ? 0 : shape_.back(); }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  std::vector<double>& data() noexcept { return values_; }
  const std::vector<double>& data() const noexcept { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols(), cols()}; }
  std::span<double> row(std::size_t r) { return {values_.data() + r * cols(), cols()}; }

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

std::size_t shape_numel(const Shape& shape);

}  // namespace gcum
