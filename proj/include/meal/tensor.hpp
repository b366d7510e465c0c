#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace meal {

using real = double;

/// Dense row-major tensor of doubles. Shapes are at most 4-D (NCHW).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, real fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<real> values);

  [[nodiscard]] const std::vector<std::size_t>& shape() const { return shape_; }
  [[nodiscard]] std::size_t dim(std::size_t i) const { return shape_.at(i); }
  [[nodiscard]] std::size_t rank() const { return shape_.size(); }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  [[nodiscard]] real* data() { return data_.data(); }
  [[nodiscard]] const real* data() const { return data_.data(); }
  [[nodiscard]] std::span<real> values() { return data_; }
  [[nodiscard]] std::span<const real> values() const { return data_; }
  [[nodiscard]] std::vector<real>& storage() { return data_; }
  [[nodiscard]] const std::vector<real>& storage() const { return data_; }

  real& operator[](std::size_t i) { return data_[i]; }
  real operator[](std::size_t i) const { return data_[i]; }

  /// Row `i` of a 2-D tensor.
  [[nodiscard]] std::span<real> row(std::size_t i);
  [[nodiscard]] std::span<const real> row(std::size_t i) const;

  /// Size of one leading-dimension slice (product of all but the first dim).
  [[nodiscard]] std::size_t slice_size() const;

  void fill(real v);
  void reshape(std::vector<std::size_t> shape);

  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<real> data_;
};

[[nodiscard]] std::size_t shape_numel(const std::vector<std::size_t>& shape);
[[nodiscard]] std::string shape_string(const std::vector<std::size_t>& shape);

/// Throws ShapeError unless `t` has exactly `shape`.
void require_shape(const Tensor& t, const std::vector<std::size_t>& shape, const char* what);

/// Throws NumericalError on the first NaN/Inf entry.
void require_finite(std::span<const real> values, const char* what);

}  // namespace meal
