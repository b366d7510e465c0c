#include "meal/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

#include "meal/error.hpp"

namespace meal {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape, real fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<real> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_numel(shape_))
    throw ShapeError("tensor: " + std::to_string(data_.size()) + " values do not fill shape " +
                     shape_string(shape_));
}

std::span<real> Tensor::row(std::size_t i) {
  const std::size_t w = slice_size();
  return {data_.data() + i * w, w};
}

std::span<const real> Tensor::row(std::size_t i) const {
  const std::size_t w = slice_size();
  return {data_.data() + i * w, w};
}

std::size_t Tensor::slice_size() const {
  if (shape_.empty() || shape_[0] == 0) return 0;
  return data_.size() / shape_[0];
}

void Tensor::fill(real v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::reshape(std::vector<std::size_t> shape) {
  if (shape_numel(shape) != data_.size())
    throw ShapeError("reshape " + shape_string(shape_) + " -> " + shape_string(shape));
  shape_ = std::move(shape);
}

void require_shape(const Tensor& t, const std::vector<std::size_t>& shape, const char* what) {
  if (t.shape() != shape)
    throw ShapeError(std::string(what) + ": expected shape " + shape_string(shape) + ", got " +
                     shape_string(t.shape()));
}

void require_finite(std::span<const real> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]))
      throw NumericalError(std::string(what) + ": non-finite value at index " + std::to_string(i));
  }
}

}  // namespace meal
