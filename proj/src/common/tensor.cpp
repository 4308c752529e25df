#include "benn/tensor.hpp"

#include <cmath>

#include "benn/common/error.hpp"

namespace benn {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

RealTensor::RealTensor(Shape shape, float fill) : shape_(std::move(shape)), values_(numel(shape_), fill) {}

RealTensor::RealTensor(Shape shape, std::vector<float> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != numel(shape_)) {
    throw UsageError("RealTensor: " + std::to_string(values_.size()) + " values for shape " +
                     shape_string(shape_));
  }
}

void RealTensor::zero_grad() {
  if (grad_.size() != values_.size()) grad_.assign(values_.size(), 0.0f);
  else std::fill(grad_.begin(), grad_.end(), 0.0f);
}

RealTensor RealTensor::reshaped(Shape shape) const {
  if (numel(shape) != values_.size()) {
    throw UsageError("reshape " + shape_string(shape_) + " -> " + shape_string(shape));
  }
  return RealTensor(std::move(shape), values_);
}

RealTensor RealTensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (shape_.empty() || begin > end || end > shape_[0]) throw UsageError("slice_rows out of range");
  const std::size_t row = shape_[0] == 0 ? 0 : values_.size() / shape_[0];
  Shape s = shape_;
  s[0] = end - begin;
  return RealTensor(std::move(s), std::vector<float>(values_.begin() + static_cast<std::ptrdiff_t>(begin * row),
                                                    values_.begin() + static_cast<std::ptrdiff_t>(end * row)));
}

std::size_t RealTensor::first_non_finite() const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) return i;
  }
  return values_.size();
}

}  // namespace benn
