#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace benn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense float tensor, row-major, with an optional gradient buffer of the same
// shape.
class RealTensor {
 public:
  RealTensor() = default;
  explicit RealTensor(Shape shape, float fill = 0.0f);
  RealTensor(Shape shape, std::vector<float> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }
  float* data() { return values_.data(); }
  const float* data() const { return values_.data(); }
  float& operator[](std::size_t i) { return values_[i]; }
  float operator[](std::size_t i) const { return values_[i]; }

  bool has_grad() const { return !values_.empty() && grad_.size() == values_.size(); }
  void enable_grad() { grad_.assign(values_.size(), 0.0f); }
  void zero_grad();
  std::span<float> grad() { return grad_; }
  std::span<const float> grad() const { return grad_; }

  // Same values, new shape of equal element count.
  RealTensor reshaped(Shape shape) const;
  // Rows [begin, end) along the leading dimension.
  RealTensor slice_rows(std::size_t begin, std::size_t end) const;

  // Index of the first non-finite value, or size() if all finite.
  std::size_t first_non_finite() const;

  bool operator==(const RealTensor& other) const {
    return shape_ == other.shape_ && values_ == other.values_;
  }

 private:
  Shape shape_;
  std::vector<float> values_;
  std::vector<float> grad_;
};

}  // namespace benn
