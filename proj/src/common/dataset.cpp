#include "benn/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "benn/common/error.hpp"

namespace benn {

Dataset Dataset::gather(std::span<const std::size_t> indices) const {
  Dataset out;
  out.num_classes = num_classes;
  out.split = split;
  Shape shape = images.shape();
  shape[0] = indices.size();
  const std::size_t row = numel(example_shape());
  std::vector<float> values(indices.size() * row);
  out.labels.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i >= size()) throw UsageError("dataset gather: index " + std::to_string(i) + " out of range");
    std::copy_n(images.data() + i * row, row, values.begin() + static_cast<std::ptrdiff_t>(k * row));
    out.labels.push_back(labels[i]);
  }
  out.images = RealTensor(std::move(shape), std::move(values));
  return out;
}

void Dataset::validate() const {
  if (images.rank() < 2 || images.dim(0) != labels.size()) {
    throw DataError("dataset: " + std::to_string(labels.size()) + " labels for images " +
                    shape_string(images.shape()));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw DataError("dataset: label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                      " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
  for (float v : images.values()) {
    if (!(v >= -1.0f && v <= 1.0f)) throw DataError("dataset: pixel value outside [-1, 1]");
  }
}

}  // namespace benn
