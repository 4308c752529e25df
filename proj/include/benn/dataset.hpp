#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "benn/tensor.hpp"

namespace benn {

// Images [N x C x H x W] (or [N x D] for vector toys) in [-1, 1].
struct Dataset {
  RealTensor images;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  std::string split;

  std::size_t size() const { return labels.size(); }
  Shape example_shape() const { return Shape(images.shape().begin() + 1, images.shape().end()); }
  // Rows in `indices` order (duplicates allowed).
  Dataset gather(std::span<const std::size_t> indices) const;
  // Throws DataError if labels are out of range or values leave [-1, 1].
  void validate() const;
};

}  // namespace benn
