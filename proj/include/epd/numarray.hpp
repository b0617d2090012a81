#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "epd/errors.hpp"

namespace epd {

// Dense row-major float32 array. Shapes are lists of positive extents;
// a scalar is shape {1}.
struct NumArray {
  std::vector<int64_t> shape;
  std::vector<float> data;

  NumArray() = default;

  static NumArray zeros(std::vector<int64_t> shape);
  static NumArray full(std::vector<int64_t> shape, float v);
  static NumArray scalar(float v);
  static NumArray from(std::vector<int64_t> shape, std::vector<float> values);

  int64_t numel() const;
  int ndim() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape.at(static_cast<size_t>(i)); }
  int64_t rows() const { return dim(0); }
  int64_t cols() const { return dim(1); }

  float& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
  float at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

  float item() const;

  bool same_shape(const NumArray& o) const { return shape == o.shape; }
  bool all_finite() const;

  std::string shape_str() const;
};

int64_t shape_numel(const std::vector<int64_t>& shape);

// Throws NumericError naming `where` if any element is NaN/Inf.
void check_finite(const NumArray& a, const char* where);

void require_same_shape(const NumArray& a, const NumArray& b, const char* where);

}  // namespace epd
