#include "epd/numarray.hpp"

#include <cmath>
#include <sstream>

namespace epd {

int64_t shape_numel(const std::vector<int64_t>& shape) {
  if (shape.empty()) throw DimensionError("empty shape");
  int64_t n = 1;
  for (int64_t e : shape) {
    if (e <= 0) throw DimensionError("non-positive extent in shape");
    n *= e;
  }
  return n;
}

NumArray NumArray::zeros(std::vector<int64_t> shape) {
  NumArray a;
  int64_t n = shape_numel(shape);
  a.shape = std::move(shape);
  a.data.assign(static_cast<size_t>(n), 0.0f);
  return a;
}

NumArray NumArray::full(std::vector<int64_t> shape, float v) {
  NumArray a = zeros(std::move(shape));
  for (float& x : a.data) x = v;
  return a;
}

NumArray NumArray::scalar(float v) {
  NumArray a;
  a.shape = {1};
  a.data = {v};
  return a;
}

NumArray NumArray::from(std::vector<int64_t> shape, std::vector<float> values) {
  int64_t n = shape_numel(shape);
  if (n != static_cast<int64_t>(values.size()))
    throw DimensionError("value count does not match shape");
  NumArray a;
  a.shape = std::move(shape);
  a.data = std::move(values);
  return a;
}

int64_t NumArray::numel() const { return static_cast<int64_t>(data.size()); }

float NumArray::item() const {
  if (data.size() != 1) throw DimensionError("item() on non-scalar array");
  return data[0];
}

bool NumArray::all_finite() const {
  for (float x : data)
    if (!std::isfinite(x)) return false;
  return true;
}

std::string NumArray::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

void check_finite(const NumArray& a, const char* where) {
  if (!a.all_finite())
    throw NumericError(std::string("non-finite value produced by ") + where);
}

void require_same_shape(const NumArray& a, const NumArray& b, const char* where) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(where) + ": shape mismatch " + a.shape_str() +
                         " vs " + b.shape_str());
}

}  // namespace epd
