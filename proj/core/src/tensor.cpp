#include "styleforge/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "styleforge/error.hpp"

namespace styleforge {

std::string Shape::str() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) +
         ", " + std::to_string(w) + ")";
}

namespace {

void check_extents(const Shape& s) {
  if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
    throw InvalidArgument("tensor extents must all be >= 1, got " + s.str());
  }
}

}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(shape) {
  check_extents(shape_);
  data_.assign(shape_.numel(), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, const std::vector<T>& data)
    : BasicTensor(shape, AlignedVector<T>(data.begin(), data.end())) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, AlignedVector<T> data)
    : shape_(shape), data_(std::move(data)) {
  check_extents(shape_);
  if (data_.size() != shape_.numel()) {
    throw InvalidArgument("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_.str());
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  return BasicTensor(shape, data_);
}

template <typename T>
bool BasicTensor<T>::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
void BasicTensor<T>::fill(T value) noexcept {
  std::fill(data_.begin(), data_.end(), value);
}

template class BasicTensor<float>;
template class BasicTensor<double>;

const char* to_string(ParseErrc code) {
  switch (code) {
    case ParseErrc::bad_magic: return "bad magic";
    case ParseErrc::unsupported_version: return "unsupported version";
    case ParseErrc::unsupported_maxval: return "unsupported maxval";
    case ParseErrc::bad_dimensions: return "bad dimensions";
    case ParseErrc::truncated: return "truncated";
    case ParseErrc::trailing_data: return "trailing data";
    case ParseErrc::checksum_mismatch: return "checksum mismatch";
    case ParseErrc::missing_tensor: return "missing tensor";
    case ParseErrc::shape_mismatch: return "shape mismatch";
    case ParseErrc::malformed: return "malformed";
  }
  return "unknown";
}

}  // namespace styleforge
