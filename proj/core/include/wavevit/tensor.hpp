#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wavevit {

/// Thrown when operand dimensions are incompatible with an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown for invalid model/attention/training configurations.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown by the binary readers on malformed input.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { f64 = 0, f32 = 1 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<double>() { return DType::f64; }
template <>
constexpr DType dtype_of<float>() { return DType::f32; }

const char* dtype_name(DType d);

/// (batch, channels, height, width). Matrices use (batch, heads, rows, cols).
struct Shape4 {
  std::size_t n = 0, c = 0, h = 0, w = 0;

  constexpr std::size_t numel() const { return n * c * h * w; }
  constexpr std::size_t operator[](std::size_t axis) const {
    return axis == 0 ? n : axis == 1 ? c : axis == 2 ? h : w;
  }
  constexpr std::array<std::size_t, 4> dims() const { return {n, c, h, w}; }
  friend constexpr bool operator==(const Shape4&, const Shape4&) = default;

  std::string str() const;
};

std::ostream& operator<<(std::ostream& os, const Shape4& s);

/// Dense row-major (n, c, h, w) array. Plain value type; gradients live on
/// the autograd Var that wraps it.
template <typename T>
class Tensor4 {
 public:
  using value_type = T;

  Tensor4() = default;
  explicit Tensor4(Shape4 shape, T fill = T(0))
      : shape_(shape), data_(shape.numel(), fill) {}
  Tensor4(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw ShapeError("Tensor4: data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
    }
  }

  const Shape4& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) const {
    return ((b * shape_.c + ch) * shape_.h + y) * shape_.w + x;
  }
  T& at(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) {
    return data_[offset(b, ch, y, x)];
  }
  const T& at(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) const {
    return data_[offset(b, ch, y, x)];
  }

  /// Same data, new dims; numel must agree.
  Tensor4 reshaped(Shape4 s) const {
    if (s.numel() != numel()) {
      throw ShapeError("reshape: " + shape_.str() + " -> " + s.str() +
                       " changes element count");
    }
    return Tensor4(s, data_);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const;
  /// Sum of squares accumulated in double.
  double squared_norm() const;

  template <typename U>
  Tensor4<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor4<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor4&, const Tensor4&) = default;

 private:
  Shape4 shape_{};
  std::vector<T> data_;
};

/// Largest |a-b| / max(|a|, |b|, floor) over all elements.
template <typename T>
double max_rel_diff(const Tensor4<T>& a, const Tensor4<T>& b, double floor = 1e-30);
template <typename T>
double max_abs_diff(const Tensor4<T>& a, const Tensor4<T>& b);

/// ‖a-b‖ / max(‖b‖, floor), the norm-wise relative error.
template <typename T>
double rel_error_norm(const Tensor4<T>& a, const Tensor4<T>& b);

extern template class Tensor4<float>;
extern template class Tensor4<double>;

}  // namespace wavevit
