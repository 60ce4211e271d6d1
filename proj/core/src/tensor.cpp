#include "wavevit/tensor.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

namespace wavevit {

const char* dtype_name(DType d) {
  switch (d) {
    case DType::f64:
      return "binary64";
    case DType::f32:
      return "binary32";
  }
  return "unknown";
}

std::string Shape4::str() const {
  std::ostringstream os;
  os << *this;
  return os.str();
}

std::ostream& operator<<(std::ostream& os, const Shape4& s) {
  return os << '(' << s.n << ", " << s.c << ", " << s.h << ", " << s.w << ')';
}

template <typename T>
bool Tensor4<T>::all_finite() const {
  for (T v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename T>
double Tensor4<T>::squared_norm() const {
  double acc = 0.0;
  for (T v : data_) acc += static_cast<double>(v) * static_cast<double>(v);
  return acc;
}

template <typename T>
static void require_same_shape(const Tensor4<T>& a, const Tensor4<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shapes " + a.shape().str() + " and " +
                     b.shape().str() + " differ");
  }
}

template <typename T>
double max_rel_diff(const Tensor4<T>& a, const Tensor4<T>& b, double floor) {
  require_same_shape(a, b, "max_rel_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double x = a[i], y = b[i];
    const double denom = std::max({std::abs(x), std::abs(y), floor});
    worst = std::max(worst, std::abs(x - y) / denom);
  }
  return worst;
}

template <typename T>
double max_abs_diff(const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return worst;
}

template <typename T>
double rel_error_norm(const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_shape(a, b, "rel_error_norm");
  double num = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    num += d * d;
  }
  return std::sqrt(num) / std::max(std::sqrt(b.squared_norm()), 1e-300);
}

template class Tensor4<float>;
template class Tensor4<double>;

template double max_rel_diff(const Tensor4<float>&, const Tensor4<float>&, double);
template double max_rel_diff(const Tensor4<double>&, const Tensor4<double>&, double);
template double max_abs_diff(const Tensor4<float>&, const Tensor4<float>&);
template double max_abs_diff(const Tensor4<double>&, const Tensor4<double>&);
template double rel_error_norm(const Tensor4<float>&, const Tensor4<float>&);
template double rel_error_norm(const Tensor4<double>&, const Tensor4<double>&);

}  // namespace wavevit
