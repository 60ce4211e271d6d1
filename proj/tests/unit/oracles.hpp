#pragma once

// Independent reference implementations used by the unit tests. They work
// on plain nested loops in long double and share no code with the library.

#include <cmath>
#include <cstddef>
#include <vector>

#include "wavevit/random.hpp"
#include "wavevit/tensor.hpp"

namespace oracle {

using wavevit::Shape4;
using wavevit::Tensor4;
using LD = long double;

inline Tensor4<double> matmul(const Tensor4<double>& a, const Tensor4<double>& b) {
  const Shape4 sa = a.shape(), sb = b.shape();
  Tensor4<double> out({sa.n, sa.c, sa.h, sb.w});
  for (std::size_t n = 0; n < sa.n; ++n)
    for (std::size_t c = 0; c < sa.c; ++c)
      for (std::size_t i = 0; i < sa.h; ++i)
        for (std::size_t j = 0; j < sb.w; ++j) {
          LD acc = 0;
          for (std::size_t k = 0; k < sa.w; ++k) {
            acc += static_cast<LD>(a.at(n, c, i, k)) * b.at(sb.n == 1 ? 0 : n, sb.c == 1 ? 0 : c, k, j);
          }
          out.at(n, c, i, j) = static_cast<double>(acc);
        }
  return out;
}

inline Tensor4<double> conv2d(const Tensor4<double>& x, const Tensor4<double>& w, const std::vector<double>& bias,
                              std::size_t stride, std::size_t pad) {
  const Shape4 sx = x.shape(), sw = w.shape();
  const std::size_t k = sw.h;
  const std::size_t oh = (sx.h + 2 * pad - k) / stride + 1, ow = (sx.w + 2 * pad - k) / stride + 1;
  Tensor4<double> out({sx.n, sw.n, oh, ow});
  for (std::size_t n = 0; n < sx.n; ++n)
    for (std::size_t o = 0; o < sw.n; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          LD acc = bias.empty() ? 0 : bias[o];
          for (std::size_t i = 0; i < sx.c; ++i)
            for (std::size_t u = 0; u < k; ++u)
              for (std::size_t v = 0; v < k; ++v) {
                const long iy = static_cast<long>(y * stride + u) - static_cast<long>(pad);
                const long ix = static_cast<long>(xx * stride + v) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(sx.h) || ix >= static_cast<long>(sx.w)) continue;
                acc += static_cast<LD>(x.at(n, i, iy, ix)) * w.at(o, i, u, v);
              }
          out.at(n, o, y, xx) = static_cast<double>(acc);
        }
  return out;
}

inline Tensor4<double> avg_pool(const Tensor4<double>& x, std::size_t k, std::size_t s) {
  const Shape4 sx = x.shape();
  const std::size_t oh = (sx.h - k) / s + 1, ow = (sx.w - k) / s + 1;
  Tensor4<double> out({sx.n, sx.c, oh, ow});
  for (std::size_t n = 0; n < sx.n; ++n)
    for (std::size_t c = 0; c < sx.c; ++c)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          LD acc = 0;
          for (std::size_t u = 0; u < k; ++u)
            for (std::size_t v = 0; v < k; ++v) acc += x.at(n, c, y * s + u, xx * s + v);
          out.at(n, c, y, xx) = static_cast<double>(acc / (k * k));
        }
  return out;
}

inline std::vector<LD> softmax(const std::vector<LD>& row) {
  std::vector<LD> out(row.size());
  LD denom = 0;
  for (LD v : row) denom += std::exp(v);
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = std::exp(row[i]) / denom;
  return out;
}

inline LD gelu(LD x) {
  const LD c = std::sqrt(2.0L / 3.14159265358979323846264338327950288L);
  return 0.5L * x * (1.0L + std::tanh(c * (x + 0.044715L * x * x * x)));
}

// Haar analysis straight from the 2x2 block formulas.
struct Bands {
  Tensor4<double> ll, lh, hl, hh;
};

inline Bands haar_blocks(const Tensor4<double>& x) {
  const Shape4 s = x.shape();
  const Shape4 half{s.n, s.c, s.h / 2, s.w / 2};
  Bands b{Tensor4<double>(half), Tensor4<double>(half), Tensor4<double>(half), Tensor4<double>(half)};
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < half.h; ++i)
        for (std::size_t j = 0; j < half.w; ++j) {
          const LD a = x.at(n, c, 2 * i, 2 * j), bb = x.at(n, c, 2 * i, 2 * j + 1);
          const LD cc = x.at(n, c, 2 * i + 1, 2 * j), d = x.at(n, c, 2 * i + 1, 2 * j + 1);
          b.ll.at(n, c, i, j) = static_cast<double>((a + bb + cc + d) / 2);
          b.lh.at(n, c, i, j) = static_cast<double>((a + bb - cc - d) / 2);
          b.hl.at(n, c, i, j) = static_cast<double>((a - bb + cc - d) / 2);
          b.hh.at(n, c, i, j) = static_cast<double>((a - bb - cc + d) / 2);
        }
  return b;
}

// Per-head scaled dot-product attention on (rows, D) matrices.
inline Tensor4<double> attention(const Tensor4<double>& q, const Tensor4<double>& k, const Tensor4<double>& v,
                                 std::size_t heads) {
  const std::size_t n = q.shape().h, m = k.shape().h, D = q.shape().w, dh = D / heads;
  Tensor4<double> out({1, 1, n, D});
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<LD> scores(m);
      for (std::size_t j = 0; j < m; ++j) {
        LD dot = 0;
        for (std::size_t d = 0; d < dh; ++d) dot += static_cast<LD>(q.at(0, 0, i, h * dh + d)) * k.at(0, 0, j, h * dh + d);
        scores[j] = dot / std::sqrt(static_cast<LD>(dh));
      }
      const auto p = softmax(scores);
      for (std::size_t d = 0; d < dh; ++d) {
        LD acc = 0;
        for (std::size_t j = 0; j < m; ++j) acc += p[j] * v.at(0, 0, j, h * dh + d);
        out.at(0, 0, i, h * dh + d) = static_cast<double>(acc);
      }
    }
  return out;
}

inline Tensor4<double> uniform(Shape4 s, wavevit::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor4<double> t(s);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline double max_abs(const Tensor4<double>& a, const Tensor4<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_rel(const Tensor4<double>& a, const Tensor4<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = std::max({std::abs(a[i]), std::abs(b[i]), 1e-300});
    m = std::max(m, std::abs(a[i] - b[i]) / d);
  }
  return m;
}

}  // namespace oracle

namespace oracle {

// max |a-b| scaled by the larger of 1 and the oracle's magnitude.
inline double scaled_err(const wavevit::Tensor4<double>& got, const wavevit::Tensor4<double>& want) {
  double scale = 1.0;
  for (double v : want.data()) scale = std::max(scale, std::abs(v));
  return max_abs(got, want) / scale;
}

}  // namespace oracle
