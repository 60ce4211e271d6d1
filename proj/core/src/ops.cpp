#include "wavevit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace wavevit {

namespace {

std::string dims_str(const Shape4& s) { return s.str(); }

// c[r×m] += op(a) · op(b) with op(a) of shape r×k and op(b) of shape k×m.
// ta: a is stored k×r. tb: b is stored m×k. Fixed loop order keeps results
// reproducible.
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t r, std::size_t k, std::size_t m,
              bool ta, bool tb) {
  if (!ta && !tb) {
    for (std::size_t i = 0; i < r; ++i) {
      T* crow = c + i * m;
      const T* arow = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = arow[p];
        const T* brow = b + p * m;
        for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!ta && tb) {
    for (std::size_t i = 0; i < r; ++i) {
      const T* arow = a + i * k;
      for (std::size_t j = 0; j < m; ++j) {
        const T* brow = b + j * k;
        T s = T(0);
        for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
        c[i * m + j] += s;
      }
    }
  } else if (ta && !tb) {
    for (std::size_t p = 0; p < k; ++p) {
      const T* arow = a + p * r;
      const T* brow = b + p * m;
      for (std::size_t i = 0; i < r; ++i) {
        const T av = arow[i];
        T* crow = c + i * m;
        for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        T s = T(0);
        for (std::size_t p = 0; p < k; ++p) s += a[p * r + i] * b[j * k + p];
        c[i * m + j] += s;
      }
    }
  }
}

bool is_vector_of(const Shape4& s, std::size_t len) {
  return s.n == 1 && s.c == 1 && s.h == 1 && s.w == len;
}

}  // namespace

// ---------------------------------------------------------------------------
// matmul

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool transpose_b) {
  const Shape4 sa = a.shape(), sb = b.shape();
  const std::size_t inner_b = transpose_b ? sb.w : sb.h;
  const std::size_t cols = transpose_b ? sb.h : sb.w;
  const bool batch_ok = (sb.n == sa.n || sb.n == 1) && (sb.c == sa.c || sb.c == 1);
  if (sa.w != inner_b || !batch_ok) {
    throw ShapeError("matmul: incompatible operands " + dims_str(sa) + " and " + dims_str(sb) +
                     (transpose_b ? " (b transposed)" : ""));
  }
  const std::size_t rows = sa.h, inner = sa.w;
  Tensor4<T> out({sa.n, sa.c, rows, cols});
  auto b_offset = [=](std::size_t n, std::size_t c) {
    return ((sb.n == 1 ? 0 : n) * sb.c + (sb.c == 1 ? 0 : c)) * sb.h * sb.w;
  };
  for (std::size_t n = 0; n < sa.n; ++n) {
    for (std::size_t c = 0; c < sa.c; ++c) {
      const std::size_t bi = n * sa.c + c;
      gemm_acc(a.value().data().data() + bi * rows * inner,
               b.value().data().data() + b_offset(n, c), out.data().data() + bi * rows * cols,
               rows, inner, cols, false, transpose_b);
    }
  }
  return make_result<T>(OpKind::matmul, std::move(out), {a, b},
                        [=](Node<T>& self) {
    Node<T>& na = *self.inputs[0];
    Node<T>& nb = *self.inputs[1];
    const T* g = self.grad.data().data();
    if (na.requires_grad) {
      Tensor4<T> da(sa);
      for (std::size_t bi = 0; bi < sa.n * sa.c; ++bi) {
        const std::size_t n = bi / sa.c, c = bi % sa.c;
        // dA = dC · op(B)ᵀ
        gemm_acc(g + bi * rows * cols, nb.value.data().data() + b_offset(n, c),
                 da.data().data() + bi * rows * inner, rows, cols, inner, false, !transpose_b);
      }
      accumulate_grad(na, da);
    }
    if (nb.requires_grad) {
      Tensor4<T> db(sb);
      for (std::size_t bi = 0; bi < sa.n * sa.c; ++bi) {
        const std::size_t n = bi / sa.c, c = bi % sa.c;
        const T* ab = na.value.data().data() + bi * rows * inner;
        const T* gb = g + bi * rows * cols;
        T* dst = db.data().data() + b_offset(n, c);
        if (!transpose_b) {
          gemm_acc(ab, gb, dst, inner, rows, cols, true, false);  // Aᵀ·dC
        } else {
          gemm_acc(gb, ab, dst, cols, rows, inner, true, false);  // dCᵀ·A
        }
      }
      accumulate_grad(nb, db);
    }
  });
}

// ---------------------------------------------------------------------------
// linear

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias) {
  const Shape4 sx = x.shape(), sw = weight.shape();
  if (sw.n != 1 || sw.c != 1 || sw.h != sx.w) {
    throw ShapeError("linear: input " + dims_str(sx) + " incompatible with weight " +
                     dims_str(sw));
  }
  const std::size_t out_dim = sw.w;
  if (bias && !is_vector_of(bias->shape(), out_dim)) {
    throw ShapeError("linear: bias " + dims_str(bias->shape()) + " must be (1, 1, 1, " +
                     std::to_string(out_dim) + ")");
  }
  const std::size_t rows = sx.n * sx.c * sx.h, in_dim = sx.w;
  Tensor4<T> out({sx.n, sx.c, sx.h, out_dim});
  T* o = out.data().data();
  if (bias) {
    const T* bv = bias->value().data().data();
    for (std::size_t i = 0; i < rows; ++i) std::copy(bv, bv + out_dim, o + i * out_dim);
  }
  gemm_acc(x.value().data().data(), weight.value().data().data(), o, rows, in_dim, out_dim,
           false, false);
  std::vector<Var<T>> inputs{x, weight};
  const bool has_bias = bias.has_value();
  if (has_bias) inputs.push_back(*bias);
  return make_result<T>(OpKind::linear, std::move(out), std::move(inputs),
                        [=](Node<T>& self) {
    Node<T>& nx = *self.inputs[0];
    Node<T>& nw = *self.inputs[1];
    const T* g = self.grad.data().data();
    if (nx.requires_grad) {
      Tensor4<T> dx(sx);
      gemm_acc(g, nw.value.data().data(), dx.data().data(), rows, out_dim, in_dim, false, true);
      accumulate_grad(nx, dx);
    }
    if (nw.requires_grad) {
      Tensor4<T> dw(sw);
      gemm_acc(nx.value.data().data(), g, dw.data().data(), in_dim, rows, out_dim, true, false);
      accumulate_grad(nw, dw);
    }
    if (has_bias && self.inputs[2]->requires_grad) {
      Tensor4<T> db({1, 1, 1, out_dim});
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < out_dim; ++j) db[j] += g[i * out_dim + j];
      }
      accumulate_grad(*self.inputs[2], db);
    }
  });
}

// ---------------------------------------------------------------------------
// softmax

template <typename T>
Var<T> softmax_lastdim(const Var<T>& x) {
  const Shape4 s = x.shape();
  const std::size_t rows = s.n * s.c * s.h, len = s.w;
  Tensor4<T> out(s);
  const T* xv = x.value().data().data();
  T* y = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv + r * len;
    T* yr = y + r * len;
    const T mx = *std::max_element(xr, xr + len);
    T total = T(0);
    for (std::size_t j = 0; j < len; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      total += yr[j];
    }
    const T inv = T(1) / total;
    for (std::size_t j = 0; j < len; ++j) yr[j] *= inv;
  }
  return make_result<T>(OpKind::softmax, std::move(out), {x}, [=](Node<T>& self) {
    const T* yv = self.value.data().data();
    const T* g = self.grad.data().data();
    Tensor4<T> dx(s);
    T* d = dx.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = T(0);
      for (std::size_t j = 0; j < len; ++j) dot += g[r * len + j] * yv[r * len + j];
      for (std::size_t j = 0; j < len; ++j) {
        d[r * len + j] = yv[r * len + j] * (g[r * len + j] - dot);
      }
    }
    accumulate_grad(*self.inputs[0], dx);
  });
}

// ---------------------------------------------------------------------------
// conv2d (im2col per image)

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias,
              std::size_t stride, std::size_t padding) {
  const Shape4 sx = x.shape(), sw = weight.shape();
  if (sw.c != sx.c || sw.h != sw.w || sw.h == 0) {
    throw ShapeError("conv2d: input " + dims_str(sx) + " incompatible with weight " +
                     dims_str(sw) + " (expected (out_c, " + std::to_string(sx.c) + ", k, k))");
  }
  if (stride == 0) throw ShapeError("conv2d: stride must be >= 1");
  const std::size_t k = sw.h, oc = sw.n, ic = sx.c;
  const long long oh_num = static_cast<long long>(sx.h + 2 * padding) - static_cast<long long>(k);
  const long long ow_num = static_cast<long long>(sx.w + 2 * padding) - static_cast<long long>(k);
  if (oh_num < 0 || ow_num < 0) {
    throw ShapeError("conv2d: output spatial size < 1 for input " + dims_str(sx) + ", kernel " +
                     std::to_string(k) + ", padding " + std::to_string(padding));
  }
  const std::size_t oh = static_cast<std::size_t>(oh_num) / stride + 1;
  const std::size_t ow = static_cast<std::size_t>(ow_num) / stride + 1;
  if (bias && !is_vector_of(bias->shape(), oc)) {
    throw ShapeError("conv2d: bias " + dims_str(bias->shape()) + " must be (1, 1, 1, " +
                     std::to_string(oc) + ")");
  }
  const std::size_t patch = ic * k * k, positions = oh * ow;

  // cols[b] is (patch, positions)
  auto im2col = [=](const T* img, T* cols) {
    for (std::size_t ci = 0; ci < ic; ++ci) {
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          T* row = cols + ((ci * k + ky) * k + kx) * positions;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const long long iy = static_cast<long long>(oy * stride + ky) - static_cast<long long>(padding);
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const long long ix = static_cast<long long>(ox * stride + kx) - static_cast<long long>(padding);
              const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long long>(sx.h) &&
                                  ix < static_cast<long long>(sx.w);
              row[oy * ow + ox] = inside ? img[(ci * sx.h + iy) * sx.w + ix] : T(0);
            }
          }
        }
      }
    }
  };
  auto col2im = [=](const T* cols, T* img) {
    for (std::size_t ci = 0; ci < ic; ++ci) {
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const T* row = cols + ((ci * k + ky) * k + kx) * positions;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const long long iy = static_cast<long long>(oy * stride + ky) - static_cast<long long>(padding);
            if (iy < 0 || iy >= static_cast<long long>(sx.h)) continue;
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const long long ix = static_cast<long long>(ox * stride + kx) - static_cast<long long>(padding);
              if (ix < 0 || ix >= static_cast<long long>(sx.w)) continue;
              img[(ci * sx.h + iy) * sx.w + ix] += row[oy * ow + ox];
            }
          }
        }
      }
    }
  };

  Tensor4<T> out({sx.n, oc, oh, ow});
  std::vector<T> cols(patch * positions);
  const T* wv = weight.value().data().data();
  for (std::size_t b = 0; b < sx.n; ++b) {
    im2col(x.value().data().data() + b * ic * sx.h * sx.w, cols.data());
    T* ob = out.data().data() + b * oc * positions;
    if (bias) {
      for (std::size_t o = 0; o < oc; ++o) std::fill(ob + o * positions, ob + (o + 1) * positions, bias->value()[o]);
    }
    gemm_acc(wv, cols.data(), ob, oc, patch, positions, false, false);
  }
  std::vector<Var<T>> inputs{x, weight};
  const bool has_bias = bias.has_value();
  if (has_bias) inputs.push_back(*bias);
  return make_result<T>(OpKind::conv2d, std::move(out), std::move(inputs),
                        [=](Node<T>& self) {
    Node<T>& nx = *self.inputs[0];
    Node<T>& nw = *self.inputs[1];
    const T* g = self.grad.data().data();
    std::vector<T> work(patch * positions);
    Tensor4<T> dx, dw;
    if (nx.requires_grad) dx = Tensor4<T>(sx);
    if (nw.requires_grad) dw = Tensor4<T>(sw);
    for (std::size_t b = 0; b < sx.n; ++b) {
      const T* gb = g + b * oc * positions;
      if (nw.requires_grad) {
        im2col(nx.value.data().data() + b * ic * sx.h * sx.w, work.data());
        gemm_acc(gb, work.data(), dw.data().data(), oc, positions, patch, false, true);
      }
      if (nx.requires_grad) {
        std::fill(work.begin(), work.end(), T(0));
        gemm_acc(nw.value.data().data(), gb, work.data(), patch, oc, positions, true, false);
        col2im(work.data(), dx.data().data() + b * ic * sx.h * sx.w);
      }
    }
    if (nx.requires_grad) accumulate_grad(nx, dx);
    if (nw.requires_grad) accumulate_grad(nw, dw);
    if (has_bias && self.inputs[2]->requires_grad) {
      Tensor4<T> db({1, 1, 1, oc});
      for (std::size_t b = 0; b < sx.n; ++b) {
        for (std::size_t o = 0; o < oc; ++o) {
          const T* gp = g + (b * oc + o) * positions;
          T s = T(0);
          for (std::size_t p = 0; p < positions; ++p) s += gp[p];
          db[o] += s;
        }
      }
      accumulate_grad(*self.inputs[2], db);
    }
  });
}

// ---------------------------------------------------------------------------
// layer_norm

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps) {
  const Shape4 s = x.shape();
  const std::size_t len = s.w, rows = s.n * s.c * s.h;
  if (!is_vector_of(gamma.shape(), len) || !is_vector_of(beta.shape(), len)) {
    throw ShapeError("layer_norm: gamma " + dims_str(gamma.shape()) + " / beta " +
                     dims_str(beta.shape()) + " must be (1, 1, 1, " + std::to_string(len) + ")");
  }
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be > 0");
  Tensor4<T> out(s);
  Tensor4<T> xhat(s);
  std::vector<T> rstd(rows);
  const T* xv = x.value().data().data();
  const T* gv = gamma.value().data().data();
  const T* bv = beta.value().data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv + r * len;
    T mean = T(0);
    for (std::size_t j = 0; j < len; ++j) mean += xr[j];
    mean /= static_cast<T>(len);
    T var = T(0);
    for (std::size_t j = 0; j < len; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<T>(len);
    const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
    rstd[r] = inv;
    for (std::size_t j = 0; j < len; ++j) {
      const T h = (xr[j] - mean) * inv;
      xhat[r * len + j] = h;
      out[r * len + j] = h * gv[j] + bv[j];
    }
  }
  return make_result<T>(OpKind::layer_norm, std::move(out), {x, gamma, beta},
                        [=, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
    const T* g = self.grad.data().data();
    Node<T>& nx = *self.inputs[0];
    Node<T>& ng = *self.inputs[1];
    Node<T>& nb = *self.inputs[2];
    const T* gam = ng.value.data().data();
    if (nx.requires_grad) {
      Tensor4<T> dx(s);
      const T inv_len = T(1) / static_cast<T>(len);
      for (std::size_t r = 0; r < rows; ++r) {
        T mean_d = T(0), mean_dh = T(0);
        for (std::size_t j = 0; j < len; ++j) {
          const T d = g[r * len + j] * gam[j];
          mean_d += d;
          mean_dh += d * xhat[r * len + j];
        }
        mean_d *= inv_len;
        mean_dh *= inv_len;
        for (std::size_t j = 0; j < len; ++j) {
          const T d = g[r * len + j] * gam[j];
          dx[r * len + j] = rstd[r] * (d - mean_d - xhat[r * len + j] * mean_dh);
        }
      }
      accumulate_grad(nx, dx);
    }
    if (ng.requires_grad || nb.requires_grad) {
      Tensor4<T> dg({1, 1, 1, len}), db({1, 1, 1, len});
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < len; ++j) {
          dg[j] += g[r * len + j] * xhat[r * len + j];
          db[j] += g[r * len + j];
        }
      }
      accumulate_grad(ng, dg);
      accumulate_grad(nb, db);
    }
  });
}

// ---------------------------------------------------------------------------
// pointwise

template <typename T>
Var<T> gelu(const Var<T>& x) {
  Tensor4<T> out(x.shape());
  const auto xv = x.value().data();
  const T a = static_cast<T>(kGeluSqrt2OverPi), c = static_cast<T>(kGeluCubic);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T v = xv[i];
    out[i] = T(0.5) * v * (T(1) + std::tanh(a * (v + c * v * v * v)));
  }
  return make_result<T>(OpKind::gelu, std::move(out), {x}, [=](Node<T>& self) {
    const auto xin = self.inputs[0]->value.data();
    Tensor4<T> dx(self.value.shape());
    for (std::size_t i = 0; i < xin.size(); ++i) {
      const T v = xin[i];
      const T t = std::tanh(a * (v + c * v * v * v));
      const T dt = a * (T(1) + T(3) * c * v * v);
      dx[i] = self.grad[i] * (T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * dt);
    }
    accumulate_grad(*self.inputs[0], dx);
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor4<T> out(x.shape());
  const auto xv = x.value().data();
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  return make_result<T>(OpKind::relu, std::move(out), {x}, [](Node<T>& self) {
    const auto xin = self.inputs[0]->value.data();
    Tensor4<T> dx(self.value.shape());
    for (std::size_t i = 0; i < xin.size(); ++i) dx[i] = xin[i] > T(0) ? self.grad[i] : T(0);
    accumulate_grad(*self.inputs[0], dx);
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shapes " + dims_str(a.shape()) + " and " + dims_str(b.shape()) + " differ");
  }
  Tensor4<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result<T>(OpKind::add, std::move(out), {a, b}, [](Node<T>& self) {
    accumulate_grad(*self.inputs[0], self.grad);
    accumulate_grad(*self.inputs[1], self.grad);
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, double factor) {
  const T f = static_cast<T>(factor);
  Tensor4<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x.value()[i] * f;
  return make_result<T>(OpKind::scale, std::move(out), {x}, [f](Node<T>& self) {
    Tensor4<T> dx(self.value.shape());
    for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] = self.grad[i] * f;
    accumulate_grad(*self.inputs[0], dx);
  });
}

// ---------------------------------------------------------------------------
// reductions

template <typename T>
Var<T> sum(const Var<T>& x) {
  T total = T(0);
  for (T v : x.value().data()) total += v;
  return make_result<T>(OpKind::sum, Tensor4<T>({1, 1, 1, 1}, total), {x}, [](Node<T>& self) {
    Tensor4<T> dx(self.inputs[0]->value.shape(), self.grad[0]);
    accumulate_grad(*self.inputs[0], dx);
  });
}

template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Tensor4<T>& weights) {
  if (weights.shape() != x.shape()) {
    throw ShapeError("weighted_sum: weights " + dims_str(weights.shape()) + " vs input " +
                     dims_str(x.shape()));
  }
  T total = T(0);
  for (std::size_t i = 0; i < x.numel(); ++i) total += x.value()[i] * weights[i];
  return make_result<T>(OpKind::custom, Tensor4<T>({1, 1, 1, 1}, total), {x},
                        [weights](Node<T>& self) {
    Tensor4<T> dx(weights.shape());
    for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] = weights[i] * self.grad[0];
    accumulate_grad(*self.inputs[0], dx);
  });
}

template <typename T>
Var<T> mean_rows(const Var<T>& x) {
  const Shape4 s = x.shape();
  if (s.h == 0) throw ShapeError("mean_rows: empty row axis in " + dims_str(s));
  Tensor4<T> out({s.n, s.c, 1, s.w});
  const T inv = T(1) / static_cast<T>(s.h);
  for (std::size_t bc = 0; bc < s.n * s.c; ++bc) {
    for (std::size_t r = 0; r < s.h; ++r) {
      for (std::size_t j = 0; j < s.w; ++j) out[bc * s.w + j] += x.value()[(bc * s.h + r) * s.w + j];
    }
    for (std::size_t j = 0; j < s.w; ++j) out[bc * s.w + j] *= inv;
  }
  return make_result<T>(OpKind::mean_rows, std::move(out), {x}, [=](Node<T>& self) {
    Tensor4<T> dx(s);
    for (std::size_t bc = 0; bc < s.n * s.c; ++bc) {
      for (std::size_t r = 0; r < s.h; ++r) {
        for (std::size_t j = 0; j < s.w; ++j) dx[(bc * s.h + r) * s.w + j] = self.grad[bc * s.w + j] * inv;
      }
    }
    accumulate_grad(*self.inputs[0], dx);
  });
}

// ---------------------------------------------------------------------------
// avg_pool2d

template <typename T>
Var<T> avg_pool2d(const Var<T>& x, std::size_t kernel, std::size_t stride) {
  const Shape4 s = x.shape();
  if (kernel == 0 || stride == 0) throw ShapeError("avg_pool2d: kernel and stride must be >= 1");
  if (kernel == stride && (s.h % stride != 0 || s.w % stride != 0)) {
    throw ShapeError("avg_pool2d: spatial dims " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " of " + dims_str(s) + " not divisible by stride " + std::to_string(stride));
  }
  if (s.h < kernel || s.w < kernel) {
    throw ShapeError("avg_pool2d: kernel " + std::to_string(kernel) + " larger than input " + dims_str(s));
  }
  const std::size_t oh = (s.h - kernel) / stride + 1, ow = (s.w - kernel) / stride + 1;
  const T inv = T(1) / static_cast<T>(kernel * kernel);
  Tensor4<T> out({s.n, s.c, oh, ow});
  for (std::size_t bc = 0; bc < s.n * s.c; ++bc) {
    const T* src = x.value().data().data() + bc * s.h * s.w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T acc = T(0);
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          for (std::size_t kx = 0; kx < kernel; ++kx) acc += src[(oy * stride + ky) * s.w + ox * stride + kx];
        }
        out[(bc * oh + oy) * ow + ox] = acc * inv;
      }
    }
  }
  return make_result<T>(OpKind::avg_pool2d, std::move(out), {x}, [=](Node<T>& self) {
    Tensor4<T> dx(s);
    for (std::size_t bc = 0; bc < s.n * s.c; ++bc) {
      T* dst = dx.data().data() + bc * s.h * s.w;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const T gv = self.grad[(bc * oh + oy) * ow + ox] * inv;
          for (std::size_t ky = 0; ky < kernel; ++ky) {
            for (std::size_t kx = 0; kx < kernel; ++kx) dst[(oy * stride + ky) * s.w + ox * stride + kx] += gv;
          }
        }
      }
    }
    accumulate_grad(*self.inputs[0], dx);
  });
}

// ---------------------------------------------------------------------------
// data movement

template <typename T>
Var<T> reshape(const Var<T>& x, Shape4 shape) {
  Tensor4<T> out = x.value().reshaped(shape);
  const Shape4 original = x.shape();
  return make_result<T>(OpKind::reshape, std::move(out), {x}, [original](Node<T>& self) {
    accumulate_grad(*self.inputs[0], self.grad.reshaped(original));
  });
}

namespace {

// (n, A, B) -> (n, B, A) per batch.
template <typename T>
void transpose_inner(const T* src, T* dst, std::size_t batches, std::size_t rows, std::size_t cols) {
  for (std::size_t b = 0; b < batches; ++b) {
    const T* s = src + b * rows * cols;
    T* d = dst + b * rows * cols;
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) d[j * rows + i] = s[i * cols + j];
    }
  }
}

}  // namespace

template <typename T>
Var<T> to_tokens(const Var<T>& x) {
  const Shape4 s = x.shape();
  const std::size_t hw = s.h * s.w;
  Tensor4<T> out({s.n, 1, hw, s.c});
  transpose_inner(x.value().data().data(), out.data().data(), s.n, s.c, hw);
  return make_result<T>(OpKind::to_tokens, std::move(out), {x}, [=](Node<T>& self) {
    Tensor4<T> dx(s);
    transpose_inner(self.grad.data().data(), dx.data().data(), s.n, hw, s.c);
    accumulate_grad(*self.inputs[0], dx);
  });
}

template <typename T>
Var<T> from_tokens(const Var<T>& x, std::size_t height, std::size_t width) {
  const Shape4 s = x.shape();
  if (s.c != 1 || s.h != height * width) {
    throw ShapeError("from_tokens: token tensor " + dims_str(s) + " does not hold a " +
                     std::to_string(height) + "x" + std::to_string(width) + " grid");
  }
  Tensor4<T> out({s.n, s.w, height, width});
  transpose_inner(x.value().data().data(), out.data().data(), s.n, s.h, s.w);
  return make_result<T>(OpKind::from_tokens, std::move(out), {x}, [=](Node<T>& self) {
    Tensor4<T> dx(s);
    transpose_inner(self.grad.data().data(), dx.data().data(), s.n, s.w, s.h);
    accumulate_grad(*self.inputs[0], dx);
  });
}

namespace {

// Product of dims before / after `axis`.
std::pair<std::size_t, std::size_t> outer_inner(const Shape4& s, std::size_t axis) {
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= s[a];
  for (std::size_t a = axis + 1; a < 4; ++a) inner *= s[a];
  return {outer, inner};
}

Shape4 with_axis(Shape4 s, std::size_t axis, std::size_t len) {
  switch (axis) {
    case 0: s.n = len; break;
    case 1: s.c = len; break;
    case 2: s.h = len; break;
    default: s.w = len; break;
  }
  return s;
}

}  // namespace

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  if (axis > 3) throw ShapeError("concat: axis " + std::to_string(axis) + " out of range");
  const Shape4 first = parts.front().shape();
  std::size_t total = 0;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    const Shape4 s = p.shape();
    for (std::size_t a = 0; a < 4; ++a) {
      if (a != axis && s[a] != first[a]) {
        throw ShapeError("concat: operand " + dims_str(s) + " disagrees with " + dims_str(first) +
                         " on axis " + std::to_string(a));
      }
    }
    lens.push_back(s[axis]);
    total += s[axis];
  }
  const Shape4 out_shape = with_axis(first, axis, total);
  const auto [outer, inner] = outer_inner(out_shape, axis);
  Tensor4<T> out(out_shape);
  std::size_t start = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const T* src = parts[p].value().data().data();
    const std::size_t chunk = lens[p] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(src + o * chunk, src + (o + 1) * chunk, out.data().data() + o * total * inner + start * inner);
    }
    start += lens[p];
  }
  return make_result<T>(OpKind::concat, std::move(out), parts, [=, outer = outer, inner = inner](Node<T>& self) {
    std::size_t begin = 0;
    for (std::size_t p = 0; p < lens.size(); ++p) {
      Node<T>& np = *self.inputs[p];
      const std::size_t chunk = lens[p] * inner;
      if (np.requires_grad) {
        Tensor4<T> dp(np.value.shape());
        for (std::size_t o = 0; o < outer; ++o) {
          const T* src = self.grad.data().data() + o * total * inner + begin * inner;
          std::copy(src, src + chunk, dp.data().data() + o * chunk);
        }
        accumulate_grad(np, dp);
      }
      begin += lens[p];
    }
  });
}

template <typename T>
std::vector<Var<T>> split(const Var<T>& x, std::span<const std::size_t> sizes, std::size_t axis) {
  if (axis > 3) throw ShapeError("split: axis " + std::to_string(axis) + " out of range");
  const Shape4 s = x.shape();
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (total != s[axis]) {
    throw ShapeError("split: sizes sum to " + std::to_string(total) + " but axis " +
                     std::to_string(axis) + " of " + dims_str(s) + " has length " + std::to_string(s[axis]));
  }
  const auto [outer, inner] = outer_inner(s, axis);
  std::vector<Var<T>> result;
  std::size_t start = 0;
  for (std::size_t len : sizes) {
    const Shape4 ps = with_axis(s, axis, len);
    Tensor4<T> part(ps);
    const std::size_t chunk = len * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      const T* src = x.value().data().data() + o * total * inner + start * inner;
      std::copy(src, src + chunk, part.data().data() + o * chunk);
    }
    result.push_back(make_result<T>(OpKind::split, std::move(part), {x},
                                    [=, outer = outer, inner = inner](Node<T>& self) {
      Tensor4<T> dx(s);
      for (std::size_t o = 0; o < outer; ++o) {
        const T* src = self.grad.data().data() + o * chunk;
        std::copy(src, src + chunk, dx.data().data() + o * total * inner + start * inner);
      }
      accumulate_grad(*self.inputs[0], dx);
    }));
    start += len;
  }
  return result;
}

template <typename T>
Var<T> split_heads(const Var<T>& x, std::size_t heads) {
  const Shape4 s = x.shape();
  if (s.c != 1) throw ShapeError("split_heads: expected token layout (n, 1, r, D), got " + dims_str(s));
  if (heads == 0 || s.w % heads != 0) {
    throw ConfigError("split_heads: width " + std::to_string(s.w) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  const std::size_t d = s.w / heads;
  Tensor4<T> out({s.n, heads, s.h, d});
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t r = 0; r < s.h; ++r) {
      for (std::size_t j = 0; j < heads; ++j) {
        const T* src = x.value().data().data() + (b * s.h + r) * s.w + j * d;
        std::copy(src, src + d, out.data().data() + ((b * heads + j) * s.h + r) * d);
      }
    }
  }
  return make_result<T>(OpKind::split_heads, std::move(out), {x}, [=](Node<T>& self) {
    Tensor4<T> dx(s);
    for (std::size_t b = 0; b < s.n; ++b) {
      for (std::size_t r = 0; r < s.h; ++r) {
        for (std::size_t j = 0; j < heads; ++j) {
          const T* src = self.grad.data().data() + ((b * heads + j) * s.h + r) * d;
          std::copy(src, src + d, dx.data().data() + (b * s.h + r) * s.w + j * d);
        }
      }
    }
    accumulate_grad(*self.inputs[0], dx);
  });
}

template <typename T>
Var<T> merge_heads(const Var<T>& x) {
  const Shape4 s = x.shape();
  const std::size_t heads = s.c, d = s.w;
  Tensor4<T> out({s.n, 1, s.h, heads * d});
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t j = 0; j < heads; ++j) {
      for (std::size_t r = 0; r < s.h; ++r) {
        const T* src = x.value().data().data() + ((b * heads + j) * s.h + r) * d;
        std::copy(src, src + d, out.data().data() + (b * s.h + r) * heads * d + j * d);
      }
    }
  }
  return make_result<T>(OpKind::merge_heads, std::move(out), {x}, [=](Node<T>& self) {
    Tensor4<T> dx(s);
    for (std::size_t b = 0; b < s.n; ++b) {
      for (std::size_t j = 0; j < heads; ++j) {
        for (std::size_t r = 0; r < s.h; ++r) {
          const T* src = self.grad.data().data() + (b * s.h + r) * heads * d + j * d;
          std::copy(src, src + d, dx.data().data() + ((b * heads + j) * s.h + r) * d);
        }
      }
    }
    accumulate_grad(*self.inputs[0], dx);
  });
}

// ---------------------------------------------------------------------------
// cross_entropy

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels) {
  const Shape4 s = logits.shape();
  if (s.c != 1 || s.h != 1) throw ShapeError("cross_entropy: logits must be (n, 1, 1, K), got " + dims_str(s));
  if (labels.size() != s.n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(s.n) + " logit rows");
  }
  const std::size_t k = s.w;
  std::vector<int> lab(labels.begin(), labels.end());
  for (int l : lab) {
    if (l < 0 || static_cast<std::size_t>(l) >= k) {
      throw ConfigError("cross_entropy: label " + std::to_string(l) + " outside [0, " + std::to_string(k) + ")");
    }
  }
  Tensor4<T> probs(s);
  double total = 0.0;
  for (std::size_t b = 0; b < s.n; ++b) {
    const T* z = logits.value().data().data() + b * k;
    const T mx = *std::max_element(z, z + k);
    T denom = T(0);
    for (std::size_t j = 0; j < k; ++j) {
      probs[b * k + j] = std::exp(z[j] - mx);
      denom += probs[b * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) probs[b * k + j] /= denom;
    total += static_cast<double>(std::log(denom) + mx - z[lab[b]]);
  }
  const T loss = static_cast<T>(total / static_cast<double>(s.n));
  return make_result<T>(OpKind::cross_entropy, Tensor4<T>({1, 1, 1, 1}, loss), {logits},
                        [=, probs = std::move(probs), lab = std::move(lab)](Node<T>& self) {
    Tensor4<T> dz = probs;
    const T g = self.grad[0] / static_cast<T>(s.n);
    for (std::size_t b = 0; b < s.n; ++b) dz[b * k + static_cast<std::size_t>(lab[b])] -= T(1);
    for (auto& v : dz.data()) v *= g;
    accumulate_grad(*self.inputs[0], dz);
  });
}

// ---------------------------------------------------------------------------

#define WAVEVIT_INSTANTIATE_OPS(T)                                                              \
  template Var<T> matmul(const Var<T>&, const Var<T>&, bool);                                   \
  template Var<T> linear(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&);           \
  template Var<T> softmax_lastdim(const Var<T>&);                                               \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&,            \
                         std::size_t, std::size_t);                                             \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, double);              \
  template Var<T> gelu(const Var<T>&);                                                          \
  template Var<T> relu(const Var<T>&);                                                          \
  template Var<T> add(const Var<T>&, const Var<T>&);                                            \
  template Var<T> scale(const Var<T>&, double);                                                 \
  template Var<T> sum(const Var<T>&);                                                           \
  template Var<T> weighted_sum(const Var<T>&, const Tensor4<T>&);                               \
  template Var<T> mean_rows(const Var<T>&);                                                     \
  template Var<T> avg_pool2d(const Var<T>&, std::size_t, std::size_t);                          \
  template Var<T> reshape(const Var<T>&, Shape4);                                               \
  template Var<T> to_tokens(const Var<T>&);                                                     \
  template Var<T> from_tokens(const Var<T>&, std::size_t, std::size_t);                         \
  template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                              \
  template std::vector<Var<T>> split(const Var<T>&, std::span<const std::size_t>, std::size_t); \
  template Var<T> split_heads(const Var<T>&, std::size_t);                                      \
  template Var<T> merge_heads(const Var<T>&);                                                   \
  template Var<T> cross_entropy(const Var<T>&, std::span<const int>);

WAVEVIT_INSTANTIATE_OPS(float)
WAVEVIT_INSTANTIATE_OPS(double)

#undef WAVEVIT_INSTANTIATE_OPS

}  // namespace wavevit
