#include "wavevit/wavelet.hpp"

#include "wavevit/ops.hpp"

namespace wavevit {

namespace {

void require_even(const Shape4& s) {
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw ShapeError("dwt2d_haar: spatial dims " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " of " + s.str() + " must both be even; pad or crop the input first");
  }
  if (s.h == 0 || s.w == 0) throw ShapeError("dwt2d_haar: empty spatial dims in " + s.str());
}

// Analysis on one (h, w) plane, writing the four half-size planes to `out`
// at channel offsets 0, c, 2c, 3c (plane_stride apart).
template <typename T>
void analyze_plane(const T* src, std::size_t h, std::size_t w, T* ll, T* lh, T* hl, T* hh) {
  const T lo0 = static_cast<T>(HaarFilters::low[0]), lo1 = static_cast<T>(HaarFilters::low[1]);
  const T hi0 = static_cast<T>(HaarFilters::high[0]), hi1 = static_cast<T>(HaarFilters::high[1]);
  const std::size_t hw = w / 2;
  for (std::size_t y = 0; y < h / 2; ++y) {
    const T* r0 = src + (2 * y) * w;
    const T* r1 = src + (2 * y + 1) * w;
    for (std::size_t x = 0; x < hw; ++x) {
      // Along rows: pairs of horizontally adjacent samples.
      const T l0 = lo0 * r0[2 * x] + lo1 * r0[2 * x + 1];
      const T h0 = hi0 * r0[2 * x] + hi1 * r0[2 * x + 1];
      const T l1 = lo0 * r1[2 * x] + lo1 * r1[2 * x + 1];
      const T h1 = hi0 * r1[2 * x] + hi1 * r1[2 * x + 1];
      // Along columns of X_L and X_H.
      ll[y * hw + x] = lo0 * l0 + lo1 * l1;
      lh[y * hw + x] = hi0 * l0 + hi1 * l1;
      hl[y * hw + x] = lo0 * h0 + lo1 * h1;
      hh[y * hw + x] = hi0 * h0 + hi1 * h1;
    }
  }
}

// Synthesis: transpose of analyze_plane.
template <typename T>
void synthesize_plane(const T* ll, const T* lh, const T* hl, const T* hh, std::size_t h2,
                      std::size_t w2, T* dst) {
  const T lo0 = static_cast<T>(HaarFilters::low[0]), lo1 = static_cast<T>(HaarFilters::low[1]);
  const T hi0 = static_cast<T>(HaarFilters::high[0]), hi1 = static_cast<T>(HaarFilters::high[1]);
  const std::size_t w = 2 * w2;
  for (std::size_t y = 0; y < h2; ++y) {
    T* r0 = dst + (2 * y) * w;
    T* r1 = dst + (2 * y + 1) * w;
    for (std::size_t x = 0; x < w2; ++x) {
      const std::size_t i = y * w2 + x;
      const T l0 = lo0 * ll[i] + hi0 * lh[i];
      const T l1 = lo1 * ll[i] + hi1 * lh[i];
      const T h0 = lo0 * hl[i] + hi0 * hh[i];
      const T h1 = lo1 * hl[i] + hi1 * hh[i];
      r0[2 * x] = lo0 * l0 + hi0 * h0;
      r0[2 * x + 1] = lo1 * l0 + hi1 * h0;
      r1[2 * x] = lo0 * l1 + hi0 * h1;
      r1[2 * x + 1] = lo1 * l1 + hi1 * h1;
    }
  }
}

// (n, c, h, w) -> packed (n, 4c, h/2, w/2)
template <typename T>
Tensor4<T> analyze_packed(const Tensor4<T>& x) {
  const Shape4 s = x.shape();
  require_even(s);
  const std::size_t h2 = s.h / 2, w2 = s.w / 2, plane = h2 * w2;
  Tensor4<T> out({s.n, 4 * s.c, h2, w2});
  for (std::size_t b = 0; b < s.n; ++b) {
    T* base = out.data().data() + b * 4 * s.c * plane;
    for (std::size_t ch = 0; ch < s.c; ++ch) {
      analyze_plane(x.data().data() + (b * s.c + ch) * s.h * s.w, s.h, s.w, base + ch * plane,
                    base + (s.c + ch) * plane, base + (2 * s.c + ch) * plane,
                    base + (3 * s.c + ch) * plane);
    }
  }
  return out;
}

template <typename T>
Tensor4<T> synthesize_packed(const Tensor4<T>& packed) {
  const Shape4 s = packed.shape();
  if (s.c % 4 != 0) {
    throw ShapeError("idwt2d_haar: packed channel count " + std::to_string(s.c) + " of " + s.str() +
                     " is not divisible by 4");
  }
  const std::size_t c = s.c / 4, plane = s.h * s.w;
  Tensor4<T> out({s.n, c, 2 * s.h, 2 * s.w});
  for (std::size_t b = 0; b < s.n; ++b) {
    const T* base = packed.data().data() + b * s.c * plane;
    for (std::size_t ch = 0; ch < c; ++ch) {
      synthesize_plane(base + ch * plane, base + (c + ch) * plane, base + (2 * c + ch) * plane,
                       base + (3 * c + ch) * plane, s.h, s.w,
                       out.data().data() + (b * c + ch) * 4 * plane);
    }
  }
  return out;
}

template <typename T>
void require_consistent(const Subbands<T>& s) {
  const Shape4 ref = s.ll.shape();
  for (const Shape4& other : {s.lh.shape(), s.hl.shape(), s.hh.shape()}) {
    if (other != ref) {
      throw ShapeError("subbands: inconsistent dims " + ref.str() + " vs " + other.str());
    }
  }
}

}  // namespace

template <typename T>
Tensor4<T> subbands_pack(const Subbands<Tensor4<T>>& s) {
  require_consistent(s);
  const Shape4 b = s.ll.shape();
  const std::size_t block = b.c * b.h * b.w;
  Tensor4<T> out({b.n, 4 * b.c, b.h, b.w});
  const std::array<const Tensor4<T>*, 4> bands{&s.ll, &s.lh, &s.hl, &s.hh};
  for (std::size_t n = 0; n < b.n; ++n) {
    for (std::size_t k = 0; k < 4; ++k) {
      const T* src = bands[k]->data().data() + n * block;
      std::copy(src, src + block, out.data().data() + (n * 4 + k) * block);
    }
  }
  return out;
}

template <typename T>
Subbands<Tensor4<T>> subbands_unpack(const Tensor4<T>& packed) {
  const Shape4 s = packed.shape();
  if (s.c % 4 != 0) {
    throw ShapeError("subbands_unpack: channel count " + std::to_string(s.c) + " of " + s.str() +
                     " is not divisible by 4");
  }
  const Shape4 b{s.n, s.c / 4, s.h, s.w};
  const std::size_t block = b.c * b.h * b.w;
  Subbands<Tensor4<T>> out{Tensor4<T>(b), Tensor4<T>(b), Tensor4<T>(b), Tensor4<T>(b)};
  const std::array<Tensor4<T>*, 4> bands{&out.ll, &out.lh, &out.hl, &out.hh};
  for (std::size_t n = 0; n < b.n; ++n) {
    for (std::size_t k = 0; k < 4; ++k) {
      const T* src = packed.data().data() + (n * 4 + k) * block;
      std::copy(src, src + block, bands[k]->data().data() + n * block);
    }
  }
  return out;
}

template <typename T>
Subbands<Tensor4<T>> dwt2d_haar(const Tensor4<T>& x) {
  return subbands_unpack(analyze_packed(x));
}

template <typename T>
Tensor4<T> idwt2d_haar(const Subbands<Tensor4<T>>& s) {
  return synthesize_packed(subbands_pack(s));
}

template <typename T>
Var<T> dwt2d_haar_packed(const Var<T>& x) {
  return make_result<T>(OpKind::dwt2d, analyze_packed(x.value()), {x}, [](Node<T>& self) {
    accumulate_grad(*self.inputs[0], synthesize_packed(self.grad));
  });
}

template <typename T>
Var<T> idwt2d_haar_packed(const Var<T>& packed) {
  return make_result<T>(OpKind::idwt2d, synthesize_packed(packed.value()), {packed},
                        [](Node<T>& self) {
    accumulate_grad(*self.inputs[0], analyze_packed(self.grad));
  });
}

template <typename T>
Subbands<Var<T>> subbands_unpack(const Var<T>& packed) {
  const Shape4 s = packed.shape();
  if (s.c % 4 != 0) {
    throw ShapeError("subbands_unpack: channel count " + std::to_string(s.c) + " of " + s.str() +
                     " is not divisible by 4");
  }
  const std::array<std::size_t, 4> sizes{s.c / 4, s.c / 4, s.c / 4, s.c / 4};
  auto parts = split(packed, std::span<const std::size_t>(sizes), 1);
  return {parts[0], parts[1], parts[2], parts[3]};
}

template <typename T>
Var<T> subbands_pack(const Subbands<Var<T>>& s) {
  require_consistent(s);
  return concat<T>({s.ll, s.lh, s.hl, s.hh}, 1);
}

template <typename T>
Subbands<Var<T>> dwt2d_haar(const Var<T>& x) {
  return subbands_unpack(dwt2d_haar_packed(x));
}

template <typename T>
Var<T> idwt2d_haar(const Subbands<Var<T>>& s) {
  return idwt2d_haar_packed(subbands_pack(s));
}

#define WAVEVIT_INSTANTIATE_WAVELET(T)                                          \
  template Subbands<Tensor4<T>> dwt2d_haar(const Tensor4<T>&);                  \
  template Tensor4<T> idwt2d_haar(const Subbands<Tensor4<T>>&);                 \
  template Tensor4<T> subbands_pack(const Subbands<Tensor4<T>>&);               \
  template Subbands<Tensor4<T>> subbands_unpack(const Tensor4<T>&);             \
  template Var<T> dwt2d_haar_packed(const Var<T>&);                             \
  template Var<T> idwt2d_haar_packed(const Var<T>&);                            \
  template Subbands<Var<T>> dwt2d_haar(const Var<T>&);                          \
  template Var<T> idwt2d_haar(const Subbands<Var<T>>&);                         \
  template Var<T> subbands_pack(const Subbands<Var<T>>&);                       \
  template Subbands<Var<T>> subbands_unpack(const Var<T>&);

WAVEVIT_INSTANTIATE_WAVELET(float)
WAVEVIT_INSTANTIATE_WAVELET(double)

#undef WAVEVIT_INSTANTIATE_WAVELET

}  // namespace wavevit
