#pragma once

#include <array>

#include "wavevit/autograd.hpp"

namespace wavevit {

/// Orthonormal 2-tap Haar analysis bank.
struct HaarFilters {
  static constexpr double kInvSqrt2 = 0.70710678118654752440;
  static constexpr std::array<double, 2> low{kInvSqrt2, kInvSqrt2};
  static constexpr std::array<double, 2> high{kInvSqrt2, -kInvSqrt2};
};

/// One DWT level. The first subscript letter names the filter applied along
/// rows (horizontally, across columns), the second the filter applied along
/// columns. For a 2x2 block [[a, b], [c, d]]:
///   ll = (a+b+c+d)/2, lh = (a+b-c-d)/2, hl = (a-b+c-d)/2, hh = (a-b-c+d)/2.
template <typename Band>
struct Subbands {
  Band ll, lh, hl, hh;
};

/// Requires even height and width; never pads. Throws ShapeError otherwise.
template <typename T>
Subbands<Tensor4<T>> dwt2d_haar(const Tensor4<T>& x);

template <typename T>
Tensor4<T> idwt2d_haar(const Subbands<Tensor4<T>>& s);

/// Channel blocks in [LL, LH, HL, HH] order: (n, 4c, h, w).
template <typename T>
Tensor4<T> subbands_pack(const Subbands<Tensor4<T>>& s);

template <typename T>
Subbands<Tensor4<T>> subbands_unpack(const Tensor4<T>& packed);

// Differentiable forms. The packed variants are single graph nodes whose
// backward is the opposite transform (the bank is orthonormal).

/// dwt2d_haar followed by subbands_pack.
template <typename T>
Var<T> dwt2d_haar_packed(const Var<T>& x);
/// subbands_unpack followed by idwt2d_haar.
template <typename T>
Var<T> idwt2d_haar_packed(const Var<T>& packed);

template <typename T>
Subbands<Var<T>> dwt2d_haar(const Var<T>& x);
template <typename T>
Var<T> idwt2d_haar(const Subbands<Var<T>>& s);
template <typename T>
Var<T> subbands_pack(const Subbands<Var<T>>& s);
template <typename T>
Subbands<Var<T>> subbands_unpack(const Var<T>& packed);

}  // namespace wavevit
