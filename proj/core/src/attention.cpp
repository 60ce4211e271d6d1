#include "wavevit/attention.hpp"

#include <cmath>

#include "wavevit/ops.hpp"
#include "wavevit/wavelet.hpp"

namespace wavevit {

std::string_view mode_name(DownsampleMode mode) {
  switch (mode) {
    case DownsampleMode::none: return "none";
    case DownsampleMode::avgpool: return "avgpool";
    case DownsampleMode::conv: return "conv";
    case DownsampleMode::wavelet: return "wavelet";
    case DownsampleMode::wavelet_idwt: return "wavelet_idwt";
  }
  return "unknown";
}

DownsampleMode parse_mode(std::string_view name) {
  for (auto m : {DownsampleMode::none, DownsampleMode::avgpool, DownsampleMode::conv,
                 DownsampleMode::wavelet, DownsampleMode::wavelet_idwt}) {
    if (mode_name(m) == name) return m;
  }
  throw ConfigError("unknown attention mode '" + std::string(name) +
                    "' (expected none|avgpool|conv|wavelet|wavelet_idwt)");
}

bool is_wavelet(DownsampleMode mode) {
  return mode == DownsampleMode::wavelet || mode == DownsampleMode::wavelet_idwt;
}

std::size_t kv_tokens(DownsampleMode mode, std::size_t height, std::size_t width) {
  if (mode == DownsampleMode::none) return height * width;
  return (height / kReduction) * (width / kReduction);
}

template <typename T>
std::vector<std::pair<std::string, Var<T>>> AttentionParams<T>::named() const {
  std::vector<std::pair<std::string, Var<T>>> out;
  auto push = [&](const char* name, const Var<T>& v) {
    if (v.defined()) out.emplace_back(name, v);
  };
  push("w_q", w_q);
  push("w_k", w_k);
  push("w_v", w_v);
  push("w_d", w_d);
  push("conv_w", conv_w);
  push("conv_b", conv_b);
  push("w_o", w_o);
  push("b_o", b_o);
  return out;
}

namespace {

void expect_shape(const char* what, const Shape4& got, Shape4 want) {
  if (got != want) {
    throw ConfigError(std::string("attention params: ") + what + " has shape " + got.str() +
                      ", expected " + want.str());
  }
}

}  // namespace

template <typename T>
void validate(const AttentionParams<T>& p) {
  const std::size_t d = p.dim;
  if (d == 0 || p.heads == 0 || d % p.heads != 0) {
    throw ConfigError("attention: dim " + std::to_string(d) + " not divisible by " +
                      std::to_string(p.heads) + " heads");
  }
  if (is_wavelet(p.mode) && d % 4 != 0) {
    throw ConfigError("attention: dim " + std::to_string(d) + " not divisible by 4 (channel reduction)");
  }
  for (const auto* v : {&p.w_q, &p.w_k, &p.w_v, &p.w_o, &p.b_o}) {
    if (!v->defined()) throw ConfigError("attention params: missing projection weight");
  }
  expect_shape("w_q", p.w_q.shape(), {1, 1, d, d});
  expect_shape("w_k", p.w_k.shape(), {1, 1, d, d});
  expect_shape("w_v", p.w_v.shape(), {1, 1, d, d});
  expect_shape("w_o", p.w_o.shape(), {1, 1, p.output_in_dim(), d});
  expect_shape("b_o", p.b_o.shape(), {1, 1, 1, d});
  if (is_wavelet(p.mode)) {
    if (!p.w_d.defined() || !p.conv_w.defined() || !p.conv_b.defined()) {
      throw ConfigError("attention params: wavelet mode needs w_d, conv_w, conv_b");
    }
    expect_shape("w_d", p.w_d.shape(), {1, 1, d, d / 4});
    expect_shape("conv_w", p.conv_w.shape(), {d, d, 3, 3});
    expect_shape("conv_b", p.conv_b.shape(), {1, 1, 1, d});
  } else if (p.mode == DownsampleMode::conv) {
    if (!p.conv_w.defined() || !p.conv_b.defined()) {
      throw ConfigError("attention params: conv mode needs conv_w, conv_b");
    }
    expect_shape("conv_w", p.conv_w.shape(), {d, d, kReduction, kReduction});
    expect_shape("conv_b", p.conv_b.shape(), {1, 1, 1, d});
  }
}

template <typename T>
AttentionParams<T> make_attention_params(std::size_t dim, std::size_t heads, DownsampleMode mode,
                                         Rng& rng, double init_std) {
  AttentionParams<T> p;
  p.mode = mode;
  p.dim = dim;
  p.heads = heads;
  if (dim == 0 || heads == 0 || dim % heads != 0 || (is_wavelet(mode) && dim % 4 != 0)) {
    throw ConfigError("attention: dim " + std::to_string(dim) + " incompatible with " +
                      std::to_string(heads) + " heads / mode " + std::string(mode_name(mode)));
  }
  auto weight = [&](Shape4 s) {
    Tensor4<T> t(s);
    for (auto& v : t.data()) v = static_cast<T>(rng.truncated_normal(init_std));
    return Var<T>(std::move(t), true);
  };
  auto zeros = [](std::size_t len) { return Var<T>(Tensor4<T>({1, 1, 1, len}), true); };
  p.w_q = weight({1, 1, dim, dim});
  p.w_k = weight({1, 1, dim, dim});
  p.w_v = weight({1, 1, dim, dim});
  if (is_wavelet(mode)) {
    p.w_d = weight({1, 1, dim, dim / 4});
    p.conv_w = weight({dim, dim, 3, 3});
    p.conv_b = zeros(dim);
  } else if (mode == DownsampleMode::conv) {
    p.conv_w = weight({dim, dim, kReduction, kReduction});
    p.conv_b = zeros(dim);
  }
  p.w_o = weight({1, 1, p.output_in_dim(), dim});
  p.b_o = zeros(dim);
  return p;
}

template <typename T>
Var<T> attention_weights(const Var<T>& q, const Var<T>& k, std::size_t heads) {
  const Var<T> qh = split_heads(q, heads);
  const Var<T> kh = split_heads(k, heads);
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(q.shape().w / heads));
  return softmax_lastdim(scale(matmul(qh, kh, /*transpose_b=*/true), inv_sqrt_dh));
}

template <typename T>
Var<T> multi_head_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::size_t heads) {
  const Shape4 sq = q.shape(), sk = k.shape(), sv = v.shape();
  if (heads == 0 || sq.w % heads != 0) {
    throw ConfigError("multi_head_attention: width " + std::to_string(sq.w) +
                      " not divisible by " + std::to_string(heads) + " heads");
  }
  if (sk.h == 0) throw ShapeError("multi_head_attention: no keys");
  if (sk != sv || sk.w != sq.w || sk.n != sq.n || sq.c != 1) {
    throw ShapeError("multi_head_attention: q " + sq.str() + ", k " + sk.str() + ", v " +
                     sv.str() + " are incompatible");
  }
  const Var<T> attn = attention_weights(q, k, heads);
  return merge_heads(matmul(attn, split_heads(v, heads)));
}

namespace {

template <typename T>
void require_spatial(const Var<T>& x, const AttentionParams<T>& p, bool need_even) {
  const Shape4 s = x.shape();
  if (s.c != p.dim) {
    throw ShapeError("attention: input " + s.str() + " has " + std::to_string(s.c) +
                     " channels, params expect " + std::to_string(p.dim));
  }
  if (need_even && (s.h % kReduction != 0 || s.w % kReduction != 0)) {
    throw ShapeError("attention: spatial dims " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " not divisible by reduction factor " + std::to_string(kReduction) +
                     " for mode " + std::string(mode_name(p.mode)));
  }
}

}  // namespace

template <typename T>
Var<T> downsampled_attention(const Var<T>& x, const AttentionParams<T>& p) {
  if (is_wavelet(p.mode)) {
    throw ConfigError("downsampled_attention: mode " + std::string(mode_name(p.mode)) +
                      " belongs to wavelets_block_attention");
  }
  validate(p);
  require_spatial(x, p, p.mode != DownsampleMode::none);
  const Shape4 s = x.shape();
  const Var<T> tokens = to_tokens(x);
  const Var<T> q = linear(tokens, p.w_q);
  Var<T> kv_src;
  switch (p.mode) {
    case DownsampleMode::none:
      kv_src = tokens;
      break;
    case DownsampleMode::avgpool:
      kv_src = to_tokens(avg_pool2d(x, kReduction, kReduction));
      break;
    case DownsampleMode::conv:
      kv_src = to_tokens(conv2d(x, p.conv_w, std::optional<Var<T>>(p.conv_b), kReduction, 0));
      break;
    default:
      break;
  }
  const Var<T> k = linear(kv_src, p.w_k);
  const Var<T> v = linear(kv_src, p.w_v);
  const Var<T> heads = multi_head_attention(q, k, v, p.heads);
  return from_tokens(linear(heads, p.w_o, std::optional<Var<T>>(p.b_o)), s.h, s.w);
}

template <typename T>
WaveletKV<T> wavelet_kv(const Var<T>& x, const AttentionParams<T>& p) {
  if (!is_wavelet(p.mode)) {
    throw ConfigError("wavelet_kv: mode " + std::string(mode_name(p.mode)) + " has no wavelet path");
  }
  validate(p);
  require_spatial(x, p, true);
  const Shape4 s = x.shape();
  const Var<T> reduced = from_tokens(linear(to_tokens(x), p.w_d), s.h, s.w);
  const Var<T> packed = dwt2d_haar_packed(reduced);
  WaveletKV<T> out;
  out.k_src = conv2d(packed, p.conv_w, std::optional<Var<T>>(p.conv_b), 1, 1);
  out.x_r = idwt2d_haar_packed(out.k_src);
  return out;
}

template <typename T>
Var<T> wavelets_block_attention(const Var<T>& x, const AttentionParams<T>& p) {
  const Shape4 s = x.shape();
  const WaveletKV<T> kv = wavelet_kv(x, p);
  const Var<T> q = linear(to_tokens(x), p.w_q);
  const Var<T> kc = to_tokens(kv.k_src);
  const Var<T> heads = multi_head_attention(q, linear(kc, p.w_k), linear(kc, p.w_v), p.heads);
  Var<T> fused = heads;
  if (p.mode == DownsampleMode::wavelet_idwt) {
    fused = concat<T>({heads, to_tokens(kv.x_r)}, 3);
  }
  return from_tokens(linear(fused, p.w_o, std::optional<Var<T>>(p.b_o)), s.h, s.w);
}

template <typename T>
Var<T> attention_forward(const Var<T>& x, const AttentionParams<T>& p) {
  return is_wavelet(p.mode) ? wavelets_block_attention(x, p) : downsampled_attention(x, p);
}

AttentionMacs attention_macs(DownsampleMode mode, std::size_t height, std::size_t width,
                             std::size_t dim) {
  const std::uint64_t n = height * width;
  const std::uint64_t m = kv_tokens(mode, height, width);
  const std::uint64_t d = dim;
  AttentionMacs macs;
  macs.q_proj = n * d * d;
  macs.kv_proj = 2 * m * d * d;
  macs.scores = n * m * d;
  macs.weighted_sum = n * m * d;
  switch (mode) {
    case DownsampleMode::none:
    case DownsampleMode::avgpool:
      break;
    case DownsampleMode::conv:
      macs.kv_source = m * kReduction * kReduction * d * d;
      break;
    case DownsampleMode::wavelet:
    case DownsampleMode::wavelet_idwt:
      macs.kv_source = n * d * (d / 4) + m * 9 * d * d;
      break;
  }
  const std::uint64_t out_in = mode == DownsampleMode::wavelet_idwt ? d + d / 4 : d;
  macs.out_proj = n * out_in * d;
  return macs;
}

std::uint64_t attention_param_count(DownsampleMode mode, std::size_t dim) {
  const std::uint64_t d = dim;
  std::uint64_t count = 3 * d * d;  // q, k, v
  switch (mode) {
    case DownsampleMode::none:
    case DownsampleMode::avgpool:
      break;
    case DownsampleMode::conv:
      count += kReduction * kReduction * d * d + d;
      break;
    case DownsampleMode::wavelet:
    case DownsampleMode::wavelet_idwt:
      count += d * (d / 4) + 9 * d * d + d;
      break;
  }
  const std::uint64_t out_in = mode == DownsampleMode::wavelet_idwt ? d + d / 4 : d;
  return count + out_in * d + d;
}

#define WAVEVIT_INSTANTIATE_ATTENTION(T)                                                       \
  template struct AttentionParams<T>;                                                          \
  template void validate(const AttentionParams<T>&);                                           \
  template AttentionParams<T> make_attention_params(std::size_t, std::size_t, DownsampleMode,  \
                                                    Rng&, double);                             \
  template Var<T> attention_weights(const Var<T>&, const Var<T>&, std::size_t);                \
  template Var<T> multi_head_attention(const Var<T>&, const Var<T>&, const Var<T>&,            \
                                       std::size_t);                                           \
  template Var<T> downsampled_attention(const Var<T>&, const AttentionParams<T>&);             \
  template WaveletKV<T> wavelet_kv(const Var<T>&, const AttentionParams<T>&);                  \
  template Var<T> wavelets_block_attention(const Var<T>&, const AttentionParams<T>&);          \
  template Var<T> attention_forward(const Var<T>&, const AttentionParams<T>&);

WAVEVIT_INSTANTIATE_ATTENTION(float)
WAVEVIT_INSTANTIATE_ATTENTION(double)

#undef WAVEVIT_INSTANTIATE_ATTENTION

}  // namespace wavevit
