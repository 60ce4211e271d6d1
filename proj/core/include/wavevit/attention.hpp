#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wavevit/autograd.hpp"
#include "wavevit/random.hpp"

namespace wavevit {

/// How keys/values are produced from the input map.
///   none          full attention, K/V from every token
///   avgpool       K/V from a 2x2 average-pooled map
///   conv          K/V from a stride-2 learned 2x2 convolution
///   wavelet       K/V from DWT -> 3x3 conv over packed subbands
///   wavelet_idwt  wavelet plus the IDWT-reconstructed branch fused into the
///                 output projection
enum class DownsampleMode : std::uint8_t { none, avgpool, conv, wavelet, wavelet_idwt };

/// Spatial reduction factor of every down-sampling mode.
inline constexpr std::size_t kReduction = 2;

std::string_view mode_name(DownsampleMode mode);
/// Throws ConfigError on unknown names.
DownsampleMode parse_mode(std::string_view name);
bool is_wavelet(DownsampleMode mode);
/// Key/value token count for an H x W map.
std::size_t kv_tokens(DownsampleMode mode, std::size_t height, std::size_t width);

/// Projection weights of one attention block. Matrices are (1, 1, rows, cols)
/// and act on token rows from the right; vectors are (1, 1, 1, len). Fields a
/// mode does not use stay undefined.
template <typename T>
struct AttentionParams {
  DownsampleMode mode = DownsampleMode::none;
  std::size_t dim = 0;
  std::size_t heads = 1;

  Var<T> w_q, w_k, w_v;  // (D, D), no bias
  Var<T> w_d;            // (D, D/4) channel reduction, wavelet modes
  Var<T> conv_w;         // (D, D, 3, 3) wavelet modes; (D, D, 2, 2) conv mode
  Var<T> conv_b;         // (D)
  Var<T> w_o;            // (D, D), or (D + D/4, D) for wavelet_idwt
  Var<T> b_o;            // (D)

  std::size_t head_dim() const { return dim / heads; }
  std::size_t output_in_dim() const {
    return mode == DownsampleMode::wavelet_idwt ? dim + dim / 4 : dim;
  }
  /// Defined parameters with stable suffix names ("w_q", ..., "b_o").
  std::vector<std::pair<std::string, Var<T>>> named() const;
};

/// Throws ConfigError when dims, head count or weight shapes contradict the mode.
template <typename T>
void validate(const AttentionParams<T>& p);

/// Truncated-normal(std) weights, zero biases.
template <typename T>
AttentionParams<T> make_attention_params(std::size_t dim, std::size_t heads, DownsampleMode mode,
                                         Rng& rng, double init_std = 0.02);

/// Softmax(Q_j K_jᵀ / √D_h) per head: (n_b, heads, n, m).
template <typename T>
Var<T> attention_weights(const Var<T>& q, const Var<T>& k, std::size_t heads);

/// Per-head scaled dot-product attention with heads concatenated in order.
/// q: (n_b, 1, n, D); k, v: (n_b, 1, m, D). No output projection.
template <typename T>
Var<T> multi_head_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::size_t heads);

/// Full attention or the irreversible down-sampled variants (none, avgpool,
/// conv), including the W^O projection. x is (n_b, D, H, W).
template <typename T>
Var<T> downsampled_attention(const Var<T>& x, const AttentionParams<T>& p);

template <typename T>
struct WaveletKV {
  Var<T> k_src;  // X^c: (n_b, D, H/2, W/2)
  Var<T> x_r;    // IDWT(X^c): (n_b, D/4, H, W)
};

/// X·W_d -> DWT -> pack -> 3x3 conv = X^c; x_r = IDWT(unpack(X^c)).
template <typename T>
WaveletKV<T> wavelet_kv(const Var<T>& x, const AttentionParams<T>& p);

/// Wavelet attention (modes wavelet and wavelet_idwt). x is (n_b, D, H, W).
template <typename T>
Var<T> wavelets_block_attention(const Var<T>& x, const AttentionParams<T>& p);

/// Dispatches on p.mode.
template <typename T>
Var<T> attention_forward(const Var<T>& x, const AttentionParams<T>& p);

/// Analytic multiply-accumulate counts for one attention block on one image.
/// DWT/IDWT, pooling, softmax and scaling are not counted.
struct AttentionMacs {
  std::uint64_t q_proj = 0;
  std::uint64_t kv_source = 0;  // W_d, locality conv, or strided reduction conv
  std::uint64_t kv_proj = 0;
  std::uint64_t scores = 0;        // Q·Kᵀ: n·m·D
  std::uint64_t weighted_sum = 0;  // A·V: n·m·D
  std::uint64_t out_proj = 0;

  std::uint64_t total() const {
    return q_proj + kv_source + kv_proj + scores + weighted_sum + out_proj;
  }
};

AttentionMacs attention_macs(DownsampleMode mode, std::size_t height, std::size_t width,
                             std::size_t dim);

/// Parameter element count of an attention block.
std::uint64_t attention_param_count(DownsampleMode mode, std::size_t dim);

}  // namespace wavevit
