#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wavevit/attention.hpp"
#include "wavevit/model_spec.hpp"

namespace wavevit {

template <typename T>
using NamedParams = std::vector<std::pair<std::string, Var<T>>>;

/// Overlapping strided conv + channel layer norm. Kernel 7 / pad 3 at
/// stride 4, kernel 3 / pad 1 at stride 2.
template <typename T>
struct PatchEmbedParams {
  std::size_t stride = 4;
  Var<T> conv_w, conv_b;  // (c_out, c_in, k, k), (c_out)
  Var<T> norm_g, norm_b;  // (c_out)

  std::size_t kernel() const { return stride == 4 ? 7 : 3; }
  std::size_t padding() const { return stride == 4 ? 3 : 1; }
};

template <typename T>
struct FfnParams {
  Var<T> w1, b1;  // (C, E·C), (E·C)
  Var<T> w2, b2;  // (E·C, C), (C)
};

template <typename T>
struct BlockParams {
  Var<T> norm1_g, norm1_b;
  AttentionParams<T> attn;
  Var<T> norm2_g, norm2_b;
  FfnParams<T> ffn;
};

template <typename T>
PatchEmbedParams<T> make_patch_embed(std::size_t c_in, std::size_t c_out, std::size_t stride, Rng& rng,
                                     double init_std = 0.02);
template <typename T>
FfnParams<T> make_ffn(std::size_t channels, std::size_t expansion, Rng& rng, double init_std = 0.02);
template <typename T>
BlockParams<T> make_block(const StageSpec& stage, Rng& rng, double init_std = 0.02);

/// (n_b, c_in, H, W) -> (n_b, c_out, H/stride, W/stride).
template <typename T>
Var<T> patch_embed(const Var<T>& x, const PatchEmbedParams<T>& p);

/// linear C -> E·C, GELU, linear E·C -> C over token rows.
template <typename T>
Var<T> ffn(const Var<T>& tokens, const FfnParams<T>& p);

/// Pre-norm residual block on token layout (n_b, 1, H·W, C):
///   y = x + attn(norm1(x)); out = y + ffn(norm2(y)).
template <typename T>
Var<T> wave_block(const Var<T>& tokens, std::size_t height, std::size_t width, const BlockParams<T>& p);

template <typename T>
struct Stage {
  PatchEmbedParams<T> embed;
  std::vector<BlockParams<T>> blocks;
};

/// Four stages, final layer norm, token mean pooling, linear classifier.
template <typename T>
class Model {
 public:
  Model(ModelSpec spec, std::vector<Stage<T>> stages, Var<T> norm_g, Var<T> norm_b, Var<T> head_w,
        Var<T> head_b);

  const ModelSpec& spec() const { return spec_; }
  const std::vector<Stage<T>>& stages() const { return stages_; }

  /// Parameters in a stable order with stable names, e.g.
  /// "stage1.block0.attn.w_q", "head.w".
  NamedParams<T> parameters() const;

  /// images (n_b, 3, H, W) with H, W divisible by 32 -> logits (n_b, 1, 1, K).
  Var<T> forward(const Var<T>& images) const;
  /// Forward without recording a graph.
  Tensor4<T> logits(const Tensor4<T>& images) const;

  void zero_grad();

 private:
  ModelSpec spec_;
  std::vector<Stage<T>> stages_;
  Var<T> norm_g_, norm_b_, head_w_, head_b_;
};

/// Truncated normal (std 0.02) weights, zero biases, unit norm gains;
/// identical seeds give bit-identical parameters.
template <typename T>
Model<T> build_model(const ModelSpec& spec, std::uint64_t seed);

template <typename T>
std::uint64_t count_params(const Model<T>& model);

}  // namespace wavevit
