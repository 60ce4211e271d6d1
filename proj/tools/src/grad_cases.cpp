#include "wavevit/cli/grad_cases.hpp"

#include <array>
#include <cmath>

#include "wavevit/backbone.hpp"
#include "wavevit/ops.hpp"
#include "wavevit/wavelet.hpp"

namespace wavevit::cli {

namespace {

using V = Var<double>;

V leaf(Shape4 s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return V(random_uniform<double>(s, rng, lo, hi), true);
}

// Values with magnitude in [0.2, 1] so ReLU stays away from its kink.
V leaf_off_zero(Shape4 s, Rng& rng) {
  Tensor4<double> t(s);
  for (auto& v : t.data()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.2, 1.0);
  return V(std::move(t), true);
}

// Scalar probe: a fixed random weighting of every output element.
V probe(const V& out, std::uint64_t seed) {
  Rng r(seed);
  return weighted_sum(out, random_uniform<double>(out.shape(), r));
}

class Builder {
 public:
  explicit Builder(std::uint64_t seed) : rng_(seed), probe_seed_(seed ^ 0x9e3779b97f4a7c15ULL) {}

  Rng& rng() { return rng_; }

  template <typename F>
  void add(std::string name, std::vector<V> inputs, F&& forward) {
    const std::uint64_t ps = probe_seed_ + cases_.size();
    cases_.push_back({std::move(name),
                      [forward = std::forward<F>(forward), ps](const std::vector<V>& in) { return probe(forward(in), ps); },
                      std::move(inputs)});
  }

  template <typename F>
  void add_scalar(std::string name, std::vector<V> inputs, F&& forward) {
    cases_.push_back({std::move(name), std::forward<F>(forward), std::move(inputs)});
  }

  std::vector<GradCase> take() { return std::move(cases_); }

 private:
  Rng rng_;
  std::uint64_t probe_seed_;
  std::vector<GradCase> cases_;
};

std::vector<V> attention_inputs(const V& x, const AttentionParams<double>& p) {
  std::vector<V> in{x};
  for (const auto& [name, v] : p.named()) in.push_back(v);
  return in;
}

std::vector<V> with_params(std::vector<V> in, const NamedParams<double>& params) {
  for (const auto& [name, v] : params) in.push_back(v);
  return in;
}

}  // namespace

std::vector<GradCase> grad_cases(std::uint64_t seed) {
  Builder b(seed);
  Rng& rng = b.rng();
  using M = DownsampleMode;

  b.add("matmul", {leaf({2, 1, 3, 4}, rng), leaf({2, 1, 4, 5}, rng)},
        [](const std::vector<V>& in) { return matmul(in[0], in[1]); });
  b.add("matmul_transpose_b", {leaf({2, 1, 3, 4}, rng), leaf({2, 1, 5, 4}, rng)},
        [](const std::vector<V>& in) { return matmul(in[0], in[1], true); });
  b.add("matmul_broadcast", {leaf({2, 3, 3, 4}, rng), leaf({1, 1, 4, 5}, rng)},
        [](const std::vector<V>& in) { return matmul(in[0], in[1]); });
  b.add("linear", {leaf({2, 1, 5, 4}, rng), leaf({1, 1, 4, 3}, rng), leaf({1, 1, 1, 3}, rng)},
        [](const std::vector<V>& in) { return linear(in[0], in[1], std::optional<V>(in[2])); });
  b.add("softmax_lastdim", {leaf({2, 2, 3, 5}, rng, -2.0, 2.0)},
        [](const std::vector<V>& in) { return softmax_lastdim(in[0]); });
  b.add("conv2d_k3_p1", {leaf({2, 3, 5, 6}, rng), leaf({4, 3, 3, 3}, rng), leaf({1, 1, 1, 4}, rng)},
        [](const std::vector<V>& in) { return conv2d(in[0], in[1], std::optional<V>(in[2]), 1, 1); });
  b.add("conv2d_k7_s4_p3", {leaf({1, 3, 8, 8}, rng), leaf({4, 3, 7, 7}, rng), leaf({1, 1, 1, 4}, rng)},
        [](const std::vector<V>& in) { return conv2d(in[0], in[1], std::optional<V>(in[2]), 4, 3); });
  b.add("conv2d_k2_s2", {leaf({1, 4, 4, 6}, rng), leaf({3, 4, 2, 2}, rng), leaf({1, 1, 1, 3}, rng)},
        [](const std::vector<V>& in) { return conv2d(in[0], in[1], std::optional<V>(in[2]), 2, 0); });
  b.add("layer_norm", {leaf({2, 1, 4, 6}, rng), leaf({1, 1, 1, 6}, rng, 0.5, 1.5), leaf({1, 1, 1, 6}, rng)},
        [](const std::vector<V>& in) { return layer_norm(in[0], in[1], in[2], 1e-5); });
  b.add("gelu", {leaf({2, 2, 3, 4}, rng, -3.0, 3.0)}, [](const std::vector<V>& in) { return gelu(in[0]); });
  b.add("relu", {leaf_off_zero({2, 2, 3, 4}, rng)}, [](const std::vector<V>& in) { return relu(in[0]); });
  b.add("add", {leaf({2, 3, 2, 4}, rng), leaf({2, 3, 2, 4}, rng)},
        [](const std::vector<V>& in) { return add(in[0], in[1]); });
  b.add("scale", {leaf({2, 3, 2, 4}, rng)}, [](const std::vector<V>& in) { return scale(in[0], 0.37); });
  b.add_scalar("sum", {leaf({2, 3, 2, 4}, rng)}, [](const std::vector<V>& in) { return sum(gelu(in[0])); });
  b.add("mean_rows", {leaf({2, 1, 5, 3}, rng)}, [](const std::vector<V>& in) { return mean_rows(in[0]); });
  b.add("avg_pool2d", {leaf({2, 3, 4, 6}, rng)}, [](const std::vector<V>& in) { return avg_pool2d(in[0], 2, 2); });
  b.add("reshape", {leaf({2, 3, 4, 2}, rng)}, [](const std::vector<V>& in) { return reshape(in[0], {1, 2, 6, 4}); });
  b.add("to_tokens", {leaf({2, 3, 2, 4}, rng)}, [](const std::vector<V>& in) { return to_tokens(in[0]); });
  b.add("from_tokens", {leaf({2, 1, 8, 3}, rng)}, [](const std::vector<V>& in) { return from_tokens(in[0], 2, 4); });
  b.add("concat_channels", {leaf({2, 2, 3, 2}, rng), leaf({2, 3, 3, 2}, rng)},
        [](const std::vector<V>& in) { return concat(in, 1); });
  b.add("concat_last", {leaf({2, 1, 3, 2}, rng), leaf({2, 1, 3, 4}, rng)},
        [](const std::vector<V>& in) { return concat(in, 3); });
  b.add("split", {leaf({2, 1, 3, 6}, rng)}, [](const std::vector<V>& in) {
    const std::array<std::size_t, 3> sizes{2, 3, 1};
    auto parts = split(in[0], sizes, 3);
    return concat<double>({scale(parts[2], 2.0), gelu(parts[0]), parts[1]}, 3);
  });
  b.add("split_heads", {leaf({2, 1, 3, 8}, rng)}, [](const std::vector<V>& in) { return split_heads(in[0], 2); });
  b.add("merge_heads", {leaf({2, 2, 3, 4}, rng)}, [](const std::vector<V>& in) { return merge_heads(in[0]); });
  b.add_scalar("cross_entropy", {leaf({4, 1, 1, 5}, rng, -2.0, 2.0)}, [](const std::vector<V>& in) {
    static const std::array<int, 4> labels{3, 0, 4, 1};
    return cross_entropy(in[0], std::span<const int>(labels));
  });
  b.add("dwt2d_haar_packed", {leaf({2, 4, 4, 6}, rng)},
        [](const std::vector<V>& in) { return dwt2d_haar_packed(in[0]); });
  b.add("idwt2d_haar_packed", {leaf({2, 8, 3, 2}, rng)},
        [](const std::vector<V>& in) { return idwt2d_haar_packed(in[0]); });
  b.add("dwt_idwt_subbands", {leaf({1, 2, 4, 4}, rng)}, [](const std::vector<V>& in) {
    auto s = dwt2d_haar(in[0]);
    s.lh = gelu(s.lh);
    s.hh = scale(s.hh, -1.5);
    return idwt2d_haar(s);
  });

  b.add("attention_weights", {leaf({2, 1, 6, 8}, rng), leaf({2, 1, 4, 8}, rng)},
        [](const std::vector<V>& in) { return attention_weights(in[0], in[1], 2); });
  b.add("multi_head_attention", {leaf({2, 1, 6, 8}, rng), leaf({2, 1, 4, 8}, rng), leaf({2, 1, 4, 8}, rng)},
        [](const std::vector<V>& in) { return multi_head_attention(in[0], in[1], in[2], 2); });

  for (M mode : {M::none, M::avgpool, M::conv, M::wavelet, M::wavelet_idwt}) {
    const V x = leaf({1, 8, 8, 8}, rng);
    const auto p = make_attention_params<double>(8, 2, mode, rng, 0.3);
    b.add("attention_" + std::string(mode_name(mode)), attention_inputs(x, p),
          [p](const std::vector<V>& in) { return attention_forward(in[0], p); });
  }

  {
    const V t = leaf({2, 1, 4, 8}, rng);
    const auto p = make_ffn<double>(8, 2, rng, 0.3);
    b.add("ffn", {t, p.w1, p.b1, p.w2, p.b2}, [p](const std::vector<V>& in) { return ffn(in[0], p); });
  }
  for (std::size_t stride : {std::size_t{4}, std::size_t{2}}) {
    const V x = leaf({1, 3, 8, 8}, rng);
    const auto p = make_patch_embed<double>(3, 4, stride, rng, 0.3);
    b.add("patch_embed_s" + std::to_string(stride), {x, p.conv_w, p.conv_b, p.norm_g, p.norm_b},
          [p](const std::vector<V>& in) { return patch_embed(in[0], p); });
  }
  {
    const V t = leaf({1, 1, 64, 8}, rng);
    StageSpec st{1, 8, 2, 2, M::wavelet_idwt};
    const auto p = make_block<double>(st, rng, 0.3);
    std::vector<V> in = attention_inputs(t, p.attn);
    for (const V& v : {p.norm1_g, p.norm1_b, p.norm2_g, p.norm2_b, p.ffn.w1, p.ffn.b1, p.ffn.w2, p.ffn.b2}) {
      in.push_back(v);
    }
    b.add("wave_block", std::move(in), [p](const std::vector<V>& in) { return wave_block(in[0], 8, 8, p); });
  }
  {
    ModelSpec spec;
    spec.name = "gradcheck-tiny";
    spec.num_classes = 3;
    spec.input_resolution = 32;
    spec.stages = {StageSpec{1, 8, 2, 2, M::wavelet_idwt}, StageSpec{1, 8, 2, 2, M::wavelet_idwt},
                   StageSpec{1, 8, 2, 2, M::none}, StageSpec{1, 8, 2, 2, M::none}};
    const auto model = std::make_shared<Model<double>>(build_model<double>(spec, rng.next_u64()));
    // Widen the 0.02 init so parameter gradients sit well above finite-difference noise.
    for (auto& [name, v] : model->parameters()) {
      if (v.shape().h > 1) {
        for (auto& w : v.mutable_value().data()) w *= 15.0;
      }
    }
    const V images = leaf({1, 3, 32, 32}, rng);
    b.add_scalar("model_cross_entropy", with_params({images}, model->parameters()),
                 [model](const std::vector<V>& in) {
                   static const std::array<int, 1> labels{2};
                   return cross_entropy(model->forward(in[0]), std::span<const int>(labels));
                 });
  }
  return b.take();
}

std::vector<std::string> grad_case_names() {
  std::vector<std::string> names;
  for (const auto& c : grad_cases(0)) names.push_back(c.name);
  return names;
}

}  // namespace wavevit::cli
