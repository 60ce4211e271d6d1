#include "wavevit/backbone.hpp"

#include "wavevit/ops.hpp"

namespace wavevit {

namespace {

template <typename T>
Var<T> trunc_normal(Shape4 s, Rng& rng, double std) {
  Tensor4<T> t(s);
  for (auto& v : t.data()) v = static_cast<T>(rng.truncated_normal(std));
  return Var<T>(std::move(t), true);
}

template <typename T>
Var<T> constant_vec(std::size_t len, T value) {
  return Var<T>(Tensor4<T>({1, 1, 1, len}, value), true);
}

constexpr double kNormEps = 1e-5;

}  // namespace

template <typename T>
PatchEmbedParams<T> make_patch_embed(std::size_t c_in, std::size_t c_out, std::size_t stride, Rng& rng,
                                     double init_std) {
  if (stride != 4 && stride != 2) {
    throw ConfigError("patch_embed: stride must be 4 or 2, got " + std::to_string(stride));
  }
  PatchEmbedParams<T> p;
  p.stride = stride;
  p.conv_w = trunc_normal<T>({c_out, c_in, p.kernel(), p.kernel()}, rng, init_std);
  p.conv_b = constant_vec<T>(c_out, T(0));
  p.norm_g = constant_vec<T>(c_out, T(1));
  p.norm_b = constant_vec<T>(c_out, T(0));
  return p;
}

template <typename T>
FfnParams<T> make_ffn(std::size_t channels, std::size_t expansion, Rng& rng, double init_std) {
  if (expansion == 0) throw ConfigError("ffn: expansion must be >= 1");
  const std::size_t hidden = channels * expansion;
  FfnParams<T> p;
  p.w1 = trunc_normal<T>({1, 1, channels, hidden}, rng, init_std);
  p.b1 = constant_vec<T>(hidden, T(0));
  p.w2 = trunc_normal<T>({1, 1, hidden, channels}, rng, init_std);
  p.b2 = constant_vec<T>(channels, T(0));
  return p;
}

template <typename T>
BlockParams<T> make_block(const StageSpec& stage, Rng& rng, double init_std) {
  BlockParams<T> p;
  p.norm1_g = constant_vec<T>(stage.channels, T(1));
  p.norm1_b = constant_vec<T>(stage.channels, T(0));
  p.attn = make_attention_params<T>(stage.channels, stage.heads, stage.mode, rng, init_std);
  p.norm2_g = constant_vec<T>(stage.channels, T(1));
  p.norm2_b = constant_vec<T>(stage.channels, T(0));
  p.ffn = make_ffn<T>(stage.channels, stage.ffn_expansion, rng, init_std);
  return p;
}

template <typename T>
Var<T> patch_embed(const Var<T>& x, const PatchEmbedParams<T>& p) {
  const Shape4 s = x.shape();
  if (s.h % p.stride != 0 || s.w % p.stride != 0) {
    throw ShapeError("patch_embed: spatial dims " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " not divisible by stride " + std::to_string(p.stride));
  }
  const Var<T> y = conv2d(x, p.conv_w, std::optional<Var<T>>(p.conv_b), p.stride, p.padding());
  const Shape4 ys = y.shape();
  return from_tokens(layer_norm(to_tokens(y), p.norm_g, p.norm_b, kNormEps), ys.h, ys.w);
}

template <typename T>
Var<T> ffn(const Var<T>& tokens, const FfnParams<T>& p) {
  const Var<T> hidden = gelu(linear(tokens, p.w1, std::optional<Var<T>>(p.b1)));
  return linear(hidden, p.w2, std::optional<Var<T>>(p.b2));
}

template <typename T>
Var<T> wave_block(const Var<T>& tokens, std::size_t height, std::size_t width, const BlockParams<T>& p) {
  const Var<T> normed = from_tokens(layer_norm(tokens, p.norm1_g, p.norm1_b, kNormEps), height, width);
  const Var<T> y = add(tokens, to_tokens(attention_forward(normed, p.attn)));
  return add(y, ffn(layer_norm(y, p.norm2_g, p.norm2_b, kNormEps), p.ffn));
}

template <typename T>
Model<T>::Model(ModelSpec spec, std::vector<Stage<T>> stages, Var<T> norm_g, Var<T> norm_b, Var<T> head_w,
                Var<T> head_b)
    : spec_(std::move(spec)),
      stages_(std::move(stages)),
      norm_g_(std::move(norm_g)),
      norm_b_(std::move(norm_b)),
      head_w_(std::move(head_w)),
      head_b_(std::move(head_b)) {}

template <typename T>
NamedParams<T> Model<T>::parameters() const {
  NamedParams<T> out;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const std::string st = "stage" + std::to_string(i + 1) + ".";
    const auto& e = stages_[i].embed;
    out.emplace_back(st + "embed.conv_w", e.conv_w);
    out.emplace_back(st + "embed.conv_b", e.conv_b);
    out.emplace_back(st + "embed.norm_g", e.norm_g);
    out.emplace_back(st + "embed.norm_b", e.norm_b);
    for (std::size_t j = 0; j < stages_[i].blocks.size(); ++j) {
      const auto& b = stages_[i].blocks[j];
      const std::string bl = st + "block" + std::to_string(j) + ".";
      out.emplace_back(bl + "norm1_g", b.norm1_g);
      out.emplace_back(bl + "norm1_b", b.norm1_b);
      for (auto& [name, v] : b.attn.named()) out.emplace_back(bl + "attn." + name, v);
      out.emplace_back(bl + "norm2_g", b.norm2_g);
      out.emplace_back(bl + "norm2_b", b.norm2_b);
      out.emplace_back(bl + "ffn.w1", b.ffn.w1);
      out.emplace_back(bl + "ffn.b1", b.ffn.b1);
      out.emplace_back(bl + "ffn.w2", b.ffn.w2);
      out.emplace_back(bl + "ffn.b2", b.ffn.b2);
    }
  }
  out.emplace_back("head.norm_g", norm_g_);
  out.emplace_back("head.norm_b", norm_b_);
  out.emplace_back("head.w", head_w_);
  out.emplace_back("head.b", head_b_);
  return out;
}

template <typename T>
Var<T> Model<T>::forward(const Var<T>& images) const {
  const Shape4 s = images.shape();
  if (s.c != 3) throw ShapeError("forward: expected 3-channel images, got " + s.str());
  if (s.h % 32 != 0 || s.w % 32 != 0 || s.h == 0 || s.w == 0) {
    throw ShapeError("forward: image size " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " must be divisible by 32");
  }
  Var<T> spatial = images;
  Var<T> tokens;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    spatial = patch_embed(spatial, stages_[i].embed);
    const std::size_t h = spatial.shape().h, w = spatial.shape().w;
    tokens = to_tokens(spatial);
    for (const auto& block : stages_[i].blocks) tokens = wave_block(tokens, h, w, block);
    if (i + 1 < stages_.size()) spatial = from_tokens(tokens, h, w);
  }
  const Var<T> pooled = mean_rows(layer_norm(tokens, norm_g_, norm_b_, kNormEps));
  return linear(pooled, head_w_, std::optional<Var<T>>(head_b_));
}

template <typename T>
Tensor4<T> Model<T>::logits(const Tensor4<T>& images) const {
  NoGradGuard guard;
  return forward(Var<T>(images)).value();
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& [name, v] : parameters()) v.zero_grad();
}

template <typename T>
Model<T> build_model(const ModelSpec& spec, std::uint64_t seed) {
  validate(spec);
  Rng rng(seed);
  std::vector<Stage<T>> stages;
  std::size_t c_in = 3;
  for (std::size_t i = 0; i < ModelSpec::kStages; ++i) {
    const StageSpec& st = spec.stages[i];
    Stage<T> stage;
    stage.embed = make_patch_embed<T>(c_in, st.channels, ModelSpec::kStrides[i], rng);
    for (std::size_t j = 0; j < st.depth; ++j) stage.blocks.push_back(make_block<T>(st, rng));
    stages.push_back(std::move(stage));
    c_in = st.channels;
  }
  auto norm_g = Var<T>(Tensor4<T>({1, 1, 1, c_in}, T(1)), true);
  auto norm_b = Var<T>(Tensor4<T>({1, 1, 1, c_in}), true);
  Tensor4<T> hw({1, 1, c_in, spec.num_classes});
  for (auto& v : hw.data()) v = static_cast<T>(rng.truncated_normal(0.02));
  auto head_w = Var<T>(std::move(hw), true);
  auto head_b = Var<T>(Tensor4<T>({1, 1, 1, spec.num_classes}), true);
  return Model<T>(spec, std::move(stages), std::move(norm_g), std::move(norm_b), std::move(head_w),
                  std::move(head_b));
}

template <typename T>
std::uint64_t count_params(const Model<T>& model) {
  std::uint64_t total = 0;
  for (const auto& [name, v] : model.parameters()) total += v.numel();
  return total;
}

#define WAVEVIT_INSTANTIATE_BACKBONE(T)                                                             \
  template PatchEmbedParams<T> make_patch_embed(std::size_t, std::size_t, std::size_t, Rng&, double); \
  template FfnParams<T> make_ffn(std::size_t, std::size_t, Rng&, double);                           \
  template BlockParams<T> make_block(const StageSpec&, Rng&, double);                               \
  template Var<T> patch_embed(const Var<T>&, const PatchEmbedParams<T>&);                           \
  template Var<T> ffn(const Var<T>&, const FfnParams<T>&);                                          \
  template Var<T> wave_block(const Var<T>&, std::size_t, std::size_t, const BlockParams<T>&);       \
  template class Model<T>;                                                                          \
  template Model<T> build_model(const ModelSpec&, std::uint64_t);                                   \
  template std::uint64_t count_params(const Model<T>&);

WAVEVIT_INSTANTIATE_BACKBONE(float)
WAVEVIT_INSTANTIATE_BACKBONE(double)

#undef WAVEVIT_INSTANTIATE_BACKBONE

}  // namespace wavevit
