#include "wavevit/cli/suites.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "wavevit/accounting.hpp"
#include "wavevit/checkpoint.hpp"
#include "wavevit/ops.hpp"
#include "wavevit/tensor_io.hpp"
#include "wavevit/wavelet.hpp"

namespace wavevit::cli {

namespace {

using T64 = Tensor4<double>;
using V = Var<double>;

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(3) << v;
  return os.str();
}

CheckResult bound(std::string name, double value, double limit) {
  return {std::move(name), value <= limit, "max=" + sci(value) + " limit=" + sci(limit)};
}

Shape4 random_even_shape(Rng& rng) {
  return {1 + rng.below(3), 1 + rng.below(4), 2 * (1 + rng.below(8)), 2 * (1 + rng.below(8))};
}

std::vector<CheckResult> tensor_suite(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CheckResult> out;
  NoGradGuard guard;

  double mm = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t r = 1 + rng.below(6), k = 1 + rng.below(6), c = 1 + rng.below(6);
    const T64 a = random_uniform<double>({1, 1, r, k}, rng), b = random_uniform<double>({1, 1, k, c}, rng);
    const T64 got = matmul(V(a), V(b)).value();
    T64 want({1, 1, r, c});
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        long double acc = 0;
        for (std::size_t p = 0; p < k; ++p) acc += static_cast<long double>(a.at(0, 0, i, p)) * b.at(0, 0, p, j);
        want.at(0, 0, i, j) = static_cast<double>(acc);
      }
    mm = std::max(mm, max_abs_diff(got, want));
  }
  out.push_back(bound("matmul_vs_loop", mm, 1e-13));

  double cv = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t ci = 1 + rng.below(3), co = 1 + rng.below(3), k = 1 + 2 * rng.below(2);
    const std::size_t stride = 1 + rng.below(2), pad = k / 2, h = 4 + rng.below(4), w = 4 + rng.below(4);
    const T64 x = random_uniform<double>({2, ci, h, w}, rng), wt = random_uniform<double>({co, ci, k, k}, rng);
    const T64 got = conv2d(V(x), V(wt), std::optional<V>(), stride, pad).value();
    const Shape4 s = got.shape();
    double worst = 0.0;
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t o = 0; o < co; ++o)
        for (std::size_t y = 0; y < s.h; ++y)
          for (std::size_t xx = 0; xx < s.w; ++xx) {
            long double acc = 0;
            for (std::size_t i = 0; i < ci; ++i)
              for (std::size_t u = 0; u < k; ++u)
                for (std::size_t v = 0; v < k; ++v) {
                  const long long iy = static_cast<long long>(y * stride + u) - static_cast<long long>(pad);
                  const long long ix = static_cast<long long>(xx * stride + v) - static_cast<long long>(pad);
                  if (iy < 0 || ix < 0 || iy >= static_cast<long long>(h) || ix >= static_cast<long long>(w)) continue;
                  acc += static_cast<long double>(x.at(n, i, iy, ix)) * wt.at(o, i, u, v);
                }
            worst = std::max(worst, std::abs(static_cast<double>(acc) - got.at(n, o, y, xx)));
          }
    cv = std::max(cv, worst);
  }
  out.push_back(bound("conv2d_vs_loop", cv, 1e-13));

  const T64 logits = random_uniform<double>({2, 3, 4, 7}, rng, -5.0, 5.0);
  const T64 sm = softmax_lastdim(V(logits)).value();
  double rows = 0.0;
  for (std::size_t r = 0; r < sm.numel() / 7; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 7; ++j) s += sm.data()[r * 7 + j];
    rows = std::max(rows, std::abs(s - 1.0));
  }
  out.push_back(bound("softmax_rows_sum_to_one", rows, 1e-12));

  const T64 x = random_uniform<double>({2, 1, 5, 16}, rng, -3.0, 3.0);
  const T64 ln = layer_norm(V(x), V(T64({1, 1, 1, 16}, 1.0)), V(T64({1, 1, 1, 16}, 0.0)), 1e-14).value();
  double stat = 0.0;
  for (std::size_t r = 0; r < 10; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t j = 0; j < 16; ++j) m += ln.data()[r * 16 + j];
    m /= 16.0;
    for (std::size_t j = 0; j < 16; ++j) v += (ln.data()[r * 16 + j] - m) * (ln.data()[r * 16 + j] - m);
    stat = std::max({stat, std::abs(m), std::abs(v / 16.0 - 1.0)});
  }
  out.push_back(bound("layer_norm_moments", stat, 1e-12));

  std::stringstream buf;
  const T64 t = random_uniform<double>({2, 3, 4, 5}, rng);
  write_wt4d(buf, t);
  const AnyTensor back = read_wt4d(buf);
  out.push_back({"wt4d_roundtrip_bit_exact", std::holds_alternative<T64>(back) && std::get<T64>(back) == t, ""});
  return out;
}

std::vector<CheckResult> wavelet_suite(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CheckResult> out;
  double recon = 0.0, energy = 0.0, lin = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Shape4 s = random_even_shape(rng);
    const T64 x = random_uniform<double>(s, rng), y = random_uniform<double>(s, rng);
    const auto bands = dwt2d_haar(x);
    recon = std::max(recon, rel_error_norm(idwt2d_haar(bands), x));
    const double e = bands.ll.squared_norm() + bands.lh.squared_norm() + bands.hl.squared_norm() +
                     bands.hh.squared_norm();
    energy = std::max(energy, std::abs(e - x.squared_norm()) / x.squared_norm());
    const double alpha = rng.uniform(-2.0, 2.0), beta = rng.uniform(-2.0, 2.0);
    T64 mix(s);
    for (std::size_t i = 0; i < mix.numel(); ++i) mix.data()[i] = alpha * x.data()[i] + beta * y.data()[i];
    const T64 lhs = subbands_pack(dwt2d_haar(mix));
    const T64 px = subbands_pack(bands), py = subbands_pack(dwt2d_haar(y));
    T64 rhs(lhs.shape());
    for (std::size_t i = 0; i < rhs.numel(); ++i) rhs.data()[i] = alpha * px.data()[i] + beta * py.data()[i];
    lin = std::max(lin, max_abs_diff(lhs, rhs));
  }
  out.push_back(bound("perfect_reconstruction", recon, 1e-12));
  out.push_back(bound("energy_preservation", energy, 1e-10));
  out.push_back(bound("linearity", lin, 1e-12));

  double ll = 0.0, detail = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Shape4 half{1 + rng.below(2), 1 + rng.below(3), 1 + rng.below(6), 1 + rng.below(6)};
    const T64 coarse = random_uniform<double>(half, rng);
    T64 x({half.n, half.c, 2 * half.h, 2 * half.w});
    for (std::size_t n = 0; n < half.n; ++n)
      for (std::size_t c = 0; c < half.c; ++c)
        for (std::size_t i = 0; i < 2 * half.h; ++i)
          for (std::size_t j = 0; j < 2 * half.w; ++j) x.at(n, c, i, j) = coarse.at(n, c, i / 2, j / 2);
    const auto bands = dwt2d_haar(x);
    T64 pooled;
    {
      NoGradGuard guard;
      pooled = avg_pool2d(V(x), 2, 2).value();
    }
    for (std::size_t i = 0; i < pooled.numel(); ++i) {
      ll = std::max(ll, std::abs(bands.ll.data()[i] - 2.0 * pooled.data()[i]));
      detail = std::max({detail, std::abs(bands.lh.data()[i]), std::abs(bands.hl.data()[i]),
                         std::abs(bands.hh.data()[i])});
    }
  }
  out.push_back(bound("avgpool_subsumption_ll", ll, 1e-12));
  out.push_back(bound("avgpool_subsumption_detail", detail, 1e-12));

  const auto b = dwt2d_haar(T64({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4}));
  const bool ok = std::abs(b.ll[0] - 5.0) < 1e-15 && std::abs(b.lh[0] + 2.0) < 1e-15 &&
                  std::abs(b.hl[0] + 1.0) < 1e-15 && std::abs(b.hh[0]) < 1e-15;
  out.push_back({"known_2x2_block", ok,
                 "ll=" + sci(b.ll[0]) + " lh=" + sci(b.lh[0]) + " hl=" + sci(b.hl[0]) + " hh=" + sci(b.hh[0])});
  return out;
}

std::vector<CheckResult> attention_suite(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CheckResult> out;
  NoGradGuard guard;
  using M = DownsampleMode;
  constexpr std::size_t H = 8, W = 8, D = 8, heads = 2;

  double rows = 0.0;
  for (M mode : {M::none, M::avgpool, M::conv, M::wavelet, M::wavelet_idwt}) {
    const V q(random_uniform<double>({1, 1, H * W, D}, rng));
    const V k(random_uniform<double>({1, 1, kv_tokens(mode, H, W), D}, rng, -4.0, 4.0));
    const T64 a = attention_weights(q, k, heads).value();
    const std::size_t m = a.shape().w;
    for (std::size_t r = 0; r < a.numel() / m; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += a.data()[r * m + j];
      rows = std::max(rows, std::abs(s - 1.0));
    }
  }
  out.push_back(bound("weight_rows_sum_to_one", rows, 1e-12));

  const std::size_t n = 12, m = 5;
  const T64 q = random_uniform<double>({1, 1, n, D}, rng), k = random_uniform<double>({1, 1, m, D}, rng),
            v = random_uniform<double>({1, 1, m, D}, rng);
  const T64 base = multi_head_attention(V(q), V(k), V(v), heads).value();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  auto permute_rows = [](const T64& t, const std::vector<std::size_t>& p) {
    T64 r(Shape4{1, 1, p.size(), t.shape().w});
    for (std::size_t i = 0; i < p.size(); ++i)
      for (std::size_t j = 0; j < t.shape().w; ++j) r.at(0, 0, i, j) = t.at(0, 0, p[i], j);
    return r;
  };
  const T64 permuted = multi_head_attention(V(permute_rows(q, perm)), V(k), V(v), heads).value();
  out.push_back(bound("query_permutation_equivariance", max_abs_diff(permuted, permute_rows(base, perm)), 1e-12));

  std::vector<std::size_t> kperm(m);
  std::iota(kperm.begin(), kperm.end(), std::size_t{0});
  for (std::size_t i = m; i > 1; --i) std::swap(kperm[i - 1], kperm[rng.below(i)]);
  const T64 reordered =
      multi_head_attention(V(q), V(permute_rows(k, kperm)), V(permute_rows(v, kperm)), heads).value();
  out.push_back(bound("key_order_invariance", max_abs_diff(reordered, base), 1e-12));

  const std::uint64_t full = attention_macs(M::none, 56, 56, 64).scores;
  bool exact = full == 3136ULL * 3136ULL * 64ULL;
  std::string detail = "none=" + std::to_string(full);
  for (M mode : {M::avgpool, M::conv, M::wavelet, M::wavelet_idwt}) {
    const std::uint64_t s = attention_macs(mode, 56, 56, 64).scores;
    exact = exact && 4 * s == full;
    detail += " " + std::string(mode_name(mode)) + "=" + std::to_string(s);
  }
  out.push_back({"score_macs_quarter", exact, detail});

  for (M mode : {M::none, M::avgpool, M::conv, M::wavelet, M::wavelet_idwt}) {
    const auto p = make_attention_params<double>(D, heads, mode, rng);
    const T64 x = random_uniform<double>({2, D, H, W}, rng);
    const T64 y = attention_forward(V(x), p).value();
    out.push_back({"shape_preserved_" + std::string(mode_name(mode)), y.shape() == x.shape() && y.all_finite(),
                   y.shape().str()});
  }
  return out;
}

std::vector<CheckResult> backbone_suite(std::uint64_t seed) {
  std::vector<CheckResult> out;
  const std::array<std::size_t, 4> expect{56, 28, 14, 7};
  const std::array<std::pair<const char*, double>, 3> refs{
      {{"wave-vit-s", 19.8e6}, {"wave-vit-b", 33.5e6}, {"wave-vit-l", 57.5e6}}};
  std::uint64_t prev = 0;
  bool monotone = true;
  for (const auto& [name, ref] : refs) {
    const ModelSpec spec = preset(name);
    out.push_back({std::string(name) + "_stage_grids", stage_resolutions(224) == expect, ""});
    const auto count = count_params(build_model<float>(spec, seed));
    const double ratio = static_cast<double>(count) / ref;
    out.push_back({std::string(name) + "_params_band", ratio >= 0.85 && ratio <= 1.15,
                   std::to_string(count) + " ratio=" + sci(ratio)});
    monotone = monotone && count > prev;
    prev = count;
  }
  out.push_back({"params_monotone_s_b_l", monotone, ""});

  using M = DownsampleMode;
  auto variant = [&](M mode) {
    return static_cast<double>(count_params(build_model<float>(with_block_mode(preset("s"), mode), seed)));
  };
  const double a = variant(M::avgpool), b = variant(M::conv), c = variant(M::wavelet), d = variant(M::wavelet_idwt);
  out.push_back({"ablation_ordering", a < c && std::abs(c - d) / d <= 0.005 && b > a,
                 "a=" + sci(a) + " b=" + sci(b) + " c=" + sci(c) + " d=" + sci(d)});

  const Model<float> micro = build_model<float>(preset("micro"), seed);
  Rng rng(seed);
  Tensor4<float> img = random_uniform<float>({3, 3, 32, 32}, rng);
  std::copy_n(img.data().data(), 3 * 32 * 32, img.data().data() + 2 * 3 * 32 * 32);
  const Tensor4<float> logits = micro.logits(img);
  const std::size_t K = logits.shape().w;
  const bool dup = std::equal(logits.data().begin(), logits.data().begin() + K, logits.data().begin() + 2 * K);
  out.push_back({"micro_forward_finite", logits.all_finite(), logits.shape().str()});
  out.push_back({"micro_batch_rows_independent", dup, ""});

  std::stringstream buf;
  write_checkpoint(buf, to_checkpoint(micro));
  Model<float> other = build_model<float>(preset("micro"), seed + 1);
  load_into(other, read_checkpoint(buf));
  out.push_back({"checkpoint_roundtrip_logits", other.logits(img) == logits, ""});
  return out;
}

}  // namespace

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"tensor", "wavelet", "attention", "backbone"};
  return names;
}

std::vector<CheckResult> run_suite(std::string_view suite, std::uint64_t seed) {
  if (suite == "tensor") return tensor_suite(seed);
  if (suite == "wavelet") return wavelet_suite(seed);
  if (suite == "attention") return attention_suite(seed);
  if (suite == "backbone") return backbone_suite(seed);
  throw std::invalid_argument("unknown suite '" + std::string(suite) + "'");
}

std::size_t print_results(std::ostream& os, std::string_view suite, const std::vector<CheckResult>& results) {
  std::size_t failures = 0;
  for (const auto& r : results) {
    os << (r.passed ? "PASS " : "FAIL ") << suite << '.' << r.name;
    if (!r.detail.empty()) os << "  " << r.detail;
    os << '\n';
    failures += r.passed ? 0 : 1;
  }
  return failures;
}

}  // namespace wavevit::cli
