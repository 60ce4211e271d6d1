#include <gtest/gtest.h>

#include "oracles.hpp"
#include "wavevit/cli/grad_cases.hpp"
#include "wavevit/grad_check.hpp"
#include "wavevit/ops.hpp"
#include "wavevit/wavelet.hpp"

using namespace wavevit;
using V = Var<double>;
using T64 = Tensor4<double>;

namespace {

V leaf(Shape4 s, Rng& rng) { return V(oracle::uniform(s, rng), true); }

// y = 2x whose backward is deliberately off by `error` (relative).
V doubled_with_bad_grad(const V& x, double error) {
  T64 y = x.value();
  for (auto& v : y.data()) v *= 2.0;
  return make_result<double>(OpKind::scale, std::move(y), {x}, [error](Node<double>& self) {
    T64 g = self.grad;
    for (auto& v : g.data()) v *= 2.0 * (1.0 + error);
    accumulate_grad(*self.inputs[0], g);
  });
}

}  // namespace

TEST(Backward, SumGivesOnes) {
  Rng rng(1);
  V x = leaf({2, 3, 2, 2}, rng);
  backward(sum(x));
  const T64 g1 = x.grad();
  for (double g : g1.data()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SumOfProductGivesTransposeTimesOnes) {
  Rng rng(2);
  const T64 xv = oracle::uniform({1, 1, 4, 3}, rng);
  V x(xv);
  V w = leaf({1, 1, 3, 5}, rng);
  backward(sum(matmul(x, w)));
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t j = 0; j < 5; ++j) {
      double col = 0;
      for (std::size_t i = 0; i < 4; ++i) col += xv.at(0, 0, i, k);
      EXPECT_NEAR(w.grad().at(0, 0, k, j), col, 1e-15);
    }
  EXPECT_FALSE(x.has_grad());
}

TEST(Backward, LeafGradsAccumulateUntilReset) {
  Rng rng(3);
  V x = leaf({1, 1, 1, 4}, rng);
  backward(sum(scale(x, 3.0)));
  backward(sum(scale(x, 3.0)));
  const T64 g2 = x.grad();
  for (double g : g2.data()) EXPECT_EQ(g, 6.0);
  x.zero_grad();
  backward(sum(x));
  const T64 g3 = x.grad();
  for (double g : g3.data()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SharedSubexpressionCountedOnce) {
  Rng rng(4);
  V x = leaf({1, 1, 2, 2}, rng);
  const V y = scale(x, 2.0);
  backward(sum(add(y, y)));
  const T64 g4 = x.grad();
  for (double g : g4.data()) EXPECT_EQ(g, 4.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  Rng rng(5);
  V x = leaf({1, 1, 2, 2}, rng);
  EXPECT_THROW(backward(scale(x, 1.0)), std::logic_error);
}

TEST(Backward, NoGradGuardSkipsRecording) {
  Rng rng(6);
  V x = leaf({1, 1, 2, 2}, rng);
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    const V y = gelu(x);
    EXPECT_FALSE(y.requires_grad());
    EXPECT_TRUE(y.node()->inputs.empty());
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE(gelu(x).requires_grad());
}

TEST(GradCheck, LinearLayerBelow1e9) {
  Rng rng(7);
  std::vector<V> in{leaf({2, 1, 4, 5}, rng), leaf({1, 1, 5, 3}, rng), leaf({1, 1, 1, 3}, rng)};
  const T64 probe = oracle::uniform({2, 1, 4, 3}, rng);
  const auto report = grad_check(
      [&](const std::vector<V>& v) { return weighted_sum(linear(v[0], v[1], std::optional<V>(v[2])), probe); }, in);
  EXPECT_LT(report.max_rel_error, 1e-9) << report.summary();
  EXPECT_TRUE(report.passed);
  EXPECT_EQ(report.coords_checked, 40u + 15u + 3u);
}

TEST(GradCheck, SoftmaxMatmulChainBelow1e6) {
  Rng rng(8);
  std::vector<V> in{leaf({1, 1, 4, 6}, rng), leaf({1, 1, 6, 5}, rng)};
  const T64 probe = oracle::uniform({1, 1, 4, 5}, rng);
  const auto report =
      grad_check([&](const std::vector<V>& v) { return weighted_sum(softmax_lastdim(matmul(v[0], v[1])), probe); }, in);
  EXPECT_LT(report.max_rel_error, 1e-6) << report.summary();
}

TEST(GradCheck, DwtConvIdwtChainBelow1e6) {
  Rng rng(9);
  std::vector<V> in{leaf({1, 2, 6, 6}, rng), leaf({8, 8, 3, 3}, rng), leaf({1, 1, 1, 8}, rng)};
  const T64 probe = oracle::uniform({1, 2, 6, 6}, rng);
  const auto report = grad_check(
      [&](const std::vector<V>& v) {
        const V c = conv2d(dwt2d_haar_packed(v[0]), v[1], std::optional<V>(v[2]), 1, 1);
        return weighted_sum(idwt2d_haar_packed(c), probe);
      },
      in);
  EXPECT_LT(report.max_rel_error, 1e-6) << report.summary();
}

TEST(GradCheck, RejectsOnePercentGradientError) {
  Rng rng(10);
  std::vector<V> in{leaf({1, 1, 3, 4}, rng)};
  const T64 probe = oracle::uniform({1, 1, 3, 4}, rng);
  const auto good = grad_check(
      [&](const std::vector<V>& v) { return weighted_sum(doubled_with_bad_grad(v[0], 0.0), probe); }, in);
  EXPECT_TRUE(good.passed) << good.summary();
  const auto bad = grad_check(
      [&](const std::vector<V>& v) { return weighted_sum(doubled_with_bad_grad(v[0], 0.01), probe); }, in);
  EXPECT_FALSE(bad.passed);
  EXPECT_NEAR(bad.max_rel_error, 0.01 / 1.01, 1e-6);
  EXPECT_NEAR(bad.max_elementwise_rel_error, 0.01 / 1.01, 1e-6);
}

TEST(GradCheck, SubsamplesLargeInputsDeterministically) {
  Rng rng(11);
  std::vector<V> in{leaf({1, 1, 40, 40}, rng)};
  GradCheckOptions opts;
  opts.max_coords_per_input = 64;
  auto fn = [](const std::vector<V>& v) { return sum(gelu(v[0])); };
  const auto a = grad_check(fn, in, opts), b = grad_check(fn, in, opts);
  EXPECT_TRUE(a.subsampled);
  EXPECT_EQ(a.subset_size, 64u);
  EXPECT_EQ(a.coords_checked, 64u);
  EXPECT_EQ(a.worst_index, b.worst_index);
  EXPECT_EQ(a.max_rel_error, b.max_rel_error);
}

TEST(GradCheck, RejectsNonLeafInputs) {
  Rng rng(12);
  V x = leaf({1, 1, 2, 2}, rng);
  EXPECT_THROW(grad_check([](const std::vector<V>& v) { return sum(v[0]); }, {scale(x, 2.0)}), ConfigError);
  EXPECT_THROW(grad_check([](const std::vector<V>& v) { return sum(v[0]); }, {x}, {.step = 0.0}), ConfigError);
}

// Every differentiable op and composite, 20 seeds each; the whole-model case
// is far slower and runs on 5.
class OpGradients : public ::testing::TestWithParam<std::string> {};

TEST_P(OpGradients, MatchFiniteDifferences) {
  const std::string name = GetParam();
  const std::uint64_t kSeeds = name == "model_cross_entropy" ? 5 : 20;
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    auto cases = cli::grad_cases(1000 + seed);
    const auto it = std::find_if(cases.begin(), cases.end(), [&](const auto& c) { return c.name == name; });
    ASSERT_NE(it, cases.end());
    const auto report = grad_check(it->fn, it->inputs);
    EXPECT_LT(report.max_rel_error, 1e-5) << "seed " << 1000 + seed << ": " << report.summary();
  }
}

INSTANTIATE_TEST_SUITE_P(AllCases, OpGradients, ::testing::ValuesIn(cli::grad_case_names()),
                         [](const auto& info) { return info.param; });
