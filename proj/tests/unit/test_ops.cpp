#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "oracles.hpp"
#include "wavevit/ops.hpp"

using namespace wavevit;
using V = Var<double>;
using T64 = Tensor4<double>;

namespace {

T64 mat(std::size_t r, std::size_t c, std::vector<double> v) { return T64({1, 1, r, c}, std::move(v)); }

V cst(const T64& t) { return V(t); }

}  // namespace

TEST(Matmul, IdentityAndDotProduct) {
  const T64 eye = mat(2, 2, {1, 0, 0, 1});
  const T64 b = mat(2, 2, {5, 6, 7, 8});
  EXPECT_EQ(matmul(cst(eye), cst(b)).value(), b);
  const T64 dot = matmul(cst(mat(1, 2, {1, 2})), cst(mat(2, 1, {3, 4}))).value();
  EXPECT_EQ(dot[0], 11.0);
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const T64 a = oracle::uniform({1, 1, 7, 5}, rng), b = oracle::uniform({1, 1, 5, 3}, rng);
    EXPECT_LE(oracle::scaled_err(matmul(cst(a), cst(b)).value(), oracle::matmul(a, b)), 1e-12);
  }
  const T64 a = oracle::uniform({2, 3, 4, 5}, rng), b = oracle::uniform({1, 1, 5, 6}, rng);
  EXPECT_LE(oracle::scaled_err(matmul(cst(a), cst(b)).value(), oracle::matmul(a, b)), 1e-12);
}

TEST(Matmul, TransposedOperand) {
  Rng rng(3);
  const T64 a = oracle::uniform({2, 1, 4, 3}, rng), b = oracle::uniform({2, 1, 5, 3}, rng);
  T64 bt({2, 1, 3, 5});
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 3; ++j) bt.at(n, 0, j, i) = b.at(n, 0, i, j);
  EXPECT_LE(oracle::scaled_err(matmul(cst(a), cst(b), true).value(), oracle::matmul(a, bt)), 1e-12);
}

TEST(Matmul, ShapeErrors) {
  EXPECT_THROW(matmul(cst(T64({1, 1, 2, 3})), cst(T64({1, 1, 2, 3}))), ShapeError);
  EXPECT_THROW(matmul(cst(T64({2, 1, 2, 3})), cst(T64({3, 1, 3, 3}))), ShapeError);
}

TEST(Linear, IdentityHandCaseAndOracle) {
  Rng rng(5);
  const T64 x = oracle::uniform({1, 1, 4, 3}, rng);
  EXPECT_EQ(linear(cst(x), cst(mat(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1})), std::optional<V>(cst(T64({1, 1, 1, 3}))))
                .value(),
            x);
  const T64 y = linear(cst(mat(1, 2, {1, 2})), cst(mat(2, 1, {1, 1})), std::optional<V>(cst(mat(1, 1, {10}))))
                    .value();
  EXPECT_EQ(y[0], 13.0);

  const T64 xr = oracle::uniform({2, 1, 6, 5}, rng), w = oracle::uniform({1, 1, 5, 4}, rng);
  const T64 b = oracle::uniform({1, 1, 1, 4}, rng);
  T64 want = oracle::matmul(xr, w);
  for (std::size_t i = 0; i < want.numel(); ++i) want[i] += b[i % 4];
  EXPECT_LE(oracle::scaled_err(linear(cst(xr), cst(w), std::optional<V>(cst(b))).value(), want), 1e-12);
  EXPECT_THROW(linear(cst(xr), cst(w), std::optional<V>(cst(T64({1, 1, 1, 5})))), ShapeError);
}

TEST(Softmax, UniformShiftAndOracle) {
  const T64 z = softmax_lastdim(cst(T64({1, 1, 1, 3}))).value();
  for (double v : z.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-16);

  Rng rng(9);
  const T64 x = oracle::uniform({2, 2, 3, 6}, rng, -4, 4);
  T64 shifted = x;
  for (auto& v : shifted.data()) v += 123.25;
  const T64 a = softmax_lastdim(cst(x)).value(), b = softmax_lastdim(cst(shifted)).value();
  EXPECT_LE(oracle::max_abs(a, b), 1e-12);
  for (std::size_t r = 0; r < 12; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < 6; ++j) s += a[r * 6 + j];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }

  const T64 row = softmax_lastdim(cst(T64({1, 1, 1, 3}, std::vector<double>{1, 2, 3}))).value();
  const auto want = oracle::softmax({1.0L, 2.0L, 3.0L});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(row[i], static_cast<double>(want[i]), 1e-15);
}

TEST(Softmax, LargeLogitsStayFinite) {
  const T64 y = softmax_lastdim(cst(T64({1, 1, 1, 2}, std::vector<double>{1000, 0}))).value();
  EXPECT_TRUE(y.all_finite());
  EXPECT_DOUBLE_EQ(y[0], 1.0);
}

TEST(Conv2d, ZeroAndImpulse) {
  Rng rng(2);
  const T64 k = oracle::uniform({1, 1, 3, 3}, rng);
  EXPECT_EQ(conv2d(cst(T64({1, 1, 3, 3})), cst(k), std::optional<V>(), 1, 1).value(), T64({1, 1, 3, 3}));
  T64 delta({1, 1, 3, 3});
  delta.at(0, 0, 1, 1) = 1.0;
  const T64 y = conv2d(cst(delta), cst(k), std::optional<V>(), 1, 1).value();
  // Cross-correlation of a centred delta returns the kernel rotated by 180 degrees.
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(y.at(0, 0, i, j), k.at(0, 0, 2 - i, 2 - j));
  T64 sym({1, 1, 3, 3});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) sym.at(0, 0, i, j) = k.at(0, 0, i, j) + k.at(0, 0, 2 - i, 2 - j);
  EXPECT_EQ(conv2d(cst(delta), cst(sym), std::optional<V>(), 1, 1).value(), sym);
}

TEST(Conv2d, MatchesSixLoopOracle) {
  Rng rng(17);
  struct Case {
    std::size_t k, stride, pad;
  };
  for (const Case c : {Case{3, 1, 1}, Case{7, 4, 3}, Case{3, 2, 1}, Case{2, 2, 0}, Case{1, 1, 0}}) {
    const T64 x = oracle::uniform({2, 3, 8, 8}, rng), w = oracle::uniform({4, 3, c.k, c.k}, rng);
    const T64 b = oracle::uniform({1, 1, 1, 4}, rng);
    const std::vector<double> bias(b.data().begin(), b.data().end());
    const T64 got = conv2d(cst(x), cst(w), std::optional<V>(cst(b)), c.stride, c.pad).value();
    EXPECT_LE(oracle::scaled_err(got, oracle::conv2d(x, w, bias, c.stride, c.pad)), 1e-12) << "k=" << c.k;
  }
}

TEST(Conv2d, Errors) {
  EXPECT_THROW(conv2d(cst(T64({1, 2, 4, 4})), cst(T64({1, 3, 3, 3})), std::optional<V>(), 1, 1), ShapeError);
  EXPECT_THROW(conv2d(cst(T64({1, 1, 2, 2})), cst(T64({1, 1, 5, 5})), std::optional<V>(), 1, 0), ShapeError);
  EXPECT_THROW(conv2d(cst(T64({1, 1, 4, 4})), cst(T64({1, 1, 3, 3})), std::optional<V>(), 0, 0), ShapeError);
}

TEST(LayerNorm, DegenerateTwoPointAndOracle) {
  const V g(T64({1, 1, 1, 4}, std::vector<double>{1, 2, 3, 4}));
  const V b(T64({1, 1, 1, 4}, std::vector<double>{0.5, -1, 2, 0}));
  const T64 flat = layer_norm(cst(T64({1, 1, 1, 4}, 3.0)), g, b, 1e-5).value();
  EXPECT_EQ(flat, b.value());

  const V g2(T64({1, 1, 1, 2}, 1.0)), b2(T64({1, 1, 1, 2}, 0.0));
  const T64 two = layer_norm(cst(T64({1, 1, 1, 2}, std::vector<double>{1, 3})), g2, b2, 1e-5).value();
  EXPECT_NEAR(two[0], -1.0 / std::sqrt(1.0 + 1e-5), 1e-15);
  EXPECT_NEAR(two[1], 1.0 / std::sqrt(1.0 + 1e-5), 1e-15);

  Rng rng(4);
  const T64 x = oracle::uniform({2, 1, 3, 8}, rng, -2, 2);
  const T64 gg = oracle::uniform({1, 1, 1, 8}, rng), bb = oracle::uniform({1, 1, 1, 8}, rng);
  const T64 y = layer_norm(cst(x), cst(gg), cst(bb), 1e-5).value();
  for (std::size_t r = 0; r < 6; ++r) {
    long double mean = 0, var = 0;
    for (std::size_t j = 0; j < 8; ++j) mean += x[r * 8 + j];
    mean /= 8;
    for (std::size_t j = 0; j < 8; ++j) var += (x[r * 8 + j] - mean) * (x[r * 8 + j] - mean);
    var /= 8;
    for (std::size_t j = 0; j < 8; ++j) {
      const long double want = (x[r * 8 + j] - mean) / std::sqrt(var + 1e-5L) * gg[j] + bb[j];
      EXPECT_NEAR(y[r * 8 + j], static_cast<double>(want), 1e-10);
    }
  }
  EXPECT_THROW(layer_norm(cst(x), cst(T64({1, 1, 1, 7})), cst(bb), 1e-5), ShapeError);
}

TEST(Pointwise, GeluReluAddScale) {
  const T64 in({1, 1, 1, 4}, std::vector<double>{0.0, 1.0, -0.5, 2.5});
  const T64 g = gelu(cst(in)).value();
  EXPECT_EQ(g[0], 0.0);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(g[i], static_cast<double>(oracle::gelu(in[i])), 1e-15);
  const T64 r = relu(cst(in)).value();
  EXPECT_EQ(r.storage(), (std::vector<double>{0.0, 1.0, 0.0, 2.5}));
  EXPECT_EQ(add(cst(in), cst(T64(in.shape()))).value(), in);
  EXPECT_EQ(scale(cst(in), -2.0).value()[3], -5.0);
  EXPECT_THROW(add(cst(in), cst(T64({1, 1, 4, 1}))), ShapeError);
}

TEST(AvgPool, ConstantHandAndOracle) {
  const T64 c = avg_pool2d(cst(T64({1, 2, 4, 6}, 3.5)), 2, 2).value();
  EXPECT_EQ(c.shape(), (Shape4{1, 2, 2, 3}));
  for (double v : c.data()) EXPECT_EQ(v, 3.5);
  EXPECT_EQ(avg_pool2d(cst(mat(2, 2, {1, 2, 3, 4})), 2, 2).value()[0], 2.5);
  Rng rng(8);
  const T64 x = oracle::uniform({2, 3, 8, 8}, rng);
  EXPECT_LE(oracle::scaled_err(avg_pool2d(cst(x), 2, 2).value(), oracle::avg_pool(x, 2, 2)), 1e-12);
  EXPECT_THROW(avg_pool2d(cst(T64({1, 1, 5, 4})), 2, 2), ShapeError);
}

TEST(DataMovement, SplitConcatRoundTrip) {
  Rng rng(6);
  const T64 x = oracle::uniform({2, 7, 3, 4}, rng);
  const std::array<std::size_t, 3> sizes{2, 4, 1};
  const auto parts = split(cst(x), sizes, 1);
  ASSERT_EQ(parts.size(), 3u);
  EXPECT_EQ(parts[1].shape(), (Shape4{2, 4, 3, 4}));
  EXPECT_EQ(concat(parts, 1).value(), x);
  const std::array<std::size_t, 2> bad{2, 2};
  EXPECT_THROW(split(cst(x), bad, 1), ShapeError);
  EXPECT_THROW(concat<double>({cst(x), cst(T64({2, 7, 3, 5}))}, 1), ShapeError);
}

TEST(DataMovement, TokenLayoutRoundTrip) {
  Rng rng(12);
  const T64 x = oracle::uniform({1, 5, 3, 4}, rng);
  const T64 t = to_tokens(cst(x)).value();
  EXPECT_EQ(t.shape(), (Shape4{1, 1, 12, 5}));
  EXPECT_EQ(t.at(0, 0, 1 * 4 + 2, 3), x.at(0, 3, 1, 2));
  EXPECT_EQ(from_tokens(to_tokens(cst(x)), 3, 4).value(), x);
  EXPECT_EQ(reshape(reshape(cst(x), {1, 1, 12, 5}), x.shape()).value(), x);
}

TEST(DataMovement, HeadSplitMatchesSlices) {
  Rng rng(13);
  const T64 x = oracle::uniform({2, 1, 5, 12}, rng);
  const T64 h = split_heads(cst(x), 3).value();
  ASSERT_EQ(h.shape(), (Shape4{2, 3, 5, 4}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t head = 0; head < 3; ++head)
      for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t d = 0; d < 4; ++d) EXPECT_EQ(h.at(n, head, r, d), x.at(n, 0, r, head * 4 + d));
  EXPECT_EQ(merge_heads(split_heads(cst(x), 3)).value(), x);
  EXPECT_THROW(split_heads(cst(x), 5), ConfigError);
}

TEST(Reductions, SumMeanWeighted) {
  const T64 x({1, 1, 2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(sum(cst(x)).value()[0], 21.0);
  const T64 m = mean_rows(cst(x)).value();
  EXPECT_EQ(m.shape(), (Shape4{1, 1, 1, 3}));
  EXPECT_EQ(m.storage(), (std::vector<double>{2.5, 3.5, 4.5}));
  const T64 w({1, 1, 2, 3}, std::vector<double>{1, 0, 0, 0, 0, -1});
  EXPECT_EQ(weighted_sum(cst(x), w).value()[0], -5.0);
}

TEST(CrossEntropy, MatchesLogSumExp) {
  const T64 logits({2, 1, 1, 3}, std::vector<double>{1, 2, 3, 0, 0, 0});
  const std::array<int, 2> labels{2, 1};
  const double got = cross_entropy(cst(logits), std::span<const int>(labels)).value()[0];
  const long double l0 = std::log(std::exp(1.0L) + std::exp(2.0L) + std::exp(3.0L)) - 3.0L;
  const long double l1 = std::log(3.0L);
  EXPECT_NEAR(got, static_cast<double>((l0 + l1) / 2), 1e-15);
  const std::array<int, 2> bad{0, 3};
  EXPECT_THROW(cross_entropy(cst(logits), std::span<const int>(bad)), ConfigError);
}

TEST(Determinism, RepeatedOpsBitIdentical) {
  Rng r1(99), r2(99);
  const T64 a = oracle::uniform({2, 3, 8, 8}, r1), b = oracle::uniform({2, 3, 8, 8}, r2);
  const T64 w = oracle::uniform({4, 3, 3, 3}, r1);
  EXPECT_EQ(conv2d(cst(a), cst(w), std::optional<V>(), 1, 1).value(),
            conv2d(cst(b), cst(w), std::optional<V>(), 1, 1).value());
}
