#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "wavevit/harness.hpp"

using namespace wavevit;

namespace {

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch = 16;
  cfg.seed = 3;
  return cfg;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

double knn3_accuracy(const SyntheticDataset& data, std::size_t train) {
  const std::size_t dim = 3 * 32 * 32;
  const auto px = data.images.data();
  std::size_t correct = 0;
  for (std::size_t q = train; q < data.size(); ++q) {
    std::vector<std::pair<double, int>> dist;
    for (std::size_t r = 0; r < train; ++r) {
      double d = 0;
      for (std::size_t i = 0; i < dim; ++i) {
        const double diff = static_cast<double>(px[q * dim + i]) - px[r * dim + i];
        d += diff * diff;
      }
      dist.emplace_back(d, data.labels[r]);
    }
    std::partial_sort(dist.begin(), dist.begin() + 3, dist.end());
    std::vector<int> votes(data.num_classes);
    for (std::size_t k = 0; k < 3; ++k) ++votes[static_cast<std::size_t>(dist[k].second)];
    // Ties go to the nearest neighbour's class.
    int best = dist[0].second;
    for (std::size_t c = 0; c < votes.size(); ++c)
      if (votes[c] > votes[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
    correct += best == data.labels[q];
  }
  return static_cast<double>(correct) / static_cast<double>(data.size() - train);
}

}  // namespace

TEST(Dataset, ShapesAndBalance) {
  const SyntheticDataset d = gen_dataset(1, 123, 10);
  EXPECT_EQ(d.images.shape(), (Shape4{123, 3, 32, 32}));
  ASSERT_EQ(d.size(), 123u);
  std::vector<int> counts(10);
  for (int l : d.labels) {
    ASSERT_GE(l, 0);
    ASSERT_LT(l, 10);
    ++counts[static_cast<std::size_t>(l)];
  }
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  EXPECT_LE(*hi - *lo, 1);
  for (float v : d.images.data()) ASSERT_TRUE(std::isfinite(v));
}

TEST(Dataset, SeedDeterminism) {
  const SyntheticDataset a = gen_dataset(9, 40), b = gen_dataset(9, 40), c = gen_dataset(10, 40);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.images, c.images);
}

TEST(Dataset, SingleClassAndErrors) {
  const SyntheticDataset one = gen_dataset(2, 5, 1);
  for (int l : one.labels) EXPECT_EQ(l, 0);
  EXPECT_THROW(gen_dataset(0, 10, 0), ConfigError);
  EXPECT_THROW(gen_dataset(0, 10, 21), ConfigError);
  EXPECT_THROW(gen_dataset(0, 5, 10), ConfigError);
  EXPECT_THROW(gen_dataset(0, 10, 10, 7), ConfigError);
}

TEST(Dataset, ClassSignalVisibleToNearestNeighbours) {
  const SyntheticDataset d = gen_dataset(4, 200, 10);
  const double acc = knn3_accuracy(d, 100);
  EXPECT_GT(acc, 0.1) << "3-NN accuracy " << acc;
}

TEST(Dataset, BatchImagesSelectsRows) {
  const SyntheticDataset d = gen_dataset(5, 12);
  const std::vector<std::size_t> idx{7, 2};
  const Tensor4<double> b = batch_images<double>(d, idx);
  ASSERT_EQ(b.shape(), (Shape4{2, 3, 32, 32}));
  for (std::size_t i = 0; i < 3072; ++i) {
    EXPECT_EQ(b[i], static_cast<double>(d.images[7 * 3072 + i]));
    EXPECT_EQ(b[3072 + i], static_cast<double>(d.images[2 * 3072 + i]));
  }
  const std::vector<std::size_t> bad{12};
  EXPECT_ANY_THROW(batch_images<float>(d, bad));
}

TEST(Metrics, ArgmaxLowestIndexOnTies) {
  const std::vector<float> row{0.5F, 2.0F, 2.0F, -1.0F};
  EXPECT_EQ(argmax<float>(row), 1u);
  const std::vector<double> flat(5, 0.25);
  EXPECT_EQ(argmax<double>(flat), 0u);
}

TEST(Metrics, OneHotAndUniformLogits) {
  const std::vector<int> labels{2, 0, 1, 0, 0, 2};
  Tensor4<float> onehot({6, 1, 1, 3});
  for (std::size_t i = 0; i < 6; ++i) onehot[i * 3 + static_cast<std::size_t>(labels[i])] = 1.0F;
  EXPECT_EQ(accuracy_from_logits(onehot, labels), 1.0);
  EXPECT_DOUBLE_EQ(accuracy_from_logits(Tensor4<float>({6, 1, 1, 3}, 0.7F), labels), 0.5);
  EXPECT_ANY_THROW(accuracy_from_logits(onehot, std::span<const int>(labels).first(4)));
}

TEST(Metrics, EvaluateIndependentOfBatchSize) {
  const auto model = build_model<float>(preset("micro"), 1);
  const SyntheticDataset d = gen_dataset(6, 70);
  const double a = evaluate(model, d, 1), b = evaluate(model, d, 64), c = evaluate(model, d, 70);
  EXPECT_EQ(a, b);
  EXPECT_EQ(b, c);
}

TEST(Optimizers, NamesAndValidation) {
  EXPECT_EQ(parse_optimizer("adamw"), OptimizerKind::adamw);
  EXPECT_EQ(parse_optimizer("sgd"), OptimizerKind::sgd_momentum);
  EXPECT_EQ(optimizer_name(OptimizerKind::sgd_momentum), "sgd-momentum");
  EXPECT_THROW(parse_optimizer("lion"), ConfigError);
  TrainConfig cfg;
  cfg.batch = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.lr = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.beta2 = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Optimizers, AdamFirstStepMovesByLr) {
  Var<double> w(Tensor4<double>({1, 1, 2, 2}, std::vector<double>{1, -1, 2, 0.5}), true);
  w.node()->grad = Tensor4<double>({1, 1, 2, 2}, std::vector<double>{3, -4, 1e-3, -2});
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  Optimizer<double> opt({{"w", w}}, cfg);
  opt.step(0.01);
  const std::vector<double> want{0.99, -0.99, 1.99, 0.51};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(w.value()[i], want[i], 1e-6);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Optimizers, SgdMomentumAccumulates) {
  Var<double> w(Tensor4<double>({1, 1, 1, 1}, 1.0), true);
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::sgd_momentum;
  cfg.weight_decay = 0.0;
  Optimizer<double> opt({{"w", w}}, cfg);
  w.node()->grad = Tensor4<double>({1, 1, 1, 1}, 1.0);
  opt.step(0.1);
  EXPECT_NEAR(w.value()[0], 0.9, 1e-15);
  opt.step(0.1);
  EXPECT_NEAR(w.value()[0], 0.9 - 0.1 * 1.9, 1e-15);
}

TEST(Optimizers, DecayOnlyTouchesMatrices) {
  Var<double> m(Tensor4<double>({1, 1, 2, 2}, 1.0), true), b(Tensor4<double>({1, 1, 1, 2}, 1.0), true);
  m.node()->grad = Tensor4<double>({1, 1, 2, 2});
  b.node()->grad = Tensor4<double>({1, 1, 1, 2});
  TrainConfig cfg;
  cfg.weight_decay = 0.5;
  Optimizer<double> opt({{"m", m}, {"b", b}}, cfg);
  opt.step(0.1);
  for (double v : m.value().data()) EXPECT_NEAR(v, 0.95, 1e-12);
  for (double v : b.value().data()) EXPECT_EQ(v, 1.0);
}

TEST(Training, FirstBatchLossNearLogK) {
  auto model = build_model<float>(preset("micro"), 0);
  TrainConfig cfg = quick_config();
  cfg.epochs = 1;
  cfg.max_steps = 1;
  const TrainHistory h = train(model, gen_dataset(0, 64), cfg);
  EXPECT_NEAR(h.first_batch_loss / std::log(10.0), 1.0, 0.05) << h.first_batch_loss;
}

TEST(Training, ZeroLearningRateKeepsLossConstant) {
  auto model = build_model<double>(preset("micro"), 2);
  TrainConfig cfg = quick_config();
  cfg.epochs = 3;
  cfg.lr = 0.0;
  const TrainHistory h = train(model, gen_dataset(1, 48), cfg);
  ASSERT_EQ(h.epochs.size(), 3u);
  for (const auto& e : h.epochs) EXPECT_NEAR(e.loss, h.epochs[0].loss, 1e-7);
  for (const auto& e : h.epochs) EXPECT_EQ(e.accuracy, h.epochs[0].accuracy);
}

TEST(Training, OverfitsThirtyTwoSamples) {
  auto model = build_model<float>(preset("micro"), 0);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch = 32;
  cfg.max_steps = 200;
  cfg.stop_at_accuracy = 1.0;
  const SyntheticDataset d = gen_dataset(7, 32);
  const TrainHistory h = train(model, d, cfg);
  EXPECT_EQ(h.final_accuracy(), 1.0) << "after " << h.steps << " steps";
  EXPECT_LE(h.steps, 200u);
  EXPECT_EQ(evaluate(model, d), 1.0);
}

TEST(Training, StopsAtAccuracyAndStepCap) {
  auto model = build_model<float>(preset("micro"), 0);
  TrainConfig cfg = quick_config();
  cfg.epochs = 5;
  cfg.max_steps = 3;
  const TrainHistory h = train(model, gen_dataset(2, 64), cfg);
  EXPECT_EQ(h.steps, 3u);
  EXPECT_EQ(h.epochs.size(), 1u);
}

TEST(Training, RepeatedRunsProduceIdenticalReports) {
  auto run_once = [] {
    auto model = build_model<float>(preset("micro"), 11);
    TrainConfig cfg = quick_config();
    cfg.warmup_epochs = 1;
    std::ostringstream os;
    write_report(os, train(model, gen_dataset(3, 48), cfg), false);
    return os.str() + "|" + std::to_string(model.parameters().front().second.value()[0]);
  };
  EXPECT_EQ(run_once(), run_once());
}

TEST(Training, ReportLayout) {
  auto model = build_model<float>(preset("micro"), 0);
  const TrainHistory h = train(model, gen_dataset(3, 32), quick_config());
  std::ostringstream os;
  write_report(os, h, false);
  std::istringstream is(os.str());
  std::vector<std::string> lines;
  for (std::string line; std::getline(is, line);) lines.push_back(line);
  ASSERT_GE(lines.size(), 6u);
  EXPECT_EQ(lines[0].rfind("# ", 0), 0u);
  EXPECT_EQ(lines[1].rfind("config epochs=2 batch=16", 0), 0u);
  EXPECT_EQ(lines[2].rfind("epoch=1 loss=", 0), 0u);
  EXPECT_EQ(lines[3].rfind("epoch=2 loss=", 0), 0u);
  EXPECT_EQ(lines[4], "[summary]");
  EXPECT_EQ(lines.back(), "[end]");
  EXPECT_EQ(os.str().find("wall_time"), std::string::npos);
  std::ostringstream timed;
  write_report(timed, h, true);
  EXPECT_NE(timed.str().find("total_wall_time"), std::string::npos);
}
