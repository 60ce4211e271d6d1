#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wavevit/backbone.hpp"

namespace wavevit {

/// 32x32 RGB images with class-dependent oriented sinusoidal textures.
struct SyntheticDataset {
  static constexpr std::size_t kImageSize = 32;

  Tensor4<float> images;  // (N, 3, 32, 32)
  std::vector<int> labels;
  std::size_t num_classes = 0;
  std::uint64_t seed = 0;
  std::uint32_t recipe = 0;

  std::size_t size() const { return labels.size(); }
};

/// Recipe 0: class k draws a grating with orientation (k mod 5)·π/5 and
/// frequency 3 + 4·floor(k/5) cycles per image (±0.5 jitter), random phase,
/// per-channel gains in [0.6, 1], plus N(0, 0.25²) pixel noise. Labels are
/// balanced to within one and shuffled. Supports 1 <= K <= 20.
SyntheticDataset gen_dataset(std::uint64_t seed, std::size_t n, std::size_t num_classes = 10,
                             std::uint32_t recipe = 0);

/// The selected samples as an (indices.size(), 3, 32, 32) tensor of T.
template <typename T>
Tensor4<T> batch_images(const SyntheticDataset& data, std::span<const std::size_t> indices);

enum class OptimizerKind : std::uint8_t { sgd_momentum, adamw };

std::string_view optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch = 32;
  double lr = 1e-3;
  double weight_decay = 0.05;
  OptimizerKind optimizer = OptimizerKind::adamw;
  std::uint64_t seed = 0;
  /// Linear learning-rate warmup length in epochs; 0 disables it.
  std::size_t warmup_epochs = 0;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Stop once the end-of-epoch training accuracy reaches this value.
  std::optional<double> stop_at_accuracy;
  /// Optional cap on optimizer steps (0 = none).
  std::size_t max_steps = 0;

  /// Throws ConfigError unless epochs, batch and momentum/betas are in range
  /// and lr, weight_decay are non-negative.
  void validate() const;
};

/// Parameter update rule. Weight decay is decoupled and skipped for vector
/// parameters (biases, norm gains/offsets).
template <typename T>
class Optimizer {
 public:
  Optimizer(NamedParams<T> params, const TrainConfig& cfg);
  void step(double lr);
  std::size_t steps() const { return steps_; }

 private:
  NamedParams<T> params_;
  TrainConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t steps_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;      // mean training cross-entropy over the epoch
  double accuracy = 0.0;  // training accuracy after the epoch's updates
  double wall_seconds = 0.0;
};

struct TrainHistory {
  TrainConfig config;
  std::vector<EpochRecord> epochs;
  double first_batch_loss = 0.0;
  std::size_t steps = 0;

  double final_accuracy() const { return epochs.empty() ? 0.0 : epochs.back().accuracy; }
  double best_accuracy() const;
};

template <typename T>
TrainHistory train(Model<T>& model, const SyntheticDataset& data, const TrainConfig& cfg,
                   std::ostream* progress = nullptr);

/// Argmax accuracy; ties go to the lowest class index.
template <typename T>
double evaluate(const Model<T>& model, const SyntheticDataset& data, std::size_t batch = 64);

/// Index of the maximum, lowest index on ties.
template <typename T>
std::size_t argmax(std::span<const T> row);

/// logits (n, 1, 1, K) against n labels.
template <typename T>
double accuracy_from_logits(const Tensor4<T>& logits, std::span<const int> labels);

/// Line-oriented run report: a config line, one record per epoch, then a
/// [summary] ... [end] block of key = value pairs.
void write_report(std::ostream& os, const TrainHistory& history, bool include_timing = true);

}  // namespace wavevit
