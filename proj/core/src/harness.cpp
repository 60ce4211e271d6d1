#include "wavevit/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "wavevit/ops.hpp"

namespace wavevit {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr std::size_t kOrientations = 5;
constexpr std::size_t kMaxClasses = 20;
}  // namespace

SyntheticDataset gen_dataset(std::uint64_t seed, std::size_t n, std::size_t num_classes, std::uint32_t recipe) {
  if (recipe != 0) throw ConfigError("gen_dataset: unknown recipe " + std::to_string(recipe));
  if (num_classes == 0 || num_classes > kMaxClasses) {
    throw ConfigError("gen_dataset: num_classes must be in [1, 20], got " + std::to_string(num_classes));
  }
  if (n < num_classes) {
    throw ConfigError("gen_dataset: need at least one sample per class (N=" + std::to_string(n) +
                      " < K=" + std::to_string(num_classes) + ")");
  }
  constexpr std::size_t S = SyntheticDataset::kImageSize;
  SyntheticDataset data;
  data.num_classes = num_classes;
  data.seed = seed;
  data.recipe = recipe;
  data.images = Tensor4<float>({n, 3, S, S});
  data.labels.resize(n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) data.labels[i] = static_cast<int>(i % num_classes);
  for (std::size_t i = n; i > 1; --i) std::swap(data.labels[i - 1], data.labels[rng.below(i)]);

  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(data.labels[i]);
    const double theta = static_cast<double>(k % kOrientations) * kPi / kOrientations;
    const double cycles = 3.0 + 4.0 * static_cast<double>(k / kOrientations) + rng.uniform(-0.5, 0.5);
    const double phase = rng.uniform(0.0, 2.0 * kPi);
    const double omega = 2.0 * kPi * cycles / static_cast<double>(S);
    const double cx = std::cos(theta) * omega, cy = std::sin(theta) * omega;
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double gain = rng.uniform(0.6, 1.0);
      for (std::size_t y = 0; y < S; ++y) {
        for (std::size_t x = 0; x < S; ++x) {
          const double v = gain * std::sin(cx * static_cast<double>(x) + cy * static_cast<double>(y) + phase) +
                           0.25 * rng.normal();
          data.images.at(i, ch, y, x) = static_cast<float>(v);
        }
      }
    }
  }
  return data;
}

template <typename T>
Tensor4<T> batch_images(const SyntheticDataset& data, std::span<const std::size_t> indices) {
  constexpr std::size_t S = SyntheticDataset::kImageSize;
  constexpr std::size_t per = 3 * S * S;
  Tensor4<T> out({indices.size(), 3, S, S});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    if (indices[b] >= data.size()) {
      throw ShapeError("batch_images: index " + std::to_string(indices[b]) + " out of range for " +
                       std::to_string(data.size()) + " samples");
    }
    const float* src = data.images.data().data() + indices[b] * per;
    std::copy(src, src + per, out.data().data() + b * per);
  }
  return out;
}

std::string_view optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::adamw ? "adamw" : "sgd-momentum";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adamw") return OptimizerKind::adamw;
  if (name == "sgd-momentum" || name == "sgd") return OptimizerKind::sgd_momentum;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected adamw|sgd-momentum)");
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train: epochs must be >= 1");
  if (batch == 0) throw ConfigError("train: batch must be >= 1");
  if (!(lr >= 0.0) || !(weight_decay >= 0.0)) throw ConfigError("train: lr and weight decay must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must be in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train: Adam betas must be in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("train: adam_eps must be > 0");
}

template <typename T>
Optimizer<T>::Optimizer(NamedParams<T> params, const TrainConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& [name, v] : params_) {
    m_.emplace_back(v.numel(), 0.0);
    v_.emplace_back(cfg.optimizer == OptimizerKind::adamw ? v.numel() : 0, 0.0);
  }
}

template <typename T>
void Optimizer<T>::step(double lr) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Var<T>& var = params_[p].second;
    if (!var.has_grad()) continue;
    const Shape4 s = var.shape();
    const bool decay = !(s.n == 1 && s.c == 1 && s.h == 1);
    auto value = var.mutable_value().data();
    const auto grad = var.node()->grad.data();
    auto& m = m_[p];
    if (cfg_.optimizer == OptimizerKind::adamw) {
      auto& v = v_[p];
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.adam_eps);
        double x = value[i];
        if (decay) x -= lr * cfg_.weight_decay * x;
        value[i] = static_cast<T>(x - lr * update);
      }
    } else {
      for (std::size_t i = 0; i < value.size(); ++i) {
        double g = grad[i];
        if (decay) g += cfg_.weight_decay * value[i];
        m[i] = cfg_.momentum * m[i] + g;
        value[i] = static_cast<T>(value[i] - lr * m[i]);
      }
    }
  }
}

double TrainHistory::best_accuracy() const {
  double best = 0.0;
  for (const auto& e : epochs) best = std::max(best, e.accuracy);
  return best;
}

template <typename T>
std::size_t argmax(std::span<const T> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

template <typename T>
double accuracy_from_logits(const Tensor4<T>& logits, std::span<const int> labels) {
  const Shape4 s = logits.shape();
  if (s.n != labels.size() || s.c != 1 || s.h != 1) {
    throw ShapeError("accuracy_from_logits: logits " + s.str() + " vs " + std::to_string(labels.size()) + " labels");
  }
  if (s.n == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < s.n; ++b) {
    const auto row = logits.data().subspan(b * s.w, s.w);
    if (argmax(row) == static_cast<std::size_t>(labels[b])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(s.n);
}

template <typename T>
double evaluate(const Model<T>& model, const SyntheticDataset& data, std::size_t batch) {
  if (batch == 0) throw ConfigError("evaluate: batch must be >= 1");
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    const std::size_t count = std::min(batch, data.size() - start);
    idx.resize(count);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor4<T> logits = model.logits(batch_images<T>(data, idx));
    const std::size_t k = logits.shape().w;
    for (std::size_t b = 0; b < count; ++b) {
      if (argmax(logits.data().subspan(b * k, k)) == static_cast<std::size_t>(data.labels[start + b])) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

template <typename T>
TrainHistory train(Model<T>& model, const SyntheticDataset& data, const TrainConfig& cfg, std::ostream* progress) {
  cfg.validate();
  if (model.spec().num_classes != data.num_classes) {
    throw ConfigError("train: model has " + std::to_string(model.spec().num_classes) + " classes, dataset has " +
                      std::to_string(data.num_classes));
  }
  if (data.size() == 0) throw ConfigError("train: empty dataset");
  TrainHistory history;
  history.config = cfg;
  Optimizer<T> opt(model.parameters(), cfg);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batches_per_epoch = (data.size() + cfg.batch - 1) / cfg.batch;
  const std::size_t warmup_steps = cfg.warmup_epochs * batches_per_epoch;
  bool first = true;
  bool stop = false;
  for (std::size_t epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t count = std::min(cfg.batch, order.size() - start);
      const std::span<const std::size_t> idx(order.data() + start, count);
      std::vector<int> labels(count);
      for (std::size_t b = 0; b < count; ++b) labels[b] = data.labels[idx[b]];
      model.zero_grad();
      const Var<T> loss = cross_entropy(model.forward(Var<T>(batch_images<T>(data, idx))), std::span<const int>(labels));
      backward(loss);
      const double l = loss.value()[0];
      if (first) {
        history.first_batch_loss = l;
        first = false;
      }
      loss_sum += l * static_cast<double>(count);
      double lr = cfg.lr;
      if (warmup_steps > 0 && opt.steps() < warmup_steps) {
        lr *= static_cast<double>(opt.steps() + 1) / static_cast<double>(warmup_steps);
      }
      opt.step(lr);
      if (cfg.max_steps != 0 && opt.steps() >= cfg.max_steps) {
        stop = true;
        break;
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(data.size());
    rec.accuracy = evaluate(model, data);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.epochs.push_back(rec);
    if (progress) {
      *progress << "epoch " << rec.epoch << " loss " << std::setprecision(6) << rec.loss << " accuracy "
                << rec.accuracy << " (" << std::setprecision(3) << rec.wall_seconds << " s)\n"
                << std::flush;
    }
    if (cfg.stop_at_accuracy && rec.accuracy >= *cfg.stop_at_accuracy) stop = true;
  }
  history.steps = opt.steps();
  model.zero_grad();
  return history;
}

void write_report(std::ostream& os, const TrainHistory& h, bool include_timing) {
  const TrainConfig& c = h.config;
  std::ostringstream out;
  out << std::setprecision(17);
  out << "# wavevit train report\n";
  out << "config epochs=" << c.epochs << " batch=" << c.batch << " lr=" << c.lr << " wd=" << c.weight_decay
      << " optimizer=" << optimizer_name(c.optimizer) << " seed=" << c.seed << " warmup_epochs=" << c.warmup_epochs
      << '\n';
  double total_time = 0.0;
  for (const auto& e : h.epochs) {
    out << "epoch=" << e.epoch << " loss=" << e.loss << " accuracy=" << e.accuracy;
    if (include_timing) out << " wall_time=" << std::setprecision(4) << e.wall_seconds << std::setprecision(17);
    out << '\n';
    total_time += e.wall_seconds;
  }
  out << "[summary]\n";
  out << "epochs_run = " << h.epochs.size() << '\n';
  out << "steps = " << h.steps << '\n';
  out << "first_batch_loss = " << h.first_batch_loss << '\n';
  out << "final_loss = " << (h.epochs.empty() ? 0.0 : h.epochs.back().loss) << '\n';
  out << "final_accuracy = " << h.final_accuracy() << '\n';
  out << "best_accuracy = " << h.best_accuracy() << '\n';
  if (include_timing) out << "total_wall_time = " << std::setprecision(4) << total_time << '\n';
  out << "[end]\n";
  os << out.str();
}

#define WAVEVIT_INSTANTIATE_HARNESS(T)                                                         \
  template Tensor4<T> batch_images(const SyntheticDataset&, std::span<const std::size_t>);     \
  template class Optimizer<T>;                                                                  \
  template std::size_t argmax(std::span<const T>);                                             \
  template double accuracy_from_logits(const Tensor4<T>&, std::span<const int>);               \
  template double evaluate(const Model<T>&, const SyntheticDataset&, std::size_t);             \
  template TrainHistory train(Model<T>&, const SyntheticDataset&, const TrainConfig&, std::ostream*);

WAVEVIT_INSTANTIATE_HARNESS(float)
WAVEVIT_INSTANTIATE_HARNESS(double)

#undef WAVEVIT_INSTANTIATE_HARNESS

}  // namespace wavevit
