#include "wavevit/cli/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include "wavevit/accounting.hpp"
#include "wavevit/checkpoint.hpp"
#include "wavevit/cli/grad_cases.hpp"
#include "wavevit/cli/suites.hpp"
#include "wavevit/harness.hpp"
#include "wavevit/tensor_io.hpp"
#include "wavevit/wavelet.hpp"

namespace wavevit::cli {

namespace {

constexpr std::uint64_t kDefaultSeed = 0;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Reference {
  const char* name;
  double params;
  double gflops;
};

constexpr std::array<Reference, 3> kReferences{{
    {"wave-vit-s", 19.8e6, 4.3},
    {"wave-vit-b", 33.5e6, 7.2},
    {"wave-vit-l", 57.5e6, 14.8},
}};

const Reference* find_reference(const std::string& name) {
  for (const auto& r : kReferences) {
    if (name == r.name) return &r;
  }
  return nullptr;
}

const std::vector<std::string> kModelNames{"wave-vit-s", "wave-vit-b", "wave-vit-l", "s", "b", "l", "micro"};
const std::vector<std::string> kModeNames{"none", "avgpool", "conv", "wavelet", "wavelet_idwt"};

struct ModelOpts {
  std::string model;
  std::string mode;
  std::string config;

  ModelSpec resolve() const {
    ModelSpec spec = config.empty() ? preset(model) : load_model_config(config);
    if (!mode.empty()) spec = with_block_mode(spec, parse_mode(mode));
    validate(spec);
    return spec;
  }
};

void add_model_opts(CLI::App* cmd, ModelOpts& o, const std::string& default_model) {
  o.model = default_model;
  auto* m = cmd->add_option("--model", o.model, "Preset name")->check(CLI::IsMember(kModelNames))->capture_default_str();
  auto* c = cmd->add_option("--config", o.config, "Model config file (key = value lines)");
  m->excludes(c);
  cmd->add_option("--mode", o.mode, "Override the down-sampling mode of every reduced stage")
      ->check(CLI::IsMember(kModeNames));
}

struct SeedOpt {
  std::uint64_t value = kDefaultSeed;
  CLI::Option* opt = nullptr;

  void print(std::ostream& out, const char* label = "seed") const {
    out << label << " = " << value << (opt && opt->count() > 0 ? "" : " (default)") << '\n';
  }
};

void add_seed(CLI::App* cmd, SeedOpt& s, const char* flag = "--seed", const char* help = "Random seed") {
  s.opt = cmd->add_option(flag, s.value, help)->capture_default_str();
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

// ---------------------------------------------------------------- check

int cmd_check(const std::string& suite, const SeedOpt& seed, std::ostream& out) {
  seed.print(out);
  std::vector<std::string> suites;
  if (suite == "all") {
    suites = suite_names();
  } else {
    suites = {suite};
  }
  std::size_t failures = 0, total = 0;
  for (const auto& s : suites) {
    const auto results = run_suite(s, seed.value);
    failures += print_results(out, s, results);
    total += results.size();
  }
  out << (failures == 0 ? "all " + std::to_string(total) + " checks passed"
                        : std::to_string(failures) + " of " + std::to_string(total) + " checks failed")
      << '\n';
  return failures == 0 ? kExitOk : kExitFailure;
}

// ------------------------------------------------------------ gradcheck

int cmd_gradcheck(const std::string& only, std::size_t seeds, const SeedOpt& seed, double tolerance,
                  std::ostream& out) {
  if (seeds == 0) throw UsageError("--seeds must be >= 1");
  const auto names = grad_case_names();
  if (!only.empty() && std::find(names.begin(), names.end(), only) == names.end()) {
    throw UsageError("unknown --op '" + only + "'; run 'gradcheck --list' for names");
  }
  seed.print(out);
  out << "seeds = " << seeds << ", step = 1e-06, tolerance = " << tolerance << '\n';
  GradCheckOptions opts;
  opts.tolerance = tolerance;
  std::vector<double> worst(names.size(), 0.0), worst_elem(names.size(), 0.0);
  std::vector<bool> ok(names.size(), true);
  for (std::size_t s = 0; s < seeds; ++s) {
    auto cases = grad_cases(seed.value + s);
    for (std::size_t i = 0; i < cases.size(); ++i) {
      if (!only.empty() && cases[i].name != only) continue;
      const auto report = grad_check(cases[i].fn, cases[i].inputs, opts);
      worst[i] = std::max(worst[i], report.max_rel_error);
      worst_elem[i] = std::max(worst_elem[i], report.max_elementwise_rel_error);
      if (!report.passed) {
        ok[i] = false;
        out << "  seed " << seed.value + s << ' ' << cases[i].name << ": " << report.summary() << '\n';
      }
    }
  }
  std::size_t failures = 0;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!only.empty() && names[i] != only) continue;
    std::ostringstream e;
    e << std::scientific << std::setprecision(3) << worst[i] << "  elementwise=" << worst_elem[i];
    out << (ok[i] ? "PASS " : "FAIL ") << std::left << std::setw(26) << names[i] << " max_rel_error=" << e.str()
        << '\n';
    failures += ok[i] ? 0 : 1;
  }
  return failures == 0 ? kExitOk : kExitFailure;
}

// ------------------------------------------------------------- dwt/idwt

template <typename T>
Tensor4<T> transform(const Tensor4<T>& x, bool inverse) {
  return inverse ? idwt2d_haar(subbands_unpack(x)) : subbands_pack(dwt2d_haar(x));
}

int cmd_transform(const std::string& in, const std::string& out_path, bool inverse, std::ostream& out) {
  const AnyTensor x = load_wt4d(in);
  std::visit(
      [&](const auto& t) {
        const auto y = transform(t, inverse);
        save_wt4d(out_path, y);
        out << (inverse ? "idwt " : "dwt ") << t.shape().str() << " -> " << y.shape().str() << " ("
            << dtype_name(dtype_of(x)) << ") written to " << out_path << '\n';
      },
      x);
  return kExitOk;
}

// --------------------------------------------------------------- params

int cmd_params(const ModelOpts& mo, std::ostream& out) {
  const ModelSpec spec = mo.resolve();
  const Model<float> model = build_model<float>(spec, kDefaultSeed);
  out << "model " << spec.name << '\n';
  std::array<std::uint64_t, ModelSpec::kStages + 1> per{};
  for (const auto& [name, v] : model.parameters()) {
    const std::size_t slot = name.rfind("stage", 0) == 0 ? static_cast<std::size_t>(name[5] - '1') : ModelSpec::kStages;
    per[slot] += v.numel();
  }
  for (std::size_t i = 0; i < ModelSpec::kStages; ++i) {
    const auto& st = spec.stages[i];
    out << "  stage" << i + 1 << "  depth=" << st.depth << " C=" << st.channels << " heads=" << st.heads
        << " E=" << st.ffn_expansion << " mode=" << mode_name(st.mode) << "  params=" << per[i] << '\n';
  }
  out << "  head    params=" << per[ModelSpec::kStages] << '\n';
  const std::uint64_t total = count_params(model);
  out << "params = " << total << " (" << fixed(static_cast<double>(total) / 1e6, 3) << "M)\n";
  if (const Reference* ref = find_reference(spec.name); ref && mo.mode.empty() && mo.config.empty()) {
    out << "reference = " << fixed(ref->params / 1e6, 1) << "M, ratio = "
        << fixed(static_cast<double>(total) / ref->params, 4) << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------- flops

int cmd_flops(const ModelOpts& mo, std::size_t resolution, bool raw, std::ostream& out) {
  const ModelSpec spec = mo.resolve();
  const std::size_t res = resolution == 0 ? spec.input_resolution : resolution;
  const MacReport report = count_macs(spec, res);
  out << "model " << spec.name << " at " << res << "x" << res << '\n';
  if (raw) {
    for (const auto& e : report.entries) out << "  " << std::left << std::setw(34) << e.layer << ' ' << e.macs << '\n';
  }
  out << "macs = " << report.total() << '\n';
  out << "attention_score_macs = " << report.attention_scores << '\n';
  out << "gflops (1 FLOP per MAC) = " << fixed(report.gflops_one_per_mac(), 4) << '\n';
  out << "gflops (2 FLOPs per MAC) = " << fixed(report.gflops_two_per_mac(), 4) << '\n';
  if (const Reference* ref = find_reference(spec.name);
      ref && mo.mode.empty() && mo.config.empty() && res == 224) {
    out << "reference = " << ref->gflops << " GFLOPs, ratio (1/MAC) = "
        << fixed(report.gflops_one_per_mac() / ref->gflops, 4)
        << ", ratio (2/MAC) = " << fixed(report.gflops_two_per_mac() / ref->gflops, 4) << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchOpts {
  std::vector<std::string> modes;
  std::size_t height = 56, width = 56, dim = 64, heads = 2, batch = 1;
  std::size_t warmup = 2, reps = 5;
  bool raw = false;
};

int cmd_bench(const BenchOpts& b, const SeedOpt& seed, std::ostream& out) {
  if (b.reps == 0) throw UsageError("--reps must be >= 1");
  if (b.warmup == 0) throw UsageError("--warmup must be >= 1");
  if (b.heads == 0 || b.dim % b.heads != 0 || b.dim % 4 != 0) {
    throw UsageError("--dim must be divisible by --heads and by 4");
  }
  if (b.height == 0 || b.width == 0 || b.height % 2 != 0 || b.width % 2 != 0) {
    throw UsageError("--height and --width must be positive and even");
  }
  std::vector<DownsampleMode> modes;
  for (const auto& m : b.modes.empty() ? kModeNames : b.modes) modes.push_back(parse_mode(m));
  seed.print(out);
  out << "H=" << b.height << " W=" << b.width << " D=" << b.dim << " heads=" << b.heads << " batch=" << b.batch
      << " warmup=" << b.warmup << " reps=" << b.reps << '\n';
  const std::uint64_t full_scores = attention_macs(DownsampleMode::none, b.height, b.width, b.dim).scores;
  out << std::left << std::setw(14) << "mode" << std::right << std::setw(12) << "median_ms" << std::setw(12)
      << "mad_ms" << std::setw(12) << "min_ms" << std::setw(12) << "max_ms" << std::setw(14) << "macs"
      << std::setw(14) << "score_macs" << std::setw(12) << "none:mode" << '\n';
  NoGradGuard guard;
  for (DownsampleMode mode : modes) {
    Rng rng(seed.value);
    const auto p = make_attention_params<float>(b.dim, b.heads, mode, rng);
    const Var<float> x(random_uniform<float>({b.batch, b.dim, b.height, b.width}, rng));
    for (std::size_t i = 0; i < b.warmup; ++i) (void)attention_forward(x, p);
    std::vector<double> ms;
    for (std::size_t i = 0; i < b.reps; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      const Var<float> y = attention_forward(x, p);
      ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    std::vector<double> sorted = ms;
    std::sort(sorted.begin(), sorted.end());
    auto median_of = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      const std::size_t n = v.size();
      return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    const double median = median_of(sorted);
    std::vector<double> dev;
    for (double v : sorted) dev.push_back(std::abs(v - median));
    const double mad = median_of(dev);
    const AttentionMacs macs = attention_macs(mode, b.height, b.width, b.dim);
    out << std::left << std::setw(14) << mode_name(mode) << std::right << std::setw(12) << fixed(median, 3)
        << std::setw(12) << fixed(mad, 3) << std::setw(12) << fixed(sorted.front(), 3) << std::setw(12)
        << fixed(sorted.back(), 3) << std::setw(14) << macs.total() * b.batch << std::setw(14)
        << macs.scores * b.batch << std::setw(12)
        << fixed(static_cast<double>(full_scores) / static_cast<double>(macs.scores), 4) << '\n';
    if (b.raw) {
      out << "  raw " << mode_name(mode) << ':';
      for (double v : ms) out << ' ' << fixed(v, 4);
      out << '\n';
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainOpts {
  ModelOpts model;
  TrainConfig cfg;
  SeedOpt seed, data_seed;
  std::size_t samples = 2000;
  std::optional<std::size_t> classes;
  std::string optimizer = "adamw";
  std::optional<double> stop_at;
  std::string out, report;
  bool timing = false;
};

int cmd_train(TrainOpts& t, std::ostream& out) {
  ModelSpec spec = t.model.resolve();
  if (t.classes) spec.num_classes = *t.classes;
  t.cfg.seed = t.seed.value;
  t.cfg.optimizer = parse_optimizer(t.optimizer);
  t.cfg.stop_at_accuracy = t.stop_at;
  try {
    t.cfg.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  t.seed.print(out);
  t.data_seed.print(out, "data_seed");
  out << "model " << spec.name << ", " << t.samples << " samples, " << spec.num_classes << " classes\n";
  Model<float> model = build_model<float>(spec, t.seed.value);
  const SyntheticDataset data = gen_dataset(t.data_seed.value, t.samples, spec.num_classes);
  const TrainHistory history = train(model, data, t.cfg, &out);
  if (!t.report.empty()) {
    std::ofstream rf(t.report, std::ios::binary);
    if (!rf) throw std::runtime_error("cannot write report '" + t.report + "'");
    write_report(rf, history, t.timing);
    out << "report written to " << t.report << '\n';
  } else {
    write_report(out, history, t.timing);
  }
  if (!t.out.empty()) {
    save_checkpoint(t.out, to_checkpoint(model));
    out << "checkpoint written to " << t.out << '\n';
  }
  return kExitOk;
}

// ----------------------------------------------------------------- eval

struct EvalOpts {
  ModelOpts model;
  SeedOpt seed, data_seed;
  std::string in, logits;
  std::size_t samples = 2000;
  std::optional<std::size_t> classes;
};

int cmd_eval(const EvalOpts& e, std::ostream& out) {
  ModelSpec spec = e.model.resolve();
  if (e.classes) spec.num_classes = *e.classes;
  Model<float> model = build_model<float>(spec, e.seed.value);
  if (e.in.empty()) {
    e.seed.print(out);
  } else {
    load_into(model, load_checkpoint(e.in));
    out << "loaded " << e.in << '\n';
  }
  e.data_seed.print(out, "data_seed");
  const SyntheticDataset data = gen_dataset(e.data_seed.value, e.samples, spec.num_classes);
  out << std::setprecision(17) << "accuracy = " << evaluate(model, data) << '\n';
  if (!e.logits.empty()) {
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const Tensor4<float> logits = model.logits(batch_images<float>(data, idx));
    save_wt4d(e.logits, logits);
    out << "logits " << logits.shape().str() << " written to " << e.logits << '\n';
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Wavelet vision transformer toolkit: verification, accounting, transforms, benchmarks, training",
               "wavevit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  std::string suite = "all";
  SeedOpt check_seed;
  auto* check = app.add_subcommand("check", "Run property suites (exit 1 on any failure)");
  check->add_option("--suite", suite, "Suite to run")
      ->check(CLI::IsMember({"tensor", "wavelet", "attention", "backbone", "all"}))
      ->capture_default_str();
  add_seed(check, check_seed);

  std::string gc_op;
  std::size_t gc_seeds = 10;
  double gc_tol = 1e-5;
  bool gc_list = false;
  SeedOpt gc_seed;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks in binary64");
  gradcheck->add_option("--op", gc_op, "Check a single case");
  gradcheck->add_option("--seeds", gc_seeds, "Number of consecutive seeds")->capture_default_str();
  gradcheck->add_option("--tolerance", gc_tol, "Maximum relative error")->capture_default_str();
  gradcheck->add_flag("--list", gc_list, "List case names and exit");
  add_seed(gradcheck, gc_seed, "--seed", "First seed");

  std::string dwt_in, dwt_out, idwt_in, idwt_out;
  auto* dwt = app.add_subcommand("dwt", "Haar analysis of a WT4D tensor into packed [LL, LH, HL, HH] channels");
  dwt->add_option("--in", dwt_in, "Input WT4D (n, c, h, w), even h and w")->required();
  dwt->add_option("--out", dwt_out, "Output WT4D (n, 4c, h/2, w/2)")->required();
  auto* idwt = app.add_subcommand("idwt", "Haar synthesis of packed subbands back to a WT4D map");
  idwt->add_option("--in", idwt_in, "Input WT4D (n, 4c, h, w)")->required();
  idwt->add_option("--out", idwt_out, "Output WT4D (n, c, 2h, 2w)")->required();

  ModelOpts params_model;
  auto* params = app.add_subcommand("params", "Parameter counts per stage");
  add_model_opts(params, params_model, "wave-vit-s");

  ModelOpts flops_model;
  std::size_t flops_res = 0;
  bool flops_raw = false;
  auto* flops = app.add_subcommand("flops", "Analytic multiply-accumulate counts");
  add_model_opts(flops, flops_model, "wave-vit-s");
  flops->add_option("--resolution", flops_res, "Square input size (default: the model's)");
  flops->add_flag("--raw", flops_raw, "Print every layer");

  BenchOpts bench_opts;
  SeedOpt bench_seed;
  auto* bench = app.add_subcommand("bench", "Wall-time of one attention block per mode");
  bench->add_option("--mode", bench_opts.modes, "Modes to time (default: all)")->check(CLI::IsMember(kModeNames));
  bench->add_option("--height", bench_opts.height)->capture_default_str();
  bench->add_option("--width", bench_opts.width)->capture_default_str();
  bench->add_option("--dim", bench_opts.dim)->capture_default_str();
  bench->add_option("--heads", bench_opts.heads)->capture_default_str();
  bench->add_option("--batch", bench_opts.batch)->capture_default_str();
  bench->add_option("--warmup", bench_opts.warmup, "Untimed runs per mode")->capture_default_str();
  bench->add_option("--reps", bench_opts.reps, "Timed runs per mode")->capture_default_str();
  bench->add_flag("--raw", bench_opts.raw, "Print every timing sample");
  add_seed(bench, bench_seed);

  TrainOpts train_opts;
  auto* train_cmd = app.add_subcommand("train", "Train on the synthetic texture dataset");
  add_model_opts(train_cmd, train_opts.model, "micro");
  add_seed(train_cmd, train_opts.seed, "--seed", "Model init and shuffling seed");
  add_seed(train_cmd, train_opts.data_seed, "--data-seed", "Dataset seed");
  train_cmd->add_option("--epochs", train_opts.cfg.epochs)->capture_default_str();
  train_cmd->add_option("--batch", train_opts.cfg.batch)->capture_default_str();
  train_cmd->add_option("--lr", train_opts.cfg.lr)->capture_default_str();
  train_cmd->add_option("--wd", train_opts.cfg.weight_decay, "Decoupled weight decay")->capture_default_str();
  train_cmd->add_option("--warmup-epochs", train_opts.cfg.warmup_epochs)->capture_default_str();
  train_cmd->add_option("--max-steps", train_opts.cfg.max_steps, "Stop after this many updates (0 = no cap)");
  train_cmd->add_option("--optimizer", train_opts.optimizer)
      ->check(CLI::IsMember({"adamw", "sgd-momentum", "sgd"}))
      ->capture_default_str();
  train_cmd->add_option("--stop-at", train_opts.stop_at, "Stop once epoch accuracy reaches this fraction");
  train_cmd->add_option("--samples", train_opts.samples)->capture_default_str();
  train_cmd->add_option("--classes", train_opts.classes, "Override the model's class count");
  train_cmd->add_option("--out", train_opts.out, "Write a WVCK checkpoint");
  train_cmd->add_option("--report", train_opts.report, "Write the run report here instead of stdout");
  train_cmd->add_flag("--timing", train_opts.timing, "Include wall times in the report");

  EvalOpts eval_opts;
  auto* eval = app.add_subcommand("eval", "Accuracy and logits of a checkpoint or a fresh model");
  add_model_opts(eval, eval_opts.model, "micro");
  add_seed(eval, eval_opts.seed, "--seed", "Init seed when no checkpoint is given");
  add_seed(eval, eval_opts.data_seed, "--data-seed", "Dataset seed");
  eval->add_option("--in", eval_opts.in, "WVCK checkpoint");
  eval->add_option("--samples", eval_opts.samples)->capture_default_str();
  eval->add_option("--classes", eval_opts.classes, "Override the model's class count");
  eval->add_option("--logits", eval_opts.logits, "Write (N, 1, 1, K) logits as WT4D");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*check) return cmd_check(suite, check_seed, out);
    if (*gradcheck) {
      if (gc_list) {
        for (const auto& n : grad_case_names()) out << n << '\n';
        return kExitOk;
      }
      return cmd_gradcheck(gc_op, gc_seeds, gc_seed, gc_tol, out);
    }
    if (*dwt) return cmd_transform(dwt_in, dwt_out, false, out);
    if (*idwt) return cmd_transform(idwt_in, idwt_out, true, out);
    if (*params) return cmd_params(params_model, out);
    if (*flops) return cmd_flops(flops_model, flops_res, flops_raw, out);
    if (*bench) return cmd_bench(bench_opts, bench_seed, out);
    if (*train_cmd) return cmd_train(train_opts, out);
    if (*eval) return cmd_eval(eval_opts, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace wavevit::cli
