// useg: synthetic data, training, evaluation, inference and gradient checks from the shell.
// Exit codes: 0 success, 1 numerical failure, 2 usage or I/O error.

#include "useg/checkpoint.hpp"
#include "useg/clahe.hpp"
#include "useg/dataset.hpp"
#include "useg/evaluate.hpp"
#include "useg/gradcheck.hpp"
#include "useg/png_io.hpp"
#include "useg/run_config.hpp"
#include "useg/train.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace useg;

namespace {

constexpr int kOk = 0;
constexpr int kNumerical = 1;
constexpr int kUsage = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

RunConfig read_config(const std::string& path) {
  return path.empty() ? parse_run_config("{}") : load_run_config(path);
}

void echo_config(const RunConfig& config) {
  std::cout << "effective config:\n" << to_json(config) << "\n";
}

void require_dir(const fs::path& dir, const char* what) {
  if (dir.empty()) throw UsageError(std::string(what) + " directory not given");
  if (!fs::is_directory(dir)) throw UsageError(std::string(what) + " directory not found: " + dir.string());
}

// ---------------------------------------------------------------------------- synth

struct SynthArgs {
  std::string config, out;
  std::optional<Index> n_train, n_test;
  std::optional<std::uint64_t> seed;
};

int run_synth(const SynthArgs& args) {
  RunConfig config = read_config(args.config);
  if (args.n_train) config.data.n_train = *args.n_train;
  if (args.n_test) config.data.n_test = *args.n_test;
  if (args.seed) config.data.synth.seed = *args.seed;
  config.finalize();
  echo_config(config);
  const DatasetSplit data = build_dataset(config.data);
  save_dataset(data, config.data, args.out);
  std::cout << "wrote " << data.train.size() << " train and " << data.test.size() << " test samples to "
            << args.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------- train

struct TrainArgs {
  std::string config, data, out, history;
  std::optional<std::uint64_t> seed;
  std::optional<Index> max_epochs;
  std::optional<std::string> loss;
  std::optional<double> gamma;
  bool wall_time = false;
};

int run_train(const TrainArgs& args) {
  RunConfig config = read_config(args.config);
  if (!args.data.empty()) config.data_dir = args.data;
  if (!args.out.empty()) config.checkpoint = args.out;
  if (args.seed) config.seed = *args.seed;
  if (args.max_epochs) config.train.max_epochs = *args.max_epochs;
  if (args.loss) config.train.loss.kind = loss_kind_from_string(*args.loss);
  if (args.gamma) config.train.loss.gamma = *args.gamma;
  config.finalize();
  if (config.checkpoint.empty()) throw UsageError("no checkpoint output path (--out)");
  require_dir(config.data_dir, "data");
  echo_config(config);

  const DatasetSplit data = load_dataset(config.data_dir);
  if (data.train.empty() || data.test.empty()) throw UsageError("data directory needs train and test samples");
  UNet<double> model(config.model, init_seed_for(config.seed));
  const TrainResult result =
      train(model, data.train, data.test, config.train, config.metrics(), [](const EpochRecord& r) {
        if (!r.eval) return;
        std::fprintf(stderr, "epoch %5lld  loss %.6f  dsc %s  sens %s  spec %s\n", static_cast<long long>(r.epoch),
                     r.train_loss, format_percent(r.eval->dsc).c_str(), format_percent(r.eval->sensitivity).c_str(),
                     format_percent(r.eval->specificity).c_str());
      });

  save_checkpoint(result.best, config.checkpoint);
  const fs::path history = args.history.empty() ? fs::path(config.checkpoint.string() + ".history.csv")
                                                : fs::path(args.history);
  std::ofstream out(history);
  out << result.history.to_csv(args.wall_time);
  if (!out) throw ImageIoError("cannot write " + history.string());
  std::printf("best epoch %lld, eval dsc %.17g; stopped at epoch %lld\n", static_cast<long long>(result.best.epoch),
              result.best.eval_dsc, static_cast<long long>(result.stopped_epoch));
  std::printf("checkpoint: %s\nhistory: %s\n", config.checkpoint.c_str(), history.c_str());
  return kOk;
}

// ---------------------------------------------------------------------------- eval

struct EvalArgs {
  std::string ckpt, data, config, target = "corroded", split = "test", csv;
  double alpha = 10.0;
};

int resolve_class(const std::string& name, const ClassTaxonomy& taxonomy) {
  if (!name.empty() && std::all_of(name.begin(), name.end(), ::isdigit)) return std::stoi(name);
  return taxonomy.index_of(name);
}

int run_eval(const EvalArgs& args) {
  RunConfig config = read_config(args.config);
  require_dir(args.data, "data");
  const Checkpoint checkpoint = load_checkpoint(args.ckpt);
  MetricsConfig metrics;
  metrics.target_class = resolve_class(args.target, config.data.synth.taxonomy);
  metrics.alpha = args.alpha;
  metrics.validate(checkpoint.config.num_classes);
  std::printf("effective config: ckpt=%s data=%s split=%s class=%d alpha=%g\n", args.ckpt.c_str(),
              args.data.c_str(), args.split.c_str(), metrics.target_class, metrics.alpha);
  std::printf("checkpoint epoch %lld, recorded eval dsc %.17g\n", static_cast<long long>(checkpoint.epoch),
              checkpoint.eval_dsc);

  const DatasetSplit data = load_dataset(args.data);
  const Dataset& set = args.split == "train" ? data.train : data.test;
  if (args.split != "train" && args.split != "test") throw UsageError("--split must be train or test");
  if (set.empty()) throw UsageError("split " + args.split + " is empty");
  const MetricsReport report = evaluate(model_from_checkpoint(checkpoint), set, metrics);
  std::printf("dsc %.17g\n", report.dsc.value_or(0.0));
  std::cout << report.table(args.split);
  const std::string csv = MetricsReport::csv_header() + "\n" + report.csv_row(args.split) + "\n";
  std::cout << csv;
  if (!args.csv.empty()) {
    std::ofstream out(args.csv);
    out << csv;
    if (!out) throw ImageIoError("cannot write " + args.csv);
  }
  return kOk;
}

// ---------------------------------------------------------------------------- infer

struct InferArgs {
  std::string ckpt, image, out, config;
  bool overlay = false;
  bool no_clahe = false;
  int repeat = 3;
};

std::array<std::uint8_t, 3> class_color(int label) {
  // coating, wet coating, corroded, rivet, water, others
  static const std::array<std::array<std::uint8_t, 3>, 6> palette{{
      {0, 0, 0}, {0, 100, 0}, {255, 0, 0}, {255, 165, 0}, {0, 255, 0}, {0, 0, 255}}};
  if (label >= 0 && label < 6) return palette[static_cast<std::size_t>(label)];
  const auto v = static_cast<std::uint8_t>(37 * label);
  return {v, static_cast<std::uint8_t>(255 - v), static_cast<std::uint8_t>(v / 2)};
}

int run_infer(const InferArgs& args) {
  RunConfig config = read_config(args.config);
  if (args.repeat < 1) throw UsageError("--repeat must be >= 1");
  const Checkpoint checkpoint = load_checkpoint(args.ckpt);
  std::optional<ClaheConfig> preprocess = config.data.preprocess;
  if (args.no_clahe) preprocess.reset();
  std::printf("effective config: ckpt=%s image=%s out=%s overlay=%d clahe=%s repeat=%d\n", args.ckpt.c_str(),
              args.image.c_str(), args.out.c_str(), args.overlay ? 1 : 0,
              preprocess ? "on" : "off", args.repeat);

  Image image = load_png(args.image);
  if (image.channels == 1) {
    Image rgb(image.height, image.width, 3);
    for (std::size_t i = 0; i < image.pixels.size(); ++i) {
      for (std::size_t c = 0; c < 3; ++c) rgb.pixels[3 * i + c] = image.pixels[i];
    }
    image = std::move(rgb);
  }
  const Image source = preprocess ? clahe(image, *preprocess) : image;

  // Zero-pad to the model's spatial multiple and crop the prediction back.
  const Index multiple = checkpoint.config.spatial_multiple();
  const Index h = image.height, w = image.width;
  const Index ph = (h + multiple - 1) / multiple * multiple, pw = (w + multiple - 1) / multiple * multiple;
  Tensor<float> input({1, 3, ph, pw});
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      for (Index c = 0; c < 3; ++c) input(0, c, y, x) = static_cast<float>(source.at(y, x, c) / 255.0);
    }
  }
  const UNet<float> model = model_from_checkpoint(checkpoint).cast<float>();

  Tensor<float> logits;
  const auto start = std::chrono::steady_clock::now();
  for (int r = 0; r < args.repeat; ++r) logits = model.predict(input);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const std::vector<std::int32_t> labels = predict_labels(logits);

  Image out(h, w, args.overlay ? 3 : 1);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const int label = labels[static_cast<std::size_t>(y * pw + x)];
      if (!args.overlay) {
        out.at(y, x, 0) = static_cast<std::uint8_t>(label);
        continue;
      }
      const auto color = class_color(label);
      for (Index c = 0; c < 3; ++c) {
        const double base = image.at(y, x, c);
        const double blended = label == 0 ? base : 0.5 * base + 0.5 * color[static_cast<std::size_t>(c)];
        out.at(y, x, c) = static_cast<std::uint8_t>(std::lround(blended));
      }
    }
  }
  save_png(args.out, out);
  std::printf("%lldx%lld image, %d frame(s) in %.3f s\n", static_cast<long long>(h), static_cast<long long>(w),
              args.repeat, seconds);
  std::printf("fps: %.3f\n", args.repeat / seconds);
  return kOk;
}

// ---------------------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  GradcheckOptions options;
  double tolerance = 1e-4;
};

int run_gradcheck(const GradcheckArgs& args) {
  std::printf("effective config: seed=%llu instances=%d step=%g tolerance=%g inject_fault=%d\n",
              static_cast<unsigned long long>(args.options.seed), args.options.instances, args.options.step,
              args.tolerance, args.options.inject_fault ? 1 : 0);
  const GradcheckReport report = run_gradient_suite(args.options);
  std::cout << report.to_text();
  const bool ok = report.passed(args.tolerance);
  std::printf("max relative error %.3e (%s, %.1f s)\n", report.max_rel_error(), ok ? "PASS" : "FAIL",
              report.seconds);
  return ok ? kOk : kNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"U-Net segmentation toolkit with class-imbalance losses"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic train/test dataset");
  synth_cmd->add_option("--config", synth.config, "Run config JSON");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--n-train", synth.n_train, "Training samples");
  synth_cmd->add_option("--n-test", synth.n_test, "Test samples");
  synth_cmd->add_option("--seed", synth.seed, "Data seed");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write its best checkpoint");
  train_cmd->add_option("--config", train_args.config, "Run config JSON");
  train_cmd->add_option("--data", train_args.data, "Dataset directory");
  train_cmd->add_option("--out", train_args.out, "Checkpoint path");
  train_cmd->add_option("--history", train_args.history, "History CSV (default <out>.history.csv)");
  train_cmd->add_option("--seed", train_args.seed, "Run seed");
  train_cmd->add_option("--max-epochs", train_args.max_epochs, "Epoch limit");
  train_cmd->add_option("--loss", train_args.loss, "sce | w_sce | focal | w_focal");
  train_cmd->add_option("--gamma", train_args.gamma, "Focusing parameter");
  train_cmd->add_flag("--wall-time", train_args.wall_time, "Add wall time to the history CSV");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  eval_cmd->add_option("--ckpt", eval_args.ckpt, "Checkpoint")->required();
  eval_cmd->add_option("--data", eval_args.data, "Dataset directory")->required();
  eval_cmd->add_option("--config", eval_args.config, "Run config JSON (class names)");
  eval_cmd->add_option("--class", eval_args.target, "Target class name or index");
  eval_cmd->add_option("--alpha", eval_args.alpha, "Total-error miss weight");
  eval_cmd->add_option("--split", eval_args.split, "train | test");
  eval_cmd->add_option("--csv", eval_args.csv, "Also write the CSV here");

  InferArgs infer_args;
  auto* infer_cmd = app.add_subcommand("infer", "Segment one image");
  infer_cmd->add_option("--ckpt", infer_args.ckpt, "Checkpoint")->required();
  infer_cmd->add_option("--image", infer_args.image, "Input PNG")->required();
  infer_cmd->add_option("--out", infer_args.out, "Output PNG")->required();
  infer_cmd->add_option("--config", infer_args.config, "Run config JSON (preprocessing)");
  infer_cmd->add_flag("--overlay", infer_args.overlay, "Write a color overlay instead of a class-index mask");
  infer_cmd->add_flag("--no-clahe", infer_args.no_clahe, "Skip contrast equalization");
  infer_cmd->add_option("--repeat", infer_args.repeat, "Timed forward passes");

  GradcheckArgs grad_args;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of all layer and loss gradients");
  grad_cmd->add_option("--seed", grad_args.options.seed, "Input seed");
  grad_cmd->add_option("--instances", grad_args.options.instances, "Random instances per op");
  grad_cmd->add_option("--tolerance", grad_args.tolerance, "Pass threshold on max relative error");
  grad_cmd->add_flag("--inject-fault", grad_args.options.inject_fault, "Corrupt one gradient (self-test)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*synth_cmd) return run_synth(synth);
    if (*train_cmd) return run_train(train_args);
    if (*eval_cmd) return run_eval(eval_args);
    if (*infer_cmd) return run_infer(infer_args);
    if (*grad_cmd) return run_gradcheck(grad_args);
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
