// Acceptance suite: one PASS/FAIL line per criterion, plus the numbers behind it.
// Exit status is the number of failed criteria.

#include "useg/checkpoint.hpp"
#include "useg/evaluate.hpp"
#include "useg/gradcheck.hpp"
#include "useg/png_io.hpp"
#include "useg/train.hpp"
#include "useg/variants.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <regex>
#include <sstream>
#include <sys/wait.h>

using namespace useg;
namespace fs = std::filesystem;
using T = Tensor<double>;
using Clock = std::chrono::steady_clock;

namespace {

// Budgets for the directional replications; see README.
constexpr Index kSuiteEpochs = 150;
constexpr Index kSuiteEvalEvery = 10;
const std::vector<std::uint64_t> kSuiteSeeds{0, 1, 2};

const fs::path kWork = fs::temp_directory_path() / "useg_acceptance";

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(int id, const char* title, bool pass, const std::string& detail) {
  std::printf("[%2d] %-44s %s  %s\n", id, title, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

// Runs a criterion body; an escaped exception counts as a failure.
void criterion(int id, const char* title, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    const auto [pass, detail] = body();
    report(id, title, pass, detail);
  } catch (const std::exception& e) {
    report(id, title, false, std::string("exception: ") + e.what());
  }
}

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args) {
  const fs::path out = kWork / "cli_stdout.txt";
  const std::string command = std::string(USEG_CLI) + " " + args + " > " + out.string() + " 2>/dev/null";
  const int status = std::system(command.c_str());
  std::ifstream in(out);
  std::stringstream text;
  text << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, text.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------------------- 1

std::pair<bool, std::string> gradient_suite() {
  const GradcheckReport r = run_gradient_suite(GradcheckOptions{});
  const bool pass = r.max_rel_error() < 1e-5 && r.seconds < 120.0;
  return {pass, fmt("max rel error %.3e over %zu ops x 20 instances, %.1f s", r.max_rel_error(), r.ops.size(),
                    r.seconds)};
}

// ---------------------------------------------------------------------------- 2

std::pair<bool, std::string> loss_equivalences() {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> label(0, 5);
  const LossConfig sce{LossKind::sce, 0.0, {}, false};
  const LossConfig focal0{LossKind::focal, 0.0, {}, false};
  const LossConfig wfocal_ones{LossKind::weighted_focal, 0.0, std::vector<double>(6, 1.0), false};
  double worst = 0;
  for (int pixel = 0; pixel < 1000; ++pixel) {
    const T logits = T::random_normal({1, 6, 1, 1}, rng, 3.0);
    PixelTargets t(1, 1, 1);
    t.labels[0] = label(rng);
    const double gamma = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
    LossConfig focal{LossKind::focal, gamma, {}, false};
    LossConfig wfocal = wfocal_ones;
    wfocal.gamma = gamma;
    const auto a = compute_loss(logits, t, sce), b = compute_loss(logits, t, focal0);
    const auto c = compute_loss(logits, t, focal), d = compute_loss(logits, t, wfocal);
    worst = std::max({worst, std::abs(a.loss - b.loss), std::abs(c.loss - d.loss),
                      (a.grad_logits.values() - b.grad_logits.values()).cwiseAbs().maxCoeff(),
                      (c.grad_logits.values() - d.grad_logits.values()).cwiseAbs().maxCoeff()});
  }
  return {worst <= 1e-12, fmt("max |difference| %.3e over 1000 pixels (losses and gradients)", worst)};
}

// ---------------------------------------------------------------------------- 3

T naive_conv(const T& x, const T& k, const T& b, Index stride, Index pad) {
  const Index n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const Index oh = (h + 2 * pad - kh) / stride + 1, ow = (w + 2 * pad - kw) / stride + 1;
  T y({n, cout, oh, ow});
  for (Index i = 0; i < n; ++i)
    for (Index o = 0; o < cout; ++o)
      for (Index r = 0; r < oh; ++r)
        for (Index c = 0; c < ow; ++c) {
          double acc = b[o];
          for (Index ci = 0; ci < cin; ++ci)
            for (Index u = 0; u < kh; ++u)
              for (Index v = 0; v < kw; ++v) {
                const Index yy = r * stride - pad + u, xx = c * stride - pad + v;
                if (yy >= 0 && yy < h && xx >= 0 && xx < w) acc += x(i, ci, yy, xx) * k(o, ci, u, v);
              }
          y(i, o, r, c) = acc;
        }
  return y;
}

std::pair<bool, std::string> conv_oracle() {
  std::mt19937_64 rng(12);
  auto pick = [&](Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(rng); };
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index kh = pick(1, 5), stride = pick(1, 3), pad = pick(0, 2);
    const T x = T::random_normal({pick(1, 3), pick(1, 6), pick(kh, 14), pick(kh, 14)}, rng);
    const T k = T::random_normal({pick(1, 8), x.dim(1), kh, kh}, rng);
    const T b = T::random_normal({k.dim(0)}, rng);
    const T ref = naive_conv(x, k, b, stride, pad);
    const T got = conv2d(x, k, b, stride, pad);
    if (got.dims() != ref.dims()) return {false, "shape mismatch"};
    const double scale = std::max(1.0, ref.values().cwiseAbs().maxCoeff());
    worst = std::max(worst, (got.values() - ref.values()).cwiseAbs().maxCoeff() / scale);
  }
  return {worst < 1e-10, fmt("max relative difference %.3e over 100 configurations", worst)};
}

// ---------------------------------------------------------------------------- 4

std::pair<bool, std::string> metric_oracle() {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<Index> size(1, 48);
  std::uniform_int_distribution<int> label(0, 5);
  bool counts_ok = true;
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    PixelTargets truth(size(rng), size(rng), size(rng));
    std::vector<std::int32_t> pred;
    for (std::size_t i = 0; i < truth.labels.size(); ++i) {
      truth.labels[i] = label(rng);
      truth.valid[i] = rng() % 8 != 0;
      pred.push_back(label(rng));
    }
    const int target = label(rng);
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (!truth.valid[i]) continue;
      const bool actual = truth.labels[i] == target, predicted = pred[i] == target;
      if (actual && predicted) ++tp;
      else if (predicted) ++fp;
      else if (actual) ++fn;
      else ++tn;
    }
    ConfusionCounts c;
    accumulate(pred, truth, target, c);
    counts_ok = counts_ok && c.tp == tp && c.fp == fp && c.tn == tn && c.fn == fn && c.total_valid == tp + fp + tn + fn;
    const double n = static_cast<double>(tp + fp + tn + fn);
    auto diff = [&](const std::optional<double>& got, std::int64_t num, std::int64_t den) {
      if (den == 0) return got ? 1.0 : 0.0;
      return got ? std::abs(*got - static_cast<double>(num) / static_cast<double>(den)) : 1.0;
    };
    worst = std::max({worst, diff(dsc(c), 2 * tp, 2 * tp + fp + fn), diff(sensitivity(c), tp, tp + fn),
                      diff(specificity(c), tn, tn + fp)});
    if (n > 0) worst = std::max(worst, std::abs(total_error(c, MetricsConfig{target, 10.0}) -
                                                (10.0 / 11.0 * (fn / n) + 1.0 / 11.0 * (fp / n))));
  }
  const double example = total_error(ConfusionCounts{0, 8, 962, 30, 1000}, MetricsConfig{2, 10.0});
  const std::string printed = fmt("%.5f", example);
  const bool pass = counts_ok && worst <= 1e-12 && printed == "0.02800";
  return {pass, fmt("counts %s, max ratio difference %.3e, worked example %s", counts_ok ? "exact" : "MISMATCH",
                    worst, printed.c_str())};
}

// ---------------------------------------------------------------------------- 5

std::pair<bool, std::string> overfit() {
  const auto start = Clock::now();
  DatasetConfig data;
  data.n_train = data.n_test = 1;
  const Dataset sample = build_dataset(data).train;
  TrainConfig config;
  config.batch_size = 1;
  config.max_epochs = 400;
  config.eval_every = 10;
  config.early_stop_patience = 400;
  config.augment_enabled = false;  // memorize the exact sample
  const MetricsConfig metrics{2, 10.0};
  UNet<double> model(UNetConfig{}, init_seed_for(0));
  Index first_above = 0;
  const TrainResult r = train(model, sample, sample, config, metrics, [&](const EpochRecord& e) {
    if (first_above == 0 && e.eval && e.eval->dsc.value_or(0.0) > 0.95) first_above = e.epoch;
  });
  const double seconds = seconds_since(start);
  const bool pass = r.best.eval_dsc > 0.95 && seconds < 300.0;
  return {pass, fmt("best corroded DSC %.4f (epoch %lld; first > 0.95 at epoch %lld), %.1f s", r.best.eval_dsc,
                    static_cast<long long>(r.best.epoch), static_cast<long long>(first_above), seconds)};
}

// ---------------------------------------------------------------------------- 6, 7

struct SuiteData {
  DatasetSplit data;
  SuiteOptions options;
};

SuiteData suite_setup() {
  SuiteData s;
  s.data = build_dataset(DatasetConfig{});
  s.options.base.max_epochs = kSuiteEpochs;
  s.options.base.eval_every = kSuiteEvalEvery;
  s.options.metrics = MetricsConfig{2, 10.0};
  s.options.seeds = kSuiteSeeds;
  return s;
}

ComparisonTable run_suite(const SuiteData& s, const std::vector<NamedVariant>& variants) {
  return run_variant_suite(s.options, variants, s.data.train, s.data.test,
                           [](const std::string& name, const RunSummary& r) {
                             std::printf("     %-20s seed %llu  best epoch %4lld  DSC %s  sens %s  spec %s\n",
                                         name.c_str(), static_cast<unsigned long long>(r.seed),
                                         static_cast<long long>(r.best_epoch), format_percent(r.report.dsc).c_str(),
                                         format_percent(r.report.sensitivity).c_str(),
                                         format_percent(r.report.specificity).c_str());
                             std::fflush(stdout);
                           });
}

double value(const std::optional<double>& v) { return v.value_or(-1.0); }

std::optional<VariantRow> table_one_weighted_sce;

std::pair<bool, std::string> table_one(const SuiteData& s) {
  const auto start = Clock::now();
  const auto all = standard_loss_variants();
  const std::vector<NamedVariant> variants{all[0], all[1], all[4], all[7]};  // SCE, W-SCE, Focal 2, W-Focal 2
  const ComparisonTable table = run_suite(s, variants);
  const double seconds = seconds_since(start);
  std::printf("%s", table.to_text().c_str());
  const auto& sce = table.rows[0].pooled;
  const auto& wsce = table.rows[1].pooled;
  const auto& focal = table.rows[2].pooled;
  const auto& wfocal = table.rows[3].pooled;
  table_one_weighted_sce = table.rows[1];
  const bool sens = value(wsce.sensitivity) > value(sce.sensitivity) &&
                    value(wfocal.sensitivity) > value(sce.sensitivity);
  const bool spec = value(focal.specificity) >= value(sce.specificity);
  return {sens && spec && seconds < 3600.0,
          fmt("sens SCE %.2f < W-SCE %.2f, W-Focal %.2f; spec Focal %.2f >= SCE %.2f; %.0f s",
              100 * value(sce.sensitivity), 100 * value(wsce.sensitivity), 100 * value(wfocal.sensitivity),
              100 * value(focal.specificity), 100 * value(sce.specificity), seconds)};
}

std::pair<bool, std::string> table_two(const SuiteData& s) {
  const auto start = Clock::now();
  const auto sweep = weight_sweep(standard_loss_variants()[1].loss, 2);
  // The x1 row is the W-SCE row of the previous criterion (same loss, data and seeds).
  std::vector<NamedVariant> todo;
  for (std::size_t i = 0; i < sweep.size(); ++i)
    if (i != 1 || !table_one_weighted_sce) todo.push_back(sweep[i]);
  const ComparisonTable partial = run_suite(s, todo);
  ComparisonTable table;
  for (std::size_t i = 0, k = 0; i < sweep.size(); ++i) {
    if (i == 1 && table_one_weighted_sce) {
      VariantRow row = *table_one_weighted_sce;
      row.name = sweep[i].name;
      table.rows.push_back(row);
    } else {
      table.rows.push_back(partial.rows[k++]);
    }
  }
  std::printf("%s", table.to_text().c_str());
  bool monotone = true;
  std::string trend;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i].pooled;
    trend += fmt("%s%.2f/%.2f", i ? " -> " : "", 100 * value(r.sensitivity), 100 * value(r.specificity));
    if (i > 0) {
      const auto& prev = table.rows[i - 1].pooled;
      monotone = monotone && value(r.sensitivity) >= value(prev.sensitivity) &&
                 value(r.specificity) <= value(prev.specificity);
    }
  }
  return {monotone, "sens/spec " + trend + fmt("; %.0f s", seconds_since(start))};
}

// ---------------------------------------------------------------------------- 8

std::pair<bool, std::string> determinism() {
  const fs::path config = kWork / "determinism.json";
  std::ofstream(config) << R"({"seed": 7, "model": {"base_features": 4, "depth": 3},
    "train": {"max_epochs": 6, "eval_every": 2}, "data": {"n_train": 6, "n_test": 3}})";
  const fs::path data = kWork / "determinism_data";
  fs::remove_all(data);
  if (cli("synth --config " + config.string() + " --out " + data.string()).code != 0) return {false, "synth failed"};
  for (const char* name : {"a", "b"}) {
    const fs::path ckpt = kWork / (std::string(name) + ".ckpt");
    if (cli("train --config " + config.string() + " --data " + data.string() + " --out " + ckpt.string()).code != 0)
      return {false, "train failed"};
  }
  const bool ckpt_same = slurp(kWork / "a.ckpt") == slurp(kWork / "b.ckpt");
  const bool history_same = slurp(kWork / "a.ckpt.history.csv") == slurp(kWork / "b.ckpt.history.csv");
  return {ckpt_same && history_same && !slurp(kWork / "a.ckpt").empty(),
          fmt("checkpoints %s, history CSVs %s", ckpt_same ? "identical" : "DIFFER",
              history_same ? "identical" : "DIFFER")};
}

// ---------------------------------------------------------------------------- 9

std::pair<bool, std::string> checkpoint_round_trip() {
  UNet<double> model(UNetConfig{}, 21);
  std::mt19937_64 rng(22);
  model.forward(T::random_uniform({2, 3, 64, 64}, rng, 0.0, 1.0), Mode::train);
  narrow_to_storage(model);
  const fs::path path = kWork / "round_trip.ckpt";
  save_checkpoint(make_checkpoint(model, nullptr, 3, 0.5), path);
  const T x = T::random_uniform({1, 3, 64, 64}, rng, 0.0, 1.0);
  const bool bitwise = model_from_checkpoint(load_checkpoint(path)).predict(x) == model.predict(x);

  const std::string good = slurp(path);
  const fs::path broken = kWork / "broken.ckpt";
  auto code_of = [&](std::string bytes) -> std::optional<CheckpointErrc> {
    std::ofstream(broken, std::ios::binary) << bytes;
    try {
      load_checkpoint(broken);
    } catch (const CheckpointError& e) {
      return e.code();
    } catch (...) {
    }
    return std::nullopt;
  };
  std::string magic = good, version = good, trailing = good + "x";
  magic[0] ^= 0x5a;
  version[4] = 9;
  const bool errors = code_of(magic) == CheckpointErrc::bad_magic &&
                      code_of(version) == CheckpointErrc::version_mismatch &&
                      code_of(good.substr(0, good.size() / 2)) == CheckpointErrc::truncated &&
                      code_of(good.substr(0, good.size() - 1)) == CheckpointErrc::truncated &&
                      code_of(trailing) == CheckpointErrc::inconsistent;
  return {bitwise && errors, fmt("logits %s; corruption errors %s", bitwise ? "bitwise equal" : "DIFFER",
                                 errors ? "as designated" : "WRONG")};
}

// ---------------------------------------------------------------------------- 10

std::pair<bool, std::string> throughput() {
  UNet<double> model(UNetConfig{}, 31);
  std::mt19937_64 rng(32);
  model.forward(T::random_uniform({1, 3, 64, 64}, rng, 0.0, 1.0), Mode::train);
  save_checkpoint(make_checkpoint(model, nullptr, 1, 0.0), kWork / "default.ckpt");
  Image image(256, 320, 3);
  for (auto& p : image.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
  save_png(kWork / "frame.png", image);
  const Run r = cli("infer --ckpt " + (kWork / "default.ckpt").string() + " --image " +
                    (kWork / "frame.png").string() + " --out " + (kWork / "frame_mask.png").string() + " --repeat 5");
  std::smatch m;
  if (r.code != 0 || !std::regex_search(r.out, m, std::regex("fps: ([0-9.]+)"))) return {false, "infer failed"};
  const double fps = std::stod(m[1]);
  const Image mask = load_png(kWork / "frame_mask.png");
  const bool dims = mask.height == 256 && mask.width == 320;
  return {fps >= 1.0 && dims, fmt("%.2f fps at 256x320 (default model, 1 thread)", fps)};
}

}  // namespace

int main() {
  fs::create_directories(kWork);
  const auto start = Clock::now();
  criterion(1, "gradient suite < 1e-5 in < 2 min", gradient_suite);
  criterion(2, "focal/SCE equivalences within 1e-12", loss_equivalences);
  criterion(3, "conv2d matches nested-loop oracle", conv_oracle);
  criterion(4, "metrics match brute-force counting", metric_oracle);
  criterion(5, "overfit one 64x64 sample to DSC > 0.95", overfit);
  const SuiteData suite = suite_setup();
  criterion(6, "loss variants: weighting and focusing trends", [&] { return table_one(suite); });
  criterion(7, "corroded weight sweep is monotone", [&] { return table_two(suite); });
  criterion(8, "bitwise-reproducible CLI training", determinism);
  criterion(9, "checkpoint round trip and corruption errors", checkpoint_round_trip);
  criterion(10, "inference throughput >= 1 fps at 256x320", throughput);
  std::printf("%d criteria failed; total %.0f s\n", failures, seconds_since(start));
  return failures;
}
