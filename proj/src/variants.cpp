#include "useg/variants.hpp"

#include "useg/evaluate.hpp"

#include <cstdio>
#include <sstream>

namespace useg {
namespace {

std::string format_number(double v) {
  std::ostringstream out;
  out << v;
  return out.str();
}

}  // namespace

std::vector<double> default_class_weights() { return {1, 1, 10, 5, 1, 1}; }

std::vector<NamedVariant> standard_loss_variants(const std::vector<double>& class_weights,
                                              const std::vector<double>& gammas) {
  std::vector<NamedVariant> out;
  out.push_back({"SCE", LossConfig{LossKind::sce, 0.0, {}, false}});
  out.push_back({"W-SCE", LossConfig{LossKind::weighted_sce, 0.0, class_weights, false}});
  for (double g : gammas) {
    out.push_back({"Focal g=" + format_number(g), LossConfig{LossKind::focal, g, {}, false}});
  }
  for (double g : gammas) {
    out.push_back({"W-Focal g=" + format_number(g), LossConfig{LossKind::weighted_focal, g, class_weights, false}});
  }
  return out;
}

std::vector<NamedVariant> weight_sweep(const LossConfig& base, int target_class,
                                       const std::vector<double>& multipliers) {
  if (!base.weighted()) throw std::invalid_argument("weight_sweep: base loss must be a weighted kind");
  if (target_class < 0 || static_cast<std::size_t>(target_class) >= base.class_weights.size()) {
    throw std::invalid_argument("weight_sweep: target class out of range");
  }
  const std::string prefix = base.kind == LossKind::weighted_sce ? "W-SCE" : "W-Focal g=" + format_number(base.gamma);
  std::vector<NamedVariant> out;
  for (double m : multipliers) {
    if (!(m > 0)) throw std::invalid_argument("weight_sweep: multipliers must be positive");
    LossConfig loss = base;
    loss.class_weights[static_cast<std::size_t>(target_class)] *= m;
    out.push_back({prefix + " w_t x" + format_number(m), loss});
  }
  return out;
}

const VariantRow& ComparisonTable::row(const std::string& name) const {
  for (const auto& r : rows) {
    if (r.name == name) return r;
  }
  throw std::out_of_range("ComparisonTable: no variant named " + name);
}

std::string ComparisonTable::to_csv() const {
  std::string out = MetricsReport::csv_header() + "\n";
  for (const auto& r : rows) out += r.pooled.csv_row(r.name) + "\n";
  return out;
}

std::string ComparisonTable::to_text() const {
  std::size_t width = 7;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s %8s %12s %12s %12s\n", static_cast<int>(width), "variant", "DSC",
                "sensitivity", "specificity", "total_error");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-*s %8s %12s %12s %12s\n", static_cast<int>(width), r.name.c_str(),
                  format_percent(r.pooled.dsc).c_str(), format_percent(r.pooled.sensitivity).c_str(),
                  format_percent(r.pooled.specificity).c_str(), format_percent(r.pooled.total_error).c_str());
    out << line;
  }
  return out.str();
}

ComparisonTable run_variant_suite(const SuiteOptions& options, const std::vector<NamedVariant>& variants,
                                  const Dataset& train_set, const Dataset& test_set,
                                  const RunCallback& on_run) {
  if (variants.empty()) throw std::invalid_argument("run_variant_suite: no variants");
  if (options.seeds.empty()) throw std::invalid_argument("run_variant_suite: no seeds");
  options.model.validate();

  ComparisonTable table;
  for (const auto& variant : variants) {
    VariantRow row{variant.name, variant.loss, {}, {}};
    ConfusionCounts pooled;
    for (std::uint64_t seed : options.seeds) {
      TrainConfig config = options.base;
      config.loss = variant.loss;
      config.seed = seed;
      config.augment.seed = augment_seed_for(seed);
      UNet<double> model(options.model, init_seed_for(seed));
      const TrainResult result = train(model, train_set, test_set, config, options.metrics);

      RunSummary run;
      run.seed = seed;
      run.best_epoch = result.best.epoch;
      run.stopped_epoch = result.stopped_epoch;
      run.report = evaluate(model_from_checkpoint(result.best), test_set, options.metrics);
      pooled += run.report.counts;
      if (on_run) on_run(variant.name, run);
      row.runs.push_back(std::move(run));
    }
    row.pooled = MetricsReport::from_counts(pooled, options.metrics);
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace useg
