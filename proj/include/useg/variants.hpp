#pragma once

#include "useg/train.hpp"

#include <string>
#include <vector>

namespace useg {

struct NamedVariant {
  std::string name;
  LossConfig loss;
};

/// Class weights used for every weighted variant: coating 1, wet 1, corroded 10, rivet 5, water 1, others 1.
std::vector<double> default_class_weights();

/// SCE, W-SCE, Focal and W-Focal at gamma 0.5, 1 and 2 (eight variants).
std::vector<NamedVariant> standard_loss_variants(const std::vector<double>& class_weights = default_class_weights(),
                                              const std::vector<double>& gammas = {0.5, 1.0, 2.0});

/// Copies of `base` (a weighted kind) with only the target class weight scaled by each multiplier.
std::vector<NamedVariant> weight_sweep(const LossConfig& base, int target_class,
                                       const std::vector<double>& multipliers = {0.25, 1.0, 4.0, 8.0});

struct RunSummary {
  std::uint64_t seed = 0;
  Index best_epoch = 0;
  Index stopped_epoch = 0;
  MetricsReport report;
};

struct VariantRow {
  std::string name;
  LossConfig loss;
  std::vector<RunSummary> runs;
  /// Confusion counts summed over runs. Every run sees the same test set, so pooled
  /// sensitivity and specificity equal their means over runs.
  MetricsReport pooled;
};

struct ComparisonTable {
  std::vector<VariantRow> rows;

  const VariantRow& row(const std::string& name) const;
  /// One pooled row per variant (MetricsReport CSV layout).
  std::string to_csv() const;
  /// Aligned text in percent, one decimal.
  std::string to_text() const;
};

struct SuiteOptions {
  UNetConfig model;
  TrainConfig base;
  MetricsConfig metrics;
  std::vector<std::uint64_t> seeds{0};
};

using RunCallback = std::function<void(const std::string& variant, const RunSummary&)>;

/// Trains every variant from scratch for every seed on the same data; models are scored
/// by their best (early-stopping) checkpoint on `test_set`.
ComparisonTable run_variant_suite(const SuiteOptions& options, const std::vector<NamedVariant>& variants,
                                  const Dataset& train_set, const Dataset& test_set,
                                  const RunCallback& on_run = {});

}  // namespace useg
