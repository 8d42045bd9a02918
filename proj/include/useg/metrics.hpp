#pragma once

#include "useg/loss.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace useg {

/// One-vs-rest pixel tallies for a single target class.
struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::int64_t total_valid = 0;

  ConfusionCounts& operator+=(const ConfusionCounts& other) {
    tp += other.tp;
    fp += other.fp;
    tn += other.tn;
    fn += other.fn;
    total_valid += other.total_valid;
    return *this;
  }
  friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) { return a += b; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct MetricsConfig {
  int target_class = 2;
  /// Cost of a missed target pixel relative to a false alarm.
  double alpha = 10.0;

  void validate(Index num_classes) const;
};

/// Adds the tallies of `pred` against the valid pixels of `truth` into `counts`.
void accumulate(std::span<const std::int32_t> pred, const PixelTargets& truth, int target_class,
                ConfusionCounts& counts);

/// Each metric is std::nullopt ("undefined") when its denominator is zero.
std::optional<double> dsc(const ConfusionCounts& c);
std::optional<double> sensitivity(const ConfusionCounts& c);
std::optional<double> specificity(const ConfusionCounts& c);
std::optional<double> precision(const ConfusionCounts& c);

/// alpha/(alpha+1) * FN + 1/(alpha+1) * FP, both as fractions of the valid pixel count.
double total_error(const ConfusionCounts& c, const MetricsConfig& config);

struct MetricsReport {
  int target_class = 0;
  double alpha = 10.0;
  ConfusionCounts counts;
  std::optional<double> dsc, sensitivity, specificity;
  double total_error = 0.0;
  /// Fraction of valid pixels of each class predicted as that class.
  std::vector<std::optional<double>> class_accuracy;
  std::vector<std::int64_t> class_pixels;

  static MetricsReport from_counts(const ConfusionCounts& counts, const MetricsConfig& config);

  static std::string csv_header();
  std::string csv_row(const std::string& name) const;
  /// Aligned table with values in percent to one decimal.
  std::string table(const std::string& name) const;
};

/// "undefined" or the value in percent with one decimal.
std::string format_percent(const std::optional<double>& value);

}  // namespace useg
