#include "useg/metrics.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace useg {
namespace {

std::optional<double> ratio(std::int64_t num, std::int64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::string csv_value(const std::optional<double>& v) {
  if (!v) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

}  // namespace

void MetricsConfig::validate(Index num_classes) const {
  if (target_class < 0 || target_class >= num_classes) {
    throw std::invalid_argument("MetricsConfig: target_class " + std::to_string(target_class) +
                                " out of range");
  }
  if (!(alpha > 0)) throw std::invalid_argument("MetricsConfig: alpha must be positive");
}

void accumulate(std::span<const std::int32_t> pred, const PixelTargets& truth, int target_class,
                ConfusionCounts& counts) {
  const auto n = static_cast<std::size_t>(truth.pixels());
  if (pred.size() != n || truth.labels.size() != n || truth.valid.size() != n) {
    throw ShapeError("accumulate: prediction has " + std::to_string(pred.size()) +
                     " pixels, truth has " + std::to_string(n));
  }
  ConfusionCounts local;
  for (std::size_t i = 0; i < n; ++i) {
    if (!truth.valid[i]) continue;
    const bool predicted = pred[i] == target_class;
    const bool actual = truth.labels[i] == target_class;
    if (predicted && actual) ++local.tp;
    else if (predicted) ++local.fp;
    else if (actual) ++local.fn;
    else ++local.tn;
  }
  local.total_valid = local.tp + local.fp + local.tn + local.fn;
  counts += local;
}

std::optional<double> dsc(const ConfusionCounts& c) { return ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn); }
std::optional<double> sensitivity(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fn); }
std::optional<double> specificity(const ConfusionCounts& c) { return ratio(c.tn, c.tn + c.fp); }
std::optional<double> precision(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fp); }

double total_error(const ConfusionCounts& c, const MetricsConfig& config) {
  if (c.total_valid <= 0) throw std::invalid_argument("total_error: no valid pixels");
  if (!(config.alpha > 0)) throw std::invalid_argument("total_error: alpha must be positive");
  const double n = static_cast<double>(c.total_valid);
  return config.alpha / (config.alpha + 1.0) * (static_cast<double>(c.fn) / n) +
         1.0 / (config.alpha + 1.0) * (static_cast<double>(c.fp) / n);
}

MetricsReport MetricsReport::from_counts(const ConfusionCounts& counts, const MetricsConfig& config) {
  MetricsReport r;
  r.target_class = config.target_class;
  r.alpha = config.alpha;
  r.counts = counts;
  r.dsc = useg::dsc(counts);
  r.sensitivity = useg::sensitivity(counts);
  r.specificity = useg::specificity(counts);
  r.total_error = useg::total_error(counts, config);
  return r;
}

std::string format_percent(const std::optional<double>& value) {
  if (!value) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * *value);
  return buf;
}

std::string MetricsReport::csv_header() {
  return "name,target_class,alpha,dsc,sensitivity,specificity,total_error,tp,fp,tn,fn,total_valid";
}

std::string MetricsReport::csv_row(const std::string& name) const {
  std::ostringstream out;
  out << name << ',' << target_class << ',' << alpha << ',' << csv_value(dsc) << ','
      << csv_value(sensitivity) << ',' << csv_value(specificity) << ','
      << csv_value(total_error) << ',' << counts.tp << ',' << counts.fp << ',' << counts.tn << ','
      << counts.fn << ',' << counts.total_valid;
  return out.str();
}

std::string MetricsReport::table(const std::string& name) const {
  char buf[256];
  std::ostringstream out;
  std::snprintf(buf, sizeof buf, "%-16s %10s %12s %12s %12s\n", "Model", "DSC", "Sensitivity",
                "Specificity", "Total Error");
  out << buf;
  std::snprintf(buf, sizeof buf, "%-16s %10s %12s %12s %12s\n", name.c_str(),
                format_percent(dsc).c_str(), format_percent(sensitivity).c_str(),
                format_percent(specificity).c_str(), format_percent(total_error).c_str());
  out << buf;
  return out.str();
}

}  // namespace useg
